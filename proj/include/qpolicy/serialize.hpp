#pragma once

#include <string>

#include <json.hpp>

#include "qpolicy/lowering.hpp"
#include "qpolicy/net.hpp"

namespace qp {

using json = nlohmann::json;

// All reals serialize as shortest-round-trip decimal strings so that
// save/load is bit-exact.

json spec_to_json(const QuantSpec& s);
QuantSpec spec_from_json(const json& j);

json net_to_json(const PolicyNet& net);
PolicyNet net_from_json(const json& j);

json graph_to_json(const IntegerGraph& g);
IntegerGraph graph_from_json(const json& j);

void save_json(const json& j, const std::string& path);
json load_json(const std::string& path);

}  // namespace qp
