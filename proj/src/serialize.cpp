#include "qpolicy/serialize.hpp"

#include <fstream>
#include <stdexcept>

namespace qp {

namespace {

json dvec_to_json(std::span<const double> v) {
    json a = json::array();
    for (double x : v) a.push_back(dtos(x));
    return a;
}

std::vector<double> dvec_from_json(const json& a) {
    std::vector<double> v;
    v.reserve(a.size());
    for (const auto& s : a) v.push_back(stod_exact(s.get<std::string>()));
    return v;
}

json ivec_to_json(const std::vector<i64>& v) {
    json a = json::array();
    for (i64 x : v) a.push_back(x);
    return a;
}

std::vector<i64> ivec_from_json(const json& a) {
    std::vector<i64> v;
    v.reserve(a.size());
    for (const auto& x : a) v.push_back(x.get<i64>());
    return v;
}

json norm_to_json(const Normalizer& n) {
    return json{{"mean", dvec_to_json(n.mean)},
                {"m2", dvec_to_json(n.m2)},
                {"count", dtos(n.count)},
                {"frozen", n.frozen}};
}

Normalizer norm_from_json(const json& j) {
    Normalizer n;
    n.mean = dvec_from_json(j.at("mean"));
    n.m2 = dvec_from_json(j.at("m2"));
    n.count = stod_exact(j.at("count").get<std::string>());
    n.frozen = j.at("frozen").get<bool>();
    return n;
}

json scale_state_to_json(const ScaleState& s) {
    return json{{"spec", spec_to_json(s.spec)},
                {"warmup_steps_remaining", s.warmup_steps_remaining},
                {"ema_statistic", dtos(s.ema_statistic)},
                {"learnable", s.learnable},
                {"log_scale", dtos(s.log_scale)}};
}

ScaleState scale_state_from_json(const json& j) {
    ScaleState s;
    s.spec = spec_from_json(j.at("spec"));
    s.warmup_steps_remaining = j.at("warmup_steps_remaining").get<int>();
    s.ema_statistic = stod_exact(j.at("ema_statistic").get<std::string>());
    s.learnable = j.at("learnable").get<bool>();
    s.log_scale = stod_exact(j.at("log_scale").get<std::string>());
    return s;
}

}  // namespace

json spec_to_json(const QuantSpec& s) {
    return json{{"bits", s.bits}, {"signed", s.sgn == Signedness::Signed}, {"scale", dtos(s.scale)}};
}

QuantSpec spec_from_json(const json& j) {
    QuantSpec s;
    s.bits = j.at("bits").get<int>();
    s.sgn = j.at("signed").get<bool>() ? Signedness::Signed : Signedness::Unsigned;
    s.scale = stod_exact(j.at("scale").get<std::string>());
    s.validate();
    return s;
}

json net_to_json(const PolicyNet& net) {
    json j;
    j["format"] = "qpolicy.model.v1";
    j["quantized"] = net.quantized;
    j["frozen"] = net.frozen;
    j["ste"] = net.ste == SteMode::Clipped ? "clipped" : "passthrough";
    j["obs_dim"] = net.obs_dim();
    j["action_dim"] = net.action_dim();
    j["hidden"] = net.hidden_width();
    j["obs_clip"] = dtos(net.obs_clip);
    j["input_q"] = scale_state_to_json(net.input_q);
    j["normalizer"] = norm_to_json(net.norm);
    j["frozen_w_scales"] = dvec_to_json(net.frozen_w_scales);
    json layers = json::array();
    for (const auto& l : net.layers) {
        layers.push_back(json{{"out", l.fan_out()},
                              {"in", l.fan_in()},
                              {"weights", dvec_to_json(l.W.flat())},
                              {"bias", dvec_to_json(l.b)},
                              {"weight_bits", l.weight_bits},
                              {"bias_bits", l.bias_bits},
                              {"is_output", l.is_output},
                              {"out_q", scale_state_to_json(l.out_q)}});
    }
    j["layers"] = std::move(layers);
    if (net.sigma) {
        j["sigma_branch"] = json{{"W1", dvec_to_json(net.sigma->W1.flat())},
                                 {"b1", dvec_to_json(net.sigma->b1)},
                                 {"W2", dvec_to_json(net.sigma->W2.flat())},
                                 {"b2", dvec_to_json(net.sigma->b2)},
                                 {"hidden", net.sigma->W1.rows}};
    }
    return j;
}

PolicyNet net_from_json(const json& j) {
    if (j.at("format").get<std::string>() != "qpolicy.model.v1")
        throw std::invalid_argument("net_from_json: unknown format");
    PolicyNet net;
    net.quantized = j.at("quantized").get<bool>();
    net.frozen = j.at("frozen").get<bool>();
    net.ste = j.at("ste").get<std::string>() == "clipped" ? SteMode::Clipped : SteMode::PassThrough;
    net.obs_clip = stod_exact(j.at("obs_clip").get<std::string>());
    net.input_q = scale_state_from_json(j.at("input_q"));
    net.norm = norm_from_json(j.at("normalizer"));
    net.frozen_w_scales = dvec_from_json(j.at("frozen_w_scales"));
    for (const auto& lj : j.at("layers")) {
        LayerParams l;
        auto out = lj.at("out").get<std::size_t>();
        auto in = lj.at("in").get<std::size_t>();
        l.W = Matrix(out, in);
        auto w = dvec_from_json(lj.at("weights"));
        if (w.size() != out * in) throw std::invalid_argument("net_from_json: weight size");
        l.W.data = std::move(w);
        l.b = dvec_from_json(lj.at("bias"));
        l.weight_bits = lj.at("weight_bits").get<int>();
        l.bias_bits = lj.at("bias_bits").get<int>();
        l.is_output = lj.at("is_output").get<bool>();
        l.out_q = scale_state_from_json(lj.at("out_q"));
        net.layers.push_back(std::move(l));
    }
    if (j.contains("sigma_branch")) {
        const auto& sj = j.at("sigma_branch");
        SigmaBranch sb;
        auto hidden = sj.at("hidden").get<std::size_t>();
        sb.W1 = Matrix(hidden, net.obs_dim());
        sb.W1.data = dvec_from_json(sj.at("W1"));
        sb.b1 = dvec_from_json(sj.at("b1"));
        sb.W2 = Matrix(net.action_dim(), hidden);
        sb.W2.data = dvec_from_json(sj.at("W2"));
        sb.b2 = dvec_from_json(sj.at("b2"));
        net.sigma = std::move(sb);
    }
    return net;
}

json graph_to_json(const IntegerGraph& g) {
    json j;
    j["format"] = "qpolicy.graph.v1";
    j["input_spec"] = spec_to_json(g.input_spec);
    j["obs_clip"] = dtos(g.obs_clip);
    j["normalizer"] = norm_to_json(g.norm);
    json layers = json::array();
    for (const auto& l : g.layers) {
        json wj = json::array(), tj = json::array();
        for (const auto& row : l.int_weights) wj.push_back(ivec_to_json(row));
        for (const auto& row : l.thresholds) tj.push_back(ivec_to_json(row));
        layers.push_back(json{{"int_weights", std::move(wj)},
                              {"thresholds", std::move(tj)},
                              {"acc_bits", l.acc_bits},
                              {"out_spec", spec_to_json(l.out_spec)}});
    }
    j["layers"] = std::move(layers);
    j["tanh_lut"] = dvec_to_json(g.tanh_lut);
    return j;
}

IntegerGraph graph_from_json(const json& j) {
    if (j.at("format").get<std::string>() != "qpolicy.graph.v1")
        throw std::invalid_argument("graph_from_json: unknown format");
    IntegerGraph g;
    g.input_spec = spec_from_json(j.at("input_spec"));
    g.obs_clip = stod_exact(j.at("obs_clip").get<std::string>());
    g.norm = norm_from_json(j.at("normalizer"));
    for (const auto& lj : j.at("layers")) {
        IntLayer l;
        for (const auto& row : lj.at("int_weights")) l.int_weights.push_back(ivec_from_json(row));
        for (const auto& row : lj.at("thresholds")) l.thresholds.push_back(ivec_from_json(row));
        l.acc_bits = lj.at("acc_bits").get<int>();
        l.out_spec = spec_from_json(lj.at("out_spec"));
        g.layers.push_back(std::move(l));
    }
    g.tanh_lut = dvec_from_json(j.at("tanh_lut"));
    return g;
}

void save_json(const json& j, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << j.dump(1, '\t') << "\n";
}

json load_json(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path);
    return json::parse(f);
}

}  // namespace qp
