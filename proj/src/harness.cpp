#include "qpolicy/harness.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <thread>

namespace qp {

std::string scope_name(Scope s) {
    switch (s) {
        case Scope::All: return "all";
        case Scope::Input: return "input";
        case Scope::Output: return "output";
        case Scope::Core: return "core";
    }
    return "?";
}

Scope scope_from_name(const std::string& s) {
    if (s == "all") return Scope::All;
    if (s == "input") return Scope::Input;
    if (s == "output") return Scope::Output;
    if (s == "core") return Scope::Core;
    throw std::invalid_argument("unknown scope: " + s);
}

QuantConfig scope_quant(Scope scope, int swept_bits, int fixed_bits) {
    QuantConfig q;
    q.enabled = true;
    q.input_bits = q.weight_bits = q.act_bits = q.output_bits = fixed_bits;
    switch (scope) {
        case Scope::All:
            q.input_bits = q.weight_bits = q.act_bits = q.output_bits = swept_bits;
            break;
        case Scope::Input: q.input_bits = swept_bits; break;
        case Scope::Output: q.output_bits = swept_bits; break;
        case Scope::Core:
            q.weight_bits = swept_bits;
            q.act_bits = swept_bits;
            break;
    }
    return q;
}

bool parity(const EvalReport& candidate, const EvalReport& baseline) {
    if (candidate.returns.empty() || baseline.returns.empty())
        throw std::invalid_argument("parity: empty report");
    return candidate.mean() >= baseline.mean() - baseline.stddev();
}

TrainConfig settings_to_config(const SweepSettings& s, const QuantConfig& q, std::size_t hidden,
                               u64 seed) {
    TrainConfig c = make_preset(s.preset, s.algo);
    if (s.steps_override > 0) c.total_steps = s.steps_override;
    c.hidden_width = hidden;
    c.quant = q;
    c.seed = seed;
    c.eval_episodes = s.eval_episodes;
    return c;
}

RunOutcome run_one(const SweepSettings& s, const QuantConfig& q, std::size_t hidden, u64 seed) {
    RunOutcome out;
    try {
        auto env = make_env(s.env);
        TrainConfig cfg = settings_to_config(s, q, hidden, seed);
        TrainResult tr = train(cfg, *env);
        // shared evaluation episodes across all configs for fair parity
        EvalReport rep =
            evaluate(tr.net, *env, s.eval_episodes, derive_seed(s.seed_base, 0xe7a1));
        out.ok = true;
        out.mean_return = rep.mean();
        out.std_return = rep.stddev();
        out.net = std::move(tr.net);
        out.curve = std::move(tr.curve);
    } catch (const std::exception& e) {
        out.ok = false;
        out.error = e.what();
    }
    return out;
}

void parallel_jobs(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
    if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
    if (threads < 1) threads = 1;
    if (n == 0) return;
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        while (true) {
            std::size_t i = next.fetch_add(1);
            if (i >= n) break;
            fn(i);
        }
    };
    std::vector<std::thread> pool;
    std::size_t nthreads = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
    for (std::size_t t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
}

EvalReport SweepReport::cell(const std::string& scope, int bits) const {
    EvalReport rep;
    for (const auto& r : rows)
        if (r.scope == scope && r.bits == bits && r.ok) rep.returns.push_back(r.mean_return);
    return rep;
}

namespace {

json sweep_meta(const SweepSettings& s) {
    return json{{"env", s.env},
                {"algo", algo_name(s.algo)},
                {"preset", s.preset},
                {"steps_override", s.steps_override},
                {"seeds", s.seeds},
                {"eval_episodes", s.eval_episodes},
                {"seed_base", s.seed_base},
                {"hidden", s.hidden},
                {"scale", "desk"}};
}

}  // namespace

SweepReport sweep_cells(const SweepSettings& s,
                        const std::vector<std::pair<Scope, int>>& cells) {
    struct Job {
        std::string scope;
        int bits;
        QuantConfig q;
        u64 seed;
    };
    std::vector<Job> jobs;
    for (int k = 0; k < s.seeds; ++k)
        jobs.push_back({"fp32", 32, QuantConfig::off(), derive_seed(s.seed_base, 100 + k)});
    for (const auto& [scope, bits] : cells)
        for (int k = 0; k < s.seeds; ++k)
            jobs.push_back({scope_name(scope), bits, scope_quant(scope, bits),
                            derive_seed(s.seed_base, 100 + k)});

    std::vector<RunOutcome> results(jobs.size());
    parallel_jobs(jobs.size(), s.threads, [&](std::size_t i) {
        results[i] = run_one(s, jobs[i].q, s.hidden, jobs[i].seed);
    });

    SweepReport rep;
    rep.meta = sweep_meta(s);
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        SweepRow row;
        row.scope = jobs[i].scope;
        row.bits = jobs[i].bits;
        row.seed = jobs[i].seed;
        row.ok = results[i].ok;
        row.error = results[i].error;
        row.mean_return = results[i].mean_return;
        row.std_return = results[i].std_return;
        rep.rows.push_back(row);
    }
    return rep;
}

SweepReport sweep_scopes(const SweepSettings& s, const std::vector<int>& bits_list) {
    for (int b : bits_list)
        if (b < 2 || b > 8) throw std::invalid_argument("sweep_scopes: bits must be in 2..8");
    std::vector<std::pair<Scope, int>> cells;
    for (Scope scope : {Scope::All, Scope::Input, Scope::Output, Scope::Core})
        for (int b : bits_list) cells.push_back({scope, b});
    return sweep_cells(s, cells);
}

SelectionResult select_model(const SweepSettings& s) {
    SelectionResult sel;
    sel.log = json::array();

    // cache of aggregated runs per (b_core, h, b_in)
    struct Key {
        int b_core;
        std::size_t h;
        int b_in;
        bool operator<(const Key& o) const {
            return std::tie(b_core, h, b_in) < std::tie(o.b_core, o.h, o.b_in);
        }
    };
    std::map<Key, std::vector<RunOutcome>> cache;

    auto run_config = [&](int b_core, std::size_t h, int b_in) -> std::vector<RunOutcome>& {
        Key key{b_core, h, b_in};
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
        QuantConfig q;
        q.enabled = true;
        q.weight_bits = q.act_bits = b_core;
        q.input_bits = b_in;
        q.output_bits = 8;
        std::vector<RunOutcome> outs(static_cast<std::size_t>(s.seeds));
        parallel_jobs(outs.size(), s.threads, [&](std::size_t k) {
            outs[k] = run_one(s, q, h, derive_seed(s.seed_base, 100 + k));
        });
        return cache.emplace(key, std::move(outs)).first->second;
    };

    auto aggregate = [](const std::vector<RunOutcome>& outs) {
        EvalReport rep;
        for (const auto& o : outs)
            if (o.ok) rep.returns.push_back(o.mean_return);
        return rep;
    };

    // FP32 baseline
    {
        std::vector<RunOutcome> outs(static_cast<std::size_t>(s.seeds));
        parallel_jobs(outs.size(), s.threads, [&](std::size_t k) {
            outs[k] = run_one(s, QuantConfig::off(), s.hidden, derive_seed(s.seed_base, 100 + k));
        });
        sel.baseline = aggregate(outs);
        if (sel.baseline.returns.empty())
            throw std::runtime_error("select_model: FP32 baseline failed on every seed");
        sel.log.push_back(json{{"stage", "baseline"},
                               {"mean", sel.baseline.mean()},
                               {"std", sel.baseline.stddev()}});
    }

    // stage 1: smallest parity b_core, io fixed at 8, width at default
    sel.b_core = 8;
    sel.no_reduction_core = true;
    for (int b = 8; b >= 2; --b) {
        EvalReport rep = aggregate(run_config(b, s.hidden, 8));
        bool match = !rep.returns.empty() && parity(rep, sel.baseline);
        sel.log.push_back(json{{"stage", "core"},
                               {"bits", b},
                               {"mean", rep.returns.empty() ? 0.0 : rep.mean()},
                               {"match", match}});
        if (match) {
            sel.b_core = b;
            sel.no_reduction_core = false;
        }
    }

    // stage 2: smallest parity hidden width at the chosen core precision
    const std::size_t widths[] = {256, 128, 64, 32, 16};
    sel.h = 256;
    sel.no_reduction_width = true;
    for (std::size_t h : widths) {
        EvalReport rep = aggregate(run_config(sel.b_core, h, 8));
        bool match = !rep.returns.empty() && parity(rep, sel.baseline);
        sel.log.push_back(json{{"stage", "width"},
                               {"h", h},
                               {"mean", rep.returns.empty() ? 0.0 : rep.mean()},
                               {"match", match}});
        if (match) {
            sel.h = h;
            sel.no_reduction_width = false;
        }
    }

    // stage 3: smallest parity input precision at (b_core, h)
    sel.b_in = 8;
    sel.no_reduction_input = true;
    for (int b = 8; b >= 2; --b) {
        EvalReport rep = aggregate(run_config(sel.b_core, sel.h, b));
        bool match = !rep.returns.empty() && parity(rep, sel.baseline);
        sel.log.push_back(json{{"stage", "input"},
                               {"bits", b},
                               {"mean", rep.returns.empty() ? 0.0 : rep.mean()},
                               {"match", match}});
        if (match) {
            sel.b_in = b;
            sel.no_reduction_input = false;
        }
    }

    auto& final_runs = run_config(sel.b_core, sel.h, sel.b_in);
    sel.final_report = aggregate(final_runs);
    for (auto& o : final_runs)
        if (o.ok) sel.selected_nets.push_back(o.net);
    return sel;
}

EvalReport evaluate_noisy(const PolicyNet& net, const Environment& env, double sigma, int episodes,
                          u64 eval_seed, u64 noise_seed) {
    PolicyNet frozen = net;
    if (!frozen.frozen) frozen.freeze();
    EvalReport rep;
    rep.episodes = episodes;
    const std::size_t d = frozen.obs_dim();
    Matrix z(1, d);
    for (int ep = 0; ep < episodes; ++ep) {
        EnvState st = env.reset(derive_seed(eval_seed, static_cast<u64>(ep)));
        Rng noise(derive_seed(noise_seed, static_cast<u64>(ep)));
        double total = 0.0;
        while (true) {
            auto obs = env.observe(st);
            frozen.norm.normalize(obs, z.row(0));
            for (std::size_t i = 0; i < d; ++i) z.data[i] += sigma * noise.normal();
            ForwardTape t = forward_from_normalized(frozen, z, /*train=*/false);
            std::vector<double> a(t.action.data.begin(), t.action.data.end());
            StepResult sr = env.step(st, a);
            total += sr.reward;
            if (sr.done) break;
            st = std::move(sr.next);
        }
        rep.returns.push_back(total);
    }
    return rep;
}

EvalReport evaluate_graph(const IntegerGraph& g, const Environment& env, int episodes, u64 seed) {
    EvalReport rep;
    rep.episodes = episodes;
    for (int ep = 0; ep < episodes; ++ep) {
        EnvState st = env.reset(derive_seed(seed, static_cast<u64>(ep)));
        double total = 0.0;
        while (true) {
            auto obs = env.observe(st);
            auto res = run_integer(g, obs);
            StepResult sr = env.step(st, res.action);
            total += sr.reward;
            if (sr.done) break;
            st = std::move(sr.next);
        }
        rep.returns.push_back(total);
    }
    return rep;
}

EvalReport evaluate_graph_noisy(const IntegerGraph& g, const Environment& env, double sigma,
                                int episodes, u64 eval_seed, u64 noise_seed) {
    EvalReport rep;
    rep.episodes = episodes;
    const std::size_t d = g.obs_dim();
    std::vector<double> z(d);
    for (int ep = 0; ep < episodes; ++ep) {
        EnvState st = env.reset(derive_seed(eval_seed, static_cast<u64>(ep)));
        Rng noise(derive_seed(noise_seed, static_cast<u64>(ep)));
        double total = 0.0;
        while (true) {
            auto obs = env.observe(st);
            g.norm.normalize(obs, z);
            for (std::size_t i = 0; i < d; ++i) z[i] += sigma * noise.normal();
            auto res = run_integer_normalized(g, z);
            StepResult sr = env.step(st, res.action);
            total += sr.reward;
            if (sr.done) break;
            st = std::move(sr.next);
        }
        rep.returns.push_back(total);
    }
    return rep;
}

SweepReport noise_eval(const std::vector<const PolicyNet*>& models, const std::vector<u64>& seeds,
                       const Environment& env, const NoiseConfig& cfg, u64 eval_seed,
                       u64 noise_seed) {
    if (models.size() != seeds.size())
        throw std::invalid_argument("noise_eval: model/seed count mismatch");
    SweepReport rep;
    rep.meta = json{{"env", env.name()},
                    {"episodes_per_model", cfg.episodes_per_model},
                    {"models", models.size()},
                    {"scale", "desk"}};
    for (double sigma : cfg.sigmas)
        for (std::size_t m = 0; m < models.size(); ++m) {
            EvalReport r = evaluate_noisy(*models[m], env, sigma, cfg.episodes_per_model,
                                          eval_seed, noise_seed);
            SweepRow row;
            row.scope = "noise";
            row.bits = 0;
            row.seed = seeds[m];
            row.mean_return = r.mean();
            row.std_return = r.stddev();
            // reuse bits field? sigma carried via scope string instead
            row.scope = dtos(sigma);
            rep.rows.push_back(row);
        }
    return rep;
}

// ---- CSV / manifest ----

std::string csv_render(const std::string& schema, const json& meta,
                       const std::vector<std::string>& header,
                       const std::vector<std::vector<std::string>>& rows) {
    std::string out = "# schema=" + schema;
    for (auto it = meta.begin(); it != meta.end(); ++it) {
        out += " " + it.key() + "=";
        if (it.value().is_string())
            out += it.value().get<std::string>();
        else
            out += it.value().dump();
    }
    out += "\n";
    for (std::size_t i = 0; i < header.size(); ++i)
        out += header[i] + (i + 1 < header.size() ? "," : "\n");
    for (const auto& r : rows)
        for (std::size_t i = 0; i < r.size(); ++i) out += r[i] + (i + 1 < r.size() ? "," : "\n");
    return out;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << content;
}

std::string sweep_csv(const SweepReport& r) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& row : r.rows)
        rows.push_back({row.scope, std::to_string(row.bits), std::to_string(row.seed),
                        row.ok ? dtos(row.mean_return) : "nan",
                        row.ok ? dtos(row.std_return) : "nan"});
    return csv_render("sweep.v1", r.meta, {"scope", "bits", "seed", "mean_return", "std_return"},
                      rows);
}

std::string curve_csv(const std::vector<std::pair<u64, std::vector<CurvePoint>>>& curves,
                      const json& meta) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& [seed, curve] : curves)
        for (const auto& p : curve)
            rows.push_back({std::to_string(p.step), std::to_string(seed), dtos(p.mean_return),
                            dtos(p.std_return)});
    return csv_render("curve.v1", meta, {"step", "seed", "mean_return", "std_return"}, rows);
}

std::string noise_csv(const SweepReport& r) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& row : r.rows)
        rows.push_back(
            {row.scope, std::to_string(row.seed), dtos(row.mean_return), dtos(row.std_return)});
    return csv_render("noise.v1", r.meta, {"sigma", "seed", "mean_return", "std_return"}, rows);
}

u64 file_fnv(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path);
    Fnv1a h;
    char buf[65536];
    while (f) {
        f.read(buf, sizeof(buf));
        h.update(buf, static_cast<std::size_t>(f.gcount()));
    }
    return h.digest();
}

void write_manifest(const std::string& dir, const std::string& command, const json& config,
                    const std::vector<std::string>& artifacts) {
    json m;
    m["format"] = "qpolicy.manifest.v1";
    m["command"] = command;
    m["config"] = config;
    m["config_hash"] = hex64(Fnv1a{}.h);
    {
        Fnv1a h;
        h.update_str(config.dump());
        m["config_hash"] = hex64(h.digest());
    }
    json arts = json::array();
    for (const auto& a : artifacts) {
        std::filesystem::path p = std::filesystem::path(dir) / a;
        arts.push_back(json{{"file", a},
                            {"bytes", std::filesystem::file_size(p)},
                            {"fnv64", hex64(file_fnv(p.string()))}});
    }
    m["artifacts"] = std::move(arts);
    save_json(m, (std::filesystem::path(dir) / "manifest.json").string());
}

}  // namespace qp
