#include "qpolicy/rl.hpp"

#include <cmath>
#include <stdexcept>

#include "qpolicy/critic.hpp"
#include "qpolicy/optim.hpp"
#include "qpolicy/replay.hpp"

namespace qp {

std::string algo_name(Algo a) { return a == Algo::Ddpg ? "ddpg" : "sac"; }

Algo algo_from_name(const std::string& s) {
    if (s == "ddpg") return Algo::Ddpg;
    if (s == "sac") return Algo::Sac;
    throw std::invalid_argument("unknown algorithm: " + s);
}

TrainConfig preset_paper(Algo algo) {
    TrainConfig c;
    c.algorithm = algo;
    c.preset = "paper";
    c.total_steps = 1'000'000;
    c.buffer_capacity = 1'000'000;
    c.gamma = 0.99;
    c.tau = 0.005;
    c.batch_size = 256;
    c.hidden_width = 256;
    c.critic_width = 256;
    if (algo == Algo::Sac) {
        c.learning_starts = 5'000;
        c.policy_lr = 3e-4;
        c.q_lr = 1e-3;
        c.policy_update_freq = 2;
        c.target_update_freq = 1;
        c.entropy_autotune = true;
    } else {
        c.learning_starts = 25'000;
        c.policy_lr = 3e-4;
        c.q_lr = 3e-4;
        c.policy_update_freq = 2;
        c.target_update_freq = 2;
        c.exploration_noise_std = 0.1;
    }
    return c;
}

TrainConfig preset_desk(Algo algo) {
    TrainConfig c = preset_paper(algo);
    c.preset = "desk";
    c.total_steps = 50'000;
    c.learning_starts = 1'000;
    c.eval_every = 5'000;
    c.eval_episodes = 10;
    c.critic_width = 128;
    return c;
}

TrainConfig make_preset(const std::string& name, Algo algo) {
    if (name == "paper") return preset_paper(algo);
    if (name == "desk") return preset_desk(algo);
    throw std::invalid_argument("unknown preset: " + name);
}

void soft_update_policy(PolicyNet& target, const PolicyNet& online, double tau) {
    auto blend = [tau](double& t, double o) { t = (1.0 - tau) * t + tau * o; };
    for (std::size_t li = 0; li < target.layers.size(); ++li) {
        auto& tl = target.layers[li];
        const auto& ol = online.layers[li];
        for (std::size_t i = 0; i < tl.W.data.size(); ++i) blend(tl.W.data[i], ol.W.data[i]);
        for (std::size_t i = 0; i < tl.b.size(); ++i) blend(tl.b[i], ol.b[i]);
        blend(tl.out_q.spec.scale, ol.out_q.spec.scale);
        tl.out_q.log_scale = std::log(tl.out_q.spec.scale);
        tl.out_q.warmup_steps_remaining = ol.out_q.warmup_steps_remaining;
        tl.out_q.ema_statistic = ol.out_q.ema_statistic;
        tl.out_q.learnable = ol.out_q.learnable;
    }
    blend(target.input_q.spec.scale, online.input_q.spec.scale);
    target.input_q.log_scale = std::log(target.input_q.spec.scale);
    target.input_q.warmup_steps_remaining = online.input_q.warmup_steps_remaining;
    target.input_q.ema_statistic = online.input_q.ema_statistic;
    target.input_q.learnable = online.input_q.learnable;
    if (target.sigma && online.sigma) {
        for (std::size_t i = 0; i < target.sigma->W1.data.size(); ++i)
            blend(target.sigma->W1.data[i], online.sigma->W1.data[i]);
        for (std::size_t i = 0; i < target.sigma->b1.size(); ++i)
            blend(target.sigma->b1[i], online.sigma->b1[i]);
        for (std::size_t i = 0; i < target.sigma->W2.data.size(); ++i)
            blend(target.sigma->W2.data[i], online.sigma->W2.data[i]);
        for (std::size_t i = 0; i < target.sigma->b2.size(); ++i)
            blend(target.sigma->b2[i], online.sigma->b2[i]);
    }
    target.norm = online.norm;
}

EvalReport evaluate(const PolicyNet& net, const Environment& env, int episodes, u64 seed) {
    PolicyNet frozen = net;
    if (!frozen.frozen) frozen.freeze();
    EvalReport rep;
    rep.episodes = episodes;
    rep.returns.reserve(episodes);
    for (int ep = 0; ep < episodes; ++ep) {
        EnvState st = env.reset(derive_seed(seed, static_cast<u64>(ep)));
        double total = 0.0;
        while (true) {
            auto obs = env.observe(st);
            auto a = act_deterministic(frozen, obs);
            StepResult sr = env.step(st, a);
            total += sr.reward;
            if (sr.done) break;
            st = std::move(sr.next);
        }
        rep.returns.push_back(total);
    }
    return rep;
}

namespace {

struct PolicyPack {
    std::vector<std::pair<double*, const double*>> segs;
    std::vector<std::size_t> sizes;
};

PolicyPack pack_policy(PolicyNet& net, PolicyGrads& g) {
    PolicyPack p;
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        auto& L = net.layers[li];
        p.segs.push_back({L.W.data.data(), g.dW[li].data.data()});
        p.sizes.push_back(L.W.data.size());
        p.segs.push_back({L.b.data(), g.db[li].data()});
        p.sizes.push_back(L.b.size());
        p.segs.push_back({&L.out_q.log_scale, &g.dlog_out_scale[li]});
        p.sizes.push_back(1);
    }
    p.segs.push_back({&net.input_q.log_scale, &g.dlog_input_scale});
    p.sizes.push_back(1);
    if (net.sigma) {
        p.segs.push_back({net.sigma->W1.data.data(), g.dW1s.data.data()});
        p.sizes.push_back(net.sigma->W1.data.size());
        p.segs.push_back({net.sigma->b1.data(), g.db1s.data()});
        p.sizes.push_back(net.sigma->b1.size());
        p.segs.push_back({net.sigma->W2.data.data(), g.dW2s.data.data()});
        p.sizes.push_back(net.sigma->W2.data.size());
        p.segs.push_back({net.sigma->b2.data(), g.db2s.data()});
        p.sizes.push_back(net.sigma->b2.size());
    }
    return p;
}

std::size_t pack_total(const PolicyPack& p) {
    std::size_t n = 0;
    for (auto s : p.sizes) n += s;
    return n;
}

void apply_learned_scales(PolicyNet& net) {
    if (net.input_q.learnable && !net.input_q.warming_up()) net.input_q.apply_log_scale();
    for (auto& l : net.layers)
        if (l.out_q.learnable && !l.out_q.warming_up()) l.out_q.apply_log_scale();
}

void check_finite(double v, const char* what, i64 step) {
    if (!std::isfinite(v))
        throw std::runtime_error(std::string("train: non-finite ") + what + " at step " +
                                 std::to_string(step) + " (quantizer scale blow-up?)");
}

Matrix concat_cols(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows, a.cols + b.cols);
    for (std::size_t r = 0; r < a.rows; ++r) {
        std::copy(a.row(r).begin(), a.row(r).end(), out.row(r).begin());
        std::copy(b.row(r).begin(), b.row(r).end(), out.row(r).begin() + a.cols);
    }
    return out;
}

constexpr double kLogProbEps = 1e-6;
constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5*log(2*pi)

}  // namespace

TrainResult train(const TrainConfig& cfg, const Environment& env) {
    init_blas_single_thread();
    const bool sac = cfg.algorithm == Algo::Sac;
    const std::size_t obs_dim = env.state_dim();
    const std::size_t act_dim = env.action_dim();
    const std::size_t B = cfg.batch_size;

    Rng net_rng(derive_seed(cfg.seed, 1));
    Rng q1_rng(derive_seed(cfg.seed, 2));
    Rng q2_rng(derive_seed(cfg.seed, 3));
    Rng explore_rng(derive_seed(cfg.seed, 4));
    Rng replay_rng(derive_seed(cfg.seed, 5));
    const u64 env_stream = derive_seed(cfg.seed, 6);
    const u64 eval_stream = derive_seed(cfg.seed, 7);

    PolicyNet net = make_policy_net(obs_dim, act_dim, cfg.hidden_width, cfg.quant, sac, net_rng);

    CriticNet q1(obs_dim + act_dim, cfg.critic_width, q1_rng);
    CriticNet q2 = sac ? CriticNet(obs_dim + act_dim, cfg.critic_width, q2_rng) : CriticNet();
    CriticNet tq1 = q1, tq2 = q2;
    Adam q1_opt(cfg.q_lr, q1.param_count());
    Adam q2_opt(cfg.q_lr, sac ? q2.param_count() : 0);
    CriticNet::Grads q1_g(q1);
    CriticNet::Grads q2_g(sac ? q2 : q1);

    PolicyGrads pg(net);
    PolicyPack pack0 = pack_policy(net, pg);
    Adam pol_opt(cfg.policy_lr, pack_total(pack0));

    PolicyNet target_actor = net;  // DDPG only

    // SAC entropy temperature
    double log_alpha = 0.0;
    double alpha = cfg.entropy_autotune ? 1.0 : 0.2;
    Adam alpha_opt(cfg.q_lr, 1);
    const double target_entropy = -static_cast<double>(act_dim);

    ReplayBuffer buffer(cfg.buffer_capacity);
    TrainResult result;
    result.critic_loss_log.reserve(static_cast<std::size_t>(
        std::max<i64>(0, cfg.total_steps - cfg.learning_starts)));

    u64 episode_idx = 0;
    EnvState st = env.reset(derive_seed(env_stream, episode_idx));
    std::vector<double> obs = env.observe(st);
    if (!net.norm.frozen) net.norm.update(obs);

    // one reusable single-row matrix for collection forwards
    Matrix obs_row(1, obs_dim);

    auto sample_action = [&](const std::vector<double>& o) {
        std::copy(o.begin(), o.end(), obs_row.data.begin());
        ForwardTape t = forward_fakequant(net, obs_row, /*train=*/true);
        std::vector<double> a(act_dim);
        if (sac) {
            for (std::size_t j = 0; j < act_dim; ++j) {
                double sd = std::exp(t.sig_logstd.at(0, j));
                double u = t.mu.at(0, j) + sd * explore_rng.normal();
                a[j] = std::tanh(u);
            }
        } else {
            for (std::size_t j = 0; j < act_dim; ++j) {
                double v = t.action.at(0, j) + cfg.exploration_noise_std * explore_rng.normal();
                a[j] = std::clamp(v, -1.0, 1.0);
            }
        }
        return a;
    };

    Matrix bs(B, obs_dim), bs2(B, obs_dim), ba(B, act_dim);
    Vector br(B, 0.0), bdone(B, 0.0);

    for (i64 step = 0; step < cfg.total_steps; ++step) {
        // ---- collect ----
        std::vector<double> a(act_dim);
        if (step < cfg.learning_starts) {
            for (auto& x : a) x = explore_rng.uniform(-1.0, 1.0);
        } else {
            a = sample_action(obs);
        }
        StepResult sr = env.step(st, a);
        std::vector<double> obs_next = env.observe(sr.next);
        net.norm.update(obs_next);
        // time-limit truncation is not a terminal for bootstrapping
        buffer.push(Transition{obs, a, sr.reward, obs_next, false});
        if (sr.done) {
            ++episode_idx;
            st = env.reset(derive_seed(env_stream, episode_idx));
            obs = env.observe(st);
            net.norm.update(obs);
        } else {
            st = std::move(sr.next);
            obs = std::move(obs_next);
        }

        // ---- update ----
        if (step >= cfg.learning_starts) {
            auto idx = buffer.sample_indices(B, replay_rng);
            for (std::size_t i = 0; i < B; ++i) {
                const Transition& tr = buffer.at(idx[i]);
                std::copy(tr.s.begin(), tr.s.end(), bs.row(i).begin());
                std::copy(tr.s_next.begin(), tr.s_next.end(), bs2.row(i).begin());
                std::copy(tr.a.begin(), tr.a.end(), ba.row(i).begin());
                br[i] = tr.r;
                bdone[i] = tr.terminal ? 1.0 : 0.0;
            }

            // target values
            Vector y(B, 0.0);
            if (sac) {
                ForwardTape t2 = forward_fakequant(net, bs2, /*train=*/true);
                Matrix a2(B, act_dim);
                Vector logp2(B, 0.0);
                for (std::size_t i = 0; i < B; ++i)
                    for (std::size_t j = 0; j < act_dim; ++j) {
                        double ls = t2.sig_logstd.at(i, j);
                        double sd = std::exp(ls);
                        double eps = explore_rng.normal();
                        double u = t2.mu.at(i, j) + sd * eps;
                        double th = std::tanh(u);
                        a2.at(i, j) = th;
                        logp2[i] += -ls - kHalfLog2Pi - 0.5 * eps * eps -
                                    std::log(1.0 - th * th + kLogProbEps);
                    }
                Matrix in2 = concat_cols(t2.normed, a2);
                auto c1 = tq1.forward(in2);
                auto c2 = tq2.forward(in2);
                for (std::size_t i = 0; i < B; ++i) {
                    double qmin = std::min(c1.y[i], c2.y[i]) - alpha * logp2[i];
                    y[i] = br[i] + cfg.gamma * (1.0 - bdone[i]) * qmin;
                }
            } else {
                ForwardTape t2 = forward_fakequant(target_actor, bs2, /*train=*/false);
                Matrix in2 = concat_cols(t2.normed, t2.action);
                auto c1 = tq1.forward(in2);
                for (std::size_t i = 0; i < B; ++i)
                    y[i] = br[i] + cfg.gamma * (1.0 - bdone[i]) * c1.y[i];
            }

            // critic regression; the batch state normalization comes from the
            // live policy normalizer
            Matrix znow(B, obs_dim);
            for (std::size_t i = 0; i < B; ++i) {
                net.norm.normalize(bs.row(i), znow.row(i));
                for (auto& v : znow.row(i)) v = std::clamp(v, -net.obs_clip, net.obs_clip);
            }
            Matrix in_sa = concat_cols(znow, ba);
            auto c1 = q1.forward(in_sa);
            double loss = 0.0;
            Vector d1(B, 0.0);
            for (std::size_t i = 0; i < B; ++i) {
                double e = c1.y[i] - y[i];
                loss += e * e;
                d1[i] = 2.0 * e / static_cast<double>(B);
            }
            loss /= static_cast<double>(B);
            q1_g.zero();
            q1.backward(c1, d1, q1_g, nullptr);
            q1.adam_step(q1_opt, q1_g);
            if (sac) {
                auto c2 = q2.forward(in_sa);
                double l2 = 0.0;
                Vector d2(B, 0.0);
                for (std::size_t i = 0; i < B; ++i) {
                    double e = c2.y[i] - y[i];
                    l2 += e * e;
                    d2[i] = 2.0 * e / static_cast<double>(B);
                }
                l2 /= static_cast<double>(B);
                loss += l2;
                q2_g.zero();
                q2.backward(c2, d2, q2_g, nullptr);
                q2.adam_step(q2_opt, q2_g);
            }
            check_finite(loss, "critic loss", step);
            result.critic_loss_log.push_back(loss);
            ++result.updates;

            // ---- policy update ----
            if (step % cfg.policy_update_freq == 0) {
                ForwardTape tp = forward_fakequant(net, bs, /*train=*/true);
                pg.zero();
                double actor_loss = 0.0;
                if (sac) {
                    Matrix api(B, act_dim);
                    Vector logp(B, 0.0);
                    Matrix eps(B, act_dim), std_(B, act_dim);
                    for (std::size_t i = 0; i < B; ++i)
                        for (std::size_t j = 0; j < act_dim; ++j) {
                            double ls = tp.sig_logstd.at(i, j);
                            double sd = std::exp(ls);
                            double e = explore_rng.normal();
                            double u = tp.mu.at(i, j) + sd * e;
                            double th = std::tanh(u);
                            eps.at(i, j) = e;
                            std_.at(i, j) = sd;
                            api.at(i, j) = th;
                            logp[i] += -ls - kHalfLog2Pi - 0.5 * e * e -
                                       std::log(1.0 - th * th + kLogProbEps);
                        }
                    Matrix in_pi = concat_cols(tp.normed, api);
                    auto p1 = q1.forward(in_pi);
                    auto p2 = q2.forward(in_pi);
                    // gradient flows through the per-sample argmin critic
                    Vector dmin1(B, 0.0), dmin2(B, 0.0);
                    for (std::size_t i = 0; i < B; ++i) {
                        double qmin = std::min(p1.y[i], p2.y[i]);
                        actor_loss += alpha * logp[i] - qmin;
                        double d = -1.0 / static_cast<double>(B);
                        (p1.y[i] <= p2.y[i] ? dmin1[i] : dmin2[i]) = d;
                    }
                    actor_loss /= static_cast<double>(B);
                    CriticNet::Grads scratch1(q1), scratch2(q2);
                    Matrix dx1, dx2;
                    q1.backward(p1, dmin1, scratch1, &dx1);
                    q2.backward(p2, dmin2, scratch2, &dx2);
                    // dL/da from the critics plus the entropy term
                    Matrix dmu(B, act_dim), dls(B, act_dim);
                    const double invB = 1.0 / static_cast<double>(B);
                    for (std::size_t i = 0; i < B; ++i)
                        for (std::size_t j = 0; j < act_dim; ++j) {
                            double th = api.at(i, j);
                            double da = dx1.at(i, obs_dim + j) + dx2.at(i, obs_dim + j);
                            // d(-log(1-tanh(u)^2+eps))/du
                            double dcorr_du =
                                2.0 * th * (1.0 - th * th) / (1.0 - th * th + kLogProbEps);
                            double du = da * (1.0 - th * th) + alpha * invB * dcorr_du;
                            dmu.at(i, j) = du;
                            dls.at(i, j) =
                                du * std_.at(i, j) * eps.at(i, j) - alpha * invB;
                        }
                    backward(net, tp, dmu, dls, pg);
                    check_finite(actor_loss, "actor loss", step);
                    PolicyPack pk = pack_policy(net, pg);
                    pol_opt.step(pk.segs, pk.sizes);
                    apply_learned_scales(net);

                    if (cfg.entropy_autotune) {
                        double mean_term = 0.0;
                        for (std::size_t i = 0; i < B; ++i)
                            mean_term += logp[i] + target_entropy;
                        mean_term /= static_cast<double>(B);
                        double galpha = -alpha * mean_term;
                        std::pair<double*, const double*> seg{&log_alpha, &galpha};
                        std::size_t one = 1;
                        alpha_opt.step({&seg, 1}, {&one, 1});
                        alpha = std::exp(log_alpha);
                    }
                } else {
                    Matrix in_pi = concat_cols(tp.normed, tp.action);
                    auto p1 = q1.forward(in_pi);
                    Vector dq(B, 0.0);
                    for (std::size_t i = 0; i < B; ++i) {
                        actor_loss -= p1.y[i];
                        dq[i] = -1.0 / static_cast<double>(B);
                    }
                    actor_loss /= static_cast<double>(B);
                    CriticNet::Grads scratch1(q1);
                    Matrix dx1;
                    q1.backward(p1, dq, scratch1, &dx1);
                    Matrix dmu(B, act_dim), dls;
                    for (std::size_t i = 0; i < B; ++i)
                        for (std::size_t j = 0; j < act_dim; ++j) {
                            double th = tp.action.at(i, j);
                            dmu.at(i, j) = dx1.at(i, obs_dim + j) * (1.0 - th * th);
                        }
                    backward(net, tp, dmu, dls, pg);
                    check_finite(actor_loss, "actor loss", step);
                    PolicyPack pk = pack_policy(net, pg);
                    pol_opt.step(pk.segs, pk.sizes);
                    apply_learned_scales(net);
                }
            }

            // ---- target updates ----
            if (step % cfg.target_update_freq == 0) {
                tq1.soft_update_from(q1, cfg.tau);
                if (sac) tq2.soft_update_from(q2, cfg.tau);
                if (!sac) soft_update_policy(target_actor, net, cfg.tau);
            }
        }

        // ---- periodic evaluation ----
        if (cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0) {
            EvalReport rep =
                evaluate(net, env, cfg.eval_episodes, derive_seed(eval_stream, static_cast<u64>(step + 1)));
            result.curve.push_back({step + 1, rep.mean(), rep.stddev()});
        }
    }

    net.freeze();
    result.net = std::move(net);
    return result;
}

}  // namespace qp
