#ifndef COLIQ_FBSDE_HPP
#define COLIQ_FBSDE_HPP

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "coliq/params.hpp"
#include "coliq/policy.hpp"
#include "coliq/rng.hpp"
#include "coliq/simulate.hpp"

namespace coliq {

// ---------------------------------------------------------------------------
// Reverse-mode tape
// ---------------------------------------------------------------------------

/// Append-only tape for reverse-mode differentiation. Node i stores up to two
/// parent indices with local partials; adjoints(root) runs one reverse sweep
/// and returns d root / d node for every node. Reused across batch members by
/// clear(), which keeps capacity.
class Tape {
  public:
    int constant(double v) { return push(v, -1, 0.0, -1, 0.0); }

    int unary(double v, int p, double d) { return push(v, p, d, -1, 0.0); }

    int binary(double v, int p1, double d1, int p2, double d2) { return push(v, p1, d1, p2, d2); }

    double val(int i) const { return vals_[static_cast<std::size_t>(i)]; }

    std::size_t size() const { return vals_.size(); }

    void clear() {
        nodes_.clear();
        vals_.clear();
    }

    std::vector<double> adjoints(int root) const {
        std::vector<double> adj(vals_.size(), 0.0);
        adj[static_cast<std::size_t>(root)] = 1.0;
        for (int i = static_cast<int>(vals_.size()) - 1; i >= 0; --i) {
            const double a = adj[static_cast<std::size_t>(i)];
            if (a == 0.0) continue;
            const Node& n = nodes_[static_cast<std::size_t>(i)];
            if (n.p1 >= 0) adj[static_cast<std::size_t>(n.p1)] += n.d1 * a;
            if (n.p2 >= 0) adj[static_cast<std::size_t>(n.p2)] += n.d2 * a;
        }
        return adj;
    }

  private:
    struct Node {
        int p1, p2;
        double d1, d2;
    };

    int push(double v, int p1, double d1, int p2, double d2) {
        nodes_.push_back({p1, p2, d1, d2});
        vals_.push_back(v);
        return static_cast<int>(vals_.size()) - 1;
    }

    std::vector<Node> nodes_;
    std::vector<double> vals_;
};

/// Value handle on a Tape. Cheap to copy; arithmetic records nodes.
struct Var {
    Tape* tape = nullptr;
    int idx = -1;

    double val() const { return tape->val(idx); }
};

inline Var make_var(Tape& t, double v) { return {&t, t.constant(v)}; }

inline double value_of(double x) { return x; }
inline double value_of(const Var& x) { return x.val(); }

inline Var operator+(Var a, Var b) {
    return {a.tape, a.tape->binary(a.val() + b.val(), a.idx, 1.0, b.idx, 1.0)};
}
inline Var operator+(Var a, double b) { return {a.tape, a.tape->unary(a.val() + b, a.idx, 1.0)}; }
inline Var operator+(double a, Var b) { return b + a; }

inline Var operator-(Var a, Var b) {
    return {a.tape, a.tape->binary(a.val() - b.val(), a.idx, 1.0, b.idx, -1.0)};
}
inline Var operator-(Var a, double b) { return {a.tape, a.tape->unary(a.val() - b, a.idx, 1.0)}; }
inline Var operator-(double a, Var b) { return {b.tape, b.tape->unary(a - b.val(), b.idx, -1.0)}; }
inline Var operator-(Var a) { return {a.tape, a.tape->unary(-a.val(), a.idx, -1.0)}; }

inline Var operator*(Var a, Var b) {
    return {a.tape, a.tape->binary(a.val() * b.val(), a.idx, b.val(), b.idx, a.val())};
}
inline Var operator*(Var a, double b) { return {a.tape, a.tape->unary(a.val() * b, a.idx, b)}; }
inline Var operator*(double a, Var b) { return b * a; }

inline Var operator/(Var a, Var b) {
    const double bv = b.val();
    return {a.tape,
            a.tape->binary(a.val() / bv, a.idx, 1.0 / bv, b.idx, -a.val() / (bv * bv))};
}
inline Var operator/(Var a, double b) { return a * (1.0 / b); }
inline Var operator/(double a, Var b) {
    const double bv = b.val();
    return {b.tape, b.tape->unary(a / bv, b.idx, -a / (bv * bv))};
}

inline Var exp(Var a) {
    const double e = std::exp(a.val());
    return {a.tape, a.tape->unary(e, a.idx, e)};
}

inline Var tanh(Var a) {
    const double t = std::tanh(a.val());
    return {a.tape, a.tape->unary(t, a.idx, 1.0 - t * t)};
}

/// Positive part max(x, 0) with subgradient 1_{x > 0}.
inline Var pos(Var a) {
    const bool on = a.val() > 0.0;
    return {a.tape, a.tape->unary(on ? a.val() : 0.0, a.idx, on ? 1.0 : 0.0)};
}
inline double pos(double a) { return a > 0.0 ? a : 0.0; }

/// |x| with subgradient sign(x) (0 at 0).
inline Var abs_val(Var a) {
    const double v = a.val();
    const double s = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
    return {a.tape, a.tape->unary(std::abs(v), a.idx, s)};
}
inline double abs_val(double a) { return std::abs(a); }

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

/// Fully connected architecture descriptor: widths front to back, tanh on
/// hidden layers, linear output.
struct MlpSpec {
    std::vector<int> widths{4, 16, 16, 2};
    std::string activation = "tanh";

    std::size_t param_count() const {
        std::size_t n = 0;
        for (std::size_t l = 0; l + 1 < widths.size(); ++l)
            n += static_cast<std::size_t>(widths[l]) * static_cast<std::size_t>(widths[l + 1]) +
                 static_cast<std::size_t>(widths[l + 1]);
        return n;
    }

    std::string describe() const {
        std::string s = "[";
        for (std::size_t i = 0; i < widths.size(); ++i)
            s += (i ? "," : "") + std::to_string(widths[i]);
        return s + "]/" + activation;
    }

    void validate() const {
        if (widths.size() < 2) throw std::invalid_argument("MlpSpec: need at least two layers");
        for (int w : widths)
            if (w < 1) throw std::invalid_argument("MlpSpec: widths must be >= 1");
        if (activation != "tanh")
            throw std::invalid_argument("MlpSpec: unsupported activation " + activation);
    }

    bool operator==(const MlpSpec& o) const {
        return widths == o.widths && activation == o.activation;
    }
};

/// Trainable state: a scalar initial value y0 (the value-gradient at the fixed
/// initial state) plus one shared network mapping the scaled (t, a, eps, q) to
/// the two diffusion loadings. input_scale divides each input coordinate.
struct NetParams {
    MlpSpec spec;
    double y0 = 0.0;
    std::vector<double> weights;
    std::array<double, 4> input_scale{1.0, 1.0, 1.0, 1.0};

    void validate() const {
        spec.validate();
        if (spec.widths.front() != 4)
            throw std::invalid_argument("NetParams: input width must be 4");
        if (spec.widths.back() != 2)
            throw std::invalid_argument("NetParams: output width must be 2");
        if (weights.size() != spec.param_count())
            throw std::invalid_argument(
                "NetParams: weight count " + std::to_string(weights.size()) +
                " does not match architecture " + spec.describe() + " (expected " +
                std::to_string(spec.param_count()) + ")");
        for (double w : weights)
            if (!std::isfinite(w)) throw std::invalid_argument("NetParams: nonfinite weight");
        if (!std::isfinite(y0)) throw std::invalid_argument("NetParams: nonfinite y0");
        for (double s : input_scale)
            if (!(s > 0.0) || !std::isfinite(s))
                throw std::invalid_argument("NetParams: input_scale entries must be positive");
    }
};

/// Layer layout per block: weight matrix row-major (out x in), then biases.
template <typename S>
std::vector<S> mlp_apply(const MlpSpec& spec, const std::vector<S>& params,
                         const std::vector<S>& input) {
    using std::tanh;
    std::size_t off = 0;
    std::vector<S> cur = input;
    for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
        const std::size_t nin = static_cast<std::size_t>(spec.widths[l]);
        const std::size_t nout = static_cast<std::size_t>(spec.widths[l + 1]);
        std::vector<S> nxt;
        nxt.reserve(nout);
        for (std::size_t o = 0; o < nout; ++o) {
            S acc = params[off + nin * nout + o];
            for (std::size_t i = 0; i < nin; ++i) acc = acc + params[off + o * nin + i] * cur[i];
            nxt.push_back(l + 2 < spec.widths.size() ? tanh(acc) : acc);
        }
        off += nin * nout + nout;
        cur = std::move(nxt);
    }
    return cur;
}

/// Glorot-normal weight init, zero biases, final layer damped 10x so the
/// initial diffusion loadings are small; y0 starts at the given value.
inline NetParams initial_net_params(const MlpSpec& spec, double y0_init,
                                    const std::array<double, 4>& input_scale,
                                    std::uint64_t seed) {
    spec.validate();
    NetParams net;
    net.spec = spec;
    net.y0 = y0_init;
    net.input_scale = input_scale;
    net.weights.assign(spec.param_count(), 0.0);
    NormalRng rng(seed);
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
        const std::size_t nin = static_cast<std::size_t>(spec.widths[l]);
        const std::size_t nout = static_cast<std::size_t>(spec.widths[l + 1]);
        const bool last = l + 2 == spec.widths.size();
        const double sd = std::sqrt(2.0 / static_cast<double>(nin + nout)) * (last ? 0.1 : 1.0);
        for (std::size_t j = 0; j < nin * nout; ++j) net.weights[off + j] = sd * rng.normal();
        off += nin * nout + nout;  // biases stay zero
    }
    net.validate();
    return net;
}

// ---------------------------------------------------------------------------
// FBSDE building blocks
// ---------------------------------------------------------------------------

/// Driver of the backward equation: g(x) = -2 phi1 q - phi2 a e^eps - phi3 a.
template <typename S>
S fbsde_driver(const ModelParams& p, double a, double eps, const S& q) {
    return q * (-2.0 * p.phi1) + (-p.phi2 * a * std::exp(eps) - p.phi3 * a);
}

inline double driver_g(const ModelParams& p, const MarketState& s) {
    return fbsde_driver<double>(p, s.a, s.eps, s.q);
}

/// Terminal condition h(x) = a e^eps - 2 chi q.
template <typename S>
S fbsde_terminal(const ModelParams& p, double a, double eps, const S& q) {
    return q * (-2.0 * p.chi) + a * std::exp(eps);
}

inline double terminal_h(const ModelParams& p, const MarketState& s) {
    return fbsde_terminal<double>(p, s.a, s.eps, s.q);
}

/// Candidate rate given the adjoint value y: (a e^eps - y)^+ / (2 eta).
inline double fbsde_control(const ModelParams& p, const MarketState& s, double y) {
    return pos(s.a * std::exp(s.eps) - y) / (2.0 * p.eta);
}

// ---------------------------------------------------------------------------
// Noise batches and rollout
// ---------------------------------------------------------------------------

/// Brownian increments for a batch of members, flat [member * n_steps + i].
struct NoiseBatch {
    std::size_t n_members = 0;
    std::size_t n_steps = 0;
    double dt = 0.0;
    std::vector<double> dw1, dw2;

    static NoiseBatch sample(std::size_t n_members, std::size_t n_steps, double horizon,
                             std::uint64_t seed) {
        if (n_steps == 0 || !(horizon > 0.0))
            throw std::invalid_argument("NoiseBatch: need n_steps >= 1 and horizon > 0");
        NoiseBatch b;
        b.n_members = n_members;
        b.n_steps = n_steps;
        b.dt = horizon / static_cast<double>(n_steps);
        b.dw1.resize(n_members * n_steps);
        b.dw2.resize(n_members * n_steps);
        const double sq = std::sqrt(b.dt);
        for (std::size_t m = 0; m < n_members; ++m) {
            NormalRng rng(derive_seed(seed, m));
            for (std::size_t i = 0; i < n_steps; ++i) {
                b.dw1[m * n_steps + i] = sq * rng.normal();
                b.dw2[m * n_steps + i] = sq * rng.normal();
            }
        }
        return b;
    }
};

/// Terminal quantities of one member rollout; q and y carry the scalar type.
template <typename S>
struct MemberEnd {
    S y_T;
    S h_T;
    S q_T;
    double a_T = 0.0;
    double eps_T = 0.0;
};

/// Steps the coupled system forward from `initial` along one member's noise:
/// exact lognormal/OU exogenous factors (doubles), Euler updates for the
/// controlled inventory and the backward value, diffusion loadings from the
/// network. The inventory is intentionally not clamped: the backward equation
/// lives on the unconstrained state space. `mk` lifts a double into S.
template <typename S, typename Make>
MemberEnd<S> rollout_member(const ModelParams& p, const MlpSpec& spec,
                            const std::vector<S>& weights, const std::array<double, 4>& scale,
                            S y0, const MarketState& initial, const double* dw1,
                            const double* dw2, std::size_t n_steps, double dt, Make&& mk) {
    using std::tanh;
    const double drift = (p.mu1 - 0.5 * p.sigma1 * p.sigma1) * dt;
    const double decay = std::exp(-p.k * dt);
    const double ou_sd = ou_stddev(p, dt);
    const double rho_c = std::sqrt(1.0 - p.rho * p.rho);
    const double sqdt = std::sqrt(dt);

    double a = initial.a, e = initial.eps;
    S q = mk(initial.q);
    S y = y0;
    for (std::size_t i = 0; i < n_steps; ++i) {
        const double t_i = initial.t + static_cast<double>(i) * dt;
        const double s_i = a * std::exp(e);
        std::vector<S> in{mk(t_i / scale[0]), mk(a / scale[1]), mk(e / scale[2]),
                          q * (1.0 / scale[3])};
        const std::vector<S> z = mlp_apply(spec, weights, in);
        const S g = fbsde_driver(p, a, e, q);
        const S c = pos(mk(s_i) - y) * (1.0 / (2.0 * p.eta));
        y = y - g * dt + z[0] * dw1[i] + z[1] * dw2[i];
        q = q - c * dt;
        const double xi = (p.rho * dw1[i] + rho_c * dw2[i]) / sqdt;
        a *= std::exp(drift + p.sigma1 * dw1[i]);
        e = e * decay + ou_sd * xi;
        if (!std::isfinite(value_of(y)) || !std::isfinite(value_of(q)) || !std::isfinite(a) ||
            !std::isfinite(e))
            throw std::runtime_error("rollout: nonfinite state at step " + std::to_string(i));
    }
    MemberEnd<S> end{y, fbsde_terminal(p, a, e, q), q, a, e};
    return end;
}

/// Terminal outcome of a plain (double) rollout over a whole batch.
struct RolloutResult {
    std::vector<double> y_terminal;
    std::vector<MarketState> x_terminal;
    std::vector<double> terminal_gap;  // y_T - h(X_T), signed
};

inline RolloutResult rollout(const ModelParams& p, const NetParams& net,
                             const MarketState& initial, const NoiseBatch& noise) {
    net.validate();
    RolloutResult res;
    res.y_terminal.resize(noise.n_members);
    res.x_terminal.resize(noise.n_members);
    res.terminal_gap.resize(noise.n_members);
    auto ident = [](double v) { return v; };
    for (std::size_t m = 0; m < noise.n_members; ++m) {
        const MemberEnd<double> end = rollout_member<double>(
            p, net.spec, net.weights, net.input_scale, net.y0, initial,
            noise.dw1.data() + m * noise.n_steps, noise.dw2.data() + m * noise.n_steps,
            noise.n_steps, noise.dt, ident);
        res.y_terminal[m] = end.y_T;
        res.terminal_gap[m] = end.y_T - end.h_T;
        MarketState x;
        x.t = initial.t + noise.dt * static_cast<double>(noise.n_steps);
        x.a = end.a_T;
        x.eps = end.eps_T;
        x.q = end.q_T;
        x.m = 0.0;
        res.x_terminal[m] = x;
    }
    return res;
}

/// Mean absolute terminal gap E|Y_T - h(X_T)| over a batch.
inline double rollout_loss(const ModelParams& p, const NetParams& net, const MarketState& initial,
                           const NoiseBatch& noise) {
    const RolloutResult res = rollout(p, net, initial, noise);
    double acc = 0.0;
    for (double gap : res.terminal_gap) acc += std::abs(gap);
    return noise.n_members ? acc / static_cast<double>(noise.n_members) : 0.0;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
    std::size_t n_steps_time = 40;
    std::size_t batch_size = 64;
    std::size_t validation_size = 256;
    std::size_t max_train_steps = 5000;
    double learning_rate = 1e-2;
    std::size_t val_every = 10;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_steps_time < 1 || batch_size < 1 || validation_size < 1 || max_train_steps < 1 ||
            val_every < 1)
            throw std::invalid_argument("TrainConfig: counts must be >= 1");
        if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate <= 0");
    }
};

struct TrainReport {
    std::vector<double> train_loss;       // one entry per executed training step
    std::vector<std::size_t> val_steps;   // steps at which validation ran
    std::vector<double> val_loss;
    double final_val_loss = 0.0;
    double best_val_loss = 0.0;
    std::size_t best_step = 0;
    std::size_t steps_run = 0;
    bool diverged = false;
    double wall_seconds = 0.0;
};

namespace detail {

/// Loss and gradient of the mean absolute terminal gap over one batch,
/// accumulated member by member on a reused tape. Gradient layout: [y0,
/// weights...].
inline double batch_loss_grad(const ModelParams& p, const MlpSpec& spec,
                              const std::vector<double>& weights, double y0,
                              const std::array<double, 4>& scale, const MarketState& initial,
                              const NoiseBatch& noise, Tape& tape, std::vector<double>& grad) {
    const std::size_t np = weights.size() + 1;
    grad.assign(np, 0.0);
    const double inv_b = 1.0 / static_cast<double>(noise.n_members);
    double loss = 0.0;
    std::vector<Var> wv(weights.size());
    for (std::size_t m = 0; m < noise.n_members; ++m) {
        tape.clear();
        const Var y0v = make_var(tape, y0);
        for (std::size_t j = 0; j < weights.size(); ++j) wv[j] = make_var(tape, weights[j]);
        auto mk = [&tape](double v) { return make_var(tape, v); };
        const MemberEnd<Var> end = rollout_member<Var>(
            p, spec, wv, scale, y0v, initial, noise.dw1.data() + m * noise.n_steps,
            noise.dw2.data() + m * noise.n_steps, noise.n_steps, noise.dt, mk);
        const Var gap = abs_val(end.y_T - end.h_T);
        loss += gap.val() * inv_b;
        const std::vector<double> adj = tape.adjoints(gap.idx);
        grad[0] += adj[static_cast<std::size_t>(y0v.idx)] * inv_b;
        for (std::size_t j = 0; j < weights.size(); ++j)
            grad[j + 1] += adj[static_cast<std::size_t>(wv[j].idx)] * inv_b;
    }
    return loss;
}

}  // namespace detail

/// Trains y0 and the diffusion network against the mean absolute terminal gap
/// on fresh batches, validating on a fixed noise set every cfg.val_every steps
/// (including step 0). Adaptive-moment updates; learning rate decays 10x at
/// 50% and again at 75% of the budget. Returns the parameters with the best
/// validation loss. Aborts (diverged flag, best-so-far parameters) when the
/// validation loss exceeds 10x its initial value at 100 consecutive checks.
/// Deterministic for a fixed config.
inline std::pair<NetParams, TrainReport> train(const ModelParams& p, const MarketState& initial,
                                               const TrainConfig& cfg,
                                               const MlpSpec& spec = MlpSpec{}) {
    p.validate();
    cfg.validate();
    spec.validate();
    const auto t_start = std::chrono::steady_clock::now();
    const double horizon = p.T - initial.t;
    if (!(horizon > 0.0)) throw std::invalid_argument("train: initial time at or past horizon");

    const double s0 = initial.a * std::exp(initial.eps);
    const std::array<double, 4> scale{std::max(p.T, 1e-12), std::max(std::abs(initial.a), 1e-12),
                                      1.0, std::max(initial.q, 1e-12)};
    NetParams net = initial_net_params(spec, s0, scale, derive_seed(cfg.seed, 0, 4));
    const NoiseBatch val_noise =
        NoiseBatch::sample(cfg.validation_size, cfg.n_steps_time, horizon, derive_seed(cfg.seed, 0, 2));

    const std::size_t np = net.weights.size() + 1;
    std::vector<double> m1(np, 0.0), m2(np, 0.0), grad;
    Tape tape;
    TrainReport report;
    report.train_loss.reserve(cfg.max_train_steps);

    NetParams best = net;
    double best_val = std::numeric_limits<double>::infinity();
    double initial_val = 0.0;
    std::size_t diverged_checks = 0;

    auto run_validation = [&](std::size_t step) {
        const double v = rollout_loss(p, net, initial, val_noise);
        report.val_steps.push_back(step);
        report.val_loss.push_back(v);
        if (report.val_steps.size() == 1) initial_val = v;
        if (v < best_val) {
            best_val = v;
            best = net;
            report.best_step = step;
        }
        if (v > 10.0 * initial_val && report.val_steps.size() > 1)
            ++diverged_checks;
        else
            diverged_checks = 0;
        return v;
    };

    const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    std::size_t adam_t = 0;
    std::size_t step = 0;
    for (; step < cfg.max_train_steps; ++step) {
        if (step % cfg.val_every == 0) {
            run_validation(step);
            if (diverged_checks >= 100) {
                report.diverged = true;
                break;
            }
        }
        const NoiseBatch batch = NoiseBatch::sample(cfg.batch_size, cfg.n_steps_time, horizon,
                                                    derive_seed(cfg.seed, step, 3));
        const double loss = detail::batch_loss_grad(p, net.spec, net.weights, net.y0,
                                                    net.input_scale, initial, batch, tape, grad);
        report.train_loss.push_back(loss);

        double lr = cfg.learning_rate;
        if (step * 4 >= cfg.max_train_steps * 3)
            lr *= 0.01;
        else if (step * 2 >= cfg.max_train_steps)
            lr *= 0.1;
        ++adam_t;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(adam_t));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(adam_t));
        for (std::size_t j = 0; j < np; ++j) {
            m1[j] = beta1 * m1[j] + (1.0 - beta1) * grad[j];
            m2[j] = beta2 * m2[j] + (1.0 - beta2) * grad[j] * grad[j];
            const double stepv = lr * (m1[j] / c1) / (std::sqrt(m2[j] / c2) + adam_eps);
            if (j == 0)
                net.y0 -= stepv;
            else
                net.weights[j - 1] -= stepv;
        }
    }
    if (!report.diverged) run_validation(step);
    report.steps_run = report.train_loss.size();
    report.final_val_loss = report.val_loss.empty() ? 0.0 : report.val_loss.back();
    report.best_val_loss = best_val;
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return {std::move(best), std::move(report)};
}

// ---------------------------------------------------------------------------
// Policy wrapper and evaluation harness
// ---------------------------------------------------------------------------

/// Running diagnostics of the reconstructed adjoint value during policy use.
struct YDiagnostics {
    double min_y = std::numeric_limits<double>::infinity();
    std::size_t n_evals = 0;
    std::size_t n_negative = 0;
};

/// Wraps a trained network as a trading policy. The backward value is not
/// observable, so the policy re-integrates it along the realized path:
/// consecutive states pin down the Brownian increments (invert the exact
/// lognormal/OU updates), then y advances by the same Euler rule used in
/// training, and the rate is the candidate control (a e^eps - y)^+ / (2 eta).
/// Stateful per path; simulate_path's reset() starts a fresh path.
class NnPolicy final : public Policy {
  public:
    NnPolicy(ModelParams p, NetParams net) : Policy("nn"), p_(p), net_(std::move(net)) {
        p_.validate();
        net_.validate();
        if (!(p_.sigma1 > 0.0))
            throw std::invalid_argument("NnPolicy: sigma1 must be > 0 to invert price moves");
        if (!(std::abs(p_.rho) < 1.0))
            throw std::invalid_argument("NnPolicy: |rho| must be < 1 to invert spread moves");
    }

    void reset() override { has_prev_ = false; }

    double rate(double t, const MarketState& state) override {
        if (!has_prev_) {
            y_ = net_.y0;
            has_prev_ = true;
        } else {
            const double dt = t - prev_.t;
            if (!(dt > 0.0)) throw std::invalid_argument("NnPolicy: nonincreasing time");
            advance_y(dt, state);
        }
        prev_ = state;
        prev_.t = t;
        diag_.min_y = std::min(diag_.min_y, y_);
        ++diag_.n_evals;
        if (y_ < 0.0) ++diag_.n_negative;
        if (state.q <= 0.0) return 0.0;
        return fbsde_control(p_, state, y_);
    }

    std::unique_ptr<Policy> clone() const override { return std::make_unique<NnPolicy>(*this); }

    double current_y() const { return y_; }
    const YDiagnostics& diagnostics() const { return diag_; }
    void clear_diagnostics() { diag_ = YDiagnostics{}; }

  private:
    void advance_y(double dt, const MarketState& cur) {
        const double sqdt = std::sqrt(dt);
        const double dw1 =
            (std::log(cur.a / prev_.a) - (p_.mu1 - 0.5 * p_.sigma1 * p_.sigma1) * dt) / p_.sigma1;
        const double xi = (cur.eps - prev_.eps * std::exp(-p_.k * dt)) / ou_stddev(p_, dt);
        const double dw2 = (xi * sqdt - p_.rho * dw1) / std::sqrt(1.0 - p_.rho * p_.rho);
        std::vector<double> in{prev_.t / net_.input_scale[0], prev_.a / net_.input_scale[1],
                               prev_.eps / net_.input_scale[2], prev_.q / net_.input_scale[3]};
        const std::vector<double> z = mlp_apply(net_.spec, net_.weights, in);
        const double g = fbsde_driver<double>(p_, prev_.a, prev_.eps, prev_.q);
        y_ += -g * dt + z[0] * dw1 + z[1] * dw2;
    }

    ModelParams p_;
    NetParams net_;
    bool has_prev_ = false;
    MarketState prev_{};
    double y_ = 0.0;
    YDiagnostics diag_{};
};

inline std::unique_ptr<Policy> nn_policy(const ModelParams& p, const NetParams& net) {
    return std::make_unique<NnPolicy>(p, net);
}

/// Wealth-trajectory discrepancy between the network policy and a reference
/// policy over independently seeded paths with common noise per seed.
struct NnEvalReport {
    std::vector<double> per_seed_discrepancy;  // time-avg |M_nn - M_ref| / |M_nn|
    std::vector<double> per_seed_q_ratio;      // |Q_T| / q0 under the nn policy
    double mean_discrepancy = 0.0;
    double mean_q_ratio = 0.0;
    YDiagnostics y_diag;
    std::size_t n_seeds = 0;
};

inline NnEvalReport evaluate_nn(const ModelParams& p, const NetParams& net,
                                const Policy& reference, const MarketState& initial,
                                std::size_t n_trades, std::size_t n_seeds, std::uint64_t seed,
                                ImpactAccounting acct = ImpactAccounting::PerRate) {
    if (n_seeds == 0) throw std::invalid_argument("evaluate_nn: n_seeds must be > 0");
    NnPolicy nn(p, net);
    NnEvalReport rep;
    rep.per_seed_discrepancy.reserve(n_seeds);
    rep.per_seed_q_ratio.reserve(n_seeds);
    for (std::size_t s = 0; s < n_seeds; ++s) {
        const std::uint64_t path_seed = derive_seed(seed, s);
        const SimPath path_nn = simulate_path(p, nn, initial, n_trades, path_seed, acct);
        auto ref = reference.clone();
        const SimPath path_ref = simulate_path(p, *ref, initial, n_trades, path_seed, acct);
        double acc = 0.0;
        std::size_t cnt = 0;
        for (std::size_t i = 1; i < path_nn.states.size(); ++i) {
            const double m_nn = path_nn.states[i].m;
            if (m_nn == 0.0) continue;
            acc += std::abs(m_nn - path_ref.states[i].m) / std::abs(m_nn);
            ++cnt;
        }
        rep.per_seed_discrepancy.push_back(cnt ? acc / static_cast<double>(cnt) : 0.0);
        rep.per_seed_q_ratio.push_back(std::abs(path_nn.states.back().q) / initial.q);
    }
    rep.mean_discrepancy =
        std::accumulate(rep.per_seed_discrepancy.begin(), rep.per_seed_discrepancy.end(), 0.0) /
        static_cast<double>(n_seeds);
    rep.mean_q_ratio =
        std::accumulate(rep.per_seed_q_ratio.begin(), rep.per_seed_q_ratio.end(), 0.0) /
        static_cast<double>(n_seeds);
    rep.y_diag = nn.diagnostics();
    rep.n_seeds = n_seeds;
    return rep;
}

}  // namespace coliq

#endif
