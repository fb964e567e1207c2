// Acceptance gate for the liquidation engine.
//
// Eight numbered criteria, one [PASS]/[FAIL] line each, nonzero exit when any
// fail. Tolerances and budgets are fixed here; a red line means the criterion
// is genuinely not met and must not be silenced by loosening a bound.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "test_support.hpp"

using namespace coliq;
using namespace testsupport;

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

struct Criterion {
    bool ok = true;
    std::vector<std::string> notes;

    void expect(bool cond, const std::string& label) {
        if (!cond) ok = false;
        notes.push_back(std::string(cond ? "ok   " : "FAIL ") + label);
    }
    void note(const std::string& s) { notes.push_back("note " + s); }
};

struct PolicySet {
    std::shared_ptr<const G2Surface> surface;
    std::shared_ptr<const GbmG2Curve> curve;
    std::vector<std::unique_ptr<Policy>> owned;
    std::vector<const Policy*> ptrs;
};

PolicySet build_policies(const ModelParams& p, const MarketState& init, std::size_t n_trades) {
    PolicySet s;
    auto surface = std::make_shared<G2Surface>(p, 64);
    auto curve = std::make_shared<GbmG2Curve>(p, init.eps, 64);
    const std::vector<double> grid = uniform_grid(init.t, p.T, n_trades);
    surface->precompute(grid);
    curve->precompute(grid);
    s.surface = surface;
    s.curve = curve;
    s.owned.push_back(closed_form_policy(p, s.surface));
    s.owned.push_back(gbm_policy(p, s.curve));
    s.owned.push_back(a_only_policy(p, s.surface));
    for (const auto& pol : s.owned) s.ptrs.push_back(pol.get());
    return s;
}

// ---------------------------------------------------------------------------
// C1: closed-form coefficient properties
// ---------------------------------------------------------------------------
void c1_closed_form_properties(Criterion& c) {
    struct SetDef {
        const char* name;
        ModelParams p;
        bool monotone;
    };
    const std::vector<SetDef> sets = {
        {"low-vol", lowvol_params(), false},
        {"high-vol", highvol_params(), false},
        {"benchmark", benchmark_params(), true},
    };
    for (const auto& sd : sets) {
        const ModelParams& p = sd.p;
        const std::string tag = std::string(sd.name) + ": ";
        G2Surface surface(p, 64);
        const G3Curve& g3 = surface.g3();

        c.expect(std::abs(g3.eval(p.T) + p.chi) <= 1e-14,
                 tag + "g3(T) = -chi to machine precision");

        bool negative = true;
        bool nondecreasing = true;
        double prev = g3.eval(0.0);
        negative = negative && prev < 0.0;
        for (int i = 1; i < 1000; ++i) {
            const double t = p.T * static_cast<double>(i) / 999.0;
            const double v = g3.eval(t);
            negative = negative && v < 0.0;
            nondecreasing = nondecreasing && v >= prev - 1e-12;
            prev = v;
        }
        c.expect(negative, tag + "g3 < 0 on a 1000-point grid");
        // g3 is monotone nondecreasing exactly when the terminal penalty chi
        // sits at or below the running-penalty saturation level sqrt(phi1*eta).
        // Only the benchmark set satisfies that; the other two sets have
        // chi >> sqrt(phi1*eta), so their curve decreases toward -chi instead.
        if (sd.monotone) c.expect(nondecreasing, tag + "g3 nondecreasing on the grid");

        // g3 has a terminal boundary layer of width ~eta/(2 chi); 20000
        // intervals keep the Simpson reference's own error near 1e-13.
        double worst_int = 0.0;
        for (const auto& [a, b] : std::vector<std::pair<double, double>>{
                 {0.0, p.T}, {0.1 * p.T, 0.77 * p.T}}) {
            const double diff = std::abs(
                g3.integral(a, b) - simpson([&](double t) { return g3.eval(t); }, a, b, 20000));
            worst_int = std::max(worst_int, diff);
        }
        c.expect(worst_int <= 1e-9,
                 tag + "analytic integral of g3 matches Simpson to 1e-9 (max diff " +
                     fmt(worst_int) + ")");

        bool terminal_one = true;
        for (double e = -3.0; e <= 3.0 + 1e-12; e += 0.5)
            terminal_one = terminal_one && surface.g2(p.T, e) == 1.0;
        c.expect(terminal_one, tag + "g2(T, .) = 1");

        c.expect(check_condition_51(p).holds, tag + "admissibility condition holds");

        bool bounded = true;
        double worst_g2 = -1e300;
        for (int ti = 0; ti <= 20; ++ti) {
            const double t = p.T * static_cast<double>(ti) / 20.0;
            for (int ei = 0; ei <= 24; ++ei) {
                const double e = -3.0 + 6.0 * static_cast<double>(ei) / 24.0;
                const double v = surface.g2(t, e);
                worst_g2 = std::max(worst_g2, v);
                bounded = bounded && v <= 1.0 + 1e-8;
            }
        }
        c.expect(bounded,
                 tag + "g2 <= 1 + 1e-8 on [0,T]x[-3,3] (max " + fmt(worst_g2) + ")");
    }
}

// ---------------------------------------------------------------------------
// C2: quadrature solution vs Feynman-Kac Monte-Carlo oracle
// ---------------------------------------------------------------------------
void c2_feynman_kac_oracle(Criterion& c) {
    const ModelParams p = lowvol_params();
    std::mt19937_64 gen(20260822ULL);
    std::uniform_real_distribution<double> ut(0.0, 0.9 * p.T);
    std::uniform_real_distribution<double> ue(-1.2, 1.2);

    bool all = true;
    double max_z = 0.0;
    for (int i = 0; i < 20; ++i) {
        const double t = ut(gen);
        const double e = ue(gen);
        const McEstimate mc = gstar_fk_mc(p, t, e, 1'000'000, 64, derive_seed(4242, i));
        const double an = g2_eval(p, t, e);
        const double mc_g2 = 1.0 - std::exp(-e) * mc.mean;
        const double se_g2 = std::exp(-e) * mc.se;
        const double z = std::abs(an - mc_g2) / se_g2;
        max_z = std::max(max_z, z);
        all = all && z <= 3.0;
    }
    c.expect(all, "g2 within 3 MC standard errors of a 1e6-path Feynman-Kac estimate "
                  "at 20 random (t, eps) points (max z = " +
                      fmt(max_z) + ")");
}

// ---------------------------------------------------------------------------
// C3: PDE residual convergence order
// ---------------------------------------------------------------------------
void c3_pde_residual_order(Criterion& c) {
    const ModelParams p = benchmark_params();
    G2Surface surface(p, 64);
    int valid = 0;
    bool all_ok = true;
    double min_order = 1e300;
    for (double frac : {0.1, 0.3, 0.5, 0.7, 0.9}) {
        const double t = frac * p.T;
        for (int j = 0; j < 10; ++j) {
            const double e = -1.2 + 2.4 * static_cast<double>(j) / 9.0;
            const double r1 = pde_residual_g2(p, surface, t, e, 1e-2, 1e-2);
            const double r2 = pde_residual_g2(p, surface, t, e, 5e-3, 5e-3);
            // Points where the residual is already at rounding level cannot
            // resolve an order and are excluded.
            if (std::abs(r1) <= 1e-11 || std::abs(r2) <= 1e-11) continue;
            ++valid;
            const double order = std::log2(std::abs(r1) / std::abs(r2));
            min_order = std::min(min_order, order);
            all_ok = all_ok && order >= 1.8;
        }
    }
    c.expect(valid >= 40, "at least 40 of 50 interior points resolve an order (" +
                              std::to_string(valid) + " valid)");
    c.expect(all_ok, "residual decays at order >= 1.8 under step halving (min order " +
                         fmt(min_order) + ")");
}

// ---------------------------------------------------------------------------
// C4: lognormal surrogate moment matching
// ---------------------------------------------------------------------------
void c4_surrogate_moments(Criterion& c) {
    const ModelParams p = benchmark_params();
    const MarketState init = benchmark_initial();
    const GbmApproxParams ap = gbm_approx_params(p, init.eps);
    const int n_steps = 64;
    const double dt = p.T / static_cast<double>(n_steps);
    const double sd = std::sqrt(dt);
    const std::array<int, 3> marks = {16, 32, 64};  // r = T/4, T/2, T
    const std::size_t n_paths = 100'000;

    std::array<std::vector<double>, 3> level, square;
    for (auto& v : level) v.reserve(n_paths);
    for (auto& v : square) v.reserve(n_paths);
    for (std::size_t path = 0; path < n_paths; ++path) {
        NormalRng rng(derive_seed(777, path));
        MarketState st = init;
        std::size_t m = 0;
        for (int step = 1; step <= n_steps; ++step) {
            st = step_exact(p, st, 0.0, dt, sd * rng.normal(), sd * rng.normal());
            if (m < marks.size() && step == marks[m]) {
                const double s = st.price();
                level[m].push_back(s);
                square[m].push_back(s * s);
                ++m;
            }
        }
    }

    const double s0 = init.price();
    for (std::size_t m = 0; m < marks.size(); ++m) {
        const double r = p.T * static_cast<double>(marks[m]) / static_cast<double>(n_steps);
        const McEstimate lvl = mean_se(level[m]);
        const McEstimate sq = mean_se(square[m]);
        const double target_mean = s0 * std::exp(ap.int_mu(0.0, r));
        const double target_sq = s0 * s0 * std::exp(2.0 * ap.int_mu(0.0, r) + ap.int_var(0.0, r));
        const double z1 = std::abs(lvl.mean - target_mean) / lvl.se;
        const double z2 = std::abs(sq.mean - target_sq) / sq.se;
        c.expect(z1 <= 3.0, "mean price at r=" + fmt(r) + " matches the surrogate (z=" +
                                fmt(z1) + ")");
        c.expect(z2 <= 3.0, "second moment at r=" + fmt(r) + " matches the surrogate (z=" +
                                fmt(z2) + ")");
    }
}

// ---------------------------------------------------------------------------
// C5: three-strategy benchmark tables
// ---------------------------------------------------------------------------
void c5_benchmark_tables(Criterion& c) {
    const ModelParams p = benchmark_params();
    const MarketState init = benchmark_initial();
    const std::size_t n_trades = 100;
    const std::uint64_t seed = 42;

    const PolicySet set = build_policies(p, init, n_trades);
    const CompareResult full = compare_strategies(p, set.ptrs, init, 10'000, n_trades, seed,
                                                  ImpactAccounting::PerOrder, 1);
    c.expect(full.stats[0].mean > full.stats[1].mean && full.stats[1].mean > full.stats[2].mean,
             "10k-path mean ordering closed-form > gbm-approx > a-only (" +
                 fmt(full.stats[0].mean) + " > " + fmt(full.stats[1].mean) + " > " +
                 fmt(full.stats[2].mean) + ")");
    c.expect(full.stats[0].std_dev < full.stats[1].std_dev &&
                 full.stats[1].std_dev < full.stats[2].std_dev,
             "10k-path std ordering closed-form < gbm-approx < a-only (" +
                 fmt(full.stats[0].std_dev) + " < " + fmt(full.stats[1].std_dev) + " < " +
                 fmt(full.stats[2].std_dev) + ")");

    // Reference desk runs, frozen as regression targets. Combined standard
    // error: sqrt(ours^2/n_ours + reference_std^2/n_reference).
    auto check_block = [&](const char* name, const CompareResult& res,
                           const std::array<double, 3>& ref_mean,
                           const std::array<double, 3>& ref_std, double n_ref) {
        for (std::size_t i = 0; i < 3; ++i) {
            const WealthStats& st = res.stats[i];
            const double se_ours = st.std_dev / std::sqrt(static_cast<double>(st.n_paths));
            const double se_comb = std::sqrt(se_ours * se_ours + ref_std[i] * ref_std[i] / n_ref);
            const double z = std::abs(st.mean - ref_mean[i]) / se_comb;
            c.expect(z <= 3.0, std::string(name) + " " + res.labels[i] + " mean " +
                                   fmt(st.mean) + " within 3 combined SE of " +
                                   fmt(ref_mean[i]) + " (z=" + fmt(z) + ")");
        }
    };

    const CompareResult desk = compare_strategies(p, set.ptrs, init, 100, n_trades, seed,
                                                  ImpactAccounting::PerOrder, 1);
    check_block("base", desk, {723.3, 718.8, 718.3}, {79.8, 95.2, 95.8}, 100.0);

    ModelParams p0 = p;
    p0.rho = 0.0;
    const PolicySet set0 = build_policies(p0, init, n_trades);
    const CompareResult desk0 = compare_strategies(p0, set0.ptrs, init, 100, n_trades, seed,
                                                   ImpactAccounting::PerOrder, 1);
    check_block("rho=0", desk0, {713.3, 711.2, 710.7}, {68.4, 91.6, 95.6}, 100.0);

    const CompareResult rob =
        robustness_test(p, set.ptrs, init, {0.25, 0.35}, {0.04, 0.06}, 300, n_trades, seed,
                        ImpactAccounting::PerOrder, 1);
    check_block("perturbed-vol", rob, {712.7, 711.9, 709.4}, {90.6, 117.5, 125.2}, 300.0);
}

// ---------------------------------------------------------------------------
// C6: deep adjoint solver cross-validation
// ---------------------------------------------------------------------------
void c6_deep_solver(Criterion& c) {
    const ModelParams p = lowvol_params();
    const MarketState init = lowvol_initial();
    TrainConfig cfg;  // 40 time steps, batch 64, validation 256, 5000 steps, lr 1e-2
    cfg.seed = 1;
    const auto [net, report] = train(p, init, cfg);

    c.expect(!report.diverged, "training ran to completion without divergence");
    c.expect(report.best_val_loss < 1e-3,
             "best validation loss < 1e-3 (actual " + fmt(report.best_val_loss) + ")");
    c.note("an oracle that rolls the exact solution through the same 40-step Euler "
           "scheme scores ~6e-2 free-running (~4e-3 teacher-forced), so the 1e-3 "
           "target is unreachable at this step count; kept red deliberately");

    const std::size_t n_val = report.val_loss.size();
    const std::size_t quarter = n_val / 4;
    double first = 0.0, last = 0.0;
    for (std::size_t i = 0; i < quarter; ++i) {
        first += report.val_loss[i] / static_cast<double>(quarter);
        last += report.val_loss[n_val - quarter + i] / static_cast<double>(quarter);
    }
    c.expect(last < first, "validation loss trend decreasing (first-quarter mean " +
                               fmt(first) + ", last-quarter mean " + fmt(last) + ")");

    auto surface = std::make_shared<G2Surface>(p, 64);
    surface->precompute(uniform_grid(init.t, p.T, 40));
    const std::shared_ptr<const G2Surface> csurface = surface;
    const std::unique_ptr<Policy> reference = closed_form_policy(p, csurface);
    const NnEvalReport rep =
        evaluate_nn(p, net, *reference, init, 40, 400, 7, ImpactAccounting::PerRate);
    c.expect(rep.mean_discrepancy <= 0.01,
             "mean time-averaged relative wealth discrepancy vs closed form <= 1% "
             "over 400 seeds (actual " +
                 fmt(rep.mean_discrepancy) + ")");
    c.expect(rep.mean_q_ratio <= 0.02, "mean |terminal inventory|/initial <= 2% (actual " +
                                           fmt(rep.mean_q_ratio) + ")");
}

// ---------------------------------------------------------------------------
// C7: autodiff gradient check
// ---------------------------------------------------------------------------
void c7_gradient_check(Criterion& c) {
    const ModelParams p = lowvol_params();
    const MarketState init = lowvol_initial();
    MlpSpec spec;
    spec.widths = {4, 2, 2, 2};
    const std::array<double, 4> scale{p.T, 1.0, 1.0, init.q};
    const NoiseBatch noise = NoiseBatch::sample(4, 10, p.T, 12);

    auto fd_derivative = [](const std::function<double(double)>& f, double x) {
        const double h = 1e-6;
        return (f(x + h) - f(x - h)) / (2.0 * h);
    };

    bool all = true;
    double max_excess = -1e300;
    for (std::uint64_t draw = 0; draw < 10; ++draw) {
        // Keep y0 off the initial price: the trading rate has a positive-part
        // kink at s = y and a finite difference across it is meaningless.
        const double y0 = init.price() * (0.82 + 0.04 * static_cast<double>(draw));
        NetParams net = initial_net_params(spec, y0, scale, derive_seed(33, draw));
        Tape tape;
        std::vector<double> grad;
        detail::batch_loss_grad(p, spec, net.weights, net.y0, scale, init, noise, tape, grad);

        auto loss_at = [&](double y, const std::vector<double>& w) {
            NetParams probe = net;
            probe.y0 = y;
            probe.weights = w;
            return rollout_loss(p, probe, init, noise);
        };
        auto excess = [&](double ad, double fd) {
            return std::abs(ad - fd) - (1e-5 * std::max(std::abs(ad), std::abs(fd)) + 1e-8);
        };

        const double fd_y0 = fd_derivative([&](double v) { return loss_at(v, net.weights); },
                                           net.y0);
        max_excess = std::max(max_excess, excess(grad[0], fd_y0));
        all = all && excess(grad[0], fd_y0) <= 0.0;
        for (std::size_t j = 0; j < net.weights.size(); ++j) {
            const double fd = fd_derivative(
                [&](double v) {
                    std::vector<double> w = net.weights;
                    w[j] = v;
                    return loss_at(net.y0, w);
                },
                net.weights[j]);
            max_excess = std::max(max_excess, excess(grad[j + 1], fd));
            all = all && excess(grad[j + 1], fd) <= 0.0;
        }
    }
    c.expect(all, "reverse-mode gradients match central differences within 1e-5 relative "
                  "on a 2-wide net, 10 draws (max excess " +
                      fmt(max_excess) + ")");
}

// ---------------------------------------------------------------------------
// C8: adjoint identity vs closed-form rate
// ---------------------------------------------------------------------------
void c8_adjoint_identity(Criterion& c) {
    const ModelParams p = benchmark_params();
    auto surface = std::make_shared<const G2Surface>(p, 64);
    const std::unique_ptr<Policy> pol = closed_form_policy(p, surface);

    std::mt19937_64 gen(99);
    std::uniform_real_distribution<double> ut(0.0, p.T * 0.999999);
    std::uniform_real_distribution<double> ua(0.5, 12.0);
    std::uniform_real_distribution<double> ue(-2.0, 2.0);
    std::uniform_real_distribution<double> uq(1e-3, 120.0);

    bool all = true;
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        MarketState st;
        st.t = ut(gen);
        st.a = ua(gen);
        st.eps = ue(gen);
        st.q = uq(gen);
        st.m = 0.0;
        const double y = st.price() * surface->g2(st.t, st.eps) +
                         2.0 * st.q * surface->g3().eval(st.t);
        const double from_identity = fbsde_control(p, st, y);
        const double from_policy = pol->rate(st.t, st);
        const double diff = std::abs(from_identity - from_policy) /
                            std::max(1.0, std::abs(from_policy));
        worst = std::max(worst, diff);
        all = all && diff <= 1e-10;
    }
    c.expect(all, "control from y = a e^eps g2 + 2 q g3 equals the closed-form rate at "
                  "1000 random states to 1e-10 (worst " +
                      fmt(worst) + ")");
}

}  // namespace

int main() {
    struct Entry {
        int index;
        const char* what;
        double budget_s;
        std::function<void(Criterion&)> fn;
    };
    const std::vector<Entry> entries = {
        {1, "closed-form coefficient properties", 10.0, c1_closed_form_properties},
        {2, "quadrature solution vs Feynman-Kac Monte-Carlo oracle", 300.0,
         c2_feynman_kac_oracle},
        {3, "PDE residual convergence order", 60.0, c3_pde_residual_order},
        {4, "lognormal surrogate moment matching", 60.0, c4_surrogate_moments},
        {5, "three-strategy benchmark tables", 600.0, c5_benchmark_tables},
        {6, "deep adjoint solver cross-validation", 1800.0, c6_deep_solver},
        {7, "autodiff gradient check", 10.0, c7_gradient_check},
        {8, "adjoint identity vs closed-form rate", 1.0, c8_adjoint_identity},
    };

    int failures = 0;
    for (const auto& entry : entries) {
        Criterion c;
        const auto start = std::chrono::steady_clock::now();
        try {
            entry.fn(c);
        } catch (const std::exception& e) {
            c.expect(false, std::string("unexpected exception: ") + e.what());
        }
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        c.expect(seconds < entry.budget_s, "runtime " + fmt(seconds) + " s within " +
                                               fmt(entry.budget_s) + " s budget");
        std::printf("[%s] C%d: %s (%.1f s)\n", c.ok ? "PASS" : "FAIL", entry.index, entry.what,
                    seconds);
        for (const auto& n : c.notes) std::printf("        %s\n", n.c_str());
        std::fflush(stdout);
        if (!c.ok) ++failures;
    }
    if (failures > 0) std::printf("%d of 8 criteria failed\n", failures);
    else std::printf("all 8 criteria passed\n");
    return failures == 0 ? 0 : 1;
}
