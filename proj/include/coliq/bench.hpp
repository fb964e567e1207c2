#ifndef COLIQ_BENCH_HPP
#define COLIQ_BENCH_HPP

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "coliq/closedform.hpp"
#include "coliq/math.hpp"
#include "coliq/parallel.hpp"
#include "coliq/params.hpp"
#include "coliq/policy.hpp"
#include "coliq/quadrature.hpp"
#include "coliq/rng.hpp"
#include "coliq/simulate.hpp"

namespace coliq {

/// Moment-matched single-factor (GBM-like) approximation of the traded price:
/// time-dependent drift and variance chosen so the approximate price shares
/// the first two moments of a e^{eps} as seen from time 0 with eps0 frozen.
struct GbmApproxParams {
    double mu1 = 0.0, sigma1 = 0.0, sigma2 = 0.0, rho = 0.0, k = 0.0;
    double eps0 = 0.0;

    double mu_tilde(double r) const {
        const double e1 = std::exp(-k * r);
        return -k * eps0 * e1 + mu1 + 0.5 * sigma2 * sigma2 * e1 * e1 + rho * sigma1 * sigma2 * e1;
    }

    double sigma_tilde_sq(double r) const {
        const double e1 = std::exp(-k * r);
        return sigma1 * sigma1 + sigma2 * sigma2 * e1 * e1 + 2.0 * rho * sigma1 * sigma2 * e1;
    }

    /// int_t^r mu_tilde(s) ds in closed form (finite k -> 0 limit).
    double int_mu(double t, double r) const {
        auto anti = [this](double s) {
            return eps0 * (std::exp(-k * s) - 1.0) + mu1 * s +
                   0.5 * sigma2 * sigma2 * int_exp_decay(2.0 * k, s) +
                   rho * sigma1 * sigma2 * int_exp_decay(k, s);
        };
        return anti(r) - anti(t);
    }

    /// int_t^r sigma_tilde(s)^2 ds in closed form.
    double int_var(double t, double r) const {
        auto anti = [this](double s) {
            return sigma1 * sigma1 * s + sigma2 * sigma2 * int_exp_decay(2.0 * k, s) +
                   2.0 * rho * sigma1 * sigma2 * int_exp_decay(k, s);
        };
        return anti(r) - anti(t);
    }
};

inline GbmApproxParams gbm_approx_params(const ModelParams& p, double eps0) {
    p.validate();
    return {p.mu1, p.sigma1, p.sigma2, p.rho, p.k, eps0};
}

/// The inventory-linear coefficient of the single-factor sub-problem's value
/// function. The eps dependence drops, leaving a linear ODE in t:
///   g2~'(t) + (mu_tilde(t) + g3(t)/eta) g2~(t) = 2 phi2 + g3(t)/eta,
///   g2~(T) = 1,
/// solved by the integrating-factor representation
///   g2~(t) = I(T; t) - int_t^T I(r; t) (2 phi2 + g3(r)/eta) dr,
///   I(r; t) = exp(int_t^r mu_tilde + int_t^r g3/eta),
/// with the one remaining integral done by Gauss-Legendre quadrature.
/// Immutable after precompute(); safe to share across threads.
class GbmG2Curve {
  public:
    GbmG2Curve(const ModelParams& p, double eps0, int quad_order = 64)
        : p_(p), approx_(gbm_approx_params(p, eps0)), g3_(p), gl_(quad_order),
          gl2_(2 * quad_order) {}

    const GbmApproxParams& approx() const { return approx_; }
    const G3Curve& g3() const { return g3_; }

    void precompute(const std::vector<double>& times) {
        for (double t : times)
            if (t < p_.T) cache_.emplace(key(t), integrate(t, gl_));
    }

    double eval(double t) const {
        if (t >= p_.T) return 1.0;
        const auto it = cache_.find(key(t));
        if (it != cache_.end()) return it->second;
        return integrate(t, gl_);
    }

    /// Value plus the change under order doubling (refinement error estimate).
    std::pair<double, double> eval_refined(double t) const {
        const double v1 = eval(t);
        const double v2 = t >= p_.T ? 1.0 : integrate(t, gl2_);
        return {v1, std::abs(v2 - v1)};
    }

    /// As eval(), but throws when the doubling check moves the value by more
    /// than tol.
    double eval_checked(double t, double tol = 1e-6) const {
        const auto [v, diff] = eval_refined(t);
        if (!(diff <= tol)) throw QuadratureNonconvergence(t, 0.0, diff);
        return v;
    }

  private:
    static std::uint64_t key(double t) { return std::bit_cast<std::uint64_t>(t); }

    double weight(double t, double r) const {
        return std::exp(approx_.int_mu(t, r) + g3_.integral(t, r) / p_.eta);
    }

    double integrate(double t, const GaussLegendre& gl) const {
        if (!(t >= -1e-12 && t < p_.T))
            throw std::invalid_argument("GbmG2Curve: t outside [0, T)");
        const double c = 0.5 * (p_.T - t), d = 0.5 * (p_.T + t);
        double acc = 0.0;
        for (int j = 0; j < gl.order(); ++j) {
            const double r = c * gl.nodes()[j] + d;
            acc += c * gl.weights()[j] * weight(t, r) * (2.0 * p_.phi2 + g3_.eval(r) / p_.eta);
        }
        return weight(t, p_.T) - acc;
    }

    ModelParams p_;
    GbmApproxParams approx_;
    G3Curve g3_;
    GaussLegendre gl_, gl2_;
    std::unordered_map<std::uint64_t, double> cache_;
};

/// Single-factor benchmark policy: rate = max(0, s (1 - g2~(t)) - 2 q g3(t)) / (2 eta)
/// with the live price s = a e^{eps} fed into the single-factor rule.
class GbmApproxPolicy final : public Policy {
  public:
    GbmApproxPolicy(ModelParams p, std::shared_ptr<const GbmG2Curve> curve)
        : Policy("gbm-approx"), p_(p), curve_(std::move(curve)) {}

    double rate(double t, const MarketState& state) override {
        if (state.q <= 0.0) return 0.0;
        const double price = state.a * std::exp(state.eps);
        const double bracket =
            price * (1.0 - curve_->eval(t)) - 2.0 * state.q * curve_->g3().eval(t);
        return bracket > 0.0 ? bracket / (2.0 * p_.eta) : 0.0;
    }

    std::unique_ptr<Policy> clone() const override {
        return std::make_unique<GbmApproxPolicy>(*this);
    }

  private:
    ModelParams p_;
    std::shared_ptr<const GbmG2Curve> curve_;
};

inline std::unique_ptr<Policy> gbm_policy(const ModelParams& p,
                                          std::shared_ptr<const GbmG2Curve> curve) {
    return std::make_unique<GbmApproxPolicy>(p, std::move(curve));
}

/// Spread-blind benchmark policy: the two-factor optimal rule with eps frozen
/// to 0 in both the price factor and the g2 argument, while the simulated
/// world still evolves the true eps.
class AOnlyPolicy final : public Policy {
  public:
    AOnlyPolicy(ModelParams p, std::shared_ptr<const G2Surface> surface)
        : Policy("a-only"), p_(p), surface_(std::move(surface)) {}

    double rate(double t, const MarketState& state) override {
        if (state.q <= 0.0) return 0.0;
        const double bracket =
            state.a * surface_->gstar(t, 0.0) - 2.0 * state.q * surface_->g3().eval(t);
        return bracket > 0.0 ? bracket / (2.0 * p_.eta) : 0.0;
    }

    std::unique_ptr<Policy> clone() const override { return std::make_unique<AOnlyPolicy>(*this); }

  private:
    ModelParams p_;
    std::shared_ptr<const G2Surface> surface_;
};

inline std::unique_ptr<Policy> a_only_policy(const ModelParams& p,
                                             std::shared_ptr<const G2Surface> surface) {
    return std::make_unique<AOnlyPolicy>(p, std::move(surface));
}

/// Cash value at the liquidation time: M_tau + Q_tau (S_tau - chi Q_tau).
inline double final_wealth(const SimPath& path, const ModelParams& p) {
    const MarketState& s = path.states.at(path.tau_index);
    return s.m + s.q * (s.price() - p.chi * s.q);
}

/// Trapezoid estimate of the running-penalty integral
/// int_0^tau (phi1 q^2 + phi2 S q + phi3 A q) dr along the stored grid.
inline double penalty_integral(const SimPath& path, const ModelParams& p) {
    double acc = 0.0;
    auto integrand = [&](const MarketState& s) {
        return p.phi1 * s.q * s.q + p.phi2 * s.price() * s.q + p.phi3 * s.a * s.q;
    };
    for (std::size_t i = 0; i + 1 <= path.tau_index; ++i) {
        const double dt = path.grid[i + 1] - path.grid[i];
        acc += 0.5 * dt * (integrand(path.states[i]) + integrand(path.states[i + 1]));
    }
    return acc;
}

/// Penalty-inclusive objective: cash value minus the running penalties.
inline double objective_value(const SimPath& path, const ModelParams& p) {
    return final_wealth(path, p) - penalty_integral(path, p);
}

/// Summary statistics of a sample of final cash values.
struct WealthStats {
    double mean = 0.0;
    double std_dev = 0.0;
    double p5 = 0.0;
    double p95 = 0.0;
    std::size_t n_paths = 0;
};

/// Empirical percentile with linear interpolation between order statistics.
inline double percentile(std::vector<double> sorted, double p) {
    if (sorted.empty()) throw std::invalid_argument("percentile: empty sample");
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("percentile: p outside [0, 1]");
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline WealthStats compute_wealth_stats(const std::vector<double>& finals) {
    if (finals.empty()) throw std::invalid_argument("compute_wealth_stats: empty sample");
    const double n = static_cast<double>(finals.size());
    double sum = 0.0;
    for (double v : finals) sum += v;
    const double mean = sum / n;
    double ss = 0.0;
    for (double v : finals) ss += (v - mean) * (v - mean);
    std::vector<double> sorted = finals;
    std::sort(sorted.begin(), sorted.end());
    WealthStats st;
    st.mean = mean;
    st.std_dev = finals.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    st.p5 = percentile(sorted, 0.05);
    st.p95 = percentile(std::move(sorted), 0.95);
    st.n_paths = finals.size();
    return st;
}

/// Per-policy outcome of a comparison run.
struct CompareResult {
    std::vector<std::string> labels;
    std::vector<std::vector<double>> finals;     // cash value, [policy][path]
    std::vector<std::vector<double>> objectives; // penalty-inclusive, [policy][path]
    std::vector<WealthStats> stats;
    std::vector<WealthStats> objective_stats;
};

namespace detail {

inline CompareResult aggregate(std::vector<std::string> labels,
                               std::vector<std::vector<double>> finals,
                               std::vector<std::vector<double>> objectives) {
    CompareResult res;
    res.labels = std::move(labels);
    res.finals = std::move(finals);
    res.objectives = std::move(objectives);
    for (const auto& f : res.finals) res.stats.push_back(compute_wealth_stats(f));
    for (const auto& o : res.objectives) res.objective_stats.push_back(compute_wealth_stats(o));
    return res;
}

}  // namespace detail

/// Runs every policy over the same simulated worlds (common random numbers:
/// path i uses derive_seed(seed, i) for every policy) and aggregates final
/// cash values and penalty-inclusive objectives. Policies are cloned per path,
/// so stateful policies are safe under jobs > 1.
inline CompareResult compare_strategies(const ModelParams& p,
                                        const std::vector<const Policy*>& policies,
                                        const MarketState& initial, std::size_t n_paths,
                                        std::size_t n_trades, std::uint64_t seed,
                                        ImpactAccounting acct = ImpactAccounting::PerOrder,
                                        unsigned jobs = 1) {
    if (policies.empty()) throw std::invalid_argument("compare_strategies: no policies");
    if (n_paths == 0) throw std::invalid_argument("compare_strategies: n_paths must be > 0");
    std::vector<std::string> labels;
    for (const Policy* pol : policies) labels.push_back(pol->label());
    std::vector<std::vector<double>> finals(policies.size(), std::vector<double>(n_paths));
    std::vector<std::vector<double>> objectives(policies.size(), std::vector<double>(n_paths));
    parallel_for(n_paths, jobs, [&](std::size_t i) {
        const std::uint64_t path_seed = derive_seed(seed, i);
        for (std::size_t j = 0; j < policies.size(); ++j) {
            auto pol = policies[j]->clone();
            const SimPath path = simulate_path(p, *pol, initial, n_trades, path_seed, acct);
            finals[j][i] = final_wealth(path, p);
            objectives[j][i] = objective_value(path, p);
        }
    });
    return detail::aggregate(std::move(labels), std::move(finals), std::move(objectives));
}

/// As compare_strategies, but per path the world's (sigma1, sigma2) are drawn
/// uniformly from the given ranges (a dedicated RNG stream, so the world noise
/// stays common with non-robust runs) while every policy keeps using the
/// nominal parameters it was built from.
inline CompareResult robustness_test(const ModelParams& nominal,
                                     const std::vector<const Policy*>& policies,
                                     const MarketState& initial,
                                     std::pair<double, double> sigma1_range,
                                     std::pair<double, double> sigma2_range, std::size_t n_paths,
                                     std::size_t n_trades, std::uint64_t seed,
                                     ImpactAccounting acct = ImpactAccounting::PerOrder,
                                     unsigned jobs = 1) {
    if (policies.empty()) throw std::invalid_argument("robustness_test: no policies");
    if (n_paths == 0) throw std::invalid_argument("robustness_test: n_paths must be > 0");
    auto check_range = [](std::pair<double, double> r, const char* name) {
        if (!(r.first <= r.second) || !(r.first >= 0.0))
            throw std::invalid_argument(std::string("robustness_test: invalid range for ") + name);
    };
    check_range(sigma1_range, "sigma1");
    check_range(sigma2_range, "sigma2");
    std::vector<std::string> labels;
    for (const Policy* pol : policies) labels.push_back(pol->label());
    std::vector<std::vector<double>> finals(policies.size(), std::vector<double>(n_paths));
    std::vector<std::vector<double>> objectives(policies.size(), std::vector<double>(n_paths));
    parallel_for(n_paths, jobs, [&](std::size_t i) {
        NormalRng vol_rng(derive_seed(seed, i, 1));
        ModelParams world = nominal;
        world.sigma1 =
            sigma1_range.first + (sigma1_range.second - sigma1_range.first) * vol_rng.uniform01();
        world.sigma2 =
            sigma2_range.first + (sigma2_range.second - sigma2_range.first) * vol_rng.uniform01();
        const std::uint64_t path_seed = derive_seed(seed, i);
        for (std::size_t j = 0; j < policies.size(); ++j) {
            auto pol = policies[j]->clone();
            const SimPath path = simulate_path(world, *pol, initial, n_trades, path_seed, acct);
            finals[j][i] = final_wealth(path, world);
            objectives[j][i] = objective_value(path, world);
        }
    });
    return detail::aggregate(std::move(labels), std::move(finals), std::move(objectives));
}

}  // namespace coliq

#endif
