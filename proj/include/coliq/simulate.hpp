#ifndef COLIQ_SIMULATE_HPP
#define COLIQ_SIMULATE_HPP

#include <cmath>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "coliq/math.hpp"
#include "coliq/params.hpp"
#include "coliq/policy.hpp"
#include "coliq/rng.hpp"

namespace coliq {

/// Mean and variance of eps_{t+dt} given eps_t = eps0:
/// mean = eps0 e^{-k dt}, var = sigma2^2 (1 - e^{-2 k dt}) / (2k),
/// with the k -> 0 limit var = sigma2^2 dt.
inline std::pair<double, double> ou_moments(const ModelParams& p, double eps0, double dt) {
    if (!(dt >= 0.0)) throw std::invalid_argument("ou_moments: dt must be >= 0");
    const double mean = eps0 * std::exp(-p.k * dt);
    const double var = p.sigma2 * p.sigma2 * dt * expm1_ratio(2.0 * p.k * dt);
    return {mean, var};
}

/// Conditional standard deviation of the OU transition over dt.
inline double ou_stddev(const ModelParams& p, double dt) {
    return std::sqrt(ou_moments(p, 0.0, dt).second);
}

/// Rate actually executable given remaining inventory q over a step dt.
inline double effective_rate(double q, double rate, double dt) {
    if (q <= 0.0) return 0.0;
    const double cap = q / dt;
    return rate < cap ? rate : cap;
}

/// How execution cost is charged in the wealth update.
///
/// PerRate charges the instantaneous rate (m += c(s - eta c) dt), the
/// continuous-model form. PerOrder charges each executed order's size
/// (m += x(s - eta x), x = c dt), the discrete-protocol form used by the
/// benchmark harness; see bench.hpp.
enum class ImpactAccounting { PerRate, PerOrder };

/// One exact transition step.
///
/// A moves by the exact GBM map, eps by the exact OU transition fed with the
/// correlated unit normal xi = (rho dW1 + sqrt(1-rho^2) dW2)/sqrt(dt). Each
/// increment pair therefore has exact correlation rho; the continuous-time
/// cross-moment between the OU integral and W1 is matched to O(dt).
/// The rate is truncated to q/dt so inventory never goes negative, and the
/// wealth update uses the pre-step price (left-endpoint rule).
inline MarketState step_exact(const ModelParams& p, const MarketState& state, double rate,
                              double dt, double dW1, double dW2,
                              ImpactAccounting acct = ImpactAccounting::PerRate) {
    if (!(dt > 0.0)) throw std::invalid_argument("step_exact: dt must be > 0");
    if (!(rate >= 0.0)) throw std::invalid_argument("step_exact: rate must be >= 0");
    if (!state.finite() || !std::isfinite(dW1) || !std::isfinite(dW2))
        throw std::invalid_argument("step_exact: nonfinite input");

    MarketState next;
    next.t = state.t + dt;

    const double c = effective_rate(state.q, rate, dt);
    const double s = state.price();
    if (acct == ImpactAccounting::PerRate) {
        next.m = state.m + c * (s - p.eta * c) * dt;
    } else {
        const double x = c * dt;
        next.m = state.m + x * (s - p.eta * x);
    }
    if (rate >= state.q / dt || state.q <= 0.0) {
        next.q = 0.0;
    } else {
        next.q = state.q - c * dt;
        if (next.q < 0.0) next.q = 0.0;
    }

    next.a = state.a * std::exp((p.mu1 - 0.5 * p.sigma1 * p.sigma1) * dt + p.sigma1 * dW1);
    const double xi = (p.rho * dW1 + std::sqrt(1.0 - p.rho * p.rho) * dW2) / std::sqrt(dt);
    next.eps = state.eps * std::exp(-p.k * dt) + ou_stddev(p, dt) * xi;
    return next;
}

/// Uniform grid of n_steps intervals on [t0, horizon]; the last point is
/// exactly the horizon. simulate_path builds its grid through this, so callers
/// precomputing per-time caches hit the same bit patterns.
inline std::vector<double> uniform_grid(double t0, double horizon, std::size_t n_steps) {
    if (n_steps < 1) throw std::invalid_argument("uniform_grid: n_steps must be >= 1");
    if (!(t0 < horizon)) throw std::invalid_argument("uniform_grid: t0 must be < horizon");
    const double dt = (horizon - t0) / static_cast<double>(n_steps);
    std::vector<double> grid(n_steps + 1);
    for (std::size_t i = 0; i <= n_steps; ++i)
        grid[i] = (i == n_steps) ? horizon : t0 + static_cast<double>(i) * dt;
    return grid;
}

/// A simulated trajectory on a uniform grid.
struct SimPath {
    std::vector<double> grid;          ///< t0 < ... < tN = T
    std::vector<MarketState> states;   ///< one per grid point
    std::vector<double> rates;         ///< applied (clamped) rate per interval
    std::size_t tau_index = 0;         ///< first index with q = 0, or N if never
    std::uint64_t seed = 0;

    std::size_t n_steps() const { return rates.size(); }
};

/// Simulates one path of the market under the given policy.
///
/// Uniform grid of n_steps intervals on [initial.t, T]; per interval the policy
/// is queried at the left endpoint, the rate clamped to q/dt, and the state
/// advanced by step_exact. Fixing the seed fixes the whole path bit-for-bit.
inline SimPath simulate_path(const ModelParams& p, Policy& policy, const MarketState& initial,
                             std::size_t n_steps, std::uint64_t seed,
                             ImpactAccounting acct = ImpactAccounting::PerRate) {
    if (n_steps < 1) throw std::invalid_argument("simulate_path: n_steps must be >= 1");
    initial.validate(p);
    if (!(initial.t < p.T)) throw std::invalid_argument("simulate_path: initial.t must be < T");

    const double dt = (p.T - initial.t) / static_cast<double>(n_steps);
    SimPath path;
    path.seed = seed;
    path.grid = uniform_grid(initial.t, p.T, n_steps);
    path.states.resize(n_steps + 1);
    path.rates.resize(n_steps);

    NormalRng rng(seed);
    policy.reset();
    path.states[0] = initial;
    path.states[0].t = path.grid[0];
    path.tau_index = n_steps;
    bool depleted = initial.q <= 0.0;
    if (depleted) path.tau_index = 0;

    for (std::size_t i = 0; i < n_steps; ++i) {
        const MarketState& cur = path.states[i];
        double requested = depleted ? 0.0 : policy.rate(path.grid[i], cur);
        if (!(requested >= 0.0) || !std::isfinite(requested))
            throw std::runtime_error("simulate_path: policy returned invalid rate at step " +
                                     std::to_string(i));
        const auto [dW1, dW2] = sample_increments(rng, dt);
        path.rates[i] = effective_rate(cur.q, requested, dt);
        MarketState next = step_exact(p, cur, requested, dt, dW1, dW2, acct);
        next.t = path.grid[i + 1];
        if (!next.finite())
            throw std::runtime_error("simulate_path: nonfinite state at step " +
                                     std::to_string(i + 1));
        path.states[i + 1] = next;
        if (!depleted && next.q <= 0.0) {
            depleted = true;
            path.tau_index = i + 1;
        }
    }
    return path;
}

/// CSV export with header `t,a,eps,q,m,rate`; the rate column holds the rate
/// applied on [t_i, t_{i+1}) and 0 on the final row.
inline void write_path_csv(const SimPath& path, std::ostream& os) {
    os << "t,a,eps,q,m,rate\n";
    os.precision(17);
    for (std::size_t i = 0; i < path.states.size(); ++i) {
        const MarketState& s = path.states[i];
        const double rate = i < path.rates.size() ? path.rates[i] : 0.0;
        os << s.t << ',' << s.a << ',' << s.eps << ',' << s.q << ',' << s.m << ',' << rate
           << '\n';
    }
}

}  // namespace coliq

#endif
