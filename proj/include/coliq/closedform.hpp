#ifndef COLIQ_CLOSEDFORM_HPP
#define COLIQ_CLOSEDFORM_HPP

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "coliq/math.hpp"
#include "coliq/params.hpp"
#include "coliq/policy.hpp"
#include "coliq/quadrature.hpp"
#include "coliq/rng.hpp"
#include "coliq/simulate.hpp"

namespace coliq {

/// Result of the admissibility check phi3 e^{1 + phi2/k} >= k e^{sigma2^2/(2k) + mu1/k + rho sigma1 sigma2 / k}.
struct Condition51 {
    bool holds = false;
    double lhs = 0.0;
    double rhs = 0.0;
};

/// Evaluates the admissibility condition. For k = 0 the two sides are the
/// analytic k -> 0 limits (each side either vanishes or diverges).
inline Condition51 check_condition_51(const ModelParams& p) {
    Condition51 c;
    const double inf = std::numeric_limits<double>::infinity();
    if (p.k > 0.0) {
        c.lhs = p.phi3 * std::exp(1.0 + p.phi2 / p.k);
        c.rhs = p.k * std::exp((0.5 * p.sigma2 * p.sigma2 + p.mu1 + p.rho * p.sigma1 * p.sigma2) / p.k);
    } else {
        const double growth = 0.5 * p.sigma2 * p.sigma2 + p.mu1 + p.rho * p.sigma1 * p.sigma2;
        c.lhs = (p.phi3 == 0.0) ? 0.0 : (p.phi2 > 0.0 ? inf : p.phi3 * std::exp(1.0));
        c.rhs = growth > 0.0 ? inf : 0.0;
    }
    c.holds = c.lhs >= c.rhs;
    return c;
}

/// The inventory-quadratic coefficient g3 and its antiderivative.
///
/// g3 solves the Riccati terminal-value problem g3' = phi1 - g3^2/eta,
/// g3(T) = -chi. With gamma = sqrt(phi1 eta), beta = sqrt(phi1/eta),
/// u(s) = (gamma - chi) e^{2 beta (s-T)} + (gamma + chi):
///   g3(s)        = gamma (u(s) - 2(gamma+chi)) / u(s)  (tanh-type closed form)
///   int_t^r g3   = -gamma (r-t) + eta ln(u(r)/u(t))
/// For phi1 -> 0 the analytic limit g3(t) = -chi eta / (eta + chi (T-t)) is used.
class G3Curve {
  public:
    explicit G3Curve(const ModelParams& p)
        : eta_(p.eta), chi_(p.chi), T_(p.T), tiny_phi1_(p.phi1 < 1e-14) {
        p.validate();
        if (!tiny_phi1_) {
            gamma_ = std::sqrt(p.phi1 * p.eta);
            beta_ = std::sqrt(p.phi1 / p.eta);
            alpha_ = gamma_ - chi_;
            cpos_ = gamma_ + chi_;
        }
    }

    double horizon() const { return T_; }

    double eval(double t) const {
        check_time(t);
        if (tiny_phi1_) {
            if (chi_ == 0.0) return 0.0;
            return -chi_ * eta_ / (eta_ + chi_ * (T_ - t));
        }
        const double u = u_of(t);
        return gamma_ * (alpha_ * grow(t) - cpos_) / u;
    }

    /// int_t^r g3(s) ds, requiring t <= r <= T.
    double integral(double t, double r) const {
        check_time(t);
        check_time(r);
        if (r < t) throw std::invalid_argument("G3Curve::integral: r < t");
        if (tiny_phi1_) {
            if (chi_ == 0.0) return 0.0;
            return eta_ * std::log((eta_ + chi_ * (T_ - r)) / (eta_ + chi_ * (T_ - t)));
        }
        return -gamma_ * (r - t) + eta_ * std::log(u_of(r) / u_of(t));
    }

  private:
    double grow(double s) const { return std::exp(2.0 * beta_ * (s - T_)); }

    double u_of(double s) const {
        const double u = alpha_ * grow(s) + cpos_;
        if (!(u > 0.0))
            throw std::domain_error("G3Curve: denominator vanished (pathological chi)");
        return u;
    }

    void check_time(double t) const {
        if (!(t >= -1e-12 && t <= T_ * (1.0 + 1e-12) + 1e-12))
            throw std::invalid_argument("G3Curve: time outside [0, T]");
    }

    double eta_, chi_, T_;
    bool tiny_phi1_;
    double gamma_ = 0.0, beta_ = 0.0, alpha_ = 0.0, cpos_ = 0.0;
};

/// Thrown when doubling the quadrature order moves a g2 value by more than the
/// configured tolerance.
struct QuadratureNonconvergence : std::runtime_error {
    QuadratureNonconvergence(double t_, double eps_, double diff_)
        : std::runtime_error("g2 quadrature did not converge at (t=" + std::to_string(t_) +
                             ", eps=" + std::to_string(eps_) + "), refinement delta " +
                             std::to_string(diff_)),
          t(t_), eps(eps_), diff(diff_) {}
    double t, eps, diff;
};

/// The spread-dependent coefficient g2 of the candidate value function,
/// evaluated through its integral representation.
///
/// Writing gstar(t, eps) = e^{eps} (1 - g2(t, eps)), the representation is a
/// single time integral of Gaussian moments of the tilted OU bridge times the
/// deterministic weight ghat(r; t) = exp(int_t^r g3 / eta + mu1 (r - t)).
/// Evaluation is Gauss-Legendre quadrature on [t, T]; per fixed t all
/// eps-independent factors are cached as a slice, so policy evaluation along a
/// time grid costs one exp per node. Immutable after precompute(); safe to
/// share across threads.
class G2Surface {
  public:
    explicit G2Surface(const ModelParams& p, int quad_order = 64)
        : p_(p), g3_(p), gl_(quad_order), gl2_(2 * quad_order) {
        p_.validate();
    }

    const ModelParams& params() const { return p_; }
    const G3Curve& g3() const { return g3_; }
    int quad_order() const { return gl_.order(); }

    /// Builds and caches slices for the given times (e.g. a simulation grid).
    void precompute(const std::vector<double>& times) {
        for (double t : times)
            if (t < p_.T) cache_.emplace(key(t), build_slice(t, gl_));
    }

    /// Cached-slice count (diagnostics).
    std::size_t cached_slices() const { return cache_.size(); }

    /// gstar(t, eps) = e^{eps} (1 - g2(t, eps)) >= 0 under the admissibility
    /// condition; this is the quantity the optimal rate consumes.
    double gstar(double t, double eps) const {
        if (t >= p_.T) return 0.0;
        const auto it = cache_.find(key(t));
        if (it != cache_.end()) return eval_slice(it->second, eps);
        return eval_slice(build_slice(t, gl_), eps);
    }

    double g2(double t, double eps) const { return 1.0 - std::exp(-eps) * gstar(t, eps); }

    /// Value at the configured order plus the absolute change when the order
    /// is doubled; the change is the refinement error estimate.
    std::pair<double, double> g2_refined(double t, double eps) const {
        const double v1 = g2(t, eps);
        const double v2 =
            t >= p_.T ? 1.0 : 1.0 - std::exp(-eps) * eval_slice(build_slice(t, gl2_), eps);
        return {v1, std::abs(v2 - v1)};
    }

    /// As g2(), but throws QuadratureNonconvergence when the doubling check
    /// moves the value by more than tol.
    double g2_checked(double t, double eps, double tol = 1e-6) const {
        const auto [v, diff] = g2_refined(t, eps);
        if (!(diff <= tol)) throw QuadratureNonconvergence(t, eps, diff);
        return v;
    }

  private:
    struct Slice {
        std::vector<double> wg;        // mapped weight times ghat
        std::vector<double> mubar;     // e^{-k s}
        std::vector<double> expc;      // sigma_bar^2/2 + rho sigma1 sigma2 int_0^s e^{-k u} du
        std::vector<double> kmubar;    // k e^{-k s}
        std::vector<double> cadd;      // k sigma_bar^2 - sigma2^2/2 - rho sigma1 sigma2 e^{-k s} - mu1 + phi2
    };

    static std::uint64_t key(double t) { return std::bit_cast<std::uint64_t>(t); }

    Slice build_slice(double t, const GaussLegendre& gl) const {
        if (!(t >= -1e-12 && t < p_.T))
            throw std::invalid_argument("G2Surface: t outside [0, T)");
        const int n = gl.order();
        const double c = 0.5 * (p_.T - t), d = 0.5 * (p_.T + t);
        Slice sl;
        sl.wg.resize(n);
        sl.mubar.resize(n);
        sl.expc.resize(n);
        sl.kmubar.resize(n);
        sl.cadd.resize(n);
        const double s2sq = p_.sigma2 * p_.sigma2;
        const double cross = p_.rho * p_.sigma1 * p_.sigma2;
        for (int j = 0; j < n; ++j) {
            const double r = c * gl.nodes()[j] + d;
            const double s = r - t;
            const double mb = std::exp(-p_.k * s);
            const double sb2 = s2sq * s * expm1_ratio(2.0 * p_.k * s);
            sl.wg[j] = c * gl.weights()[j] *
                       std::exp(g3_.integral(t, r) / p_.eta + p_.mu1 * (r - t));
            sl.mubar[j] = mb;
            sl.expc[j] = 0.5 * sb2 + cross * int_exp_decay(p_.k, s);
            sl.kmubar[j] = p_.k * mb;
            sl.cadd[j] = p_.k * sb2 - 0.5 * s2sq - cross * mb - p_.mu1 + p_.phi2;
        }
        return sl;
    }

    double eval_slice(const Slice& sl, double eps) const {
        double acc = 0.0;
        const std::size_t n = sl.wg.size();
        for (std::size_t j = 0; j < n; ++j) {
            const double gauss = std::exp(sl.mubar[j] * eps + sl.expc[j]) *
                                 (sl.kmubar[j] * eps + sl.cadd[j]);
            acc += sl.wg[j] * (gauss + p_.phi3);
        }
        return acc;
    }

    ModelParams p_;
    G3Curve g3_;
    GaussLegendre gl_, gl2_;
    std::unordered_map<std::uint64_t, Slice> cache_;
};

/// One-shot g2 evaluation at an explicit quadrature order.
inline double g2_eval(const ModelParams& p, double t, double eps, int quad_order = 64) {
    return G2Surface(p, quad_order).g2(t, eps);
}

/// One-shot evaluation with the doubling-based nonconvergence check.
inline double g2_eval_checked(const ModelParams& p, double t, double eps, int quad_order = 64,
                              double tol = 1e-6) {
    return G2Surface(p, quad_order).g2_checked(t, eps, tol);
}

/// Monte-Carlo estimate with its standard error.
struct ValueEstimate {
    double value = 0.0;
    double std_error = 0.0;
    std::size_t n_paths = 0;
};

/// MC Feynman-Kac estimate of the inventory-independent value component
/// g1(t, a, eps) = E[int_t^T S_r^2 (1 - g2(r, eps_r))^2 dr] / (4 eta),
/// integrating S_r^2 (1-g2)^2 = A_r^2 gstar(r, eps_r)^2 along exact (A, eps)
/// paths with a trapezoid in r. Slices for the grid are precomputed on the
/// surface, hence the non-const reference.
inline ValueEstimate g1_estimate(const ModelParams& p, double t, double a, double eps,
                                 G2Surface& surface, std::size_t n_paths, std::uint64_t seed,
                                 std::size_t n_time_steps = 64) {
    if (n_paths < 100) throw std::invalid_argument("g1_estimate: n_paths must be >= 100");
    if (!(t >= 0.0 && t < p.T)) throw std::invalid_argument("g1_estimate: t outside [0, T)");
    const double dt = (p.T - t) / static_cast<double>(n_time_steps);
    std::vector<double> grid(n_time_steps + 1);
    for (std::size_t i = 0; i <= n_time_steps; ++i)
        grid[i] = (i == n_time_steps) ? p.T : t + static_cast<double>(i) * dt;
    surface.precompute(grid);

    const double drift = (p.mu1 - 0.5 * p.sigma1 * p.sigma1) * dt;
    const double decay = std::exp(-p.k * dt);
    const double ou_sd = ou_stddev(p, dt);
    const double rho_c = std::sqrt(1.0 - p.rho * p.rho);

    double sum = 0.0, sumsq = 0.0;
    for (std::size_t path = 0; path < n_paths; ++path) {
        NormalRng rng(derive_seed(seed, path));
        double av = a, ev = eps;
        double integral = 0.0;
        const double gs0 = surface.gstar(grid[0], ev);
        double prev = av * av * gs0 * gs0;
        for (std::size_t i = 1; i <= n_time_steps; ++i) {
            const double z1 = rng.normal(), z2 = rng.normal();
            av *= std::exp(drift + p.sigma1 * std::sqrt(dt) * z1);
            ev = ev * decay + ou_sd * (p.rho * z1 + rho_c * z2);
            const double gs = surface.gstar(grid[i], ev);
            const double cur = av * av * gs * gs;
            integral += 0.5 * dt * (prev + cur);
            prev = cur;
        }
        integral /= 4.0 * p.eta;
        sum += integral;
        sumsq += integral * integral;
    }
    const double n = static_cast<double>(n_paths);
    const double mean = sum / n;
    const double var = n > 1 ? (sumsq - n * mean * mean) / (n - 1.0) : 0.0;
    return {mean, std::sqrt(var >= 0.0 ? var / n : 0.0), n_paths};
}

/// Candidate value w = g1 1_{q>0} + q a e^eps g2(t, eps) + q^2 g3(t).
inline double candidate_value(const MarketState& state, double g1_value,
                              const G2Surface& surface) {
    const double q = state.q;
    if (q <= 0.0) return 0.0;
    return g1_value + q * state.a * std::exp(state.eps) * surface.g2(state.t, state.eps) +
           q * q * surface.g3().eval(state.t);
}

/// The closed-form optimal policy
///   c*(t, x) = max(0, a gstar(t, eps) - 2 q g3(t)) / (2 eta) * 1_{q > 0},
/// using a gstar = a e^{eps} (1 - g2). The bracket is provably nonnegative
/// under the admissibility condition, so the max is a numerical guard.
class ClosedFormPolicy final : public Policy {
  public:
    ClosedFormPolicy(ModelParams p, std::shared_ptr<const G2Surface> surface)
        : Policy("closed-form"), p_(p), surface_(std::move(surface)) {}

    double rate(double t, const MarketState& state) override {
        if (state.q <= 0.0) return 0.0;
        const double bracket = state.a * surface_->gstar(t, state.eps) -
                               2.0 * state.q * surface_->g3().eval(t);
        return bracket > 0.0 ? bracket / (2.0 * p_.eta) : 0.0;
    }

    std::unique_ptr<Policy> clone() const override {
        return std::make_unique<ClosedFormPolicy>(*this);
    }

  private:
    ModelParams p_;
    std::shared_ptr<const G2Surface> surface_;
};

/// Factory; verifies the admissibility condition and warns (once, to `warn`)
/// when it fails, since the policy's nonnegativity guarantee rests on it.
inline std::unique_ptr<Policy> closed_form_policy(const ModelParams& p,
                                                  std::shared_ptr<const G2Surface> surface,
                                                  std::ostream* warn = nullptr) {
    const Condition51 c = check_condition_51(p);
    if (!c.holds && warn)
        *warn << "warning: admissibility condition fails (lhs=" << c.lhs << " < rhs=" << c.rhs
              << "); closed-form rate may clip at 0\n";
    return std::make_unique<ClosedFormPolicy>(p, std::move(surface));
}

/// Central-difference residual of the g2 PDE at an interior point:
///   dg2/dt + sigma2^2/2 d2g2/deps2 + (sigma2^2 + rho sigma1 sigma2 - k eps) dg2/deps
///   + (sigma2^2/2 + rho sigma1 sigma2 + mu1 - k eps + g3/eta) g2
///   - phi2 - phi3 e^{-eps} - g3/eta.
/// Second-order accurate in (h_t, h_eps) when g2 solves the PDE.
inline double pde_residual_g2(const ModelParams& p, const G2Surface& surface, double t,
                              double eps, double h_t, double h_eps) {
    if (!(h_t > 0.0 && h_eps > 0.0))
        throw std::invalid_argument("pde_residual_g2: steps must be > 0");
    if (!(t - h_t >= 0.0 && t + h_t <= p.T))
        throw std::invalid_argument("pde_residual_g2: t not interior for step h_t");
    const double g3v = surface.g3().eval(t);
    const double v = surface.g2(t, eps);
    const double vt = (surface.g2(t + h_t, eps) - surface.g2(t - h_t, eps)) / (2.0 * h_t);
    const double vp = surface.g2(t, eps + h_eps), vm = surface.g2(t, eps - h_eps);
    const double ve = (vp - vm) / (2.0 * h_eps);
    const double vee = (vp - 2.0 * v + vm) / (h_eps * h_eps);
    const double s2sq = p.sigma2 * p.sigma2;
    const double cross = p.rho * p.sigma1 * p.sigma2;
    return vt + 0.5 * s2sq * vee + (s2sq + cross - p.k * eps) * ve +
           (0.5 * s2sq + cross + p.mu1 - p.k * eps + g3v / p.eta) * v - p.phi2 -
           p.phi3 * std::exp(-eps) - g3v / p.eta;
}

}  // namespace coliq

#endif
