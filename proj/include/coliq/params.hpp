#ifndef COLIQ_PARAMS_HPP
#define COLIQ_PARAMS_HPP

#include <cmath>
#include <stdexcept>
#include <string>

namespace coliq {

/// Market and objective parameters.
///
/// The liquidating stock trades at S = A e^eps where A is a geometric Brownian
/// motion (drift mu1, volatility sigma1) and eps is an Ornstein-Uhlenbeck
/// log-spread (speed k, volatility sigma2, correlation rho with A's driver).
/// Selling at rate c earns c(S - eta c) per unit time; chi penalizes the
/// terminal block, phi1..phi3 are running inventory penalties.
struct ModelParams {
    double mu1 = 0.0;     ///< drift of A (1/time)
    double sigma1 = 0.1;  ///< volatility of A (1/sqrt(time))
    double sigma2 = 0.1;  ///< volatility of eps (1/sqrt(time))
    double rho = 0.0;     ///< driver correlation, in [-1, 1]
    double k = 0.1;       ///< mean-reversion speed of eps (1/time)
    double eta = 1e-3;    ///< temporary impact (price*time/share)
    double chi = 0.0;     ///< terminal penalty (price/share)
    double phi1 = 0.0;    ///< running penalty on q^2
    double phi2 = 0.0;    ///< running penalty on S q
    double phi3 = 0.0;    ///< running penalty on A q
    double T = 1.0;       ///< horizon (time)
    double q_bar = 1.0;   ///< inventory-space cap (shares), must exceed q0

    /// Throws std::invalid_argument naming the offending field.
    /// Degenerate values (mu1 = 0, sigma2 = 0, k = 0) are legal; the analytic
    /// k->0 limits are implemented wherever the closed forms need them.
    void validate() const {
        auto fail = [](const std::string& what) {
            throw std::invalid_argument("ModelParams: " + what);
        };
        if (!(mu1 >= 0.0)) fail("mu1 must be >= 0");
        if (!(sigma1 >= 0.0)) fail("sigma1 must be >= 0");
        if (!(sigma2 >= 0.0)) fail("sigma2 must be >= 0");
        if (!(rho >= -1.0 && rho <= 1.0)) fail("rho must be in [-1,1]");
        if (!(k >= 0.0)) fail("k must be >= 0");
        if (!(eta > 0.0)) fail("eta must be > 0");
        if (!(chi >= 0.0)) fail("chi must be >= 0");
        if (!(phi1 >= 0.0)) fail("phi1 must be >= 0");
        if (!(phi2 >= 0.0)) fail("phi2 must be >= 0");
        if (!(phi3 >= 0.0)) fail("phi3 must be >= 0");
        if (!(T > 0.0)) fail("T must be > 0");
        if (!(q_bar > 0.0)) fail("q_bar must be > 0");
    }
};

/// Instantaneous market state. Derived price: s = a * exp(eps).
struct MarketState {
    double t = 0.0;    ///< time in [0, T]
    double a = 1.0;    ///< price of the reference stock A (> 0)
    double eps = 0.0;  ///< cointegration factor ln(S/A)
    double q = 0.0;    ///< inventory in [0, q_bar]
    double m = 0.0;    ///< wealth

    double price() const { return a * std::exp(eps); }

    bool finite() const {
        return std::isfinite(t) && std::isfinite(a) && std::isfinite(eps) &&
               std::isfinite(q) && std::isfinite(m);
    }

    void validate(const ModelParams& p) const {
        auto fail = [](const std::string& what) {
            throw std::invalid_argument("MarketState: " + what);
        };
        if (!finite()) fail("nonfinite field");
        if (!(a > 0.0)) fail("a must be > 0");
        if (!(q >= 0.0 && q <= p.q_bar)) fail("q must be in [0, q_bar]");
        if (!(t >= 0.0 && t <= p.T)) fail("t must be in [0, T]");
    }
};

}  // namespace coliq

#endif
