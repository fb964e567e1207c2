#ifndef COLIQ_QUADRATURE_HPP
#define COLIQ_QUADRATURE_HPP

#include <cmath>
#include <stdexcept>
#include <vector>

namespace coliq {

/// Gauss-Legendre rule of a given order on [-1, 1].
///
/// Nodes are found by Newton iteration on P_n with the cos-based initial
/// guess; accurate to ~1 ulp for orders up to several hundred.
class GaussLegendre {
  public:
    explicit GaussLegendre(int order) {
        if (order < 2) throw std::invalid_argument("GaussLegendre: order must be >= 2");
        const int n = order;
        x_.resize(n);
        w_.resize(n);
        const int half = (n + 1) / 2;
        for (int i = 0; i < half; ++i) {
            double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
            double pp = 0.0;
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0, p1 = 0.0;
                for (int j = 0; j < n; ++j) {
                    const double p2 = p1;
                    p1 = p0;
                    p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
                }
                pp = n * (z * p0 - p1) / (z * z - 1.0);
                const double dz = p0 / pp;
                z -= dz;
                if (std::abs(dz) < 1e-15) break;
            }
            x_[i] = -z;
            x_[n - 1 - i] = z;
            w_[i] = 2.0 / ((1.0 - z * z) * pp * pp);
            w_[n - 1 - i] = w_[i];
        }
    }

    int order() const { return static_cast<int>(x_.size()); }
    const std::vector<double>& nodes() const { return x_; }
    const std::vector<double>& weights() const { return w_; }

    /// Integrates f over [a, b].
    template <class F>
    double integrate(F&& f, double a, double b) const {
        const double c = 0.5 * (b - a), d = 0.5 * (b + a);
        double acc = 0.0;
        for (std::size_t i = 0; i < x_.size(); ++i) acc += w_[i] * f(c * x_[i] + d);
        return c * acc;
    }

  private:
    std::vector<double> x_, w_;
};

}  // namespace coliq

#endif
