#ifndef COLIQ_RNG_HPP
#define COLIQ_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <utility>

namespace coliq {

/// splitmix64 finalizer; used to decorrelate derived seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Deterministic per-path seed derived from (master seed, path index, stream tag).
/// Parallel and serial runs agree because every path owns the seed computed here.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index,
                                 std::uint64_t stream = 0) {
    return splitmix64(splitmix64(master ^ (0xA0761D6478BD642FULL * (stream + 1))) ^
                      splitmix64(index + 0x9E3779B97F4A7C15ULL));
}

/// Standard-normal generator: mt19937_64 + polar Box-Muller.
/// The polar variant uses only log/sqrt, which keeps draws bit-identical across
/// platforms whose libm sin/cos differ in the last ulp.
class NormalRng {
  public:
    explicit NormalRng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform in [0, 1) with 53-bit resolution.
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform01() - 1.0;
            v = 2.0 * uniform01() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

    std::uint64_t raw() { return engine_(); }

  private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Two independent N(0, dt) Brownian increments.
inline std::pair<double, double> sample_increments(NormalRng& rng, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("sample_increments: dt must be > 0");
    const double sq = std::sqrt(dt);
    const double z1 = rng.normal();
    const double z2 = rng.normal();
    return {z1 * sq, z2 * sq};
}

}  // namespace coliq

#endif
