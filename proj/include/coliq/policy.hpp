#ifndef COLIQ_POLICY_HPP
#define COLIQ_POLICY_HPP

#include <functional>
#include <memory>
#include <string>
#include <utility>

#include "coliq/params.hpp"

namespace coliq {

/// Trading-rate policy contract: rate(t, state) >= 0, and 0 whenever q = 0.
///
/// Policies may keep per-path state (see reset / clone): a simulation calls
/// reset() once at the start of every path and clone() to obtain independent
/// instances for parallel paths.
class Policy {
  public:
    virtual ~Policy() = default;

    /// Requested selling rate (shares/time) at time t in the given state.
    virtual double rate(double t, const MarketState& state) = 0;

    /// Clears any per-path state. Default: nothing to clear.
    virtual void reset() {}

    virtual std::unique_ptr<Policy> clone() const = 0;

    virtual const std::string& label() const { return label_; }

  protected:
    explicit Policy(std::string label) : label_(std::move(label)) {}
    Policy(const Policy&) = default;

  private:
    std::string label_;
};

/// Stateless policy wrapping a plain callable; handy for tests and baselines.
class FunctionPolicy final : public Policy {
  public:
    using Fn = std::function<double(double, const MarketState&)>;

    FunctionPolicy(std::string label, Fn fn)
        : Policy(std::move(label)), fn_(std::move(fn)) {}

    double rate(double t, const MarketState& state) override {
        if (state.q <= 0.0) return 0.0;
        return fn_(t, state);
    }

    std::unique_ptr<Policy> clone() const override {
        return std::make_unique<FunctionPolicy>(*this);
    }

  private:
    Fn fn_;
};

inline std::unique_ptr<Policy> zero_policy() {
    return std::make_unique<FunctionPolicy>(
        "zero", [](double, const MarketState&) { return 0.0; });
}

inline std::unique_ptr<Policy> constant_rate_policy(double rate) {
    return std::make_unique<FunctionPolicy>(
        "constant", [rate](double, const MarketState&) { return rate; });
}

}  // namespace coliq

#endif
