#ifndef COLIQ_RUNCONFIG_HPP
#define COLIQ_RUNCONFIG_HPP

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>

#include <json.hpp>

#include "coliq/fbsde.hpp"
#include "coliq/params.hpp"
#include "coliq/simulate.hpp"

namespace coliq {

/// Raised on malformed configuration; the message carries the offending
/// key path (e.g. "model.eta: missing required key").
class ConfigError : public std::runtime_error {
  public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Monte-Carlo harness settings.
struct HarnessConfig {
    std::size_t n_paths = 10000;
    std::size_t n_trades = 100;
    std::uint64_t seed = 0;
    ImpactAccounting impact = ImpactAccounting::PerOrder;
    std::pair<double, double> sigma1_range{0.25, 0.35};
    std::pair<double, double> sigma2_range{0.04, 0.06};
};

/// Full run configuration: model, initial state, harness, optional training
/// block, optional output directory.
struct RunConfig {
    ModelParams model;
    MarketState initial;
    HarnessConfig harness;
    TrainConfig train;
    bool has_train = false;
    std::string out;
};

namespace detail {

using nlohmann::json;

inline void reject_unknown(const json& obj, const std::string& scope,
                           std::initializer_list<const char*> known) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : known)
            if (it.key() == k) {
                ok = true;
                break;
            }
        if (!ok) throw ConfigError(scope + "." + it.key() + ": unknown key");
    }
}

inline const json& require_object(const json& j, const std::string& key) {
    if (!j.contains(key)) throw ConfigError(key + ": missing required section");
    if (!j.at(key).is_object()) throw ConfigError(key + ": expected an object");
    return j.at(key);
}

inline double get_number(const json& obj, const std::string& scope, const char* key) {
    if (!obj.contains(key)) throw ConfigError(scope + "." + key + ": missing required key");
    const json& v = obj.at(key);
    if (!v.is_number()) throw ConfigError(scope + "." + key + ": expected a number");
    return v.get<double>();
}

inline double get_number_or(const json& obj, const std::string& scope, const char* key,
                            double fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number()) throw ConfigError(scope + "." + key + ": expected a number");
    return v.get<double>();
}

inline std::uint64_t get_count(const json& obj, const std::string& scope, const char* key,
                               std::uint64_t fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
        throw ConfigError(scope + "." + key + ": expected a nonnegative integer");
    return v.get<std::uint64_t>();
}

inline std::pair<double, double> get_range(const json& obj, const std::string& scope,
                                           const char* key, std::pair<double, double> fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
        throw ConfigError(scope + "." + key + ": expected [lo, hi]");
    const std::pair<double, double> r{v[0].get<double>(), v[1].get<double>()};
    if (!(r.first <= r.second)) throw ConfigError(scope + "." + key + ": lo must be <= hi");
    return r;
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
    using detail::get_count;
    using detail::get_number;
    using detail::get_number_or;
    using detail::get_range;
    if (!j.is_object()) throw ConfigError("config root: expected an object");
    detail::reject_unknown(j, "config", {"model", "initial", "harness", "train", "out"});

    RunConfig cfg;
    const auto& model = detail::require_object(j, "model");
    detail::reject_unknown(model, "model",
                           {"mu1", "sigma1", "sigma2", "rho", "k", "eta", "chi", "phi1", "phi2",
                            "phi3", "T", "q_bar"});
    cfg.model.mu1 = get_number_or(model, "model", "mu1", 0.0);
    cfg.model.sigma1 = get_number(model, "model", "sigma1");
    cfg.model.sigma2 = get_number(model, "model", "sigma2");
    cfg.model.rho = get_number(model, "model", "rho");
    cfg.model.k = get_number(model, "model", "k");
    cfg.model.eta = get_number(model, "model", "eta");
    cfg.model.chi = get_number(model, "model", "chi");
    cfg.model.phi1 = get_number(model, "model", "phi1");
    cfg.model.phi2 = get_number(model, "model", "phi2");
    cfg.model.phi3 = get_number(model, "model", "phi3");
    cfg.model.T = get_number(model, "model", "T");

    const auto& initial = detail::require_object(j, "initial");
    detail::reject_unknown(initial, "initial", {"a", "eps", "q", "m", "t"});
    cfg.initial.a = get_number(initial, "initial", "a");
    cfg.initial.q = get_number(initial, "initial", "q");
    cfg.initial.eps = get_number_or(initial, "initial", "eps", 0.0);
    cfg.initial.m = get_number_or(initial, "initial", "m", 0.0);
    cfg.initial.t = get_number_or(initial, "initial", "t", 0.0);

    cfg.model.q_bar = get_number_or(model, "model", "q_bar", cfg.initial.q + 1.0);

    if (j.contains("harness")) {
        const auto& h = j.at("harness");
        if (!h.is_object()) throw ConfigError("harness: expected an object");
        detail::reject_unknown(
            h, "harness", {"n_paths", "n_trades", "seed", "impact", "sigma1_range", "sigma2_range"});
        cfg.harness.n_paths = get_count(h, "harness", "n_paths", cfg.harness.n_paths);
        cfg.harness.n_trades = get_count(h, "harness", "n_trades", cfg.harness.n_trades);
        cfg.harness.seed = get_count(h, "harness", "seed", cfg.harness.seed);
        if (h.contains("impact")) {
            if (!h.at("impact").is_string())
                throw ConfigError("harness.impact: expected \"order\" or \"rate\"");
            const std::string v = h.at("impact").get<std::string>();
            if (v == "order")
                cfg.harness.impact = ImpactAccounting::PerOrder;
            else if (v == "rate")
                cfg.harness.impact = ImpactAccounting::PerRate;
            else
                throw ConfigError("harness.impact: expected \"order\" or \"rate\"");
        }
        cfg.harness.sigma1_range = get_range(h, "harness", "sigma1_range", cfg.harness.sigma1_range);
        cfg.harness.sigma2_range = get_range(h, "harness", "sigma2_range", cfg.harness.sigma2_range);
    }

    if (j.contains("train")) {
        const auto& t = j.at("train");
        if (!t.is_object()) throw ConfigError("train: expected an object");
        detail::reject_unknown(t, "train",
                               {"n_steps_time", "batch_size", "validation_size", "max_train_steps",
                                "learning_rate", "val_every", "seed"});
        cfg.train.n_steps_time = get_count(t, "train", "n_steps_time", cfg.train.n_steps_time);
        cfg.train.batch_size = get_count(t, "train", "batch_size", cfg.train.batch_size);
        cfg.train.validation_size =
            get_count(t, "train", "validation_size", cfg.train.validation_size);
        cfg.train.max_train_steps =
            get_count(t, "train", "max_train_steps", cfg.train.max_train_steps);
        cfg.train.learning_rate = get_number_or(t, "train", "learning_rate", cfg.train.learning_rate);
        cfg.train.val_every = get_count(t, "train", "val_every", cfg.train.val_every);
        cfg.train.seed = get_count(t, "train", "seed", cfg.train.seed);
        cfg.train.validate();
        cfg.has_train = true;
    }

    if (j.contains("out")) {
        if (!j.at("out").is_string()) throw ConfigError("out: expected a string");
        cfg.out = j.at("out").get<std::string>();
    }

    try {
        cfg.model.validate();
        cfg.initial.validate(cfg.model);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open config file");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return parse_run_config(j);
}

}  // namespace coliq

#endif
