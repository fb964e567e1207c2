#ifndef COLIQ_SERIALIZE_HPP
#define COLIQ_SERIALIZE_HPP

#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "coliq/bench.hpp"
#include "coliq/closedform.hpp"
#include "coliq/fbsde.hpp"

namespace coliq {

/// Shortest text that round-trips a double (%.17g), for byte-stable CSV.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Benchmark statistics
// ---------------------------------------------------------------------------

/// CSV: `policy,mean,std,p5,p95,n_paths`, one row per policy (cash value).
inline void write_stats_csv(const CompareResult& res, std::ostream& os) {
    os << "policy,mean,std,p5,p95,n_paths\n";
    for (std::size_t i = 0; i < res.labels.size(); ++i) {
        const WealthStats& st = res.stats[i];
        os << res.labels[i] << ',' << format_double(st.mean) << ',' << format_double(st.std_dev)
           << ',' << format_double(st.p5) << ',' << format_double(st.p95) << ',' << st.n_paths
           << '\n';
    }
}

inline nlohmann::json stats_to_json(const WealthStats& st) {
    return {{"mean", st.mean},
            {"std", st.std_dev},
            {"p5", st.p5},
            {"p95", st.p95},
            {"n_paths", st.n_paths}};
}

/// JSON report: per policy the primary cash-value statistics plus the
/// penalty-inclusive objective statistics as a flagged secondary block.
inline nlohmann::json compare_to_json(const CompareResult& res) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < res.labels.size(); ++i) {
        rows.push_back({{"policy", res.labels[i]},
                        {"cash", stats_to_json(res.stats[i])},
                        {"objective", stats_to_json(res.objective_stats[i])}});
    }
    return {{"metric", "final cash value M + Q(S - chi Q)"},
            {"objective_note", "secondary: cash value minus running penalties"},
            {"policies", rows}};
}

// ---------------------------------------------------------------------------
// Closed-form exports
// ---------------------------------------------------------------------------

/// CSV: `t,g3`, one row per time.
inline void write_g3_csv(const G3Curve& g3, const std::vector<double>& times, std::ostream& os) {
    os << "t,g3\n";
    for (double t : times) os << format_double(t) << ',' << format_double(g3.eval(t)) << '\n';
}

/// CSV grid of g2 values: header `t,<eps1>,<eps2>,...`; one row per time with
/// g2(t, eps) per column.
inline void write_g2_grid_csv(const G2Surface& surface, const std::vector<double>& times,
                              const std::vector<double>& eps_values, std::ostream& os) {
    os << "t";
    for (double e : eps_values) os << ',' << format_double(e);
    os << '\n';
    for (double t : times) {
        os << format_double(t);
        for (double e : eps_values) os << ',' << format_double(surface.g2(t, e));
        os << '\n';
    }
}

inline nlohmann::json value_estimate_to_json(const ValueEstimate& est) {
    return {{"value", est.value}, {"std_error", est.std_error}, {"n_paths", est.n_paths}};
}

// ---------------------------------------------------------------------------
// Network parameters
// ---------------------------------------------------------------------------

inline nlohmann::json net_params_to_json(const NetParams& net) {
    return {{"architecture", {{"widths", net.spec.widths}, {"activation", net.spec.activation}}},
            {"input_scale", net.input_scale},
            {"y0", net.y0},
            {"weights", net.weights}};
}

inline NetParams net_params_from_json(const nlohmann::json& j) {
    for (const char* key : {"architecture", "input_scale", "y0", "weights"})
        if (!j.contains(key))
            throw std::runtime_error(std::string("network json: missing key ") + key);
    const auto& arch = j.at("architecture");
    if (!arch.contains("widths") || !arch.contains("activation"))
        throw std::runtime_error("network json: architecture needs widths and activation");
    NetParams net;
    net.spec.widths = arch.at("widths").get<std::vector<int>>();
    net.spec.activation = arch.at("activation").get<std::string>();
    const auto scale = j.at("input_scale").get<std::vector<double>>();
    if (scale.size() != 4)
        throw std::runtime_error("network json: input_scale must have 4 entries");
    for (std::size_t i = 0; i < 4; ++i) net.input_scale[i] = scale[i];
    net.y0 = j.at("y0").get<double>();
    net.weights = j.at("weights").get<std::vector<double>>();
    try {
        net.validate();
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error(std::string("network json: ") + e.what());
    }
    return net;
}

/// Load with an architecture expectation; mismatches report expected vs found.
inline NetParams net_params_from_json(const nlohmann::json& j, const MlpSpec& expected) {
    NetParams net = net_params_from_json(j);
    if (!(net.spec == expected))
        throw std::runtime_error("network json: architecture mismatch: expected " +
                                 expected.describe() + ", found " + net.spec.describe());
    return net;
}

// ---------------------------------------------------------------------------
// Training and evaluation reports
// ---------------------------------------------------------------------------

/// CSV: `step,train_loss,val_loss`; the validation column carries the most
/// recent validation value at or before the step (validation runs at step 0
/// and every val_every steps).
inline void write_train_report_csv(const TrainReport& rep, std::ostream& os) {
    os << "step,train_loss,val_loss\n";
    std::size_t vi = 0;
    double cur_val = rep.val_loss.empty() ? 0.0 : rep.val_loss.front();
    for (std::size_t s = 0; s < rep.train_loss.size(); ++s) {
        while (vi < rep.val_steps.size() && rep.val_steps[vi] <= s) cur_val = rep.val_loss[vi++];
        os << s << ',' << format_double(rep.train_loss[s]) << ',' << format_double(cur_val)
           << '\n';
    }
}

inline nlohmann::json train_report_to_json(const TrainReport& rep) {
    return {{"steps_run", rep.steps_run},       {"final_val_loss", rep.final_val_loss},
            {"best_val_loss", rep.best_val_loss}, {"best_step", rep.best_step},
            {"diverged", rep.diverged},         {"wall_seconds", rep.wall_seconds}};
}

/// CSV: `seed,m_discrepancy,q_ratio`, one row per evaluation seed index.
inline void write_discrepancy_csv(const NnEvalReport& rep, std::ostream& os) {
    os << "seed,m_discrepancy,q_ratio\n";
    for (std::size_t s = 0; s < rep.per_seed_discrepancy.size(); ++s)
        os << s << ',' << format_double(rep.per_seed_discrepancy[s]) << ','
           << format_double(rep.per_seed_q_ratio[s]) << '\n';
}

inline nlohmann::json discrepancy_summary_to_json(const NnEvalReport& rep) {
    return {{"mean_m_discrepancy", rep.mean_discrepancy},
            {"mean_q_ratio", rep.mean_q_ratio},
            {"n_seeds", rep.n_seeds},
            {"y_min", rep.y_diag.min_y},
            {"y_negative_fraction",
             rep.y_diag.n_evals ? static_cast<double>(rep.y_diag.n_negative) /
                                      static_cast<double>(rep.y_diag.n_evals)
                                : 0.0}};
}

}  // namespace coliq

#endif
