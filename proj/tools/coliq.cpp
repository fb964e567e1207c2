// Command-line front end for the liquidation engine.
//
// Subcommands: check, solve, simulate, compare, robustness, fbsde train,
// fbsde eval. Configuration comes from a JSON file (--config); flags override
// config values. Exit codes: 0 success, 1 usage/config error, 2 domain
// condition failure.

#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "coliq/coliq.hpp"

namespace fs = std::filesystem;
using namespace coliq;

namespace {

struct Opts {
    std::string config_path;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> paths;
    std::optional<std::size_t> trades;
    std::optional<std::string> impact;
    unsigned jobs = hardware_jobs();
    int quad_order = 64;
    // simulate
    std::string policy_name = "closed-form";
    std::optional<double> const_rate;
    std::optional<std::size_t> steps;
    // compare
    bool dump_paths = false;
    // solve
    bool with_g1 = false;
    // fbsde
    std::string weights_path;
    double warn_threshold = 0.02;
};

void add_common(CLI::App* cmd, Opts& o) {
    cmd->add_option("--config", o.config_path, "JSON run configuration")->required();
    cmd->add_option("--seed", o.seed, "override the RNG seed");
    cmd->add_option("--out", o.out, "output directory (default: config `out` or .)");
    cmd->add_option("--paths", o.paths, "override the number of Monte-Carlo paths");
    cmd->add_option("--jobs", o.jobs, "worker threads (default: logical cores)");
    cmd->add_option("--quad-order", o.quad_order, "Gauss-Legendre order for g2 evaluation")
        ->check(CLI::PositiveNumber);
}

RunConfig load_config(const Opts& o) {
    RunConfig cfg = load_run_config(o.config_path);
    if (o.seed) {
        cfg.harness.seed = *o.seed;
        cfg.train.seed = *o.seed;
    }
    if (o.paths) cfg.harness.n_paths = *o.paths;
    if (o.trades) cfg.harness.n_trades = *o.trades;
    if (o.impact) {
        if (*o.impact == "order")
            cfg.harness.impact = ImpactAccounting::PerOrder;
        else if (*o.impact == "rate")
            cfg.harness.impact = ImpactAccounting::PerRate;
        else
            throw ConfigError("--impact: expected \"order\" or \"rate\"");
    }
    if (!o.out.empty()) cfg.out = o.out;
    if (cfg.out.empty()) cfg.out = ".";
    return cfg;
}

fs::path ensure_out_dir(const RunConfig& cfg) {
    fs::path dir(cfg.out);
    fs::create_directories(dir);
    return dir;
}

void write_text_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    body(os);
    if (!os) throw std::runtime_error("write failed for " + path.string());
}

/// Precomputed shared solver state plus the three benchmark policies.
struct PolicySet {
    std::shared_ptr<const G2Surface> surface;
    std::shared_ptr<const GbmG2Curve> gbm_curve;
    std::vector<std::unique_ptr<Policy>> owned;

    std::vector<const Policy*> pointers() const {
        std::vector<const Policy*> ptrs;
        for (const auto& p : owned) ptrs.push_back(p.get());
        return ptrs;
    }
};

PolicySet make_benchmark_policies(const RunConfig& cfg, int quad_order, std::size_t n_trades) {
    PolicySet set;
    auto surface = std::make_shared<G2Surface>(cfg.model, quad_order);
    auto curve = std::make_shared<GbmG2Curve>(cfg.model, cfg.initial.eps, quad_order);
    const std::vector<double> grid = uniform_grid(cfg.initial.t, cfg.model.T, n_trades);
    surface->precompute(grid);
    curve->precompute(grid);
    set.surface = surface;
    set.gbm_curve = curve;
    set.owned.push_back(closed_form_policy(cfg.model, set.surface, &std::cerr));
    set.owned.push_back(gbm_policy(cfg.model, set.gbm_curve));
    set.owned.push_back(a_only_policy(cfg.model, set.surface));
    return set;
}

void print_stats_table(const CompareResult& res) {
    std::cout << std::left << std::setw(14) << "policy" << std::right << std::setw(12) << "mean"
              << std::setw(12) << "std" << std::setw(12) << "p5" << std::setw(12) << "p95"
              << std::setw(10) << "n" << '\n';
    std::cout << std::fixed << std::setprecision(2);
    for (std::size_t i = 0; i < res.labels.size(); ++i) {
        const WealthStats& st = res.stats[i];
        std::cout << std::left << std::setw(14) << res.labels[i] << std::right << std::setw(12)
                  << st.mean << std::setw(12) << st.std_dev << std::setw(12) << st.p5
                  << std::setw(12) << st.p95 << std::setw(10) << st.n_paths << '\n';
    }
    std::cout.unsetf(std::ios::fixed);
    std::cout << std::setprecision(6);
}

int run_check(const Opts& o) {
    const RunConfig cfg = load_config(o);
    const Condition51 c = check_condition_51(cfg.model);
    std::cout << "lhs=" << format_double(c.lhs) << '\n'
              << "rhs=" << format_double(c.rhs) << '\n'
              << "holds=" << (c.holds ? "true" : "false") << '\n';
    return c.holds ? 0 : 2;
}

int run_solve(const Opts& o) {
    RunConfig cfg = load_config(o);
    const fs::path dir = ensure_out_dir(cfg);
    const Condition51 c = check_condition_51(cfg.model);
    if (!c.holds)
        std::cerr << "warning: admissibility condition fails (lhs=" << format_double(c.lhs)
                  << " < rhs=" << format_double(c.rhs) << "); proceeding\n";

    G2Surface surface(cfg.model, o.quad_order);
    const std::vector<double> times = uniform_grid(0.0, cfg.model.T, cfg.harness.n_trades);
    std::vector<double> eps_values;
    for (double e = -2.0; e <= 2.0 + 1e-12; e += 0.25) eps_values.push_back(e);

    // Convergence gate: every grid cell must be stable under order doubling.
    for (double t : times)
        for (double e : eps_values) surface.g2_checked(t, e, 1e-6);

    surface.precompute(times);
    write_text_file(dir / "g3.csv", [&](std::ostream& os) {
        write_g3_csv(surface.g3(), times, os);
    });
    write_text_file(dir / "g2_grid.csv", [&](std::ostream& os) {
        write_g2_grid_csv(surface, times, eps_values, os);
    });
    std::cout << "wrote " << (dir / "g3.csv").string() << " and "
              << (dir / "g2_grid.csv").string() << '\n';

    if (o.with_g1) {
        const std::size_t n_paths = o.paths.value_or(cfg.harness.n_paths);
        const ValueEstimate est =
            g1_estimate(cfg.model, cfg.initial.t, cfg.initial.a, cfg.initial.eps, surface,
                        n_paths, cfg.harness.seed);
        write_text_file(dir / "g1_estimate.json", [&](std::ostream& os) {
            os << value_estimate_to_json(est).dump(2) << '\n';
        });
        std::cout << "g1 estimate " << est.value << " (se " << est.std_error << ") -> "
                  << (dir / "g1_estimate.json").string() << '\n';
    }
    return 0;
}

std::unique_ptr<Policy> make_named_policy(const RunConfig& cfg, const Opts& o,
                                          std::size_t n_steps) {
    if (o.policy_name == "zero") return zero_policy();
    if (o.policy_name == "constant") {
        const double rate =
            o.const_rate.value_or(cfg.initial.q / (cfg.model.T - cfg.initial.t));
        return constant_rate_policy(rate);
    }
    PolicySet set = make_benchmark_policies(cfg, o.quad_order, n_steps);
    std::size_t idx;
    if (o.policy_name == "closed-form")
        idx = 0;
    else if (o.policy_name == "gbm")
        idx = 1;
    else if (o.policy_name == "a-only")
        idx = 2;
    else
        throw ConfigError("--policy: expected closed-form, gbm, a-only, constant, or zero");
    return std::move(set.owned[idx]);
}

int run_simulate(const Opts& o) {
    RunConfig cfg = load_config(o);
    const fs::path dir = ensure_out_dir(cfg);
    const std::size_t n_steps = o.steps.value_or(cfg.harness.n_trades);
    const std::size_t n_paths = o.paths.value_or(1);
    std::unique_ptr<Policy> pol = make_named_policy(cfg, o, n_steps);

    double mean_cash = 0.0;
    for (std::size_t i = 0; i < n_paths; ++i) {
        const SimPath path = simulate_path(cfg.model, *pol, cfg.initial, n_steps,
                                           derive_seed(cfg.harness.seed, i), cfg.harness.impact);
        mean_cash += final_wealth(path, cfg.model) / static_cast<double>(n_paths);
        write_text_file(dir / ("path_" + std::to_string(i) + ".csv"),
                        [&](std::ostream& os) { write_path_csv(path, os); });
    }
    std::cout << "policy=" << pol->label() << " paths=" << n_paths << " steps=" << n_steps
              << " mean_cash=" << mean_cash << '\n';
    return 0;
}

void dump_sample_paths(const RunConfig& cfg, const PolicySet& set, std::size_t n_steps,
                       const fs::path& dir, std::size_t count) {
    for (const auto& pol : set.owned) {
        for (std::size_t i = 0; i < count; ++i) {
            auto pc = pol->clone();
            const SimPath path = simulate_path(cfg.model, *pc, cfg.initial, n_steps,
                                               derive_seed(cfg.harness.seed, i),
                                               cfg.harness.impact);
            write_text_file(dir / ("path_" + pol->label() + "_" + std::to_string(i) + ".csv"),
                            [&](std::ostream& os) { write_path_csv(path, os); });
        }
    }
}

int run_compare(const Opts& o, bool robustness) {
    RunConfig cfg = load_config(o);
    const fs::path dir = ensure_out_dir(cfg);
    const PolicySet set = make_benchmark_policies(cfg, o.quad_order, cfg.harness.n_trades);
    const CompareResult res =
        robustness
            ? robustness_test(cfg.model, set.pointers(), cfg.initial, cfg.harness.sigma1_range,
                              cfg.harness.sigma2_range, cfg.harness.n_paths,
                              cfg.harness.n_trades, cfg.harness.seed, cfg.harness.impact, o.jobs)
            : compare_strategies(cfg.model, set.pointers(), cfg.initial, cfg.harness.n_paths,
                                 cfg.harness.n_trades, cfg.harness.seed, cfg.harness.impact,
                                 o.jobs);
    write_text_file(dir / "stats.csv", [&](std::ostream& os) { write_stats_csv(res, os); });
    write_text_file(dir / "stats.json",
                    [&](std::ostream& os) { os << compare_to_json(res).dump(2) << '\n'; });
    print_stats_table(res);
    if (o.dump_paths && !robustness)
        dump_sample_paths(cfg, set, cfg.harness.n_trades, dir, std::min<std::size_t>(3, cfg.harness.n_paths));
    std::cout << "wrote " << (dir / "stats.csv").string() << " and "
              << (dir / "stats.json").string() << '\n';
    return 0;
}

int run_fbsde_train(const Opts& o) {
    RunConfig cfg = load_config(o);
    if (!cfg.has_train) {
        std::cerr << "train: missing required section in " << o.config_path << '\n';
        return 1;
    }
    const fs::path dir = ensure_out_dir(cfg);
    auto [net, report] = train(cfg.model, cfg.initial, cfg.train);
    write_text_file(dir / "weights.json",
                    [&](std::ostream& os) { os << net_params_to_json(net).dump(2) << '\n'; });
    write_text_file(dir / "train_report.csv",
                    [&](std::ostream& os) { write_train_report_csv(report, os); });
    std::cout << "steps=" << report.steps_run << " final_val=" << report.final_val_loss
              << " best_val=" << report.best_val_loss << " (step " << report.best_step << ")"
              << " wall_s=" << report.wall_seconds << (report.diverged ? " DIVERGED" : "")
              << '\n'
              << "wrote " << (dir / "weights.json").string() << " and "
              << (dir / "train_report.csv").string() << '\n';
    return report.diverged ? 2 : 0;
}

int run_fbsde_eval(const Opts& o) {
    RunConfig cfg = load_config(o);
    if (!cfg.has_train) {
        std::cerr << "train: missing required section in " << o.config_path << '\n';
        return 1;
    }
    const fs::path dir = ensure_out_dir(cfg);
    const fs::path wpath =
        o.weights_path.empty() ? dir / "weights.json" : fs::path(o.weights_path);
    std::ifstream win(wpath);
    if (!win) {
        std::cerr << "cannot open weights file " << wpath.string() << '\n';
        return 1;
    }
    NetParams net;
    try {
        nlohmann::json j;
        win >> j;
        net = net_params_from_json(j, MlpSpec{});
    } catch (const std::exception& e) {
        std::cerr << wpath.string() << ": " << e.what() << '\n';
        return 1;
    }

    const std::size_t n_steps = cfg.train.n_steps_time;
    auto surface = std::make_shared<G2Surface>(cfg.model, o.quad_order);
    surface->precompute(uniform_grid(cfg.initial.t, cfg.model.T, n_steps));
    const std::shared_ptr<const G2Surface> csurface = surface;
    const std::unique_ptr<Policy> reference =
        closed_form_policy(cfg.model, csurface, &std::cerr);

    const std::size_t n_seeds = o.paths.value_or(400);
    const NnEvalReport rep = evaluate_nn(cfg.model, net, *reference, cfg.initial, n_steps,
                                         n_seeds, cfg.harness.seed, cfg.harness.impact);
    write_text_file(dir / "discrepancy.csv",
                    [&](std::ostream& os) { write_discrepancy_csv(rep, os); });
    write_text_file(dir / "discrepancy_summary.json", [&](std::ostream& os) {
        os << discrepancy_summary_to_json(rep).dump(2) << '\n';
    });
    std::cout << "mean_m_discrepancy=" << rep.mean_discrepancy
              << " mean_q_ratio=" << rep.mean_q_ratio << " y_min=" << rep.y_diag.min_y
              << " seeds=" << rep.n_seeds << '\n'
              << "wrote " << (dir / "discrepancy.csv").string() << " and "
              << (dir / "discrepancy_summary.json").string() << '\n';
    if (rep.mean_discrepancy > o.warn_threshold) {
        std::cerr << "warning: mean wealth discrepancy " << rep.mean_discrepancy
                  << " exceeds threshold " << o.warn_threshold << '\n';
        return 2;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Optimal liquidation engine for a cointegrated stock pair"};
    app.require_subcommand(1);
    Opts o;

    CLI::App* check = app.add_subcommand("check", "evaluate the admissibility condition");
    add_common(check, o);

    CLI::App* solve = app.add_subcommand("solve", "export the closed-form coefficients");
    add_common(solve, o);
    solve->add_flag("--g1", o.with_g1, "also Monte-Carlo-estimate the constant value term");

    CLI::App* simulate = app.add_subcommand("simulate", "simulate paths under one policy");
    add_common(simulate, o);
    simulate->add_option("--policy", o.policy_name,
                         "closed-form, gbm, a-only, constant, or zero");
    simulate->add_option("--rate", o.const_rate, "rate for --policy constant");
    simulate->add_option("--steps", o.steps, "trading steps per path");
    simulate->add_option("--impact", o.impact, "wealth accounting: order or rate");

    CLI::App* compare = app.add_subcommand("compare", "benchmark the three strategies");
    add_common(compare, o);
    compare->add_option("--trades", o.trades, "override the number of trades");
    compare->add_option("--impact", o.impact, "wealth accounting: order or rate");
    compare->add_flag("--dump-paths", o.dump_paths, "also write sample path CSVs");

    CLI::App* robust = app.add_subcommand("robustness", "benchmark under drawn volatilities");
    add_common(robust, o);
    robust->add_option("--trades", o.trades, "override the number of trades");
    robust->add_option("--impact", o.impact, "wealth accounting: order or rate");

    CLI::App* fbsde = app.add_subcommand("fbsde", "deep solver for the adjoint equation");
    fbsde->require_subcommand(1);
    CLI::App* fbt = fbsde->add_subcommand("train", "train the network");
    add_common(fbt, o);
    CLI::App* fbe = fbsde->add_subcommand("eval", "compare the trained policy to closed form");
    add_common(fbe, o);
    fbe->add_option("--weights", o.weights_path, "weights file (default <out>/weights.json)");
    fbe->add_option("--warn-threshold", o.warn_threshold,
                    "exit 2 when the mean wealth discrepancy exceeds this");
    fbe->add_option("--impact", o.impact, "wealth accounting: order or rate");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (app.got_subcommand(check)) return run_check(o);
        if (app.got_subcommand(solve)) return run_solve(o);
        if (app.got_subcommand(simulate)) return run_simulate(o);
        if (app.got_subcommand(compare)) return run_compare(o, false);
        if (app.got_subcommand(robust)) return run_compare(o, true);
        if (app.got_subcommand(fbsde)) {
            if (fbsde->got_subcommand(fbt)) return run_fbsde_train(o);
            if (fbsde->got_subcommand(fbe)) return run_fbsde_eval(o);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const QuadratureNonconvergence& e) {
        std::cerr << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
