// Command-line experiment runner: run / analyze / fit / cost.
// Exit codes: 0 ok, 1 runtime failure, 2 configuration error.

#include <cstdint>
#include <iostream>

#include <CLI11.hpp>

#include "muloco/cli_config.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Communication-efficient local-update training laboratory"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out", data_path;
    int threads = 0;
    std::uint64_t seed_override = 0;
    bool have_seed_override = false;

    auto* run_cmd = app.add_subcommand("run", "Execute an experiment config (with sweeps)");
    run_cmd->add_option("--config", config_path, "Experiment config JSON")->required();
    run_cmd->add_option("--out", out_dir, "Output directory");
    run_cmd->add_option("--threads", threads, "Worker threads per run (overrides config)");
    run_cmd->add_option("--seed-override", seed_override, "Replace every run's seed")
        ->each([&](const std::string&) { have_seed_override = true; });

    std::vector<std::string> run_dirs;
    std::string reference_dir;
    std::vector<double> top_s_percents{5.0};
    bool no_audit = false;
    auto* analyze_cmd = app.add_subcommand("analyze", "Alignment/spectral/audit reports from dumps");
    analyze_cmd->add_option("dirs", run_dirs, "Run directories (must contain dumps/)")->required();
    analyze_cmd->add_option("--reference", reference_dir, "Reference run directory (e.g. a K=1 run)");
    analyze_cmd->add_option("--top-s-pct", top_s_percents, "Interference-gap percentages");
    analyze_cmd->add_flag("--no-audit", no_audit, "Skip the nuclear-norm decomposition audit");
    analyze_cmd->add_option("--out", out_dir, "Output directory");

    std::string form = "plain", xvar = "compute";
    int restarts = 64;
    std::uint64_t fit_seed = 0;
    auto* fit_cmd = app.add_subcommand("fit", "Power-law fits over a run-record CSV");
    fit_cmd->add_option("--data", data_path, "CSV: method,K,N_params,tokens,batch_tokens,loss")
        ->required();
    fit_cmd->add_option("--form", form, "plain | per_method_offset | joint_irr");
    fit_cmd->add_option("--x", xvar, "compute | tokens | batch");
    fit_cmd->add_option("--restarts", restarts, "Random restarts per fit");
    fit_cmd->add_option("--seed", fit_seed, "Restart RNG seed");
    fit_cmd->add_option("--out", out_dir, "Output directory");

    auto* cost_cmd = app.add_subcommand("cost", "Idealized wall-clock / utilization curves");
    cost_cmd->add_option("--config", config_path, "Cost config JSON")->required();
    cost_cmd->add_option("--out", out_dir, "Output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) {
            const muloco::ExperimentConfig cfg = muloco::ExperimentConfig::parse_file(config_path);
            const auto names =
                muloco::cmd_run(cfg, out_dir, threads, have_seed_override ? &seed_override : nullptr);
            for (const auto& n : names) std::cout << "wrote " << out_dir << "/" << n << "\n";
        } else if (analyze_cmd->parsed()) {
            muloco::AnalyzeOptions opts;
            opts.reference_dir = reference_dir;
            opts.top_s_percents = top_s_percents;
            opts.audit = !no_audit;
            muloco::cmd_analyze(run_dirs, out_dir, opts);
            std::cout << "wrote reports to " << out_dir << "\n";
        } else if (fit_cmd->parsed()) {
            muloco::FitOptions opts;
            if (form == "plain")
                opts.form = muloco::FitForm::plain;
            else if (form == "per_method_offset")
                opts.form = muloco::FitForm::per_method_offset;
            else if (form == "joint_irr")
                opts.form = muloco::FitForm::joint_irr;
            else
                throw muloco::ConfigError("--form must be plain, per_method_offset, or joint_irr");
            if (xvar == "compute")
                opts.x = muloco::XVariable::compute;
            else if (xvar == "tokens")
                opts.x = muloco::XVariable::tokens;
            else if (xvar == "batch")
                opts.x = muloco::XVariable::batch;
            else
                throw muloco::ConfigError("--x must be compute, tokens, or batch");
            opts.restarts = restarts;
            opts.seed = fit_seed;
            const muloco::PowerLawFit fit = muloco::cmd_fit(data_path, out_dir, opts);
            std::cout << "objective " << fit.objective << ", residual " << fit.train_residual;
            if (fit.form == muloco::FitForm::joint_irr) std::cout << ", shared_irr " << fit.shared_irr;
            std::cout << "\n";
            for (const auto& m : fit.methods)
                std::cout << m.method << ": a=" << m.a << " alpha=" << m.alpha
                          << " offset=" << m.offset << "\n";
        } else if (cost_cmd->parsed()) {
            muloco::cmd_cost(config_path, out_dir);
            std::cout << "wrote " << out_dir << "/wallclock.csv and utilization.csv\n";
        }
    } catch (const muloco::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
