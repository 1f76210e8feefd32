#include <CLI11.hpp>

#include <iostream>

#include "mfjmodl/experiment.hpp"

using namespace mfjmodl;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitPipeline = 3;

struct Overrides {
    std::string config;
    std::string out;
    std::string pattern;
    std::string recon;
    std::uint64_t seed = 0;
    double budget = 0.0;
    bool has_seed = false;
    bool has_budget = false;
    bool quiet = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config, "experiment INI file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", o.out, "output directory (overrides [run] output)");
    cmd->add_option_function<std::uint64_t>(
        "--seed", [&o](std::uint64_t v) { o.seed = v, o.has_seed = true; }, "master seed (overrides [run] seed)");
    cmd->add_option("--pattern", o.pattern, "uniform | poisson | staggered | jittered | joint | learned:PATH");
    cmd->add_option_function<double>(
        "--budget", [&o](double v) { o.budget = v, o.has_budget = true; }, "azimuth budget fraction in (0, 1]");
    cmd->add_option("--recon", o.recon, "reconstruction method")->check(CLI::IsMember({"mf", "ista", "modl"}));
    cmd->add_flag("--quiet,-q", o.quiet, "suppress progress lines");
}

ExperimentConfig resolve(const Overrides& o) {
    ExperimentConfig cfg = load_config(o.config);
    if (!o.out.empty()) cfg.output_dir = o.out;
    if (o.has_seed) cfg.seed = o.seed;
    if (!o.pattern.empty()) {
        if (o.pattern.rfind("learned:", 0) == 0) {
            if (!std::filesystem::exists(o.pattern.substr(8)))
                throw ConfigError("--pattern: file '" + o.pattern.substr(8) + "' not found");
        } else if (o.pattern != "uniform" && o.pattern != "poisson" && o.pattern != "staggered" &&
                   o.pattern != "jittered" && o.pattern != "joint") {
            throw ConfigError("--pattern: unknown kind '" + o.pattern + "'");
        }
        cfg.pattern.kinds = {o.pattern};
    }
    if (o.has_budget) {
        if (!(o.budget > 0.0 && o.budget <= 1.0)) throw ConfigError("--budget: fraction must lie in (0, 1]");
        cfg.pattern.budgets = {o.budget};
    }
    if (!o.recon.empty()) cfg.recon.method = o.recon;
    return cfg;
}

void print_report(const Report& r) {
    std::size_t failed = 0;
    for (const ReportRow& row : r.rows) failed += row.status != "ok";
    std::cout << r.rows.size() << " rows, " << failed << " failed\n";
    std::map<std::string, std::pair<double, int>> means;
    for (const ReportRow& row : r.rows)
        if (row.status == "ok") {
            auto& m = means[row.pattern + " @ " + format_number(row.budget)];
            m.first += row.reconstruction_psnr;
            ++m.second;
        }
    for (const auto& [key, m] : means)
        std::cout << "  " << key << ": mean reconstruction PSNR " << format_number(m.first / m.second) << " dB\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Joint sampling-pattern and MoDL reconstruction experiments for azimuth-undersampled SAR"};
    app.require_subcommand(1);
    Overrides o;
    CLI::App* simulate = app.add_subcommand("simulate", "generate scenes and echoes at each sampling pattern");
    CLI::App* reconstruct = app.add_subcommand("reconstruct", "reconstruct simulated echoes");
    CLI::App* train = app.add_subcommand("train", "train denoiser weights (and the pattern for kind joint)");
    CLI::App* evaluate = app.add_subcommand("evaluate", "score reconstructions against ground truth");
    CLI::App* report = app.add_subcommand("report", "run the whole grid and write report.csv / report.json");
    for (CLI::App* cmd : {simulate, reconstruct, train, evaluate, report}) add_common(cmd, o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    const ProgressLog log = [&o](const std::string& line) {
        if (!o.quiet) std::cerr << line << '\n';
    };
    try {
        const ExperimentConfig cfg = resolve(o);
        if (simulate->parsed()) {
            simulate_stage(cfg, log);
        } else if (train->parsed()) {
            train_stage(cfg, log);
        } else if (reconstruct->parsed()) {
            reconstruct_stage(cfg, log);
        } else if (evaluate->parsed()) {
            print_report(evaluate_stage(cfg, log));
        } else {
            print_report(run_experiment(cfg, log));
        }
        std::cout << "outputs in " << cfg.output_dir << "\n";
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "pipeline error: " << e.what() << '\n';
        return kExitPipeline;
    }
    return 0;
}
