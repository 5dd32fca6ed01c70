#include "commands.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "bat/config.hpp"
#include "bat/experiment.hpp"
#include "bat/objectives.hpp"
#include "bat/theory.hpp"

namespace bat::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// CLI11 consumes argument vectors back to front.
int parse_app(CLI::App& app, const std::vector<std::string>& args, std::ostream& out, std::ostream& err, bool& done) {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    done = false;
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        done = true;
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        done = true;
        return kExitUsage;
    }
    return kExitOk;
}

// "--section.key value" and "--section.key=value" pairs left over by CLI11.
std::vector<std::pair<std::string, std::string>> parse_overrides(const std::vector<std::string>& extras) {
    std::vector<std::pair<std::string, std::string>> out;
    for (std::size_t i = 0; i < extras.size(); ++i) {
        const std::string& tok = extras[i];
        if (tok.rfind("--", 0) != 0 || tok.size() <= 2) throw ConfigError("unexpected argument '" + tok + "'");
        std::string key = tok.substr(2);
        if (const auto eq = key.find('='); eq != std::string::npos) {
            out.emplace_back(key.substr(0, eq), key.substr(eq + 1));
            continue;
        }
        if (key.find('.') == std::string::npos) throw ConfigError("unknown option '" + tok + "'");
        if (i + 1 >= extras.size()) throw ConfigError("override '" + tok + "' has no value");
        out.emplace_back(key, extras[++i]);
    }
    return out;
}

std::string default_run_name(const ExperimentConfig& cfg) {
    std::string name = to_string(cfg.train.objective.variant);
    if (cfg.train.objective.psi == Psi::Square) name += "_square";
    return name + "_lambda" + format_number(cfg.train.objective.lambda) + "_seed" + std::to_string(cfg.train.seed);
}

std::string fmt(double v, int precision = 4) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(precision) << v;
    return s.str();
}

}  // namespace

int cmd_train(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Train a model from a flat config file", "bat train"};
    std::string config_path;
    std::string out_dir;
    bool quiet = false;
    app.add_option("--config", config_path, "config file (section.key = value)")->required();
    app.add_option("--out", out_dir, "output directory");
    app.add_flag("--quiet", quiet, "no per-epoch log");
    app.allow_extras();
    app.footer("Any config key can be overridden with --section.key VALUE or --section.key=VALUE.");
    bool done = false;
    if (const int rc = parse_app(app, args, out, err, done); done) return rc;

    ExperimentConfig cfg;
    try {
        FlatConfig flat = FlatConfig::load(config_path);
        for (const auto& [key, value] : parse_overrides(app.remaining())) flat.set(key, value);
        cfg = experiment_from_config(flat);
    } catch (const std::exception& e) {
        err << "config error: " << e.what() << '\n';
        return kExitUsage;
    }

    fs::path dir = out_dir;
    if (dir.empty()) {
        const char* env = std::getenv(kOutDirEnv);
        dir = fs::path(env && *env ? env : "runs") / default_run_name(cfg);
    }

    try {
        const ExperimentOutcome outcome = run_experiment(cfg, dir, quiet ? nullptr : &out);
        out << "run " << dir.string() << '\n';
        if (outcome.train.best_epoch) {
            const auto& best = outcome.train.metrics[static_cast<std::size_t>(*outcome.train.best_epoch)];
            out << "best epoch " << best.epoch << "  clean " << fmt(best.clean_acc) << "  robust "
                << fmt(best.robust_acc) << '\n';
        }
        out << "final attack  clean " << fmt(outcome.final_eval.clean_acc) << "  robust "
            << fmt(outcome.final_eval.robust_acc) << '\n';
    } catch (const TrainingDiverged& e) {
        err << "training diverged: " << e.what() << '\n';
        return kExitVerifyFailed;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitOk;
}

int cmd_evaluate(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Clean and PGD robust accuracy of a saved checkpoint", "bat evaluate"};
    std::string params_path, activation = "relu", data_kind = "two_moons", images, labels, json_path;
    std::size_t n = 1000, limit = 1000;
    double noise = 0.15, sigma = 0.3;
    std::uint64_t data_seed = 1, seed = 0;
    std::vector<double> eps_list;
    std::optional<double> step, box_lo, box_hi;
    int iters = 20, restarts = 1;
    std::string inner = "ce";

    app.add_option("--params", params_path, "BAT1 parameter file")->required();
    app.add_option("--activation", activation, "relu | tanh");
    app.add_option("--data", data_kind, "two_moons | blobs | idx");
    app.add_option("--n", n, "synthetic sample count");
    app.add_option("--noise", noise, "two-moons noise");
    app.add_option("--sigma", sigma, "blob standard deviation");
    app.add_option("--data-seed", data_seed, "synthetic data seed");
    app.add_option("--images", images, "IDX image file");
    app.add_option("--labels", labels, "IDX label file");
    app.add_option("--limit", limit, "IDX item limit");
    app.add_option("--eps", eps_list, "attack radius (repeatable)");
    app.add_option("--step", step, "step size (default eps/4)");
    app.add_option("--iters", iters, "PGD steps");
    app.add_option("--restarts", restarts, "random restarts");
    app.add_option("--inner-loss", inner, "ce | kl | se");
    app.add_option("--box-lo", box_lo, "input box lower bound");
    app.add_option("--box-hi", box_hi, "input box upper bound");
    app.add_option("--seed", seed, "attack seed");
    app.add_option("--json", json_path, "write results as JSON");
    bool done = false;
    if (const int rc = parse_app(app, args, out, err, done); done) return rc;

    if (!fs::exists(params_path)) {
        err << "error: params file not found: " << params_path << '\n';
        return kExitUsage;
    }

    Dataset data;
    NetworkSpec spec;
    Params params;
    std::vector<AttackConfig> attacks;
    try {
        params = Params::load(params_path);
        spec = spec_from_params(params, parse_activation(activation));
        if (data_kind == "two_moons") {
            data = gen_two_moons(n, noise, data_seed);
        } else if (data_kind == "blobs") {
            data = gen_gaussian_blobs(n, {{-1.0, 0.0}, {1.0, 0.0}}, sigma, data_seed);
        } else if (data_kind == "idx") {
            if (images.empty() || labels.empty()) throw ConfigError("--data idx needs --images and --labels");
            data = load_idx(images, labels, limit);
        } else {
            throw ConfigError("unknown --data '" + data_kind + "'");
        }
        if (data.features.shape()[1] != spec.input_dim) {
            throw ConfigError("checkpoint expects " + std::to_string(spec.input_dim) + " inputs, data has " +
                              std::to_string(data.features.shape()[1]));
        }
        if (eps_list.empty()) eps_list.push_back(data_kind == "idx" ? 8.0 / 255.0 : 0.1);
        for (const double eps : eps_list) {
            AttackConfig a;
            a.eps = eps;
            a.step = step.value_or(eps / 4.0);
            a.iters = iters;
            a.restarts = restarts;
            a.inner_loss = parse_inner_loss(inner);
            a.box_lo = box_lo.value_or(data.box_lo);
            a.box_hi = box_hi.value_or(data.box_hi);
            if (eps > 0.0) a.validate();
            attacks.push_back(a);
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }

    const double clean = evaluate_clean_accuracy(spec, params, data);
    json report;
    report["params"] = params_path;
    report["data"] = {{"kind", data_kind}, {"examples", data.labels.size()}, {"name", data.name}};
    report["clean_acc"] = clean;
    report["attacks"] = json::array();
    out << "examples " << data.labels.size() << "  clean " << fmt(clean) << '\n';
    for (const auto& a : attacks) {
        const double robust = a.eps > 0.0 ? evaluate_robust_accuracy(spec, params, data, a, seed) : clean;
        out << "eps " << format_number(a.eps) << "  K " << a.iters << "  restarts " << a.restarts << "  clean "
            << fmt(clean) << "  robust " << fmt(robust) << '\n';
        json entry = attack_to_json(a);
        entry["seed"] = seed;
        entry["clean_acc"] = clean;
        entry["robust_acc"] = robust;
        report["attacks"].push_back(entry);
    }
    if (!json_path.empty()) {
        try {
            write_json(json_path, report);
        } catch (const std::exception& e) {
            err << "error: " << e.what() << '\n';
            return kExitUsage;
        }
    }
    return kExitOk;
}

int cmd_verify(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Numerical checks of the divergence identities, the KL interpolation inequality and the binary ordering results", "bat verify"};
    std::string suite = "all", json_path;
    std::uint64_t bregman_n = 10000, lemma_n = 100000, seed = 0;
    std::vector<std::size_t> dims{2, 3, 4, 5, 6, 7, 8, 9, 10};
    double resolution = 0.01;
    bool self_test = false;
    app.add_option("--suite", suite, "all | bregman | lemma1 | theorem1 | theorem2")
        ->check(CLI::IsMember({"all", "bregman", "lemma1", "theorem1", "theorem2"}));
    app.add_option("--bregman-n", bregman_n, "pairs per dimension");
    app.add_option("--lemma-n", lemma_n, "triples per dimension");
    app.add_option("--dims", dims, "simplex dimensions")->delimiter(',');
    app.add_option("--resolution", resolution, "theorem grid step")->check(CLI::Range(1e-4, 0.25));
    app.add_option("--seed", seed, "sampling seed");
    app.add_option("--json", json_path, "also write the summary to this file");
    app.add_flag("--self-test", self_test, "invert the pass predicate (harness check; must fail)");
    bool done = false;
    if (const int rc = parse_app(app, args, out, err, done); done) return rc;
    if (std::any_of(dims.begin(), dims.end(), [](std::size_t d) { return d < 2; })) {
        err << "error: --dims entries must be at least 2\n";
        return kExitUsage;
    }

    std::vector<SweepReport> reports;
    const auto want = [&](const char* name) { return suite == "all" || suite == name; };
    // Grid interior starts at 0.01, or at the first grid point when coarser.
    const double lo = std::max(0.01, resolution);
    try {
        if (want("bregman")) {
            reports.push_back(sweep_bregman_identity(Psi::NegEntropy, bregman_n, dims, seed));
            reports.push_back(sweep_bregman_identity(Psi::Square, bregman_n, dims, seed));
        }
        if (want("lemma1")) reports.push_back(sweep_lemma1(lemma_n, dims, seed));
        if (want("theorem1")) reports.push_back(sweep_theorem1(resolution, lo));
        if (want("theorem2")) {
            reports.push_back(sweep_theorem2(Condition::C2, resolution, lo));
            reports.push_back(sweep_theorem2(Condition::C3, resolution, lo));
        }
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }

    bool all_pass = true;
    json summary;
    summary["suite"] = suite;
    summary["seed"] = seed;
    summary["self_test"] = self_test;
    summary["reports"] = json::array();
    out << std::left << std::setw(28) << "check" << std::right << std::setw(12) << "cases" << std::setw(12)
        << "violations" << std::setw(16) << "worst_margin" << "  status\n";
    for (const auto& r : reports) {
        const bool pass = self_test ? !r.passed() : r.passed();
        all_pass = all_pass && pass;
        std::ostringstream margin;
        margin << std::scientific << std::setprecision(3) << r.worst_margin;
        out << std::left << std::setw(28) << r.name << std::right << std::setw(12) << r.cases << std::setw(12)
            << r.violations << std::setw(16) << margin.str() << "  " << (pass ? "PASS" : "FAIL") << '\n';
        summary["reports"].push_back({{"name", r.name},
                                      {"cases", r.cases},
                                      {"violations", r.violations},
                                      {"worst_margin", r.worst_margin},
                                      {"resolution", r.resolution},
                                      {"seed", r.seed},
                                      {"note", r.note},
                                      {"pass", pass}});
    }
    summary["pass"] = all_pass;
    out << "summary " << summary.dump() << '\n';
    if (!json_path.empty()) {
        try {
            write_json(json_path, summary);
        } catch (const std::exception& e) {
            err << "error: " << e.what() << '\n';
            return kExitUsage;
        }
    }
    return all_pass ? kExitOk : kExitVerifyFailed;
}

int cmd_export(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Merge run manifests into one comparison table", "bat export"};
    std::vector<std::string> run_dirs;
    std::string format = "csv", out_path;
    app.add_option("runs", run_dirs, "run directories (each with manifest.json)");
    app.add_option("--format", format, "csv | md")->check(CLI::IsMember({"csv", "md"}));
    app.add_option("--out", out_path, "write the table here instead of stdout");
    bool done = false;
    if (const int rc = parse_app(app, args, out, err, done); done) return rc;
    if (run_dirs.empty()) {
        err << "error: no run directories given\n";
        return kExitUsage;
    }

    struct Row {
        std::string variant;
        double lambda;
        double clean;
        double robust;
        std::string run;
    };
    std::vector<Row> rows;
    for (const auto& dir : run_dirs) {
        try {
            const json m = read_json(fs::path(dir) / "manifest.json");
            if (m.value("status", "") != "complete") throw std::runtime_error("run is not complete");
            rows.push_back({m.at("variant").get<std::string>(), m.at("lambda").get<double>(),
                            m.at("final").at("clean_acc").get<double>(), m.at("final").at("robust_acc").get<double>(),
                            dir});
        } catch (const std::exception& e) {
            err << "error: " << dir << ": " << e.what() << '\n';
            return kExitUsage;
        }
    }
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        if (a.variant != b.variant) return a.variant < b.variant;
        return a.lambda < b.lambda;
    });

    std::ostringstream table;
    if (format == "csv") {
        table << "variant,lambda,clean_acc,robust_acc,run\n";
        for (const auto& r : rows) {
            table << r.variant << ',' << format_number(r.lambda) << ',' << fmt(r.clean, 6) << ',' << fmt(r.robust, 6)
                  << ',' << r.run << '\n';
        }
    } else {
        table << "| variant | lambda | clean | robust |\n|---|---|---|---|\n";
        for (const auto& r : rows) {
            table << "| " << r.variant << " | " << format_number(r.lambda) << " | " << fmt(100.0 * r.clean, 2) << " | "
                  << fmt(100.0 * r.robust, 2) << " |\n";
        }
    }
    if (out_path.empty()) {
        out << table.str();
    } else {
        std::ofstream f(out_path);
        if (!f) {
            err << "error: cannot write " << out_path << '\n';
            return kExitUsage;
        }
        f << table.str();
    }
    return kExitOk;
}

int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
    static const char* usage =
        "usage: bat <command> [options]\n"
        "\n"
        "commands:\n"
        "  train     train a model from a config file\n"
        "  evaluate  clean and PGD robust accuracy of a checkpoint\n"
        "  verify    numerical checks of the divergence results\n"
        "  export    merge run manifests into a table\n"
        "\n"
        "run `bat <command> --help` for options\n";
    if (argv.empty()) {
        err << usage;
        return kExitUsage;
    }
    const std::string& cmd = argv.front();
    const std::vector<std::string> rest(argv.begin() + 1, argv.end());
    if (cmd == "train") return cmd_train(rest, out, err);
    if (cmd == "evaluate") return cmd_evaluate(rest, out, err);
    if (cmd == "verify") return cmd_verify(rest, out, err);
    if (cmd == "export") return cmd_export(rest, out, err);
    if (cmd == "-h" || cmd == "--help" || cmd == "help") {
        out << usage;
        return kExitOk;
    }
    err << "unknown command '" << cmd << "'\n" << usage;
    return kExitUsage;
}

}  // namespace bat::cli
