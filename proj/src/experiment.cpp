#include "bat/experiment.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <ostream>

namespace bat {

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

nlohmann::json attack_to_json(const AttackConfig& cfg) {
    nlohmann::json j;
    j["eps"] = cfg.eps;
    j["step"] = cfg.step;
    j["iters"] = cfg.iters;
    j["interp"] = cfg.interp ? nlohmann::json(*cfg.interp) : nlohmann::json(nullptr);
    j["inner_loss"] = to_string(cfg.inner_loss);
    j["restarts"] = cfg.restarts;
    j["rand_init_scale"] = cfg.rand_init_scale;
    j["box"] = {cfg.box_lo, cfg.box_hi};
    return j;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& value) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << value.dump(2) << '\n';
}

nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    return nlohmann::json::parse(in);
}

ExperimentOutcome run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, std::ostream* log) {
    std::filesystem::create_directories(out_dir);
    const auto manifest_path = out_dir / "manifest.json";
    const auto csv_path = out_dir / "metrics.csv";

    ExperimentOutcome outcome;
    auto& manifest = outcome.manifest;
    manifest["version"] = kArtifactVersion;
    manifest["seed"] = cfg.train.seed;
    manifest["config"] = echo_config(cfg);
    manifest["variant"] = cfg.train.objective.display_name();
    manifest["lambda"] = cfg.train.objective.lambda;
    manifest["started"] = utc_timestamp();
    manifest["status"] = "running";
    manifest["outputs"] = {{"metrics", csv_path.string()},
                           {"params_final", (out_dir / "params_final.bin").string()},
                           {"params_best", (out_dir / "params_best.bin").string()}};
    manifest["selection"] = {
        {"best_epoch_attack", attack_to_json(cfg.train.eval_attack)},
        {"final_attack", attack_to_json(cfg.final_attack)},
        {"note", "best epoch chosen by robust accuracy under the per-epoch attack; the chosen checkpoint is "
                 "re-evaluated under the final attack"}};
    write_json(manifest_path, manifest);

    const auto [train_set, eval_set] = make_datasets(cfg.data);

    std::ofstream csv(csv_path);
    if (!csv) throw std::runtime_error("cannot write " + csv_path.string());
    csv << metrics_csv_header() << '\n';
    const EpochCallback on_epoch = [&](const MetricsRecord& m) {
        csv << metrics_csv_row(m) << '\n';
        csv.flush();
        if (log) {
            *log << "epoch " << m.epoch << "  clean " << m.clean_acc << "  robust " << m.robust_acc << "  R "
                 << m.loss_rob << "  R' " << m.loss_rprime << '\n';
        }
    };

    outcome.train = train(cfg.network, cfg.train, train_set, eval_set, on_epoch);
    outcome.train.final_params.save(out_dir / "params_final.bin");
    outcome.train.best_params.save(out_dir / "params_best.bin");

    outcome.final_eval.clean_acc = evaluate_clean_accuracy(cfg.network, outcome.train.best_params, eval_set);
    outcome.final_eval.robust_acc =
        evaluate_robust_accuracy(cfg.network, outcome.train.best_params, eval_set, cfg.final_attack,
                                 mix_seed(cfg.train.seed, 0xF1A1ULL));

    if (outcome.train.best_epoch) {
        const auto& best = outcome.train.metrics[static_cast<std::size_t>(*outcome.train.best_epoch)];
        manifest["best_epoch"] = {{"epoch", best.epoch}, {"clean_acc", best.clean_acc}, {"robust_acc", best.robust_acc}};
    } else {
        manifest["best_epoch"] = nullptr;
    }
    manifest["final"] = {{"clean_acc", outcome.final_eval.clean_acc}, {"robust_acc", outcome.final_eval.robust_acc}};
    manifest["finished"] = utc_timestamp();
    manifest["status"] = "complete";
    write_json(manifest_path, manifest);
    return outcome;
}

}  // namespace bat
