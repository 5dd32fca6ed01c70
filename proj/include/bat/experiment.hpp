#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include <json.hpp>

#include "bat/config.hpp"
#include "bat/train.hpp"

namespace bat {

inline constexpr const char* kArtifactVersion = "bat 0.3.0";

struct StrongEvaluation {
    double clean_acc = 0.0;
    double robust_acc = 0.0;
};

struct ExperimentOutcome {
    TrainResult train;
    StrongEvaluation final_eval;  // best checkpoint under the final attack
    nlohmann::json manifest;
};

// Output layout inside `out_dir`:
//   manifest.json      written with the config echo before training,
//                      finalized afterwards
//   metrics.csv        one row per epoch, appended as epochs finish
//   params_final.bin   last-epoch parameters
//   params_best.bin    best-robustness parameters
ExperimentOutcome run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                                 std::ostream* log = nullptr);

nlohmann::json attack_to_json(const AttackConfig& cfg);

void write_json(const std::filesystem::path& path, const nlohmann::json& value);
nlohmann::json read_json(const std::filesystem::path& path);

std::string utc_timestamp();

}  // namespace bat
