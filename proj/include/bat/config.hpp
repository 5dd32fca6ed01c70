#pragma once

// Flat "section.key = value" configuration files.
//
//   # comment
//   objective.variant = fait
//   objective.lambda  = 12
//   attack.interp     = 2
//
// Command-line overrides use the same dotted keys.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "bat/attacks.hpp"
#include "bat/data.hpp"
#include "bat/network.hpp"
#include "bat/train.hpp"

namespace bat {

class ConfigError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

class FlatConfig {
   public:
    static FlatConfig parse(std::string_view text);
    static FlatConfig load(const std::filesystem::path& path);

    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::optional<std::string> get(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    long get_int(const std::string& key, long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<std::size_t> get_sizes(const std::string& key, const std::vector<std::size_t>& fallback) const;

    const std::map<std::string, std::string>& values() const { return values_; }

    // Keys never read through a getter; reported as configuration errors.
    std::vector<std::string> unused_keys() const;

   private:
    std::map<std::string, std::string> values_;
    mutable std::set<std::string> used_;
};

struct DataConfig {
    std::string kind = "two_moons";  // two_moons | blobs | idx
    std::size_t n = 2000;
    std::size_t eval_n = 1000;
    double noise = 0.15;
    double sigma = 0.3;
    std::uint64_t seed = 0;
    std::uint64_t eval_seed = 1;
    std::string images, labels, eval_images, eval_labels;
    std::size_t limit = 2000;
    std::size_t eval_limit = 1000;
};

struct ExperimentConfig {
    DataConfig data;
    NetworkSpec network;
    TrainConfig train;
    AttackConfig final_attack;  // strong re-evaluation of the best checkpoint
    FlatConfig source;
};

std::pair<Dataset, Dataset> make_datasets(const DataConfig& cfg);

// Reads every recognized key, fills defaults, validates. Unknown keys and
// invalid values raise ConfigError.
ExperimentConfig experiment_from_config(const FlatConfig& cfg);

// Resolved configuration as flat key/value pairs (the manifest echo).
std::map<std::string, std::string> echo_config(const ExperimentConfig& cfg);

std::string format_number(double v);

}  // namespace bat
