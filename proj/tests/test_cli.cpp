#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "bat/config.hpp"
#include "bat/experiment.hpp"
#include "commands.hpp"

using namespace bat;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() : path(fs::temp_directory_path() / ("bat_test_cli_" + std::to_string(std::random_device{}()))) {
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run bat_cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path write_config(const fs::path& dir, const std::string& text) {
    const fs::path p = dir / "run.cfg";
    std::ofstream(p) << text;
    return p;
}

const char* kSmallTrades =
    "data.n = 300\n"
    "data.eval_n = 100\n"
    "objective.variant = trades\n"
    "objective.lambda = 9\n"
    "train.epochs = 2\n"
    "train.warmup_epochs = 1\n"
    "final_attack.iters = 5\n"
    "final_attack.restarts = 1\n";

nlohmann::json manifest(const fs::path& dir) { return read_json(dir / "manifest.json"); }

}  // namespace

TEST_SUITE("config") {

TEST_CASE("flat config parsing") {
    const FlatConfig c = FlatConfig::parse("# comment\n a.b = 1 \n\nattack.eps = 8/255\nmodel.hidden = 4,5\n");
    CHECK(c.get_int("a.b", 0) == 1);
    CHECK(c.get_double("attack.eps", 0) == doctest::Approx(8.0 / 255.0));
    CHECK(c.get_sizes("model.hidden", {}) == std::vector<std::size_t>{4, 5});
    CHECK(c.get_string("missing.key", "x") == "x");
    CHECK_THROWS_AS(FlatConfig::parse("no equals sign\n"), ConfigError);
    CHECK_THROWS_AS(FlatConfig::parse("a.b = 1\nx.y = two\n").get_int("x.y", 0), ConfigError);
}

TEST_CASE("experiment config defaults and overrides") {
    FlatConfig flat = FlatConfig::parse("objective.variant = fait\nattack.interp = 2\nattack.eps = 0.2\n");
    const ExperimentConfig cfg = experiment_from_config(flat);
    CHECK(cfg.train.objective.variant == Variant::Fait);
    CHECK(cfg.train.attack.interp == 2);
    CHECK(cfg.train.attack.step == doctest::Approx(0.05));
    CHECK(cfg.train.eval_attack.iters == 20);
    CHECK(cfg.final_attack.iters == 100);
    CHECK(cfg.final_attack.restarts == 5);
    CHECK(cfg.network.hidden == std::vector<std::size_t>{32, 32});
    CHECK(echo_config(cfg).at("attack.interp") == "2");

    CHECK_THROWS_AS(experiment_from_config(FlatConfig::parse("objective.variant = fait\n")), ConfigError);
    CHECK_THROWS_AS(experiment_from_config(FlatConfig::parse("objective.lamda = 3\n")), ConfigError);
    CHECK_THROWS_AS(experiment_from_config(FlatConfig::parse("train.milestones = 30:0.1,20:0.1\n")), ConfigError);
}

TEST_CASE("format_number is shortest round-trip") {
    CHECK(format_number(12.0) == "12");
    CHECK(format_number(0.1) == "0.1");
    CHECK(std::stod(format_number(8.0 / 255.0)) == 8.0 / 255.0);
}

}  // TEST_SUITE

TEST_SUITE("cli") {

TEST_CASE("usage errors") {
    CHECK(bat_cli({}).code == cli::kExitUsage);
    CHECK(bat_cli({"frobnicate"}).code == cli::kExitUsage);
    CHECK(bat_cli({"--help"}).code == cli::kExitOk);
    CHECK(bat_cli({"train", "--help"}).code == cli::kExitOk);
    CHECK(bat_cli({"train"}).code == cli::kExitUsage);
    CHECK(bat_cli({"verify", "--suite", "nonsense"}).code == cli::kExitUsage);
}

TEST_CASE("train writes manifest and metrics") {
    TempDir tmp;
    const fs::path cfg = write_config(tmp.path, kSmallTrades);
    const fs::path out = tmp.path / "run";
    const Run r = bat_cli({"train", "--config", cfg.string(), "--out", out.string(), "--quiet"});
    REQUIRE(r.code == 0);
    const auto m = manifest(out);
    CHECK(m["status"] == "complete");
    CHECK(m["version"] == kArtifactVersion);
    CHECK(m["variant"] == "TRADES");
    CHECK(m.contains("started"));
    CHECK(m.contains("finished"));
    CHECK(m["best_epoch"].is_object());
    CHECK(fs::exists(out / "params_best.bin"));
    std::ifstream csv(out / "metrics.csv");
    std::string line;
    int lines = 0;
    while (std::getline(csv, line)) ++lines;
    CHECK(lines == 3);
}

TEST_CASE("FAIT without an interpolation step is a config error") {
    TempDir tmp;
    const fs::path cfg = write_config(tmp.path, kSmallTrades);
    const Run r = bat_cli({"train", "--config", cfg.string(), "--out", (tmp.path / "x").string(),
                           "--objective.variant", "fait"});
    CHECK(r.code == cli::kExitUsage);
    CHECK(r.err.find("interp") != std::string::npos);
    CHECK_FALSE(fs::exists(tmp.path / "x" / "metrics.csv"));
}

TEST_CASE("dotted overrides are applied and echoed") {
    TempDir tmp;
    const fs::path cfg = write_config(tmp.path, kSmallTrades);
    const fs::path out = tmp.path / "fait";
    const Run r = bat_cli({"train", "--config", cfg.string(), "--out", out.string(), "--quiet", "--objective.variant",
                           "fait", "--objective.lambda", "12", "--attack.interp=2"});
    REQUIRE(r.code == 0);
    const auto m = manifest(out);
    CHECK(m["config"]["objective.lambda"] == "12");
    CHECK(m["config"]["attack.interp"] == "2");
    CHECK(m["lambda"] == 12.0);
    CHECK(m["variant"] == "FAIT");
    CHECK(bat_cli({"train", "--config", cfg.string(), "--out", out.string(), "--objective.nope", "1"}).code ==
          cli::kExitUsage);
    CHECK(bat_cli({"train", "--config", cfg.string(), "--out", out.string(), "--attack.eps"}).code == cli::kExitUsage);
}

TEST_CASE("default output directory honours the environment") {
    TempDir tmp;
    const fs::path cfg = write_config(tmp.path, kSmallTrades);
    ::setenv(cli::kOutDirEnv, (tmp.path / "runs").c_str(), 1);
    const Run r = bat_cli({"train", "--config", cfg.string(), "--quiet", "--train.seed", "4"});
    ::unsetenv(cli::kOutDirEnv);
    REQUIRE(r.code == 0);
    CHECK(fs::exists(tmp.path / "runs" / "trades_lambda9_seed4" / "manifest.json"));
}

TEST_CASE("evaluate") {
    TempDir tmp;
    const fs::path cfg = write_config(tmp.path, kSmallTrades);
    const fs::path out = tmp.path / "run";
    REQUIRE(bat_cli({"train", "--config", cfg.string(), "--out", out.string(), "--quiet"}).code == 0);
    const std::string params = (out / "params_best.bin").string();
    const std::string json_path = (tmp.path / "eval.json").string();

    const Run r = bat_cli({"evaluate", "--params", params, "--eps", "0", "--eps", "0.2", "--iters", "100",
                           "--restarts", "5", "--n", "200", "--json", json_path});
    REQUIRE(r.code == 0);
    const auto j = read_json(json_path);
    REQUIRE(j["attacks"].size() == 2);
    CHECK(j["attacks"][0]["robust_acc"] == j["clean_acc"]);
    CHECK(j["attacks"][1]["iters"] == 100);
    CHECK(j["attacks"][1]["restarts"] == 5);
    CHECK(j["attacks"][1]["robust_acc"].get<double>() <= j["clean_acc"].get<double>());
    CHECK(r.out.find("robust") != std::string::npos);

    CHECK(bat_cli({"evaluate", "--params", (tmp.path / "missing.bin").string()}).code == cli::kExitUsage);
    CHECK(bat_cli({"evaluate", "--params", params, "--data", "idx"}).code == cli::kExitUsage);
}

TEST_CASE("verify") {
    const Run lemma = bat_cli({"verify", "--suite", "lemma1", "--lemma-n", "2000"});
    CHECK(lemma.code == cli::kExitOk);
    CHECK(lemma.out.find("PASS") != std::string::npos);
    const auto summary = nlohmann::json::parse(lemma.out.substr(lemma.out.find("summary ") + 8));
    CHECK(summary["pass"] == true);

    const Run grids = bat_cli({"verify", "--suite", "theorem2", "--resolution", "0.02"});
    CHECK(grids.code == cli::kExitOk);

    const Run inverted = bat_cli({"verify", "--suite", "theorem1", "--resolution", "0.05", "--self-test"});
    CHECK(inverted.code == cli::kExitVerifyFailed);
    CHECK(inverted.out.find("FAIL") != std::string::npos);

    CHECK(bat_cli({"verify", "--dims", "1,3"}).code == cli::kExitUsage);
}

TEST_CASE("export") {
    TempDir tmp;
    const auto fake_run = [&](const std::string& name, const std::string& variant, double lambda, double robust) {
        const fs::path dir = tmp.path / name;
        fs::create_directories(dir);
        nlohmann::json m;
        m["status"] = "complete";
        m["variant"] = variant;
        m["lambda"] = lambda;
        m["final"] = {{"clean_acc", 0.9}, {"robust_acc", robust}};
        write_json(dir / "manifest.json", m);
        return dir.string();
    };
    const std::string a = fake_run("a", "TRADES", 15, 0.5), b = fake_run("b", "TRADES", 3, 0.4),
                      c = fake_run("c", "TRADES", 9, 0.45), d = fake_run("d", "FAIT", 12, 0.47);

    const Run two = bat_cli({"export", a, d});
    REQUIRE(two.code == 0);
    CHECK(std::count(two.out.begin(), two.out.end(), '\n') == 3);

    const Run sweep = bat_cli({"export", a, b, c});
    REQUIRE(sweep.code == 0);
    const auto p3 = sweep.out.find("TRADES,3,"), p9 = sweep.out.find("TRADES,9,"), p15 = sweep.out.find("TRADES,15,");
    CHECK(p3 < p9);
    CHECK(p9 < p15);
    CHECK(p15 != std::string::npos);

    const Run md = bat_cli({"export", a, d, "--format", "md"});
    CHECK(md.out.find("| FAIT | 12 | 90.00 | 47.00 |") != std::string::npos);

    CHECK(bat_cli({"export"}).code == cli::kExitUsage);
    CHECK(bat_cli({"export", (tmp.path / "nowhere").string()}).code == cli::kExitUsage);
}

}  // TEST_SUITE
