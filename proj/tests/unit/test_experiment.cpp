#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "gfnadapt/experiment.hpp"

using namespace gfnadapt;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("gfnadapt-test-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(GFNADAPT_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

ExperimentConfig small_config(const fs::path& out) {
  return parse_config("", {"run.out_dir=" + out.string(), "run.seeds=1", "run.budget=60",
                           "gflownet.steps=40", "gflownet.hidden=16,16", "gflownet.samples=200",
                           "report.topk=1,5,10"});
}

}  // namespace

TEST_SUITE("experiment") {
  TEST_CASE("override precedence: flag over file over default") {
    const auto def = parse_config("", {});
    CHECK(def.reward.beta == 4.0);
    CHECK(def.step_fraction == 0.3);

    const auto file = parse_config("[reward]\nbeta = 2\n[space]\nstep_fraction = 0.5\n", {});
    CHECK(file.reward.beta == 2.0);
    CHECK(file.step_fraction == 0.5);

    const auto flag = parse_config("[reward]\nbeta = 2\n", {"reward.beta=8"});
    CHECK(flag.reward.beta == 8.0);
    CHECK(parse_config(default_config_ini(), {}).canonical() == def.canonical());
  }

  TEST_CASE("config hash tracks result-shaping settings only") {
    const auto base = parse_config("", {});
    CHECK(base.hash().size() == 16);
    CHECK(base.hash() == parse_config("", {}).hash());
    CHECK(parse_config("", {"space.step_fraction=0.31"}).hash() != base.hash());
    CHECK(parse_config("", {"gflownet.lr=0.001"}).hash() != base.hash());
    CHECK(parse_config("", {"gflownet.lr=0.001"}).reward_hash() == base.reward_hash());
    CHECK(parse_config("", {"reward.beta=2"}).reward_hash() != base.reward_hash());
    CHECK(parse_config("", {"reward.lambda=0.5"}).reward_hash() != base.reward_hash());
    CHECK(parse_config("", {"run.seeds=4,5"}).hash() == base.hash());
    CHECK(parse_config("", {"method.name=tpe"}).hash() == base.hash());
    CHECK(parse_config("", {"run.out_dir=elsewhere"}).hash() == base.hash());
  }

  TEST_CASE("bad configuration is a ConfigError") {
    CHECK_THROWS_AS(parse_config("", {"reward.betta=2"}), ConfigError);
    CHECK_THROWS_AS(parse_config("[nope]\nx=1\n", {}), ConfigError);
    CHECK_THROWS_AS(parse_config("", {"reward.beta=abc"}), ConfigError);
    CHECK_THROWS_AS(parse_config("", {"reward.beta"}), ConfigError);
    CHECK_THROWS_AS(parse_config("", {"reward.beta=-1"}), ConfigError);
    CHECK_THROWS_AS(parse_config("", {"space.step_fraction=1.5"}), ConfigError);
    CHECK_THROWS_AS(parse_config("", {"reward.q_lo=0.9", "reward.q_hi=0.1"}), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/config.ini", {}), ConfigError);
  }

  TEST_CASE("truth key lifting and matched-budget keys") {
    const auto space = build_problem(parse_config("", {"space.cycles=2"})).space;
    CHECK(lift_truth_key(space, StateKey{1, 3, 1, 2, 3}) == StateKey{1, 3, 1, 2, 3, 0, 0, 0, 0, 0});
    const std::vector<StateKey> training = {StateKey{1}, StateKey{2}, StateKey{1}, StateKey{3}};
    const std::vector<StateKey> samples = {StateKey{3}, StateKey{4}, StateKey{5}};
    CHECK(gflownet_budget_keys(training, samples, 4) ==
          std::vector<StateKey>{StateKey{1}, StateKey{2}, StateKey{3}, StateKey{4}});
    CHECK(gflownet_budget_keys(training, samples, 2) == std::vector<StateKey>{StateKey{1}, StateKey{2}});
  }

  TEST_CASE("missing upstream artifacts name the file") {
    const auto out = fresh_dir("missing");
    auto config = small_config(out);
    try {
      cmd_sample(config);
      FAIL("expected MissingArtifact");
    } catch (const MissingArtifact& e) {
      CHECK(std::string(e.what()).find("checkpoint.bin") != std::string::npos);
      CHECK(e.path().filename() == "checkpoint.bin");
    }
    CHECK_THROWS_AS(cmd_report(config), MissingArtifact);
    fs::remove_all(out);
  }

  TEST_CASE("small pipeline reruns from cache with identical outputs") {
    const auto out = fresh_dir("pipeline");
    setenv("GFNADAPT_CACHE_DIR", (out / "cache").c_str(), 1);
    auto config = small_config(out);
    const auto paths = run_paths(config);
    CHECK(paths.root == out / config.hash());

    const auto e1 = cmd_enumerate(config);
    CHECK(e1.simulator_calls > 0);
    const auto summary = nlohmann::json::parse(slurp(paths.enumerate() / "summary.json"));
    CHECK(summary["terminals"] == 2625);
    CHECK(summary["truth_rank"] == 1);

    cmd_train(config);
    cmd_sample(config);
    for (const char* m : {"random", "tpe"}) {
      auto c = config;
      c.method = m;
      cmd_baseline(c);
    }
    cmd_report(config);
    const auto summary_csv = slurp(paths.report() / "summary.csv");
    CHECK(summary_csv.find("# config_hash=" + config.hash()) != std::string::npos);
    for (const char* m : {"gflownet,", "random,", "tpe,"}) CHECK(summary_csv.find(m) != std::string::npos);

    std::map<fs::path, std::string> before;
    for (const auto& entry : fs::recursive_directory_iterator(paths.root))
      if (entry.is_regular_file()) before[entry.path()] = slurp(entry.path());

    std::uint64_t calls = cmd_enumerate(config).simulator_calls + cmd_train(config).simulator_calls +
                          cmd_sample(config).simulator_calls + cmd_report(config).simulator_calls;
    for (const char* m : {"random", "tpe"}) {
      auto c = config;
      c.method = m;
      calls += cmd_baseline(c).simulator_calls;
    }
    CHECK(calls == 0);
    for (const auto& [path, bytes] : before) CHECK_MESSAGE(slurp(path) == bytes, path.string());

    unsetenv("GFNADAPT_CACHE_DIR");
    fs::remove_all(out);
  }

  TEST_CASE("report refuses mixed config hashes") {
    const auto out = fresh_dir("mixed");
    setenv("GFNADAPT_CACHE_DIR", (out / "cache").c_str(), 1);
    auto config = small_config(out);
    config.methods = {"random"};
    config.method = "random";
    cmd_enumerate(config);
    cmd_baseline(config);
    const auto trace = run_paths(config).baseline("random", 1) / "trace.csv";
    auto text = slurp(trace);
    text.replace(text.find(config.hash()), 16, "0000000000000000");
    std::ofstream(trace, std::ios::binary) << text;
    CHECK_THROWS(cmd_report(config));
    unsetenv("GFNADAPT_CACHE_DIR");
    fs::remove_all(out);
  }

  TEST_CASE("CLI exit codes") {
    const auto out = fresh_dir("cli");
    const std::string common = "--set run.out_dir=" + out.string() + " --set run.seeds=1";
    CHECK(run_cli("config --defaults") == 0);
    CHECK(run_cli("config " + common) == 0);
    CHECK(run_cli("config --set reward.betta=1") == 1);
    CHECK(run_cli("frobnicate") == 1);
    CHECK(run_cli("baseline --method gflownet " + common) == 1);
    CHECK(run_cli("sample " + common) == 2);
    CHECK(run_cli("report " + common) == 2);
    CHECK(run_cli("--config " + (out / "absent.ini").string() + " config") == 1);
    fs::remove_all(out);
  }
}
