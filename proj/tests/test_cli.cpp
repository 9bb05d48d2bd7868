#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "subplan/cli.hpp"
#include "subplan/io.hpp"

using namespace subplan;
namespace fs = std::filesystem;

namespace {

const std::string kTiny = SUBPLAN_DATA_DIR "/../tests/data/tiny.json";
const std::string kDefault = SUBPLAN_DATA_DIR "/default.json";

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "subplan");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("subplan_cli_" + name);
  fs::remove_all(p);
  return p;
}

fs::path write_config(const std::string& name, const std::string& text) {
  const auto p = fs::temp_directory_path() / ("subplan_cli_" + name + ".json");
  std::ofstream(p) << text;
  return p;
}

nlohmann::json manifest(const fs::path& dir) {
  return nlohmann::json::parse(read_file(dir / "manifest.json"));
}

}  // namespace

TEST_CASE("predict on the tiny config matches the golden file") {
  const auto dir = scratch("golden");
  const auto r = run({"predict", "-c", kTiny, "-o", dir.string()});
  REQUIRE(r.code == 0);
  CHECK(read_file(dir / "predictions.jsonl") ==
        read_file(SUBPLAN_DATA_DIR "/../tests/data/tiny_predictions.jsonl"));
  const auto m = manifest(dir);
  CHECK(m["command"] == "predict");
  CHECK(m["config_hash"].get<std::string>().starts_with("fnv1a64:"));
  CHECK(m["config_hash"] == config_hash(m["config"]));
  CHECK(m["files"] == nlohmann::json::array({"predictions.jsonl"}));
  CHECK(m["seeds"]["prompt"] == 0);
  // No temporary files are left behind by atomic writes.
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir)) ++files;
  CHECK(files == 2);
}

TEST_CASE("forward criterion equals weighted MI at lambda 0") {
  const auto a = scratch("fwd"), b = scratch("wmi0");
  REQUIRE(run({"predict", "-c", kTiny, "-o", a.string(), "--criterion", "forward"}).code == 0);
  REQUIRE(run({"predict", "-c", kTiny, "-o", b.string(), "--criterion", "wmi", "--lambda", "0"})
              .code == 0);
  CHECK(read_file(a / "predictions.jsonl") == read_file(b / "predictions.jsonl"));
  CHECK(manifest(a)["config_hash"] != manifest(b)["config_hash"]);
}

TEST_CASE("configuration errors exit with code 2 and name the field") {
  const auto out = scratch("cfg").string();
  const auto no_catalog = write_config("nocat", R"({"scenes": "s.jsonl", "tasks": "t.jsonl"})");
  auto r = run({"predict", "-c", no_catalog.string(), "-o", out});
  CHECK(r.code == 2);
  CHECK(r.err.find("catalog") != std::string::npos);

  const auto bad_path = write_config("badcat", R"({"catalog": "does/not/exist.tsv"})");
  r = run({"predict", "-c", bad_path.string(), "-o", out});
  CHECK(r.code == 2);
  CHECK(r.err.find("catalog") != std::string::npos);

  const auto unknown = write_config("unknown", R"({"catalgo": "x"})");
  r = run({"predict", "-c", unknown.string(), "-o", out});
  CHECK(r.code == 2);
  CHECK(r.err.find("catalgo") != std::string::npos);

  const auto nested = write_config("nested", R"({"beam": {"width": 3}})");
  r = run({"predict", "-c", nested.string(), "-o", out});
  CHECK(r.code == 2);
  CHECK(r.err.find("beam.width") != std::string::npos);

  r = run({"predict", "-c", kTiny, "-o", out, "--lambda", "1.5"});
  CHECK(r.code == 2);
  CHECK(r.err.find("criterion.lambda") != std::string::npos);

  const auto wrong_type = write_config("type", R"({"prompt": {"n": "many"}})");
  r = run({"predict", "-c", wrong_type.string(), "-o", out});
  CHECK(r.code == 2);
  CHECK(r.err.find("prompt.n") != std::string::npos);

  const auto remote = write_config("remote", R"({"model": {"kind": "remote"}})");
  r = run({"predict", "-c", remote.string(), "-o", out});
  CHECK(r.code == 2);
  CHECK(r.err.find("model.endpoint") != std::string::npos);

  CHECK(run({"predict", "-c", "/no/such/config.json"}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({}).code == 2);
  CHECK(run({"predict", "--bogus-flag"}).code == 2);
}

TEST_CASE("runtime failures exit with code 1") {
  const auto dir = scratch("budget0");
  const auto r = run({"feedback-train", "-c", kTiny, "-o", dir.string(), "--budget", "0"});
  CHECK(r.code == 1);
  CHECK(r.err.find("EmptyDataset") != std::string::npos);
  CHECK(r.err.find("feedback.budget") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "params.txt"));

  const auto big = scratch("bign");
  const auto r2 = run({"predict", "-c", kTiny, "-o", big.string(), "--criterion", "forward"});
  CHECK(r2.code == 0);
  const auto too_many = write_config("bign", R"({
    "catalog": ")" SUBPLAN_DATA_DIR R"(/catalog.tsv",
    "scenes": ")" SUBPLAN_DATA_DIR R"(/benchmark/scenes.jsonl",
    "tasks": ")" SUBPLAN_DATA_DIR R"(/benchmark/tasks.jsonl",
    "prompt": {"n": 1000}, "eval": {"limit": 1}})");
  CHECK(run({"predict", "-c", too_many.string(), "-o", big.string()}).code == 1);
}

TEST_CASE("the executable reports exit codes") {
  const std::string cli = SUBPLAN_CLI_PATH;
  const auto quiet = " >/dev/null 2>&1";
  CHECK(std::system((cli + " --help" + quiet).c_str()) == 0);
  const auto status = std::system((cli + " predict -c /no/such.json" + quiet).c_str());
  CHECK(WEXITSTATUS(status) == 2);
}

TEST_CASE("feedback training on the shipped benchmark") {
  const auto dir = scratch("train");
  const auto r = run({"feedback-train", "-c", kDefault, "-o", dir.string()});
  REQUIRE(r.code == 0);
  const auto log = read_file(dir / "train_log.tsv");
  std::istringstream is(log);
  std::string header;
  std::getline(is, header);
  CHECK(header == "epoch\tloss");
  std::vector<double> loss;
  std::size_t epoch;
  double value;
  while (is >> epoch >> value) loss.push_back(value);
  REQUIRE(loss.size() == 100);
  CHECK(loss.back() < loss.front());
  const auto params = RankerParams::load(dir / "params.txt");
  CHECK(params.featurizer == "hashed:4096:cross");
  const auto m = manifest(dir);
  CHECK(m["files"] ==
        nlohmann::json::array({"feedback.jsonl", "params.txt", "train_log.tsv"}));
}

TEST_CASE("the same seed reproduces identical parameters") {
  const auto a = scratch("seed_a"), b = scratch("seed_b");
  const std::vector<std::string> common{"feedback-train", "-c", kDefault, "--budget", "80"};
  auto args_a = common, args_b = common;
  args_a.insert(args_a.end(), {"-o", a.string()});
  args_b.insert(args_b.end(), {"-o", b.string(), "--threads", "1"});
  REQUIRE(run(args_a).code == 0);
  REQUIRE(run(args_b).code == 0);
  CHECK(read_file(a / "params.txt") == read_file(b / "params.txt"));
  CHECK(read_file(a / "feedback.jsonl") == read_file(b / "feedback.jsonl"));
}

TEST_CASE("eval rows") {
  const auto dir = scratch("eval");
  const auto r = run({"eval", "-c", kDefault, "-o", dir.string(), "--limit", "40"});
  REQUIRE(r.code == 0);
  const auto report = nlohmann::json::parse(read_file(dir / "report.json"));
  CHECK(report["tasks"] == 40);
  const auto& rows = report["rows"];
  REQUIRE(rows.size() == 2);
  CHECK(rows[0]["name"] == "predicted");
  CHECK(rows[1]["name"] == "oracle");
  CHECK(rows[1]["task_rate"] == 1.0);
  for (const auto& row : rows)
    CHECK(row["goal_condition_rate"].get<double>() >= row["task_rate"].get<double>());

  // The theta = 0 row against executing each task's top-ranked plan alone:
  // equal whenever that plan runs cleanly.
  const auto c = Catalog::load(SUBPLAN_DATA_DIR "/catalog.tsv");
  const Environment env(c);
  const auto bench = load_benchmark(SUBPLAN_DATA_DIR "/benchmark", c);
  const auto pdir = scratch("eval_pred");
  REQUIRE(run({"predict", "-c", kDefault, "-o", pdir.string(), "--limit", "40"}).code == 0);
  std::istringstream lines(read_file(pdir / "predictions.jsonl"));
  std::string line;
  std::size_t top1_successes = 0, n = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    const auto& task = *std::find_if(bench.tasks().begin(), bench.tasks().end(),
                                     [&](const TaskSpec& t) { return t.id == j["task_id"]; });
    const auto plan = parse(j["hypotheses"][0]["plan"].get<std::string>(), c);
    auto state = env.reset(bench.scene(task.scene_id), task);
    bool ok = true;
    for (const auto& g : plan.steps) {
      auto [next, outcome] = env.execute(state, g);
      if (!outcome.success) {
        ok = false;
        break;
      }
      state = std::move(next);
    }
    top1_successes += ok && env.reward(task, state) == 1;
    ++n;
  }
  REQUIRE(n == 40);
  // Failures let the rollout move on to later plans, so the theta = 0 row can
  // only add successes on top of clean top-1 executions.
  CHECK(rows[0]["task_rate"].get<double>() >= static_cast<double>(top1_successes) / 40.0);

  const auto params = fs::path(SUBPLAN_DATA_DIR) / "../tests/data/none.txt";
  const auto bad = run({"eval", "-c", kDefault, "-o", dir.string(), "--params", params.string()});
  CHECK(bad.code == 2);
  CHECK(bad.err.find("eval.params") != std::string::npos);
}
