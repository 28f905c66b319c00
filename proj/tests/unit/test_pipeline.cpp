// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>
#include <sys/wait.h>

#include <cstdlib>

#include "oracles.hpp"
#include "twin/pipeline.hpp"

using namespace twin;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code;
  std::string out;
  std::string err;
};

RunResult run_cli(const std::string& args) {
  const auto dir = oracle::temp_dir("twin-cli");
  const std::string cmd = std::string("\"") + TWIN_CLI + "\" " + args + " >\"" + (dir / "out").string() +
                          "\" 2>\"" + (dir / "err").string() + "\"";
  const int status = std::system(cmd.c_str());
  RunResult r{WIFEXITED(status) ? WEXITSTATUS(status) : -1, read_file(dir / "out"), read_file(dir / "err")};
  fs::remove_all(dir);
  return r;
}

std::string toy_config() { return (fs::path(TOY_DATA_DIR) / "config.json").string(); }

}  // namespace

TEST_CASE("community slugs") {
  CHECK(community_slug("Keto & Diet") == "keto-diet");
  CHECK(community_slug("Pro-ED") == "pro-ed");
  CHECK(community_slug("Healthy Lifestyle & Weight Loss") == "healthy-lifestyle-weight-loss");
  CHECK(community_slug("&&") == "community");
}

TEST_CASE("config loading merges defaults, file, flags and overrides") {
  const auto work = oracle::temp_dir("twin-work");
  PipelineOptions o;
  o.config_path = toy_config();
  o.work_dir = work;
  o.seed = 99;
  o.overrides = {"generate.per_topic=3", "screen.samples=5", "providers.scorer={\"kind\":\"mock\"}"};
  const auto cfg = PipelineConfig::load(o);
  CHECK(cfg.seed == 99);
  CHECK(cfg.work_dir == work);
  CHECK(cfg.at("generate.per_topic") == 3);
  CHECK(cfg.at("generate.balance") == 300);
  CHECK(cfg.at("generate.max_rouge").get<double>() == doctest::Approx(0.7));
  CHECK(cfg.at("providers.scorer")["kind"] == "mock");
  CHECK(cfg.path_at("input.posts")->filename() == "posts.jsonl");
  CHECK_FALSE(cfg.path_at("demos.general").has_value());
  CHECK_THROWS_AS(cfg.at("generate.nope"), UserError);

  PipelineOptions changed = o;
  changed.overrides.push_back("generate.per_topic=4");
  CHECK(PipelineConfig::load(changed).hash() != cfg.hash());

  PipelineOptions bad = o;
  bad.overrides = {"generate.max_rouge=1.5"};
  CHECK_THROWS_AS(PipelineConfig::load(bad).validate(), UserError);
  bad.overrides = {"novalue"};
  CHECK_THROWS_AS(PipelineConfig::load(bad), UserError);
}

TEST_CASE("stages refuse to run before their prerequisites") {
  const auto work = oracle::temp_dir("twin-work");
  PipelineOptions o;
  o.config_path = toy_config();
  o.work_dir = work;
  o.offline = true;
  Pipeline p(PipelineConfig::load(o));
  try {
    p.run("curate");
    FAIL("expected an error");
  } catch (const UserError& e) {
    CHECK(std::string(e.what()).find("run the 'communities' stage first") != std::string::npos);
  }
  CHECK_THROWS_AS(p.run("polish"), UserError);
}

TEST_CASE("command line exit codes") {
  const auto work = oracle::temp_dir("twin-work");
  const std::string base = "--config \"" + toy_config() + "\" --work-dir \"" + work.string() + "\"";

  auto r = run_cli(base + " curate --offline");
  CHECK(r.code == 1);
  CHECK(r.err.find("missing prerequisite") != std::string::npos);

  r = run_cli(base + " screen");
  CHECK(r.code == 1);
  CHECK(r.err.find("screen needs an aligned endpoint") != std::string::npos);

  r = run_cli(base + " generate");
  CHECK(r.code == 1);

  r = run_cli("--config /nonexistent/config.json ingest");
  CHECK(r.code == 1);
  CHECK(r.err.find("config file not found") != std::string::npos);

  r = run_cli(base + " --set generate.balance=-1 ingest");
  CHECK(r.code == 1);

  r = run_cli("");
  CHECK(r.code == 1);

  r = run_cli(base + " ingest");
  CHECK(r.code == 0);
  CHECK(fs::exists(work / "ingest" / "posts.jsonl"));
  CHECK(r.out.find("[ingest] done") != std::string::npos);
}

TEST_CASE("an unreachable provider exits with the provider code") {
  const auto work = oracle::temp_dir("twin-work");
  const std::string base = "--config \"" + toy_config() + "\" --work-dir \"" + work.string() + "\"";
  REQUIRE(run_cli(base + " ingest").code == 0);
  REQUIRE(run_cli(base + " communities").code == 0);
  const auto r = run_cli(base +
                         " --set 'providers.scorer={\"endpoint\":\"http://127.0.0.1:1\",\"timeout_s\":1,"
                         "\"retry\":{\"max_attempts\":1}}' curate");
  CHECK(r.code == 2);
  CHECK(r.err.find("provider error") != std::string::npos);
}

TEST_CASE("offline run is complete, reproducible and cached") {
  const auto work_a = oracle::temp_dir("twin-work");
  const auto work_b = oracle::temp_dir("twin-work");
  const std::string common = "--config \"" + toy_config() + "\" --offline --set generate.per_topic=4 "
                             "--set generate.balance=60 --set screen.samples=9";
  REQUIRE(run_cli(common + " --work-dir \"" + work_a.string() + "\" all").code == 0);
  REQUIRE(run_cli(common + " --work-dir \"" + work_b.string() + "\" all").code == 0);

  const auto ma = Json::parse(read_file(work_a / "manifest.json"));
  const auto mb = Json::parse(read_file(work_b / "manifest.json"));
  for (const auto& stage : Pipeline::stages()) {
    CAPTURE(stage);
    REQUIRE(ma["stages"].contains(stage));
    CHECK(ma["stages"][stage]["outputs"] == mb["stages"][stage]["outputs"]);
  }
  for (const char* f : {"alignment.json", "alignment_bars.csv", "toxicity_histograms.csv", "screening.csv",
                        "origin_classification.csv", "agreement.json"}) {
    CHECK(fs::exists(work_a / "report" / f));
  }

  const auto rerun = run_cli(common + " --work-dir \"" + work_a.string() + "\" all");
  REQUIRE(rerun.code == 0);
  CHECK(rerun.out.find("provider calls: 0") != std::string::npos);
  const auto m2 = Json::parse(read_file(work_a / "manifest.json"));
  for (const auto& stage : Pipeline::stages()) CHECK(m2["stages"][stage]["provider_calls"] == 0);
  CHECK(m2["stages"]["report"]["outputs"] == ma["stages"]["report"]["outputs"]);
}
