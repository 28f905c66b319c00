// SPDX-License-Identifier: Apache-2.0
//
// Stage orchestration behind the `twin` command line tool. Every stage reads
// the previous stage's files from the work directory, writes its own
// directory, and records output digests in work/manifest.json.
//
// Work directory layout:
//   ingest/posts.jsonl                      cleaned original posts
//   communities/<slug>.jsonl                posts per detected community
//   communities/{partition.jsonl,clusters.csv,communities.json,summary.json}
//   curate/<slug>.jsonl                     lowest-perplexity posts
//   demos/<slug>.jsonl                      demonstration files
//   generate/<slug>.{finetuned,context}[.raw].jsonl, <slug>.filter.json, <slug>.series.json
//   evaluate/alignment.json, series.json, triplets*.csv, harm_batch*.csv, origin_demos.jsonl
//   screen/<slug>.responses.json, screening.{csv,json}, votes.csv
//   report/*.csv, *.json
//   checkpoints/, cache/responses.jsonl

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "twin/providers.hpp"
#include "twin/util.hpp"

namespace twin {

/// Every tunable with its default value.
Json default_pipeline_config();

struct PipelineOptions {
  std::filesystem::path config_path;
  std::optional<std::uint64_t> seed;
  bool offline = false;
  std::optional<std::filesystem::path> work_dir;
  /// "section.key=value" assignments applied after the file; values parse as
  /// JSON when possible and as strings otherwise.
  std::vector<std::string> overrides;
};

struct PipelineConfig {
  Json values;                     // defaults merged with the file and overrides
  std::filesystem::path base_dir;  // relative paths resolve against this
  std::filesystem::path work_dir;
  std::uint64_t seed = 0;
  bool offline = false;

  static PipelineConfig load(const PipelineOptions& options);

  /// Reads a value by "section.key" path. Throws UserError when absent.
  const Json& at(const std::string& dotted) const;
  std::optional<std::filesystem::path> path_at(const std::string& dotted) const;  // null / "" -> nullopt

  /// Throws UserError on invalid thresholds or missing inputs.
  void validate() const;
  std::string hash() const;
};

/// File-system safe name: "Keto & Diet" -> "keto-diet".
std::string community_slug(const std::string& name);

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config);

  static const std::vector<std::string>& stages();

  /// Runs one stage. Throws UserError naming the missing prerequisite stage.
  void run(const std::string& stage);
  void run_all();

  /// Backend calls made by this Pipeline instance (cache hits excluded).
  std::size_t provider_calls() const { return provider_calls_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  const PipelineConfig& config() const { return config_; }

 private:
  struct CommunityInfo {
    std::string name;
    std::string slug;
  };

  void ingest();
  void communities();
  void curate_stage();
  void demos();
  void generate();
  void evaluate();
  void screen();
  void report();

  std::filesystem::path dir(const std::string& stage) const;
  void require(const std::string& stage) const;
  std::vector<CommunityInfo> community_list() const;

  ProviderConfig provider_config(const std::string& role, const std::string& community) const;
  std::shared_ptr<Provider> provider(const std::string& role, const std::string& community = "");
  void settle_providers();

  Json load_manifest() const;
  void record_stage(const std::string& stage, const std::string& started, std::size_t calls);

  PipelineConfig config_;
  std::shared_ptr<ResponseCache> cache_;
  std::vector<std::shared_ptr<Provider>> live_;
  std::size_t provider_calls_ = 0;
  std::vector<std::string> warnings_;
  std::vector<std::string> stage_warnings_;
};

}  // namespace twin
