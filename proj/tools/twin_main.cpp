// SPDX-License-Identifier: Apache-2.0
//
// twin: command line front end for the pipeline stages.
//
// Exit codes: 0 success, 1 user or configuration error, 2 model provider failure.

#include <CLI11.hpp>
#include <iostream>

#include "twin/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Build and evaluate community digital twins"};
  app.require_subcommand(1);
  app.fallthrough();

  twin::PipelineOptions options;
  std::string config;
  std::uint64_t seed = 0;
  std::string work_dir;
  app.add_option("-c,--config", config, "Pipeline config file (JSON)");
  auto* seed_opt = app.add_option("--seed", seed, "Seed for every randomized step");
  app.add_flag("--offline", options.offline, "Use deterministic mock providers only");
  app.add_option("--work-dir", work_dir, "Override the configured work directory");
  app.add_option("--set", options.overrides, "Override a config value, e.g. generate.per_topic=20")
      ->type_name("KEY=VALUE");

  std::vector<std::string> selected;
  const std::map<std::string, std::string> descriptions{
      {"ingest", "Filter reposts and replies, clean post text"},
      {"communities", "Detect communities in the interaction graph and split posts"},
      {"curate", "Keep the lowest-perplexity posts per community"},
      {"demos", "Write instruction-tuning demonstration files"},
      {"generate", "Generate and filter finetuned and in-context synthetic corpora"},
      {"evaluate", "Alignment metrics and annotation sheets"},
      {"screen", "Administer the screener to aligned models"},
      {"report", "Emit report tables and plot series"},
  };
  for (const auto& stage : twin::Pipeline::stages()) {
    app.add_subcommand(stage, descriptions.at(stage))->callback([&selected, stage] { selected.push_back(stage); });
  }
  app.add_subcommand("all", "Run every stage in order")->callback([&selected] {
    selected = twin::Pipeline::stages();
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    options.config_path = config;
    if (*seed_opt) options.seed = seed;
    if (!work_dir.empty()) options.work_dir = work_dir;
    twin::Pipeline pipeline(twin::PipelineConfig::load(options));
    for (const auto& stage : selected) {
      const std::size_t before = pipeline.provider_calls();
      const std::size_t warned = pipeline.warnings().size();
      pipeline.run(stage);
      std::cout << "[" << stage << "] done, " << (pipeline.provider_calls() - before) << " provider calls\n";
      for (std::size_t w = warned; w < pipeline.warnings().size(); ++w) {
        std::cerr << "[" << stage << "] warning: " << pipeline.warnings()[w] << "\n";
      }
    }
    std::cout << "provider calls: " << pipeline.provider_calls() << "\n";
    return 0;
  } catch (const twin::ProviderError& e) {
    std::cerr << "provider error: " << e.what() << "\n";
    return 2;
  } catch (const twin::UserError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
