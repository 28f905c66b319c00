// SPDX-License-Identifier: Apache-2.0

#include "twin/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <iostream>
#include <set>

#include "twin/corpus.hpp"
#include "twin/demos.hpp"
#include "twin/eval.hpp"
#include "twin/graph.hpp"
#include "twin/screen.hpp"
#include "twin/synthgen.hpp"

namespace twin {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

Json default_pipeline_config() {
  return Json::parse(R"({
    "work_dir": "work",
    "seed": 0,
    "input": {"posts": null, "interactions": null, "community_map": null},
    "clean": {"lowercase": false, "extra_patterns": []},
    "communities": {"weighted": true, "resolution": 1.0, "max_levels": 64},
    "curate": {"cap": 10000},
    "demos": {"general": null},
    "generate": {
      "topics": null,
      "per_topic": 1000,
      "exemplars": 250,
      "exemplar_tokens": 20,
      "temperature": 1.0,
      "max_tokens": 64,
      "max_perplexity": 400.0,
      "max_rouge": 0.7,
      "balance": 6000
    },
    "evaluate": {
      "toxicity_threshold": 0.05,
      "toxicity_bins": 10,
      "origin_per_community": 3000,
      "origin_holdout": 0.05,
      "similarity_sample": 1000,
      "triplets_per_community": 50,
      "harm_per_source": 20
    },
    "screen": {
      "samples": 50,
      "temperature": 0.7,
      "max_tokens": 16,
      "retry_budget": 2,
      "questionnaire": null,
      "reference": null
    },
    "report": {"harm_labels": null, "none_label": "none"},
    "providers": {"scorer": null, "base": null, "aligned": null}
  })");
}

namespace {

Json parse_override_value(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error&) {
    return text;
  }
}

Json::json_pointer dotted_pointer(const std::string& dotted) {
  std::string p;
  std::size_t start = 0;
  while (start <= dotted.size()) {
    const std::size_t dot = std::min(dotted.find('.', start), dotted.size());
    p += "/" + dotted.substr(start, dot - start);
    start = dot + 1;
  }
  return Json::json_pointer(p);
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_json(const fs::path& path, const Json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

Json read_json(const fs::path& path) {
  try {
    return Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw UserError(path.string() + ": " + e.what());
  }
}

std::string num(double v) { return format_fixed(v, 6); }

}  // namespace

PipelineConfig PipelineConfig::load(const PipelineOptions& options) {
  PipelineConfig cfg;
  cfg.values = default_pipeline_config();
  if (!options.config_path.empty()) {
    if (!fs::exists(options.config_path)) throw UserError("config file not found: " + options.config_path.string());
    cfg.values.merge_patch(read_json(options.config_path));
    cfg.base_dir = fs::absolute(options.config_path).parent_path();
  } else {
    cfg.base_dir = fs::current_path();
  }
  for (const auto& assignment : options.overrides) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw UserError("override must look like section.key=value: " + assignment);
    cfg.values[dotted_pointer(assignment.substr(0, eq))] = parse_override_value(assignment.substr(eq + 1));
  }
  if (options.seed) cfg.values["seed"] = *options.seed;
  cfg.offline = options.offline;
  if (!cfg.values["seed"].is_number_unsigned() && !cfg.values["seed"].is_number_integer()) {
    throw UserError("seed must be a non-negative integer");
  }
  cfg.seed = cfg.values["seed"].get<std::uint64_t>();
  const fs::path work = options.work_dir ? *options.work_dir : fs::path(cfg.values["work_dir"].get<std::string>());
  cfg.work_dir = work.is_absolute() ? work : cfg.base_dir / work;
  cfg.validate();
  return cfg;
}

const Json& PipelineConfig::at(const std::string& dotted) const {
  const auto ptr = dotted_pointer(dotted);
  if (!values.contains(ptr)) throw UserError("config lacks '" + dotted + "'");
  return values.at(ptr);
}

std::optional<fs::path> PipelineConfig::path_at(const std::string& dotted) const {
  const Json& v = at(dotted);
  if (v.is_null() || (v.is_string() && v.get<std::string>().empty())) return std::nullopt;
  if (!v.is_string()) throw UserError("config '" + dotted + "' must be a path string");
  const fs::path p = v.get<std::string>();
  return p.is_absolute() ? p : base_dir / p;
}

void PipelineConfig::validate() const {
  auto positive = [&](const std::string& key) {
    const Json& v = at(key);
    if (!v.is_number() || v.get<double>() <= 0) throw UserError("config '" + key + "' must be a positive number");
  };
  auto unit = [&](const std::string& key, bool closed_top) {
    const Json& v = at(key);
    const double x = v.is_number() ? v.get<double>() : -1;
    if (!(x >= 0 && (closed_top ? x <= 1 : x < 1))) throw UserError("config '" + key + "' out of range");
  };
  try {
    for (const char* key : {"curate.cap", "generate.per_topic", "generate.exemplars", "generate.exemplar_tokens",
                            "generate.max_tokens", "generate.max_perplexity", "generate.balance",
                            "evaluate.toxicity_bins", "evaluate.origin_per_community", "evaluate.similarity_sample",
                            "screen.samples", "screen.max_tokens", "communities.resolution"}) {
      positive(key);
    }
    unit("generate.max_rouge", true);
    unit("evaluate.toxicity_threshold", false);
    unit("evaluate.origin_holdout", false);
    if (at("generate.temperature").get<double>() < 0 || at("screen.temperature").get<double>() < 0) {
      throw UserError("config temperatures must be non-negative");
    }
    if (!at("generate.topics").is_null()) {
      const auto topics = at("generate.topics").get<std::vector<std::string>>();
      if (topics.empty()) throw UserError("config 'generate.topics' is empty");
    }
    for (const char* role : {"scorer", "base"}) {
      const Json& p = at(std::string("providers.") + role);
      if (!p.is_null()) ProviderConfig::from_json(p).validate();
    }
    const Json& aligned = at("providers.aligned");
    if (!aligned.is_null()) {
      if (!aligned.is_object()) throw UserError("config 'providers.aligned' must map community names to providers");
      for (const auto& [name, p] : aligned.items()) ProviderConfig::from_json(p).validate();
    }
  } catch (const Json::exception& e) {
    throw UserError(std::string("invalid config: ") + e.what());
  }
}

std::string PipelineConfig::hash() const {
  Json snapshot = values;
  snapshot["offline"] = offline;
  // Tokens never enter digests or manifests.
  for (const char* role : {"scorer", "base"}) {
    if (snapshot["providers"][role].is_object()) snapshot["providers"][role].erase("auth_token");
  }
  if (snapshot["providers"]["aligned"].is_object()) {
    for (auto& [name, p] : snapshot["providers"]["aligned"].items()) p.erase("auth_token");
  }
  return sha256_hex(snapshot.dump());
}

std::string community_slug(const std::string& name) {
  std::string out;
  bool dash = false;
  for (char c : to_lower_ascii(name)) {
    if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) {
      if (dash && !out.empty()) out += '-';
      out += c;
      dash = false;
    } else {
      dash = true;
    }
  }
  return out.empty() ? "community" : out;
}

// ---------------------------------------------------------------------------
// Pipeline plumbing
// ---------------------------------------------------------------------------

Pipeline::Pipeline(PipelineConfig config) : config_(std::move(config)) {
  fs::create_directories(config_.work_dir / "cache");
  cache_ = std::make_shared<ResponseCache>(config_.work_dir / "cache" / "responses.jsonl");
}

const std::vector<std::string>& Pipeline::stages() {
  static const std::vector<std::string> s{"ingest",   "communities", "curate", "demos",
                                          "generate", "evaluate",    "screen", "report"};
  return s;
}

fs::path Pipeline::dir(const std::string& stage) const { return config_.work_dir / stage; }

Json Pipeline::load_manifest() const {
  const fs::path p = config_.work_dir / "manifest.json";
  return fs::exists(p) ? read_json(p) : Json::object();
}

void Pipeline::require(const std::string& stage) const {
  const Json m = load_manifest();
  if (!m.contains("stages") || !m["stages"].contains(stage)) {
    throw UserError("missing prerequisite: run the '" + stage + "' stage first");
  }
  for (const auto& [rel, digest] : m["stages"][stage]["outputs"].items()) {
    if (!fs::exists(config_.work_dir / rel)) {
      throw UserError("missing prerequisite: '" + stage + "' output " + rel + " is gone; rerun '" + stage + "'");
    }
  }
}

std::vector<Pipeline::CommunityInfo> Pipeline::community_list() const {
  const Json j = read_json(dir("communities") / "communities.json");
  std::vector<CommunityInfo> out;
  for (const auto& c : j) out.push_back({c.at("name").get<std::string>(), c.at("slug").get<std::string>()});
  return out;
}

ProviderConfig Pipeline::provider_config(const std::string& role, const std::string& community) const {
  if (config_.offline) {
    ProviderConfig c;
    c.kind = "mock";
    c.model = "mock-" + role;
    c.mock_seed = hash_combine(config_.seed, fnv1a64(role + ":" + community));
    if (role == "aligned") {
      // An offline aligned model speaks the community's own vocabulary.
      std::set<std::string> seen;
      const Corpus curated = read_corpus(dir("curate") / (community_slug(community) + ".jsonl"), community);
      for (const auto& d : curated.documents) {
        for (auto& t : split_whitespace(d.text)) {
          if (c.mock_vocabulary.size() >= 4000) break;
          if (seen.insert(t).second) c.mock_vocabulary.push_back(std::move(t));
        }
      }
    }
    return c;
  }
  const Json* j = nullptr;
  const Json& section = config_.at("providers." + role);
  if (role == "aligned") {
    if (section.is_object()) {
      if (section.contains(community)) {
        j = &section[community];
      } else if (section.contains("default")) {
        j = &section["default"];
      }
    }
    if (!j) throw UserError("no aligned endpoint configured for '" + community + "' (providers.aligned)");
  } else {
    if (section.is_null()) throw UserError("no '" + role + "' provider configured (providers." + role + ")");
    j = &section;
  }
  ProviderConfig c = ProviderConfig::from_json(*j);
  c.validate();
  if (c.kind == "http" && c.endpoint.empty()) {
    throw UserError("provider '" + role + "' for '" + community + "' has no endpoint");
  }
  return c;
}

std::shared_ptr<Provider> Pipeline::provider(const std::string& role, const std::string& community) {
  auto p = Provider::create(provider_config(role, community), cache_);
  live_.push_back(p);
  return p;
}

void Pipeline::settle_providers() {
  for (const auto& p : live_) provider_calls_ += p->request_count();
  live_.clear();
}

void Pipeline::record_stage(const std::string& stage, const std::string& started, std::size_t calls) {
  Json m = load_manifest();
  m["config_hash"] = config_.hash();
  m["seed"] = config_.seed;
  m["offline"] = config_.offline;

  Json providers = Json::object();
  auto describe = [&](const std::string& role, const std::string& community) {
    try {
      const ProviderConfig c = provider_config(role, community);
      return Json{{"kind", c.kind}, {"endpoint", c.endpoint}, {"model", c.model}};
    } catch (const UserError&) {
      return Json(nullptr);
    }
  };
  providers["scorer"] = describe("scorer", "");
  providers["base"] = describe("base", "");
  if (fs::exists(dir("communities") / "communities.json") && fs::exists(dir("curate"))) {
    Json aligned = Json::object();
    for (const auto& c : community_list()) aligned[c.name] = describe("aligned", c.name);
    providers["aligned"] = aligned;
  }
  m["providers"] = providers;

  Json inputs = Json::object();
  for (const char* key : {"input.posts", "input.interactions", "input.community_map", "demos.general",
                          "screen.questionnaire", "screen.reference", "report.harm_labels"}) {
    if (const auto p = config_.path_at(key); p && fs::exists(*p)) inputs[key] = sha256_file(*p);
  }
  m["inputs"] = inputs;

  Json outputs = Json::object();
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir(stage))) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) outputs[fs::relative(f, config_.work_dir).generic_string()] = sha256_file(f);

  m["stages"][stage] = Json{{"outputs", outputs},
                            {"started", started},
                            {"finished", utc_now()},
                            {"provider_calls", calls},
                            {"warnings", stage_warnings_}};
  write_json(config_.work_dir / "manifest.json", m);
}

void Pipeline::run(const std::string& stage) {
  const auto& all = stages();
  if (std::find(all.begin(), all.end(), stage) == all.end()) throw UserError("unknown stage '" + stage + "'");
  const std::string started = utc_now();
  const std::size_t before = provider_calls_;
  stage_warnings_.clear();
  try {
    fs::remove_all(dir(stage));
    fs::create_directories(dir(stage));
    if (stage == "ingest") ingest();
    if (stage == "communities") communities();
    if (stage == "curate") curate_stage();
    if (stage == "demos") demos();
    if (stage == "generate") generate();
    if (stage == "evaluate") evaluate();
    if (stage == "screen") screen();
    if (stage == "report") report();
  } catch (...) {
    settle_providers();
    throw;
  }
  settle_providers();
  record_stage(stage, started, provider_calls_ - before);
  warnings_.insert(warnings_.end(), stage_warnings_.begin(), stage_warnings_.end());
}

void Pipeline::run_all() {
  for (const auto& s : stages()) run(s);
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

void Pipeline::ingest() {
  const auto posts = config_.path_at("input.posts");
  if (!posts) throw UserError("config 'input.posts' is required for ingest");
  if (!fs::exists(*posts)) throw UserError("posts file not found: " + posts->string());

  CleanOptions clean;
  clean.lowercase = config_.at("clean.lowercase").get<bool>();
  clean.extra_patterns = config_.at("clean.extra_patterns").get<std::vector<std::string>>();

  std::vector<Document> raw;
  read_jsonl(*posts, [&](std::size_t, const Json& j) {
    Json record = j;
    if (record.is_object() && !record.contains("community")) record["community"] = "";
    raw.push_back(Document::from_json(record));
  });
  const auto originals = filter_originals(raw);
  std::vector<Document> kept;
  std::size_t emptied = 0;
  for (auto d : originals) {
    d.text = clean_text(d.text, clean);
    if (d.text.empty()) {
      ++emptied;
      continue;
    }
    kept.push_back(std::move(d));
  }
  write_documents(dir("ingest") / "posts.jsonl", kept);
  write_json(dir("ingest") / "summary.json", Json{{"read", raw.size()},
                                                  {"reposts_and_replies", raw.size() - originals.size()},
                                                  {"empty_after_cleaning", emptied},
                                                  {"kept", kept.size()}});
}

void Pipeline::communities() {
  require("ingest");
  const auto interactions_path = config_.path_at("input.interactions");
  const auto map_path = config_.path_at("input.community_map");
  if (!interactions_path || !map_path) {
    throw UserError("config 'input.interactions' and 'input.community_map' are required for communities");
  }
  const auto graph = build_graph(read_interactions(*interactions_path), config_.at("communities.weighted").get<bool>());
  LouvainOptions lo;
  lo.seed = config_.seed;
  lo.resolution = config_.at("communities.resolution").get<double>();
  lo.max_levels = config_.at("communities.max_levels").get<std::size_t>();
  LouvainTrace trace;
  const Partition partition = louvain(graph, lo, &trace);
  write_partition(dir("communities") / "partition.jsonl", partition);

  const auto cluster_to_community = parse_community_map(read_json(*map_path));
  std::vector<std::vector<std::string>> rows;
  for (const auto& c : top_clusters(partition, partition.cluster_count())) {
    auto it = cluster_to_community.find(c.cluster);
    rows.push_back({std::to_string(c.cluster), std::to_string(c.count),
                    it == cluster_to_community.end() ? "" : it->second});
  }
  write_csv(dir("communities") / "clusters.csv", {"cluster", "size", "community"}, rows);

  // Community order follows the map file's key order, which Json keeps sorted.
  std::map<std::string, Corpus> by_community;
  for (const auto& [cluster, name] : cluster_to_community) by_community[name].community = name;
  std::size_t unassigned = 0;
  for (auto d : read_documents(dir("ingest") / "posts.jsonl")) {
    auto a = partition.assignment.find(d.author);
    const auto it = a == partition.assignment.end() ? cluster_to_community.end() : cluster_to_community.find(a->second);
    if (it == cluster_to_community.end()) {
      ++unassigned;
      continue;
    }
    d.community = it->second;
    by_community[it->second].documents.push_back(std::move(d));
  }
  Json list = Json::array();
  std::set<std::string> slugs;
  for (auto& [name, corpus] : by_community) {
    if (corpus.empty()) {
      stage_warnings_.push_back("community '" + name + "' received no posts and is skipped");
      continue;
    }
    const std::string slug = community_slug(name);
    if (!slugs.insert(slug).second) throw UserError("communities '" + name + "' and another share the name " + slug);
    corpus = dedup_exact(corpus);
    write_corpus(dir("communities") / (slug + ".jsonl"), corpus);
    list.push_back(Json{{"name", name}, {"slug", slug}, {"documents", corpus.size()}});
  }
  if (list.empty()) throw UserError("no posts were assigned to any mapped community");
  write_json(dir("communities") / "communities.json", list);
  write_json(dir("communities") / "summary.json",
             Json{{"nodes", graph.node_count()},
                  {"edges", graph.edge_count()},
                  {"clusters", partition.cluster_count()},
                  {"modularity", modularity(graph, partition, lo.resolution)},
                  {"phase_modularity", trace.phase_modularity},
                  {"unassigned_posts", unassigned}});
}

void Pipeline::curate_stage() {
  require("communities");
  const auto cap = config_.at("curate.cap").get<std::size_t>();
  auto scorer = provider("scorer");
  for (const auto& c : community_list()) {
    const Corpus corpus = read_corpus(dir("communities") / (c.slug + ".jsonl"), c.name);
    write_corpus(dir("curate") / (c.slug + ".jsonl"), curate(corpus, *scorer, cap));
  }
}

void Pipeline::demos() {
  require("curate");
  const auto general = config_.path_at("demos.general");
  for (const auto& c : community_list()) {
    const Corpus corpus = read_corpus(dir("curate") / (c.slug + ".jsonl"), c.name);
    auto d = build_demonstrations(corpus, config_.seed);
    if (general) d = augment_with_general(std::move(d), *general);
    export_demonstrations(d, dir("demos") / (c.slug + ".jsonl"));
  }
}

void Pipeline::generate() {
  if (!config_.offline && !config_.at("providers.aligned").is_object()) {
    throw UserError("generate needs an aligned endpoint: set providers.aligned or pass --offline");
  }
  require("curate");
  const Json& topics_json = config_.at("generate.topics");
  const auto topics = topics_json.is_null() ? default_topics() : topics_json.get<std::vector<std::string>>();
  const auto communities = community_list();

  FinetunedGenerationOptions ft;
  ft.per_topic = config_.at("generate.per_topic").get<std::size_t>();
  ft.seed = config_.seed;
  ft.params.temperature = config_.at("generate.temperature").get<double>();
  ft.params.max_tokens = config_.at("generate.max_tokens").get<int>();

  ContextGenerationOptions cx;
  cx.per_topic = ft.per_topic;
  cx.exemplars = config_.at("generate.exemplars").get<std::size_t>();
  cx.exemplar_tokens = config_.at("generate.exemplar_tokens").get<std::size_t>();
  cx.seed = config_.seed;
  cx.params = ft.params;

  FilterOptions fo;
  fo.max_perplexity = config_.at("generate.max_perplexity").get<double>();
  fo.max_rouge = config_.at("generate.max_rouge").get<double>();
  fo.balance = config_.at("generate.balance").get<std::size_t>();
  fo.seed = config_.seed;

  // Validate every endpoint before any generation request goes out.
  for (const auto& c : communities) provider_config("aligned", c.name);
  auto base = provider("base");
  auto scorer = provider("scorer");

  for (const auto& c : communities) {
    const Corpus original = read_corpus(dir("curate") / (c.slug + ".jsonl"), c.name);
    auto aligned = provider("aligned", c.name);
    const fs::path ckpt = config_.work_dir / "checkpoints" / c.slug;

    ft.checkpoint_dir = ckpt / "finetuned";
    const Corpus ft_raw = generate_finetuned_corpus(*aligned, c.name, topics, ft);
    cx.checkpoint_dir = ckpt / "context";
    std::vector<std::string> gen_warnings;
    const Corpus cx_raw = generate_context_corpus(*base, original, topics, cx, &gen_warnings);
    if (!gen_warnings.empty()) stage_warnings_.push_back(gen_warnings.front());
    write_corpus(dir("generate") / (c.slug + ".finetuned.raw.jsonl"), ft_raw);
    write_corpus(dir("generate") / (c.slug + ".context.raw.jsonl"), cx_raw);

    FilterStats ft_stats, cx_stats;
    const Corpus ft_kept = filter_synthetic(ft_raw, original, *scorer, fo, &ft_stats);
    const Corpus cx_kept = filter_synthetic(cx_raw, original, *scorer, fo, &cx_stats);
    for (const auto* s : {&ft_stats, &cx_stats}) {
      stage_warnings_.insert(stage_warnings_.end(), s->warnings.begin(), s->warnings.end());
    }
    write_corpus(dir("generate") / (c.slug + ".finetuned.jsonl"), ft_kept);
    write_corpus(dir("generate") / (c.slug + ".context.jsonl"), cx_kept);
    write_json(dir("generate") / (c.slug + ".filter.json"),
               Json{{"finetuned", ft_stats.to_json()}, {"context", cx_stats.to_json()}});
  }
}

void Pipeline::evaluate() {
  require("generate");
  const auto communities = community_list();
  const double threshold = config_.at("evaluate.toxicity_threshold").get<double>();
  const auto bins = config_.at("evaluate.toxicity_bins").get<std::size_t>();
  const auto sim_sample = config_.at("evaluate.similarity_sample").get<std::size_t>();
  auto scorer = provider("scorer");

  std::vector<Corpus> originals, finetuned, context;
  for (const auto& c : communities) {
    originals.push_back(read_corpus(dir("curate") / (c.slug + ".jsonl"), c.name));
    finetuned.push_back(read_corpus(dir("generate") / (c.slug + ".finetuned.jsonl"), c.name));
    context.push_back(read_corpus(dir("generate") / (c.slug + ".context.jsonl"), c.name));
  }

  AlignmentReport report;
  Json emotions = Json::object();
  Json series = Json::object();
  for (std::size_t i = 0; i < communities.size(); ++i) {
    const auto& name = communities[i].name;
    for (const auto* corpus : {&finetuned[i], &context[i]}) {
      if (corpus->size() < 2) {
        throw UserError("'" + name + "' has fewer than 2 filtered synthetic documents; generate more or relax filters");
      }
    }
    CommunityAlignment row;
    row.community = name;
    const auto emb_o = scorer->embed(originals[i].texts());
    row.fid_context = frechet_distance(emb_o, scorer->embed(context[i].texts()));
    row.fid_finetuned = frechet_distance(emb_o, scorer->embed(finetuned[i].texts()));
    const auto emo_o = emotion_profile(originals[i], *scorer);
    const auto emo_c = emotion_profile(context[i], *scorer);
    const auto emo_f = emotion_profile(finetuned[i], *scorer);
    row.emotion_alignment_context = emotional_alignment(emo_o, emo_c);
    row.emotion_alignment_finetuned = emotional_alignment(emo_o, emo_f);
    emotions[name] = Json{{"original", emo_o.to_json()}, {"context", emo_c.to_json()}, {"finetuned", emo_f.to_json()}};
    row.toxicity_original = toxicity_distribution(originals[i], *scorer, threshold, bins);
    row.toxicity_context = toxicity_distribution(context[i], *scorer, threshold, bins);
    row.toxicity_finetuned = toxicity_distribution(finetuned[i], *scorer, threshold, bins);
    report.communities.push_back(std::move(row));

    const RougeIndex vs_original(originals[i].texts());
    Json per_source = Json::object();
    const std::array<std::pair<const char*, const Corpus*>, 3> sources{
        {{"original", &originals[i]}, {"context", &context[i]}, {"finetuned", &finetuned[i]}}};
    for (const auto& [source, corpus] : sources) {
      const auto texts = corpus->texts();
      const RougeIndex within(texts);
      Rng rng = Rng::derive(config_.seed, std::string("similarity:") + name + ":" + source);
      auto picked = rng.sample_indices(texts.size(), sim_sample);
      std::sort(picked.begin(), picked.end());
      std::vector<double> within_scores, original_scores, perplexities;
      for (std::size_t k : picked) within_scores.push_back(within.best_match(texts[k], k).score);
      if (std::string_view(source) != "original") {
        for (std::size_t k : picked) original_scores.push_back(vs_original.best_match(texts[k]).score);
      }
      for (const auto& d : corpus->documents) {
        if (d.perplexity) perplexities.push_back(*d.perplexity);
      }
      per_source[source] = Json{{"within_corpus_similarity", within_scores},
                                {"similarity_vs_original", original_scores},
                                {"perplexity", perplexities}};
    }
    series[name] = per_source;
  }

  const auto origin = train_origin_classifier(originals, config_.at("evaluate.origin_per_community").get<std::size_t>(),
                                              config_.at("evaluate.origin_holdout").get<double>(), config_.seed);
  report.holdout_accuracy = origin.holdout_accuracy;
  auto score_source = [&](const std::vector<Corpus>& corpora, double& macro, double& micro) {
    std::vector<std::string> texts, gold;
    for (const auto& c : corpora) {
      for (const auto& d : c.documents) {
        texts.push_back(d.text);
        gold.push_back(c.community);
      }
    }
    const auto predicted = classify_origin(origin, texts);
    macro = macro_f1(predicted, gold);
    micro = micro_f1(predicted, gold);
  };
  score_source(finetuned, report.macro_f1_finetuned, report.micro_f1_finetuned);
  score_source(context, report.macro_f1_context, report.micro_f1_context);

  Json out = report.to_json();
  out["emotion_profiles"] = emotions;
  write_json(dir("evaluate") / "alignment.json", out);
  write_json(dir("evaluate") / "series.json", series);

  std::vector<std::string> names;
  for (const auto& c : communities) names.push_back(c.name);
  export_demonstrations(origin_classification_demos(origin.holdout_set, names), dir("evaluate") / "origin_demos.jsonl");

  const auto triplets = sample_triplets(context, finetuned, config_.at("evaluate.triplets_per_community").get<std::size_t>(),
                                        config_.seed);
  triplets.write(dir("evaluate") / "triplets.csv", dir("evaluate") / "triplets_key.csv");
  const auto harm = sample_harm_batch(originals, context, finetuned,
                                      config_.at("evaluate.harm_per_source").get<std::size_t>(), config_.seed);
  harm.write(dir("evaluate") / "harm_batch.csv", dir("evaluate") / "harm_batch_key.csv");
  for (const auto* s : {&triplets, &harm}) {
    stage_warnings_.insert(stage_warnings_.end(), s->warnings.begin(), s->warnings.end());
  }
}

void Pipeline::screen() {
  if (!config_.offline && !config_.at("providers.aligned").is_object()) {
    throw UserError("screen needs an aligned endpoint: set providers.aligned or pass --offline");
  }
  require("curate");
  const auto communities = community_list();
  // Every aligned endpoint must be configured before the first request.
  for (const auto& c : communities) provider_config("aligned", c.name);

  const auto qpath = config_.path_at("screen.questionnaire");
  const Questionnaire questionnaire = qpath ? load_questionnaire(*qpath) : swed_questionnaire();
  AdministerOptions opts;
  opts.samples = config_.at("screen.samples").get<std::size_t>();
  opts.seed = config_.seed;
  opts.retry_budget = config_.at("screen.retry_budget").get<std::size_t>();
  opts.params.temperature = config_.at("screen.temperature").get<double>();
  opts.params.max_tokens = config_.at("screen.max_tokens").get<int>();

  std::vector<ScreeningResult> results;
  for (const auto& c : communities) {
    auto aligned = provider("aligned", c.name);
    const ResponseSet responses = administer(*aligned, questionnaire, opts);
    write_json(dir("screen") / (c.slug + ".responses.json"), responses.to_json());
    for (const auto& item : responses.items) {
      if (item.unparsable > 0) {
        stage_warnings_.push_back("'" + c.name + "' " + item.item + ": " + std::to_string(item.unparsable) +
                                  " unparsable responses excluded");
      }
    }
    results.push_back(criteria(c.name, responses.majorities(), questionnaire));
  }
  std::map<std::string, ReferenceRow> references;
  if (const auto ref = config_.path_at("screen.reference")) references = parse_reference_rows(read_json(*ref));
  const ScreeningReport report = screening_report(std::move(results), references);
  report.write_csv(dir("screen") / "screening.csv");
  write_json(dir("screen") / "screening.json", report.to_json());
  report.write_vote_log(dir("screen") / "votes.csv");
}

void Pipeline::report() {
  require("evaluate");
  require("screen");
  const fs::path out = dir("report");
  const Json alignment = read_json(dir("evaluate") / "alignment.json");
  const Json series = read_json(dir("evaluate") / "series.json");
  write_json(out / "alignment.json", alignment);

  std::vector<std::vector<std::string>> bars, tox;
  for (const auto& row : alignment["communities"]) {
    const std::string community = row["community"];
    for (const char* source : {"context", "finetuned"}) {
      bars.push_back({community, "fid", source, num(row[std::string("fid_") + source].get<double>())});
      bars.push_back({community, "emotional_alignment", source,
                      num(row[std::string("emotion_alignment_") + source].get<double>())});
    }
    for (const char* source : {"original", "context", "finetuned"}) {
      const Json& h = row[std::string("toxicity_") + source];
      for (std::size_t b = 0; b < h["counts"].size(); ++b) {
        tox.push_back({community, source, num(h["edges"][b].get<double>()), num(h["edges"][b + 1].get<double>()),
                       std::to_string(h["counts"][b].get<std::size_t>()), num(h["mass"][b].get<double>())});
      }
    }
  }
  write_csv(out / "alignment_bars.csv", {"community", "metric", "source", "value"}, bars);
  write_csv(out / "toxicity_histograms.csv", {"community", "source", "bin_low", "bin_high", "count", "mass"}, tox);

  const Json& oc = alignment["origin_classification"];
  write_csv(out / "origin_classification.csv", {"metric", "source", "value"},
            {{"holdout_accuracy", "original", num(oc["holdout_accuracy"].get<double>())},
             {"macro_f1", "context", num(oc["macro_f1_context"].get<double>())},
             {"macro_f1", "finetuned", num(oc["macro_f1_finetuned"].get<double>())},
             {"micro_f1", "context", num(oc["micro_f1_context"].get<double>())},
             {"micro_f1", "finetuned", num(oc["micro_f1_finetuned"].get<double>())}});

  std::vector<std::vector<std::string>> similarity, perplexity;
  for (const auto& [community, sources] : series.items()) {
    for (const auto& [source, s] : sources.items()) {
      for (const auto& v : s["within_corpus_similarity"]) {
        similarity.push_back({community, source, "within_corpus", num(v.get<double>())});
      }
      for (const auto& v : s["similarity_vs_original"]) {
        similarity.push_back({community, source, "vs_original", num(v.get<double>())});
      }
      for (const auto& v : s["perplexity"]) perplexity.push_back({community, source, num(v.get<double>())});
    }
  }
  write_csv(out / "similarity_distributions.csv", {"community", "source", "measure", "value"}, similarity);
  write_csv(out / "perplexity_distributions.csv", {"community", "source", "perplexity"}, perplexity);

  // Harm categories need two annotators' labels for the harm batch sheet.
  std::vector<std::vector<std::string>> harm_rows;
  Json agreement = Json::object();
  if (const auto labels_path = config_.path_at("report.harm_labels")) {
    AnnotationSheet batch;
    auto sheet = read_csv(dir("evaluate") / "harm_batch.csv");
    auto key = read_csv(dir("evaluate") / "harm_batch_key.csv");
    batch.rows.assign(sheet.begin() + 1, sheet.end());
    batch.key_rows.assign(key.begin() + 1, key.end());
    std::map<std::string, std::pair<std::string, std::string>> labels;
    const auto label_rows = read_csv(*labels_path);
    if (label_rows.empty() || label_rows[0] != std::vector<std::string>{"item", "annotator_a", "annotator_b"}) {
      throw UserError(labels_path->string() + ": expected header item,annotator_a,annotator_b");
    }
    for (std::size_t r = 1; r < label_rows.size(); ++r) {
      if (label_rows[r].size() != 3) throw UserError(labels_path->string() + ": row " + std::to_string(r + 1) + " needs 3 fields");
      labels[label_rows[r][0]] = {label_rows[r][1], label_rows[r][2]};
    }
    std::vector<std::string> a, b;
    for (const auto& row : batch.rows) {
      auto it = labels.find(row.at(0));
      if (it == labels.end()) throw UserError(labels_path->string() + ": no labels for item " + row.at(0));
      a.push_back(it->second.first);
      b.push_back(it->second.second);
    }
    const std::string none = config_.at("report.none_label").get<std::string>();
    for (const auto& [k, count] : harm_category_counts(batch, a, b, none)) {
      harm_rows.push_back({std::get<0>(k), std::get<1>(k), std::get<2>(k), std::to_string(count)});
    }
    agreement["cohens_kappa"] = cohens_kappa(a, b);
    agreement["items"] = a.size();
  } else {
    stage_warnings_.push_back("no harm labels configured (report.harm_labels); harm_categories.csv has no rows");
  }
  write_csv(out / "harm_categories.csv", {"community", "source", "category", "count"}, harm_rows);
  write_json(out / "agreement.json", agreement);

  for (const char* f : {"screening.csv", "screening.json", "votes.csv"}) {
    fs::copy_file(dir("screen") / f, out / (std::string(f) == "votes.csv" ? "screening_votes.csv" : f),
                  fs::copy_options::overwrite_existing);
  }
}

}  // namespace twin
