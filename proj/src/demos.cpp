// SPDX-License-Identifier: Apache-2.0

#include "twin/demos.hpp"

#include <fstream>

namespace twin {

const std::array<std::string_view, 20>& instruction_pool() {
  static const std::array<std::string_view, 20> pool = {
      "What would you tweet?",
      "What tweet would you send out?",
      "What's your tweet today?",
      "What would you want to tweet about?",
      "What's on your mind to tweet?",
      "What tweet would you drop?",
      "What would you say?",
      "What's your tweet?",
      "Tweet something.",
      "Share your thought with a tweet.",
      "What kind of tweet would you send out to engage with fellow members?",
      "Draft a tweet that captures the interests and spirit of the community.",
      "Craft a relatable tweet that resonates with members.",
      "Share a tweet that sparks conversation on relevant topics.",
      "Compose a tweet that reflects the shared voice and passions.",
      "Author an insightful tweet that inspires dialogue among members.",
      "Tweet something that provokes intellectual discourse.",
      "Tweet an observation or perspective that contributes meaningfully.",
      "Craft a tweet that elevates the ongoing conversations.",
      "Compose a tweet that encourages enriching engagement.",
  };
  return pool;
}

Json Demonstration::to_json() const { return Json{{"instruction", instruction}, {"input", input}, {"output", output}}; }

Demonstration Demonstration::from_json(const Json& j) {
  if (!j.is_object()) throw UserError("demonstration record must be an object");
  for (const char* field : {"instruction", "output"}) {
    if (!j.contains(field) || !j[field].is_string()) {
      throw UserError(std::string("demonstration record missing string field '") + field + "'");
    }
  }
  Demonstration d;
  d.instruction = j["instruction"].get<std::string>();
  d.output = j["output"].get<std::string>();
  if (j.contains("input")) {
    if (!j["input"].is_string()) throw UserError("demonstration field 'input' must be a string");
    d.input = j["input"].get<std::string>();
  }
  return d;
}

std::vector<Demonstration> build_demonstrations(const Corpus& corpus, std::uint64_t seed) {
  const auto& pool = instruction_pool();
  Rng rng = Rng::derive(seed, "demonstrations:" + corpus.community);
  std::vector<Demonstration> out;
  out.reserve(corpus.size());
  for (const auto& doc : corpus.documents) {
    out.push_back({std::string(pool[rng.index(pool.size())]), "", doc.text});
  }
  return out;
}

std::vector<Demonstration> augment_with_general(std::vector<Demonstration> demos,
                                                const std::filesystem::path& general_path) {
  auto general = import_demonstrations(general_path);
  demos.insert(demos.end(), std::make_move_iterator(general.begin()), std::make_move_iterator(general.end()));
  return demos;
}

void export_demonstrations(const std::vector<Demonstration>& demos, const std::filesystem::path& path) {
  std::string out;
  for (const auto& d : demos) {
    out += d.to_json().dump();
    out += '\n';
  }
  try {
    write_file_atomic(path, out);
  } catch (const std::exception& e) {
    throw UserError("cannot export demonstrations to " + path.string() + ": " + e.what());
  }
}

std::vector<Demonstration> import_demonstrations(const std::filesystem::path& path) {
  std::vector<Demonstration> out;
  read_jsonl(path, [&](std::size_t line, const Json& j) {
    try {
      out.push_back(Demonstration::from_json(j));
    } catch (const UserError& e) {
      throw UserError(path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  });
  return out;
}

}  // namespace twin
