// SPDX-License-Identifier: Apache-2.0
//
// Instruction-tuning demonstrations built from curated community posts.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "twin/corpus.hpp"

namespace twin {

/// The 20 tweet-generation instructions, index 1..20 in pool order.
const std::array<std::string_view, 20>& instruction_pool();

struct Demonstration {
  std::string instruction;
  std::string input;
  std::string output;

  bool operator==(const Demonstration&) const = default;
  Json to_json() const;
  static Demonstration from_json(const Json& j);
};

/// One demonstration per document: a seeded uniform draw from the pool paired
/// with the verbatim document text.
std::vector<Demonstration> build_demonstrations(const Corpus& corpus, std::uint64_t seed);

/// Appends the general-purpose instruction set read from `general_path`
/// (same record format); community demonstrations stay first.
std::vector<Demonstration> augment_with_general(std::vector<Demonstration> demos,
                                                const std::filesystem::path& general_path);

void export_demonstrations(const std::vector<Demonstration>& demos, const std::filesystem::path& path);
std::vector<Demonstration> import_demonstrations(const std::filesystem::path& path);

}  // namespace twin
