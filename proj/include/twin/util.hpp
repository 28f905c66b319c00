// SPDX-License-Identifier: Apache-2.0
//
// Small shared helpers: error types, hashing, seeded sampling, text
// tokenization and newline-delimited JSON / CSV file plumbing.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace twin {

using Json = nlohmann::json;

/// Bad input, bad configuration or a violated precondition. Maps to exit code 1.
class UserError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Hashing
// ---------------------------------------------------------------------------

std::uint64_t fnv1a64(std::string_view data, std::uint64_t basis = 0xcbf29ce484222325ULL);

/// Mixes several 64-bit values into one (splitmix64 finalizer chain).
std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b);

std::string hex64(std::uint64_t v);

std::string sha256_hex(std::string_view data);

/// Digest of a file's bytes; throws UserError if unreadable.
std::string sha256_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Seeded sampling
// ---------------------------------------------------------------------------

/// Deterministic generator. Index draws use rejection sampling on the raw
/// engine output so results do not depend on the standard library's
/// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Derives an independent stream for a named sub-task.
  static Rng derive(std::uint64_t seed, std::string_view tag);

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, n). n must be > 0.
  std::size_t index(std::size_t n);

  /// Uniform in [0, 1).
  double uniform();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

  /// k distinct indices from [0, n) in draw order (partial Fisher-Yates).
  std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k);

 private:
  std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// Text
// ---------------------------------------------------------------------------

std::string to_lower_ascii(std::string_view s);
std::string_view trim(std::string_view s);
std::vector<std::string> split_whitespace(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

/// Calls `fn(line_number, record)` for each non-blank line. Parse failures
/// raise UserError naming the file and 1-based line.
void read_jsonl(const std::filesystem::path& path,
                const std::function<void(std::size_t, const Json&)>& fn);

/// Writes through a temporary file and renames, so readers never observe a
/// half-written output.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

std::string csv_escape(std::string_view field);

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

/// Minimal RFC 4180 reader (quoted fields, doubled quotes, embedded newlines).
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path);

/// Fixed-precision decimal formatting used in tables and reports.
std::string format_fixed(double v, int precision);

}  // namespace twin
