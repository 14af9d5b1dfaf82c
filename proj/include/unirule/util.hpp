// Copyright 2026 The UniRule Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef UNIRULE_UTIL_HPP
#define UNIRULE_UTIL_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace unirule {

using json = nlohmann::json;

std::string sha256_hex(std::string_view data);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// Packs floats as little-endian IEEE-754 bytes and base64-encodes them.
std::string encode_f32(std::span<const float> values);
std::vector<float> decode_f32(std::string_view text);

/// Platform-independent 64-bit hash (FNV-1a followed by a splitmix finalizer).
/// Used wherever a seed must be derived from text; std::hash is not stable
/// across standard libraries.
std::uint64_t stable_hash(std::string_view text);
std::uint64_t mix_seed(std::uint64_t seed, std::string_view salt);

/// Seeded generator whose draws do not depend on the standard library's
/// distribution implementations, so seeded outputs are portable.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound);
  /// Uniform double in [0, 1).
  double uniform();
  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

std::string trim(std::string_view text);
std::vector<std::string> split_whitespace(std::string_view text);
std::string to_lower(std::string_view text);

std::string read_file(const std::filesystem::path& path);
/// Writes via a temporary sibling and rename, so readers never see a partial
/// file.
void write_file(const std::filesystem::path& path, std::string_view data);

std::vector<json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<json>& rows);

/// Runs body(i) for i in [0, count) on up to `threads` workers. The first
/// exception thrown by any body is rethrown after all workers finish.
void parallel_for(std::size_t count, std::size_t threads,
                  const std::function<void(std::size_t)>& body);

/// Seconds since the epoch, honouring SOURCE_DATE_EPOCH for reproducible runs.
std::int64_t now_epoch_seconds();

}  // namespace unirule

#endif  // UNIRULE_UTIL_HPP
