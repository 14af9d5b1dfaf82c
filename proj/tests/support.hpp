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

// Helpers shared by the unit tests and the acceptance runner.

#ifndef UNIRULE_TESTS_SUPPORT_HPP
#define UNIRULE_TESTS_SUPPORT_HPP

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "unirule/arena.hpp"
#include "unirule/llm.hpp"
#include "unirule/semantic_kb.hpp"
#include "unirule/util.hpp"

namespace unirule::testing {

namespace fs = std::filesystem;

inline fs::path fixtures() { return fs::path(UNIRULE_FIXTURE_DIR); }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "unirule") {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = fs::temp_directory_path() /
            (tag + "-" + std::to_string(stamp) + "-" + std::to_string(counter.fetch_add(1)));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

struct MockSetup {
  std::shared_ptr<llm::MockProvider> provider;
  std::unique_ptr<llm::Gateway> gateway;
};

/// Mock provider answering every pipeline prompt with the built-in replies.
inline MockSetup mock_gateway(std::size_t parallel = 4) {
  MockSetup s;
  s.provider = std::make_shared<llm::MockProvider>();
  s.provider->set_fallback(llm::default_mock_reply);
  llm::ProviderConfig config;
  config.max_parallel_requests = parallel;
  config.backoff_initial = 0.001;
  config.backoff_max = 0.002;
  s.gateway = std::make_unique<llm::Gateway>(config, s.provider);
  return s;
}

/// `count` judgments of a over b with the given outcome, in one scenario.
inline std::vector<arena::PairwiseJudgment> judgments(const std::string& a, const std::string& b,
                                                      arena::Outcome outcome, std::size_t count,
                                                      const std::string& scenario_language = "splunk") {
  std::vector<arena::PairwiseJudgment> out;
  for (std::size_t i = 0; i < count; ++i) {
    arena::PairwiseJudgment j;
    j.scenario = {corpus::RuleLanguage(scenario_language), contexts::ContextType::Context};
    j.instance_id = scenario_language + "/context/r" + std::to_string(out.size());
    j.method_a = a;
    j.method_b = b;
    j.presented_order = i % 2 ? "ba" : "ab";
    j.outcome = outcome;
    j.judge_id = "test";
    out.push_back(j);
  }
  return out;
}

inline void append(std::vector<arena::PairwiseJudgment>& to, const std::vector<arena::PairwiseJudgment>& from) {
  to.insert(to.end(), from.begin(), from.end());
}

/// Judgments drawn from the Bradley-Terry model with strengths xi: method i
/// beats j with probability 1 / (1 + exp(xi_j - xi_i)). No ties.
std::vector<arena::PairwiseJudgment> simulate_bt(const std::vector<std::string>& methods,
                                                 const std::vector<double>& xi, std::size_t per_pair,
                                                 Rng& rng);

/// n entries whose vectors have components in {-1, 0, 1}, so many scores tie
/// exactly. Ids are "rule-NNNNN" in shuffled order; languages cycle through
/// the three built-ins.
kb::SemanticIndex discrete_index(std::size_t n, std::size_t dim, kb::SemanticDimension space, Rng& rng);

/// Random nonzero query with components in {-1, 0, 1}.
std::vector<float> discrete_query(std::size_t dim, Rng& rng);

/// Reference top-k ids: score every entry, full sort by score descending then
/// id ascending, keep the first k.
std::vector<std::string> brute_force_top_k(const kb::SemanticIndex& index, const std::vector<double>& unit_query,
                                           std::size_t k,
                                           const std::optional<corpus::RuleLanguage>& language);

/// Reference kappa computed from the contingency table.
double kappa_from_table(const std::vector<std::vector<double>>& table);

}  // namespace unirule::testing

#endif  // UNIRULE_TESTS_SUPPORT_HPP
