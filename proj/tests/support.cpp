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

#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <tuple>

namespace unirule::testing {

std::vector<arena::PairwiseJudgment> simulate_bt(const std::vector<std::string>& methods,
                                                 const std::vector<double>& xi, std::size_t per_pair,
                                                 Rng& rng) {
  std::vector<arena::PairwiseJudgment> out;
  std::size_t serial = 0;
  for (std::size_t i = 0; i < methods.size(); ++i) {
    for (std::size_t j = i + 1; j < methods.size(); ++j) {
      const double p = 1.0 / (1.0 + std::exp(xi[j] - xi[i]));
      for (std::size_t n = 0; n < per_pair; ++n) {
        arena::PairwiseJudgment jd;
        jd.scenario = {corpus::RuleLanguage::splunk(), contexts::ContextType::Context};
        jd.instance_id = "sim/" + std::to_string(serial++);
        jd.method_a = methods[i];
        jd.method_b = methods[j];
        jd.outcome = rng.bernoulli(p) ? arena::Outcome::A : arena::Outcome::B;
        jd.judge_id = "sim";
        out.push_back(std::move(jd));
      }
    }
  }
  return out;
}

kb::SemanticIndex discrete_index(std::size_t n, std::size_t dim, kb::SemanticDimension space, Rng& rng) {
  std::vector<std::size_t> serials(n);
  for (std::size_t i = 0; i < n; ++i) serials[i] = i;
  rng.shuffle(serials);
  const auto& languages = corpus::builtin_languages();
  std::vector<kb::SemanticIndexEntry> entries;
  for (std::size_t i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "rule-%05zu", serials[i]);
    kb::SemanticIndexEntry e;
    e.vector = discrete_query(dim, rng);
    e.language = languages[i % languages.size()];
    e.rule.id = id;
    e.rule.language = e.language;
    e.rule.title = id;
    e.rule.source_text = std::string("source of ") + id;
    e.description = {id, space, std::string("summary ") + id, std::string("text ") + id};
    entries.push_back(std::move(e));
  }
  return kb::SemanticIndex(space, dim, std::move(entries));
}

std::vector<float> discrete_query(std::size_t dim, Rng& rng) {
  std::vector<float> v(dim, 0.0f);
  while (std::all_of(v.begin(), v.end(), [](float x) { return x == 0.0f; })) {
    for (auto& x : v) x = static_cast<float>(static_cast<int>(rng.below(3)) - 1);
  }
  return v;
}

std::vector<std::string> brute_force_top_k(const kb::SemanticIndex& index, const std::vector<double>& q,
                                           std::size_t k,
                                           const std::optional<corpus::RuleLanguage>& language) {
  std::vector<std::tuple<double, std::string>> scored;
  for (const auto& e : index.entries()) {
    if (language && e.language != *language) continue;
    double s = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) s += static_cast<double>(e.vector[i]) * q[i];
    scored.emplace_back(-s, e.rule.id);
  }
  std::sort(scored.begin(), scored.end());
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < scored.size() && i < k; ++i) ids.push_back(std::get<1>(scored[i]));
  return ids;
}

double kappa_from_table(const std::vector<std::vector<double>>& table) {
  const std::size_t k = table.size();
  double n = 0.0, diag = 0.0;
  std::vector<double> rows(k, 0.0), cols(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      n += table[i][j];
      rows[i] += table[i][j];
      cols[j] += table[i][j];
    }
    diag += table[i][i];
  }
  double pe = 0.0;
  for (std::size_t i = 0; i < k; ++i) pe += rows[i] * cols[i] / (n * n);
  return (diag / n - pe) / (1.0 - pe);
}

}  // namespace unirule::testing
