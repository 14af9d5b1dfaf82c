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

// Pairwise evaluation: blind LLM judging of rule pairs, Bradley-Terry
// strengths with robust standard errors, and inter-rater agreement.

#ifndef UNIRULE_ARENA_HPP
#define UNIRULE_ARENA_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "unirule/agent.hpp"
#include "unirule/contexts.hpp"
#include "unirule/corpus.hpp"
#include "unirule/llm.hpp"

namespace unirule::arena {

enum class Outcome { A, B, Tie };

std::string_view to_string(Outcome outcome);
Outcome outcome_from_string(std::string_view text);

struct Scenario {
  corpus::RuleLanguage language;
  contexts::ContextType context_type = contexts::ContextType::Context;

  std::string key() const;  // "<language>/<type>"
  auto operator<=>(const Scenario&) const = default;
};

struct PairwiseJudgment {
  Scenario scenario;
  std::string instance_id;
  std::string method_a;
  std::string method_b;
  std::string presented_order = "ab";  // "ab": a was shown first
  Outcome outcome = Outcome::Tie;
  std::string judge_id;
  std::int64_t timestamp = 0;

  /// Throws InvalidArgument for equal methods or a bad order.
  void validate() const;
  bool operator==(const PairwiseJudgment&) const = default;
};

json to_json(const PairwiseJudgment& j);
PairwiseJudgment judgment_from_json(const json& j);
void save_judgments(const std::filesystem::path& path, const std::vector<PairwiseJudgment>& judgments);
std::vector<PairwiseJudgment> load_judgments(const std::filesystem::path& path);

/// All unordered pairs (i < j) in input order. Throws TooFewMethods below 2.
std::vector<std::pair<std::string, std::string>> enumerate_pairs(const std::vector<std::string>& methods);

enum class Verdict { First, Second, Tie };

/// Reads the last "VERDICT: FIRST|SECOND|TIE" line, or a reply that is just
/// the bare word.
std::optional<Verdict> parse_verdict(std::string_view reply);

/// Maps a positional verdict back to the a/b candidates.
Outcome unscramble(Verdict verdict, std::string_view presented_order);

struct JudgeRequest {
  Scenario scenario;
  std::string instance_id;
  std::string context_text;
  std::string method_a;
  std::string rule_a;
  std::string method_b;
  std::string rule_b;
};

/// Presents both rules anonymously in seeded random order. Throws
/// UnparseableVerdict when the reply and one reprompt carry no verdict.
PairwiseJudgment judge_pair(const JudgeRequest& request, llm::Gateway& gateway, std::uint64_t seed);

/// Judges every method pair of every instance with a successful trace for
/// both methods. Output is in instance order, then pair order.
std::vector<PairwiseJudgment> judge_traces(const std::vector<agent::GenerationTrace>& traces,
                                           const std::vector<std::string>& methods, llm::Gateway& gateway,
                                           std::uint64_t seed, std::size_t threads);

// ---------------------------------------------------------------------------
// Bradley-Terry

struct WinMatrix {
  std::vector<std::string> methods;
  std::vector<std::vector<double>> w;  // w[i][j]: wins of i over j, ties count half

  std::size_t size() const noexcept { return methods.size(); }
  /// Throws InconsistentMethods for names not in the matrix.
  std::size_t index_of(std::string_view method) const;
  double total() const;
};

/// Methods default to the sorted set of names in the judgments. Throws
/// InconsistentMethods when a judgment names a method outside the list.
WinMatrix build_win_matrix(const std::vector<PairwiseJudgment>& judgments,
                           std::vector<std::string> methods = {});

/// Negative log-likelihood over all coordinates.
double nll(const WinMatrix& m, const std::vector<double>& xi);
std::vector<double> gradient(const WinMatrix& m, const std::vector<double>& xi);
std::vector<std::vector<double>> hessian(const WinMatrix& m, const std::vector<double>& xi);

/// Same likelihood, summed one judgment at a time with ties as y = 0.5.
double nll_from_judgments(const std::vector<PairwiseJudgment>& judgments, const std::vector<std::string>& methods,
                          const std::vector<double>& xi);

struct FitOptions {
  double tolerance = 1e-8;  // gradient infinity norm
  int max_iterations = 200;
};

struct BTFit {
  std::vector<std::string> methods;
  std::string anchor;
  std::vector<double> xi;
  std::vector<double> se;  // empty until computed
  std::vector<double> ci_low;
  std::vector<double> ci_high;
  bool converged = false;
  double gradient_norm = 0.0;
  int iterations = 0;

  std::size_t index_of(std::string_view method) const;
  bool significant(std::size_t i) const { return !ci_low.empty() && (ci_low[i] > 0.0 || ci_high[i] < 0.0); }
};

/// Damped Newton on the coordinates other than the anchor. Throws
/// DisconnectedGraph when some method is not compared through a chain to the
/// anchor and NonConvergence when the likelihood has no finite maximum or
/// the iteration cap is reached.
BTFit fit_bt(const WinMatrix& matrix, std::string_view anchor, const FitOptions& options = {});

/// H^-1 S H^-1 on the free coordinates; the anchor gets 0. Throws
/// SingularHessian.
std::vector<double> sandwich_se(const BTFit& fit, const std::vector<PairwiseJudgment>& judgments);
/// sqrt(diag(H^-1)), for comparison.
std::vector<double> hessian_se(const BTFit& fit, const WinMatrix& matrix);

inline constexpr double kZ95 = 1.96;

/// Sets se and the 95% interval.
void attach_intervals(BTFit& fit, std::vector<double> se);

/// build_win_matrix, fit_bt, sandwich_se and attach_intervals in one call.
BTFit fit_judgments(const std::vector<PairwiseJudgment>& judgments, std::string_view anchor,
                    std::vector<std::string> methods = {}, const FitOptions& options = {});

// ---------------------------------------------------------------------------
// Agreement

/// Chance-corrected agreement over aligned labels. Throws LengthMismatch and
/// DegenerateMarginals.
double cohens_kappa(const std::vector<std::string>& x, const std::vector<std::string>& y);
double cohens_kappa(const std::vector<Outcome>& x, const std::vector<Outcome>& y);

struct AgreementResult {
  std::size_t matched = 0;
  double agreement = 0.0;
  std::optional<double> kappa;
  std::optional<std::string> error;
};

/// Aligns two judgment sets on (instance_id, unordered method pair).
AgreementResult judgment_agreement(const std::vector<PairwiseJudgment>& x, const std::vector<PairwiseJudgment>& y);

// ---------------------------------------------------------------------------
// Reports

struct PositionBias {
  std::size_t decisive = 0;
  std::size_t first_wins = 0;
  double first_share = 0.5;
  bool warning = false;
};

PositionBias position_bias(const std::vector<PairwiseJudgment>& judgments);

struct ReportCell {
  std::string group;  // scenario, language, context_type or overall
  std::string key;
  std::size_t judgments = 0;
  std::optional<BTFit> fit;
  std::optional<std::string> error;
};

struct ScenarioReport {
  std::string anchor;
  std::vector<std::string> methods;
  std::vector<ReportCell> cells;
  PositionBias bias;
};

/// One fit per scenario, per language and per context type with judgments
/// pooled, plus one over everything. A failing cell records its error.
ScenarioReport scenario_report(const std::vector<PairwiseJudgment>& judgments, std::string_view anchor,
                               std::vector<std::string> methods = {});

json to_json(const ScenarioReport& report);
/// scenario,method,xi,se,ci_low,ci_high,significant
std::string to_csv(const ScenarioReport& report);

}  // namespace unirule::arena

#endif  // UNIRULE_ARENA_HPP
