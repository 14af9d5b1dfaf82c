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

// Rule quality over a finite universe of behaviours. A context asks for a
// set of behaviours, a language can express a set, and a rule covers a set;
// a rule is judged by how far its coverage is from what the context asks
// for and the language can express.

#ifndef UNIRULE_FORMAL_HPP
#define UNIRULE_FORMAL_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace unirule::formal {

/// Subsets are bitmasks over the universe's element order.
using Bits = std::uint32_t;

inline constexpr std::size_t kMaxUniverse = 32;
inline constexpr std::size_t kMaxEnumerable = 20;

class BehaviorUniverse {
 public:
  /// Throws InvalidArgument when empty, larger than 32 or not unique.
  explicit BehaviorUniverse(std::vector<std::string> elements);
  /// Universe of n anonymous behaviours "b0".."b{n-1}".
  static BehaviorUniverse of_size(std::size_t n);

  const std::vector<std::string>& elements() const noexcept { return elements_; }
  std::size_t size() const noexcept { return elements_.size(); }
  std::uint64_t id() const noexcept { return id_; }
  Bits full() const noexcept;

  /// Throws InvalidArgument for names outside the universe.
  Bits subset(const std::vector<std::string>& names) const;
  std::vector<std::string> names(Bits bits) const;
  std::string format(Bits bits) const;  // "{a,b}"

 private:
  std::vector<std::string> elements_;
  std::uint64_t id_ = 0;
};

struct BehaviorSet {
  std::uint64_t universe = 0;
  Bits bits = 0;

  bool operator==(const BehaviorSet&) const = default;
};

struct ToyContext {
  BehaviorSet intent;
};

struct ToyLanguage {
  BehaviorSet expressiveness;
};

struct ToyRule {
  BehaviorSet coverage;
  std::vector<std::string> surface;  // tokens, for lexical similarity

  bool operator==(const ToyRule&) const = default;
};

BehaviorSet make_set(const BehaviorUniverse& u, Bits bits);
ToyContext make_context(const BehaviorUniverse& u, const std::vector<std::string>& intent);
ToyLanguage make_language(const BehaviorUniverse& u, const std::vector<std::string>& expressible);
ToyRule make_rule(const BehaviorUniverse& u, const std::vector<std::string>& coverage,
                  std::vector<std::string> surface = {});

/// Intent the language can express.
BehaviorSet achievable(const ToyContext& c, const ToyLanguage& l);

/// |coverage △ achievable|. Throws UniverseMismatch.
std::size_t discrepancy(const ToyRule& r, const ToyContext& c, const ToyLanguage& l);

struct OptimalClass {
  std::size_t min_discrepancy = 0;
  std::vector<std::size_t> members;  // indexes into the rule space, ascending
};

/// Throws EmptyRuleSpace.
OptimalClass optimal_class(const std::vector<ToyRule>& rule_space, const ToyContext& c, const ToyLanguage& l);

/// discrepancy(r) minus the best discrepancy in the rule space.
std::size_t semantic_distance(const ToyRule& r, const std::vector<ToyRule>& rule_space, const ToyContext& c,
                              const ToyLanguage& l);

struct Decomposition {
  BehaviorSet under;  // achievable but not covered
  BehaviorSet over;   // covered but not achievable
};

Decomposition decompose(const ToyRule& r, const ToyContext& c, const ToyLanguage& l);

/// Every subset of the universe as a rule with no surface. Throws
/// InvalidArgument above 20 elements.
std::vector<ToyRule> all_rules(const BehaviorUniverse& u);

/// Jaccard index of the token sets; 1 when both are empty.
double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b);

/// A case where the closer rule is lexically further from a reference rule
/// that is itself optimal.
struct WitnessInstance {
  BehaviorUniverse universe;
  ToyContext context;
  ToyLanguage language;
  ToyRule reference;
  ToyRule r1;
  ToyRule r2;
};

struct WitnessReport {
  std::size_t d1 = 0;
  std::size_t d2 = 0;
  double sim1 = 0.0;
  double sim2 = 0.0;
  bool reference_optimal = false;
  bool distance_ordered = false;    // d1 < d2
  bool similarity_inverted = false;  // sim1 < sim2

  bool valid() const noexcept { return reference_optimal && distance_ordered && similarity_inverted; }
};

/// Distances are taken against every subset of the instance's universe.
WitnessReport verify_witness(const WitnessInstance& w);

/// The bundled instance built around reads and writes of the password file.
WitnessInstance sim_failure_witness();

/// First witness over a universe of n behaviours and surfaces drawn from an
/// alphabet of alphabet_size tokens, in a fixed scan order. Throws
/// InvalidArgument when none exists or the search space is too large.
WitnessInstance find_witness(std::size_t n, std::size_t alphabet_size);

struct VerificationSummary {
  std::size_t max_universe = 0;
  std::size_t cases = 0;  // (I, E, Cov) triples checked
  std::size_t nonnegative_failures = 0;
  std::size_t zero_iff_optimal_failures = 0;
  std::size_t partition_failures = 0;
  std::size_t monotonicity_failures = 0;

  bool passed() const noexcept {
    return cases > 0 && nonnegative_failures + zero_iff_optimal_failures + partition_failures +
                                monotonicity_failures ==
                            0;
  }
};

/// Checks every intent, expressiveness and coverage subset for universes of
/// 1..max_universe behaviours with the rule space of all subsets.
VerificationSummary verify_exhaustive(std::size_t max_universe);

void print_witness(std::ostream& out, const WitnessInstance& w, const WitnessReport& report);

}  // namespace unirule::formal

#endif  // UNIRULE_FORMAL_HPP
