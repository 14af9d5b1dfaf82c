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

#include <algorithm>
#include <bit>
#include <iterator>
#include <set>
#include <sstream>

#include <doctest.h>

#include "unirule/error.hpp"
#include "unirule/formal.hpp"
#include "unirule/util.hpp"

using namespace unirule;
using namespace unirule::formal;

namespace {

template <typename F>
Errc error_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::InvalidArgument;
}

// Set-of-names reference for the discrepancy.
std::size_t reference_discrepancy(const std::set<std::string>& intent, const std::set<std::string>& expressible,
                                  const std::set<std::string>& coverage) {
  std::set<std::string> target, diff;
  std::set_intersection(intent.begin(), intent.end(), expressible.begin(), expressible.end(),
                        std::inserter(target, target.end()));
  std::set_symmetric_difference(coverage.begin(), coverage.end(), target.begin(), target.end(),
                                std::inserter(diff, diff.end()));
  return diff.size();
}

std::vector<std::string> random_subset(const std::vector<std::string>& all, Rng& rng) {
  std::vector<std::string> out;
  for (const auto& e : all) {
    if (rng.bernoulli(0.5)) out.push_back(e);
  }
  return out;
}

}  // namespace

TEST_SUITE("formal") {

TEST_CASE("universe construction") {
  BehaviorUniverse u({"read", "write", "exec"});
  CHECK(u.full() == 0b111u);
  CHECK(u.subset({"exec", "read"}) == 0b101u);
  CHECK(u.names(0b110) == std::vector<std::string>{"write", "exec"});
  CHECK(u.format(0b011) == "{read,write}");
  CHECK(error_of([&] { u.subset({"delete"}); }) == Errc::InvalidArgument);
  CHECK(error_of([] { BehaviorUniverse({}); }) == Errc::InvalidArgument);
  CHECK(error_of([] { BehaviorUniverse({"a", "a"}); }) == Errc::InvalidArgument);
  CHECK(error_of([] { BehaviorUniverse::of_size(33); }) == Errc::InvalidArgument);
  CHECK(BehaviorUniverse::of_size(32).full() == 0xffffffffu);
  CHECK(BehaviorUniverse::of_size(4).id() != BehaviorUniverse::of_size(5).id());
}

TEST_CASE("discrepancy agrees with set arithmetic") {
  Rng rng(17);
  for (int trial = 0; trial < 500; ++trial) {
    const auto n = 1 + rng.below(10);
    const auto u = BehaviorUniverse::of_size(n);
    const auto intent = random_subset(u.elements(), rng);
    const auto expressible = random_subset(u.elements(), rng);
    const auto coverage = random_subset(u.elements(), rng);
    const auto c = make_context(u, intent);
    const auto l = make_language(u, expressible);
    const auto r = make_rule(u, coverage);
    const auto expected = reference_discrepancy({intent.begin(), intent.end()},
                                                {expressible.begin(), expressible.end()},
                                                {coverage.begin(), coverage.end()});
    REQUIRE(discrepancy(r, c, l) == expected);
    const auto parts = decompose(r, c, l);
    CHECK((parts.under.bits & parts.over.bits) == 0u);
    CHECK(static_cast<std::size_t>(std::popcount(parts.under.bits | parts.over.bits)) == expected);
  }
}

TEST_CASE("mixed universes are rejected") {
  const auto a = BehaviorUniverse::of_size(3);
  const auto b = BehaviorUniverse::of_size(4);
  CHECK(error_of([&] {
          discrepancy(make_rule(a, {"b0"}), make_context(b, {"b0"}), make_language(b, {"b0"}));
        }) == Errc::UniverseMismatch);
  CHECK(error_of([&] { optimal_class({}, make_context(a, {}), make_language(a, {})); }) == Errc::EmptyRuleSpace);
}

TEST_CASE("distance is zero exactly on the optimal class") {
  Rng rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    const auto u = BehaviorUniverse::of_size(1 + rng.below(4));
    const auto c = make_context(u, random_subset(u.elements(), rng));
    const auto l = make_language(u, random_subset(u.elements(), rng));
    std::vector<ToyRule> space;
    const auto size = 1 + rng.below(6);
    for (std::size_t i = 0; i < size; ++i) space.push_back(make_rule(u, random_subset(u.elements(), rng)));
    const auto best = optimal_class(space, c, l);
    for (std::size_t i = 0; i < space.size(); ++i) {
      const bool member = std::find(best.members.begin(), best.members.end(), i) != best.members.end();
      CHECK((semantic_distance(space[i], space, c, l) == 0) == member);
      CHECK(discrepancy(space[i], c, l) >= best.min_discrepancy);
    }
  }
}

TEST_CASE("all subsets as a rule space") {
  const auto u = BehaviorUniverse::of_size(4);
  CHECK(all_rules(u).size() == 16);
  CHECK(error_of([] { all_rules(BehaviorUniverse::of_size(21)); }) == Errc::InvalidArgument);
}

TEST_CASE("jaccard") {
  CHECK(jaccard({}, {}) == 1.0);
  CHECK(jaccard({"a"}, {}) == 0.0);
  CHECK(jaccard({"a", "b"}, {"b", "c"}) == doctest::Approx(1.0 / 3.0));
  CHECK(jaccard({"a", "a", "b"}, {"a", "b"}) == 1.0);
}

TEST_CASE("bundled witness holds") {
  const auto w = sim_failure_witness();
  const auto report = verify_witness(w);
  CHECK(report.valid());
  CHECK(report.d1 < report.d2);
  CHECK(report.sim1 < report.sim2);
  std::ostringstream out;
  print_witness(out, w, report);
  CHECK(out.str().find("PASS") != std::string::npos);
}

TEST_CASE("searched witness holds") {
  const auto w = find_witness(3, 3);
  CHECK(verify_witness(w).valid());
  CHECK(error_of([] { find_witness(0, 3); }) == Errc::InvalidArgument);
}

TEST_CASE("exhaustive verification counts every triple") {
  const auto summary = verify_exhaustive(3);
  CHECK(summary.passed());
  CHECK(summary.max_universe == 3);
  CHECK(summary.cases == 8u + 64u + 512u);
}

}  // TEST_SUITE
