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

#include "unirule/formal.hpp"

#include <algorithm>
#include <bit>
#include <iomanip>
#include <ostream>
#include <set>

#include "unirule/error.hpp"
#include "unirule/util.hpp"

namespace unirule::formal {

BehaviorUniverse::BehaviorUniverse(std::vector<std::string> elements) : elements_(std::move(elements)) {
  if (elements_.empty()) throw Error(Errc::InvalidArgument, "behaviour universe is empty");
  if (elements_.size() > kMaxUniverse) {
    throw Error(Errc::InvalidArgument, "behaviour universe exceeds " + std::to_string(kMaxUniverse) + " elements");
  }
  std::set<std::string> unique(elements_.begin(), elements_.end());
  if (unique.size() != elements_.size()) throw Error(Errc::InvalidArgument, "behaviour names must be unique");
  std::string material;
  for (const auto& e : elements_) {
    material += e;
    material += '\0';
  }
  id_ = stable_hash(material);
}

BehaviorUniverse BehaviorUniverse::of_size(std::size_t n) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i) names.push_back("b" + std::to_string(i));
  return BehaviorUniverse(std::move(names));
}

Bits BehaviorUniverse::full() const noexcept {
  return size() == 32 ? ~Bits{0} : (Bits{1} << size()) - 1;
}

Bits BehaviorUniverse::subset(const std::vector<std::string>& names) const {
  Bits bits = 0;
  for (const auto& name : names) {
    const auto it = std::find(elements_.begin(), elements_.end(), name);
    if (it == elements_.end()) throw Error(Errc::InvalidArgument, "'" + name + "' is not in the universe");
    bits |= Bits{1} << (it - elements_.begin());
  }
  return bits;
}

std::vector<std::string> BehaviorUniverse::names(Bits bits) const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < size(); ++i) {
    if (bits & (Bits{1} << i)) out.push_back(elements_[i]);
  }
  return out;
}

std::string BehaviorUniverse::format(Bits bits) const {
  std::string out = "{";
  const auto list = names(bits);
  for (std::size_t i = 0; i < list.size(); ++i) out += (i ? "," : "") + list[i];
  return out + "}";
}

BehaviorSet make_set(const BehaviorUniverse& u, Bits bits) {
  if (bits & ~u.full()) throw Error(Errc::InvalidArgument, "subset has bits outside the universe");
  return {u.id(), bits};
}

ToyContext make_context(const BehaviorUniverse& u, const std::vector<std::string>& intent) {
  return {make_set(u, u.subset(intent))};
}

ToyLanguage make_language(const BehaviorUniverse& u, const std::vector<std::string>& expressible) {
  return {make_set(u, u.subset(expressible))};
}

ToyRule make_rule(const BehaviorUniverse& u, const std::vector<std::string>& coverage,
                  std::vector<std::string> surface) {
  return {make_set(u, u.subset(coverage)), std::move(surface)};
}

namespace {

void same_universe(const BehaviorSet& a, const BehaviorSet& b) {
  if (a.universe != b.universe) throw Error(Errc::UniverseMismatch, "sets come from different universes");
}

}  // namespace

BehaviorSet achievable(const ToyContext& c, const ToyLanguage& l) {
  same_universe(c.intent, l.expressiveness);
  return {c.intent.universe, c.intent.bits & l.expressiveness.bits};
}

std::size_t discrepancy(const ToyRule& r, const ToyContext& c, const ToyLanguage& l) {
  const auto target = achievable(c, l);
  same_universe(r.coverage, target);
  return static_cast<std::size_t>(std::popcount(r.coverage.bits ^ target.bits));
}

OptimalClass optimal_class(const std::vector<ToyRule>& rule_space, const ToyContext& c, const ToyLanguage& l) {
  if (rule_space.empty()) throw Error(Errc::EmptyRuleSpace, "rule space is empty");
  OptimalClass best;
  best.min_discrepancy = static_cast<std::size_t>(-1);
  for (std::size_t i = 0; i < rule_space.size(); ++i) {
    const auto d = discrepancy(rule_space[i], c, l);
    if (d < best.min_discrepancy) {
      best.min_discrepancy = d;
      best.members.clear();
    }
    if (d == best.min_discrepancy) best.members.push_back(i);
  }
  return best;
}

std::size_t semantic_distance(const ToyRule& r, const std::vector<ToyRule>& rule_space, const ToyContext& c,
                              const ToyLanguage& l) {
  const auto best = optimal_class(rule_space, c, l);
  const auto d = discrepancy(r, c, l);
  // A rule outside the space can beat it; distances are clamped at zero.
  return d > best.min_discrepancy ? d - best.min_discrepancy : 0;
}

Decomposition decompose(const ToyRule& r, const ToyContext& c, const ToyLanguage& l) {
  const auto target = achievable(c, l);
  same_universe(r.coverage, target);
  return {{target.universe, target.bits & ~r.coverage.bits}, {target.universe, r.coverage.bits & ~target.bits}};
}

std::vector<ToyRule> all_rules(const BehaviorUniverse& u) {
  if (u.size() > kMaxEnumerable) {
    throw Error(Errc::InvalidArgument, "enumeration is limited to " + std::to_string(kMaxEnumerable) +
                                           " behaviours; pass an explicit rule space");
  }
  std::vector<ToyRule> out;
  out.reserve(std::size_t{1} << u.size());
  for (Bits bits = 0; bits <= u.full(); ++bits) out.push_back({{u.id(), bits}, {}});
  return out;
}

double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const std::set<std::string> sa(a.begin(), a.end());
  const std::set<std::string> sb(b.begin(), b.end());
  if (sa.empty() && sb.empty()) return 1.0;
  std::size_t common = 0;
  for (const auto& t : sa) common += sb.count(t);
  return static_cast<double>(common) / static_cast<double>(sa.size() + sb.size() - common);
}

WitnessReport verify_witness(const WitnessInstance& w) {
  const auto space = all_rules(w.universe);
  WitnessReport report;
  report.d1 = semantic_distance(w.r1, space, w.context, w.language);
  report.d2 = semantic_distance(w.r2, space, w.context, w.language);
  report.sim1 = jaccard(w.r1.surface, w.reference.surface);
  report.sim2 = jaccard(w.r2.surface, w.reference.surface);
  report.reference_optimal = semantic_distance(w.reference, space, w.context, w.language) == 0;
  report.distance_ordered = report.d1 < report.d2;
  report.similarity_inverted = report.sim1 < report.sim2;
  return report;
}

WitnessInstance sim_failure_witness() {
  BehaviorUniverse u({"passwd_read", "passwd_write", "shadow_read", "network_scan"});
  auto context = make_context(u, {"passwd_read"});
  auto language = make_language(u, u.elements());
  auto reference = make_rule(u, {"passwd_read"}, split_whitespace("file == /etc/passwd and action == read"));
  // Same behaviour, written against syscall fields: optimal yet no shared tokens.
  auto r1 = make_rule(u, {"passwd_read"}, split_whitespace("syscall=openat path=/etc/passwd flags=O_RDONLY"));
  // One word away from the reference, but it watches writes instead of reads.
  auto r2 = make_rule(u, {"passwd_write"}, split_whitespace("file == /etc/passwd and action == write"));
  return {std::move(u), context, language, std::move(reference), std::move(r1), std::move(r2)};
}

WitnessInstance find_witness(std::size_t n, std::size_t alphabet_size) {
  if (n == 0 || n > 8 || alphabet_size == 0 || alphabet_size > 8) {
    throw Error(Errc::InvalidArgument, "witness search supports 1..8 behaviours and 1..8 tokens");
  }
  const auto u = BehaviorUniverse::of_size(n);
  std::vector<std::string> alphabet;
  for (std::size_t i = 0; i < alphabet_size; ++i) alphabet.push_back("t" + std::to_string(i));
  const auto tokens = [&](Bits mask) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < alphabet_size; ++i) {
      if (mask & (Bits{1} << i)) out.push_back(alphabet[i]);
    }
    return out;
  };
  const auto sim = [](Bits a, Bits b) {
    const int uni = std::popcount(a | b);
    return uni == 0 ? 1.0 : static_cast<double>(std::popcount(a & b)) / uni;
  };

  // Context asks for the first half of the universe; the language is complete.
  const Bits intent = (Bits{1} << std::max<std::size_t>(1, n / 2)) - 1;
  const Bits target = intent;
  const Bits cov_max = u.full();
  const Bits surf_max = (Bits{1} << alphabet_size) - 1;
  for (Bits ref_surface = 1; ref_surface <= surf_max; ++ref_surface) {
    for (Bits c1 = 0; c1 <= cov_max; ++c1) {
      const int d1 = std::popcount(c1 ^ target);
      for (Bits s1 = 0; s1 <= surf_max; ++s1) {
        const double sim1 = sim(s1, ref_surface);
        for (Bits c2 = 0; c2 <= cov_max; ++c2) {
          if (std::popcount(c2 ^ target) <= d1) continue;
          for (Bits s2 = 0; s2 <= surf_max; ++s2) {
            if (sim1 < sim(s2, ref_surface)) {
              return {u,
                      {{u.id(), intent}},
                      {{u.id(), u.full()}},
                      {{u.id(), target}, tokens(ref_surface)},
                      {{u.id(), c1}, tokens(s1)},
                      {{u.id(), c2}, tokens(s2)}};
            }
          }
        }
      }
    }
  }
  throw Error(Errc::InvalidArgument, "no witness exists for this universe and alphabet");
}

VerificationSummary verify_exhaustive(std::size_t max_universe) {
  if (max_universe == 0 || max_universe > 8) {
    throw Error(Errc::InvalidArgument, "exhaustive verification supports universes of 1..8 behaviours");
  }
  VerificationSummary summary;
  summary.max_universe = max_universe;
  for (std::size_t n = 1; n <= max_universe; ++n) {
    const auto u = BehaviorUniverse::of_size(n);
    const auto space = all_rules(u);
    for (Bits i = 0; i <= u.full(); ++i) {
      const ToyContext c{{u.id(), i}};
      for (Bits e = 0; e <= u.full(); ++e) {
        const ToyLanguage l{{u.id(), e}};
        const auto best = optimal_class(space, c, l);
        const std::set<std::size_t> members(best.members.begin(), best.members.end());
        const Bits target = achievable(c, l).bits;
        for (std::size_t r = 0; r < space.size(); ++r) {
          ++summary.cases;
          const auto& rule = space[r];
          const long d = static_cast<long>(discrepancy(rule, c, l)) - static_cast<long>(best.min_discrepancy);
          if (d < 0) ++summary.nonnegative_failures;
          if ((d == 0) != (members.count(r) == 1)) ++summary.zero_iff_optimal_failures;
          const auto parts = decompose(rule, c, l);
          if ((parts.under.bits | parts.over.bits) != (rule.coverage.bits ^ target) ||
              (parts.under.bits & parts.over.bits) != 0) {
            ++summary.partition_failures;
          }
          const auto before = discrepancy(rule, c, l);
          for (std::size_t b = 0; b < n; ++b) {
            const Bits bit = Bits{1} << b;
            if (!(parts.under.bits & bit)) continue;
            const ToyRule grown{{u.id(), rule.coverage.bits | bit}, {}};
            if (discrepancy(grown, c, l) > before) ++summary.monotonicity_failures;
          }
        }
      }
    }
  }
  return summary;
}

void print_witness(std::ostream& out, const WitnessInstance& w, const WitnessReport& report) {
  const auto& u = w.universe;
  const auto surface = [](const ToyRule& r) {
    std::string s;
    for (std::size_t i = 0; i < r.surface.size(); ++i) s += (i ? " " : "") + r.surface[i];
    return s;
  };
  out << "universe:   " << u.format(u.full()) << "\n"
      << "intent:     " << u.format(w.context.intent.bits) << "\n"
      << "expressive: " << u.format(w.language.expressiveness.bits) << "\n"
      << "reference:  cov=" << u.format(w.reference.coverage.bits) << "  \"" << surface(w.reference) << "\"\n"
      << "r1:         cov=" << u.format(w.r1.coverage.bits) << "  \"" << surface(w.r1) << "\"\n"
      << "r2:         cov=" << u.format(w.r2.coverage.bits) << "  \"" << surface(w.r2) << "\"\n"
      << std::fixed << std::setprecision(4) << "distance:   d(r1)=" << report.d1 << " d(r2)=" << report.d2
      << (report.distance_ordered ? "  d(r1) < d(r2)" : "  d(r1) >= d(r2)") << "\n"
      << "similarity: jaccard(r1,ref)=" << report.sim1 << " jaccard(r2,ref)=" << report.sim2
      << (report.similarity_inverted ? "  sim(r1) < sim(r2)" : "  sim(r1) >= sim(r2)") << "\n"
      << "reference optimal: " << (report.reference_optimal ? "yes" : "no") << "\n"
      << (report.valid() ? "PASS" : "FAIL") << "\n";
}

}  // namespace unirule::formal
