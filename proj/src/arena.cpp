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

#include "unirule/arena.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <map>
#include <set>

#include <Eigen/Dense>

#include "unirule/prompts.hpp"

namespace unirule::arena {

std::string_view to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::A: return "a";
    case Outcome::B: return "b";
    case Outcome::Tie: return "tie";
  }
  return "tie";
}

Outcome outcome_from_string(std::string_view text) {
  if (text == "a") return Outcome::A;
  if (text == "b") return Outcome::B;
  if (text == "tie") return Outcome::Tie;
  throw Error(Errc::InvalidArgument, "unknown outcome '" + std::string(text) + "'");
}

std::string Scenario::key() const {
  return language.str() + "/" + std::string(contexts::to_string(context_type));
}

void PairwiseJudgment::validate() const {
  if (method_a.empty() || method_b.empty()) throw Error(Errc::InvalidArgument, "judgment has an empty method");
  if (method_a == method_b) throw Error(Errc::InvalidArgument, "judgment compares " + method_a + " with itself");
  if (presented_order != "ab" && presented_order != "ba") {
    throw Error(Errc::InvalidArgument, "presented_order must be \"ab\" or \"ba\"");
  }
}

json to_json(const PairwiseJudgment& j) {
  return json{{"scenario",
               {{"language", j.scenario.language.str()},
                {"context_type", contexts::to_string(j.scenario.context_type)}}},
              {"instance_id", j.instance_id},
              {"method_a", j.method_a},
              {"method_b", j.method_b},
              {"presented_order", j.presented_order},
              {"outcome", to_string(j.outcome)},
              {"judge_id", j.judge_id},
              {"timestamp", j.timestamp}};
}

PairwiseJudgment judgment_from_json(const json& j) {
  try {
    PairwiseJudgment out;
    const auto& s = j.at("scenario");
    out.scenario.language = corpus::RuleLanguage(s.at("language").get<std::string>());
    out.scenario.context_type = contexts::context_type_from_string(s.at("context_type").get<std::string>());
    out.instance_id = j.at("instance_id").get<std::string>();
    out.method_a = j.at("method_a").get<std::string>();
    out.method_b = j.at("method_b").get<std::string>();
    out.presented_order = j.value("presented_order", "ab");
    out.outcome = outcome_from_string(j.at("outcome").get<std::string>());
    out.judge_id = j.value("judge_id", "");
    out.timestamp = j.value("timestamp", std::int64_t{0});
    out.validate();
    return out;
  } catch (const json::exception& e) {
    throw Error(Errc::SchemaError, std::string("bad judgment record: ") + e.what());
  }
}

void save_judgments(const std::filesystem::path& path, const std::vector<PairwiseJudgment>& judgments) {
  std::vector<json> rows;
  rows.reserve(judgments.size());
  for (const auto& j : judgments) rows.push_back(to_json(j));
  write_jsonl(path, rows);
}

std::vector<PairwiseJudgment> load_judgments(const std::filesystem::path& path) {
  std::vector<PairwiseJudgment> out;
  for (const auto& row : read_jsonl(path)) out.push_back(judgment_from_json(row));
  return out;
}

std::vector<std::pair<std::string, std::string>> enumerate_pairs(const std::vector<std::string>& methods) {
  if (methods.size() < 2) throw Error(Errc::TooFewMethods, "need at least two methods to compare");
  std::set<std::string> unique(methods.begin(), methods.end());
  if (unique.size() != methods.size()) throw Error(Errc::InvalidArgument, "method list has duplicates");
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < methods.size(); ++i) {
    for (std::size_t j = i + 1; j < methods.size(); ++j) out.emplace_back(methods[i], methods[j]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Judging

namespace {

std::optional<Verdict> verdict_word(std::string_view word) {
  std::string w = to_lower(trim(word));
  while (!w.empty() && (w.back() == '.' || w.back() == '*' || w.back() == '!')) w.pop_back();
  while (!w.empty() && w.front() == '*') w.erase(w.begin());
  if (w == "first") return Verdict::First;
  if (w == "second") return Verdict::Second;
  if (w == "tie") return Verdict::Tie;
  return std::nullopt;
}

}  // namespace

std::optional<Verdict> parse_verdict(std::string_view reply) {
  const std::string lower = to_lower(reply);
  const auto pos = lower.rfind("verdict:");
  if (pos != std::string::npos) {
    const auto rest = std::string_view(reply).substr(pos + 8);
    const auto words = split_whitespace(rest.substr(0, rest.find('\n')));
    if (!words.empty()) return verdict_word(words.front());
    return std::nullopt;
  }
  return verdict_word(reply);
}

Outcome unscramble(Verdict verdict, std::string_view presented_order) {
  if (verdict == Verdict::Tie) return Outcome::Tie;
  const bool first_is_a = presented_order == "ab";
  return (verdict == Verdict::First) == first_is_a ? Outcome::A : Outcome::B;
}

PairwiseJudgment judge_pair(const JudgeRequest& request, llm::Gateway& gateway, std::uint64_t seed) {
  if (trim(request.rule_a).empty() || trim(request.rule_b).empty()) {
    throw Error(Errc::InvalidArgument, "both candidate rules must be non-empty");
  }
  PairwiseJudgment out;
  out.scenario = request.scenario;
  out.instance_id = request.instance_id;
  out.method_a = request.method_a;
  out.method_b = request.method_b;
  Rng rng(seed);
  out.presented_order = rng.bernoulli(0.5) ? "ba" : "ab";
  out.validate();
  const bool ab = out.presented_order == "ab";

  std::vector<llm::ChatMessage> messages = {
      llm::ChatMessage::system(prompts::get("judge_system")),
      llm::ChatMessage::user(prompts::fill("judge_user", {{"language", request.scenario.language.str()},
                                                          {"context", request.context_text},
                                                          {"first", ab ? request.rule_a : request.rule_b},
                                                          {"second", ab ? request.rule_b : request.rule_a}}))};
  for (int attempt = 1;; ++attempt) {
    const auto response = gateway.chat(messages);
    if (const auto verdict = parse_verdict(response.message.content)) {
      out.outcome = unscramble(*verdict, out.presented_order);
      break;
    }
    if (attempt == 2) {
      throw Error(Errc::UnparseableVerdict, "judge gave no verdict for " + request.instance_id + " after a reprompt");
    }
    messages.push_back(response.message);
    messages.push_back(llm::ChatMessage::user(prompts::get("judge_retry_user")));
  }
  out.judge_id = gateway.chat_model();
  out.timestamp = now_epoch_seconds();
  return out;
}

std::vector<PairwiseJudgment> judge_traces(const std::vector<agent::GenerationTrace>& traces,
                                           const std::vector<std::string>& methods, llm::Gateway& gateway,
                                           std::uint64_t seed, std::size_t threads) {
  const auto pairs = enumerate_pairs(methods);
  std::vector<std::string> order;
  std::map<std::string, std::map<std::string, const agent::GenerationTrace*>> by_instance;
  for (const auto& t : traces) {
    const auto id = t.instance_id();
    if (!by_instance.count(id)) order.push_back(id);
    by_instance[id][std::string(agent::to_string(t.method))] = &t;
  }
  std::vector<JudgeRequest> requests;
  for (const auto& id : order) {
    const auto& methods_of = by_instance.at(id);
    for (const auto& [a, b] : pairs) {
      const auto ia = methods_of.find(a);
      const auto ib = methods_of.find(b);
      if (ia == methods_of.end() || ib == methods_of.end() || !ia->second->ok() || !ib->second->ok()) continue;
      const auto& ctx = ia->second->context;
      requests.push_back({{ctx.language, ctx.type}, id, ctx.text, a, ia->second->output_rule, b,
                          ib->second->output_rule});
    }
  }
  std::vector<PairwiseJudgment> out(requests.size());
  parallel_for(requests.size(), threads, [&](std::size_t i) {
    const auto& r = requests[i];
    out[i] = judge_pair(r, gateway, mix_seed(seed, r.instance_id + "|" + r.method_a + "|" + r.method_b));
  });
  return out;
}

// ---------------------------------------------------------------------------
// Likelihood

namespace {

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_size(const WinMatrix& m, const std::vector<double>& xi) {
  if (xi.size() != m.size()) {
    throw Error(Errc::LengthMismatch, "coefficient vector has " + std::to_string(xi.size()) + " entries for " +
                                          std::to_string(m.size()) + " methods");
  }
}

double observed_y(Outcome o) { return o == Outcome::A ? 1.0 : o == Outcome::B ? 0.0 : 0.5; }

}  // namespace

std::size_t WinMatrix::index_of(std::string_view method) const {
  const auto it = std::find(methods.begin(), methods.end(), method);
  if (it == methods.end()) throw Error(Errc::InconsistentMethods, "unknown method '" + std::string(method) + "'");
  return static_cast<std::size_t>(it - methods.begin());
}

double WinMatrix::total() const {
  double sum = 0.0;
  for (const auto& row : w) {
    for (double x : row) sum += x;
  }
  return sum;
}

WinMatrix build_win_matrix(const std::vector<PairwiseJudgment>& judgments, std::vector<std::string> methods) {
  if (judgments.empty()) throw Error(Errc::InvalidArgument, "no judgments");
  if (methods.empty()) {
    std::set<std::string> names;
    for (const auto& j : judgments) {
      names.insert(j.method_a);
      names.insert(j.method_b);
    }
    methods.assign(names.begin(), names.end());
  }
  WinMatrix m{std::move(methods), {}};
  if (std::set<std::string>(m.methods.begin(), m.methods.end()).size() != m.methods.size()) {
    throw Error(Errc::InconsistentMethods, "method list has duplicates");
  }
  m.w.assign(m.size(), std::vector<double>(m.size(), 0.0));
  for (const auto& j : judgments) {
    if (j.method_a == j.method_b) throw Error(Errc::InconsistentMethods, "judgment compares a method with itself");
    const auto a = m.index_of(j.method_a);
    const auto b = m.index_of(j.method_b);
    switch (j.outcome) {
      case Outcome::A: m.w[a][b] += 1.0; break;
      case Outcome::B: m.w[b][a] += 1.0; break;
      case Outcome::Tie:
        m.w[a][b] += 0.5;
        m.w[b][a] += 0.5;
        break;
    }
  }
  return m;
}

double nll(const WinMatrix& m, const std::vector<double>& xi) {
  check_size(m, xi);
  double sum = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t j = 0; j < m.size(); ++j) {
      if (i != j && m.w[i][j] != 0.0) sum += m.w[i][j] * softplus(xi[j] - xi[i]);
    }
  }
  return sum;
}

std::vector<double> gradient(const WinMatrix& m, const std::vector<double>& xi) {
  check_size(m, xi);
  std::vector<double> g(m.size(), 0.0);
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t j = 0; j < m.size(); ++j) {
      if (i == j) continue;
      g[i] += (m.w[i][j] + m.w[j][i]) * sigmoid(xi[i] - xi[j]) - m.w[i][j];
    }
  }
  return g;
}

std::vector<std::vector<double>> hessian(const WinMatrix& m, const std::vector<double>& xi) {
  check_size(m, xi);
  std::vector<std::vector<double>> h(m.size(), std::vector<double>(m.size(), 0.0));
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t j = 0; j < m.size(); ++j) {
      if (i == j) continue;
      const double p = sigmoid(xi[i] - xi[j]);
      const double c = (m.w[i][j] + m.w[j][i]) * p * (1.0 - p);
      h[i][i] += c;
      h[i][j] -= c;
    }
  }
  return h;
}

double nll_from_judgments(const std::vector<PairwiseJudgment>& judgments, const std::vector<std::string>& methods,
                          const std::vector<double>& xi) {
  if (xi.size() != methods.size()) throw Error(Errc::LengthMismatch, "coefficient vector does not match methods");
  const auto index = [&](const std::string& name) {
    const auto it = std::find(methods.begin(), methods.end(), name);
    if (it == methods.end()) throw Error(Errc::InconsistentMethods, "unknown method '" + name + "'");
    return static_cast<std::size_t>(it - methods.begin());
  };
  double sum = 0.0;
  for (const auto& j : judgments) {
    const double d = xi[index(j.method_a)] - xi[index(j.method_b)];
    const double y = observed_y(j.outcome);
    sum += y * softplus(-d) + (1.0 - y) * softplus(d);
  }
  return sum;
}

// ---------------------------------------------------------------------------
// Fitting

std::size_t BTFit::index_of(std::string_view method) const {
  const auto it = std::find(methods.begin(), methods.end(), method);
  if (it == methods.end()) throw Error(Errc::InconsistentMethods, "unknown method '" + std::string(method) + "'");
  return static_cast<std::size_t>(it - methods.begin());
}

namespace {

std::vector<bool> reachable(const WinMatrix& m, std::size_t start, bool forward_wins, bool undirected) {
  std::vector<bool> seen(m.size(), false);
  std::deque<std::size_t> queue{start};
  seen[start] = true;
  while (!queue.empty()) {
    const auto i = queue.front();
    queue.pop_front();
    for (std::size_t j = 0; j < m.size(); ++j) {
      if (seen[j] || i == j) continue;
      const bool edge = undirected ? (m.w[i][j] + m.w[j][i] > 0.0) : forward_wins ? m.w[i][j] > 0.0 : m.w[j][i] > 0.0;
      if (edge) {
        seen[j] = true;
        queue.push_back(j);
      }
    }
  }
  return seen;
}

std::string missing_names(const WinMatrix& m, const std::vector<bool>& seen) {
  std::string out;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!seen[i]) out += (out.empty() ? "" : ", ") + m.methods[i];
  }
  return out;
}

struct Reduced {
  std::vector<std::size_t> free;  // full index of each free coordinate
};

Eigen::VectorXd reduce(const std::vector<double>& full, const Reduced& r) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(r.free.size()));
  for (std::size_t k = 0; k < r.free.size(); ++k) v(static_cast<Eigen::Index>(k)) = full[r.free[k]];
  return v;
}

Eigen::MatrixXd reduce(const std::vector<std::vector<double>>& full, const Reduced& r) {
  const auto n = static_cast<Eigen::Index>(r.free.size());
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b < n; ++b) out(a, b) = full[r.free[a]][r.free[b]];
  }
  return out;
}

Reduced reduced_for(std::size_t size, std::size_t anchor) {
  Reduced r;
  for (std::size_t i = 0; i < size; ++i) {
    if (i != anchor) r.free.push_back(i);
  }
  return r;
}

// Inverse of a symmetric positive definite matrix; throws SingularHessian.
Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& h) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h);
  if (eig.info() != Eigen::Success) throw Error(Errc::SingularHessian, "eigen-decomposition failed");
  const auto& values = eig.eigenvalues();
  const double largest = values.cwiseAbs().maxCoeff();
  if (!(values.minCoeff() > 1e-12 * std::max(1.0, largest))) {
    throw Error(Errc::SingularHessian, "Hessian is singular or indefinite at the estimate");
  }
  return eig.eigenvectors() * values.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

BTFit fit_bt(const WinMatrix& matrix, std::string_view anchor, const FitOptions& options) {
  if (matrix.size() < 2) throw Error(Errc::TooFewMethods, "need at least two methods to fit");
  const std::size_t a = matrix.index_of(anchor);
  const auto linked = reachable(matrix, a, true, true);
  if (std::find(linked.begin(), linked.end(), false) != linked.end()) {
    throw Error(Errc::DisconnectedGraph, "no comparisons link " + missing_names(matrix, linked) + " to anchor " +
                                             std::string(anchor));
  }
  // A finite maximum exists only if every method both beats and loses to
  // the rest through some chain of outcomes.
  const auto beats = reachable(matrix, a, true, false);
  const auto loses = reachable(matrix, a, false, false);
  for (std::size_t i = 0; i < matrix.size(); ++i) {
    if (!beats[i] || !loses[i]) {
      throw Error(Errc::NonConvergence, "likelihood has no finite maximum: " + matrix.methods[i] +
                                            " is perfectly separated from the other methods");
    }
  }

  const auto r = reduced_for(matrix.size(), a);
  BTFit fit;
  fit.methods = matrix.methods;
  fit.anchor = std::string(anchor);
  fit.xi.assign(matrix.size(), 0.0);

  const auto with = [&](const Eigen::VectorXd& x) {
    std::vector<double> full(matrix.size(), 0.0);
    for (std::size_t k = 0; k < r.free.size(); ++k) full[r.free[k]] = x(static_cast<Eigen::Index>(k));
    return full;
  };

  Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(r.free.size()));
  for (fit.iterations = 0;; ++fit.iterations) {
    const auto full = with(x);
    const Eigen::VectorXd g = reduce(gradient(matrix, full), r);
    fit.gradient_norm = g.cwiseAbs().maxCoeff();
    if (fit.gradient_norm < options.tolerance) {
      fit.converged = true;
      break;
    }
    if (fit.iterations >= options.max_iterations) break;

    const Eigen::MatrixXd h = reduce(hessian(matrix, full), r);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
    Eigen::VectorXd step;
    if (ldlt.info() == Eigen::Success && ldlt.isPositive() && ldlt.vectorD().minCoeff() > 1e-14) {
      step = ldlt.solve(-g);
    }
    if (step.size() == 0 || !step.allFinite() || step.dot(g) >= 0.0) step = -g;

    const double f0 = nll(matrix, full);
    const double slope = step.dot(g);
    // Near the optimum the objective change drops below its rounding error;
    // there a step is judged by the gradient instead.
    const double noise = 1e-12 * std::max(1.0, std::abs(f0));
    const auto grad_norm = [&](const Eigen::VectorXd& v) {
      return reduce(gradient(matrix, with(v)), r).cwiseAbs().maxCoeff();
    };
    double t = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 60; ++halving, t *= 0.5) {
      const Eigen::VectorXd candidate = x + t * step;
      const double f = nll(matrix, with(candidate));
      if (f <= f0 + 1e-4 * t * slope || (f <= f0 + noise && grad_norm(candidate) < fit.gradient_norm)) {
        x = candidate;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // At the bottom of the bowl the objective stops resolving; the full
      // Newton step is still taken if it shrinks the gradient.
      const Eigen::VectorXd candidate = x + step;
      if (!(grad_norm(candidate) < fit.gradient_norm)) break;
      x = candidate;
    }
  }
  if (!fit.converged) {
    throw Error(Errc::NonConvergence, "Bradley-Terry fit stopped after " + std::to_string(fit.iterations) +
                                          " iterations with gradient norm " + std::to_string(fit.gradient_norm));
  }
  fit.xi = with(x);
  fit.xi[a] = 0.0;
  return fit;
}

std::vector<double> sandwich_se(const BTFit& fit, const std::vector<PairwiseJudgment>& judgments) {
  const std::size_t a = fit.index_of(fit.anchor);
  const auto matrix = build_win_matrix(judgments, fit.methods);
  const auto r = reduced_for(fit.methods.size(), a);
  const Eigen::MatrixXd h_inv = spd_inverse(reduce(hessian(matrix, fit.xi), r));

  std::vector<Eigen::Index> slot(fit.methods.size(), -1);
  for (std::size_t k = 0; k < r.free.size(); ++k) slot[r.free[k]] = static_cast<Eigen::Index>(k);
  const auto n = static_cast<Eigen::Index>(r.free.size());
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd g(n);
  for (const auto& j : judgments) {
    const auto i = fit.index_of(j.method_a);
    const auto k = fit.index_of(j.method_b);
    const double score = observed_y(j.outcome) - sigmoid(fit.xi[i] - fit.xi[k]);
    g.setZero();
    if (slot[i] >= 0) g(slot[i]) = score;
    if (slot[k] >= 0) g(slot[k]) = -score;
    s.noalias() += g * g.transpose();
  }
  const Eigen::MatrixXd var = h_inv * s * h_inv;
  std::vector<double> se(fit.methods.size(), 0.0);
  for (std::size_t k = 0; k < r.free.size(); ++k) {
    se[r.free[k]] = std::sqrt(std::max(0.0, var(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k))));
  }
  return se;
}

std::vector<double> hessian_se(const BTFit& fit, const WinMatrix& matrix) {
  const std::size_t a = fit.index_of(fit.anchor);
  const auto r = reduced_for(fit.methods.size(), a);
  const Eigen::MatrixXd h_inv = spd_inverse(reduce(hessian(matrix, fit.xi), r));
  std::vector<double> se(fit.methods.size(), 0.0);
  for (std::size_t k = 0; k < r.free.size(); ++k) {
    se[r.free[k]] = std::sqrt(h_inv(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)));
  }
  return se;
}

void attach_intervals(BTFit& fit, std::vector<double> se) {
  if (se.size() != fit.xi.size()) throw Error(Errc::LengthMismatch, "standard errors do not match coefficients");
  fit.se = std::move(se);
  fit.ci_low.resize(fit.xi.size());
  fit.ci_high.resize(fit.xi.size());
  for (std::size_t i = 0; i < fit.xi.size(); ++i) {
    fit.ci_low[i] = fit.xi[i] - kZ95 * fit.se[i];
    fit.ci_high[i] = fit.xi[i] + kZ95 * fit.se[i];
  }
}

BTFit fit_judgments(const std::vector<PairwiseJudgment>& judgments, std::string_view anchor,
                    std::vector<std::string> methods, const FitOptions& options) {
  const auto matrix = build_win_matrix(judgments, std::move(methods));
  auto fit = fit_bt(matrix, anchor, options);
  attach_intervals(fit, sandwich_se(fit, judgments));
  return fit;
}

// ---------------------------------------------------------------------------
// Agreement

double cohens_kappa(const std::vector<std::string>& x, const std::vector<std::string>& y) {
  if (x.size() != y.size()) {
    throw Error(Errc::LengthMismatch, "label lists have " + std::to_string(x.size()) + " and " +
                                          std::to_string(y.size()) + " items");
  }
  if (x.empty()) throw Error(Errc::LengthMismatch, "label lists are empty");
  std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> marginals;
  std::uint64_t agree = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    ++marginals[x[i]].first;
    ++marginals[y[i]].second;
    if (x[i] == y[i]) ++agree;
  }
  // Integer numerator and denominator keep identical inputs exact.
  const auto n = static_cast<std::uint64_t>(x.size());
  std::uint64_t chance = 0;
  for (const auto& [label, counts] : marginals) chance += counts.first * counts.second;
  if (chance == n * n) {
    if (agree == n) return 1.0;
    throw Error(Errc::DegenerateMarginals, "chance agreement is 1");
  }
  return (static_cast<double>(n * agree) - static_cast<double>(chance)) /
         (static_cast<double>(n * n) - static_cast<double>(chance));
}

double cohens_kappa(const std::vector<Outcome>& x, const std::vector<Outcome>& y) {
  std::vector<std::string> sx, sy;
  for (auto o : x) sx.emplace_back(to_string(o));
  for (auto o : y) sy.emplace_back(to_string(o));
  return cohens_kappa(sx, sy);
}

namespace {

// Key and outcome oriented so the lexically smaller method is "a".
std::pair<std::string, Outcome> canonical(const PairwiseJudgment& j) {
  if (j.method_a < j.method_b) return {j.instance_id + "|" + j.method_a + "|" + j.method_b, j.outcome};
  const Outcome flipped = j.outcome == Outcome::A ? Outcome::B : j.outcome == Outcome::B ? Outcome::A : Outcome::Tie;
  return {j.instance_id + "|" + j.method_b + "|" + j.method_a, flipped};
}

}  // namespace

AgreementResult judgment_agreement(const std::vector<PairwiseJudgment>& x, const std::vector<PairwiseJudgment>& y) {
  std::map<std::string, Outcome> right;
  for (const auto& j : y) right[canonical(j).first] = canonical(j).second;
  std::vector<Outcome> lx, ly;
  std::set<std::string> used;
  for (const auto& j : x) {
    const auto [key, outcome] = canonical(j);
    const auto it = right.find(key);
    if (it == right.end() || !used.insert(key).second) continue;
    lx.push_back(outcome);
    ly.push_back(it->second);
  }
  AgreementResult result;
  result.matched = lx.size();
  if (lx.empty()) {
    result.error = "no judgments in common";
    return result;
  }
  std::size_t same = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) same += lx[i] == ly[i];
  result.agreement = static_cast<double>(same) / static_cast<double>(lx.size());
  try {
    result.kappa = cohens_kappa(lx, ly);
  } catch (const Error& e) {
    result.error = e.what();
  }
  return result;
}

// ---------------------------------------------------------------------------
// Reports

PositionBias position_bias(const std::vector<PairwiseJudgment>& judgments) {
  PositionBias bias;
  for (const auto& j : judgments) {
    if (j.outcome == Outcome::Tie) continue;
    ++bias.decisive;
    if ((j.outcome == Outcome::A) == (j.presented_order == "ab")) ++bias.first_wins;
  }
  if (bias.decisive > 0) {
    bias.first_share = static_cast<double>(bias.first_wins) / static_cast<double>(bias.decisive);
    bias.warning = bias.first_share < 0.4 || bias.first_share > 0.6;
  }
  return bias;
}

ScenarioReport scenario_report(const std::vector<PairwiseJudgment>& judgments, std::string_view anchor,
                               std::vector<std::string> methods) {
  if (judgments.empty()) throw Error(Errc::InvalidArgument, "no judgments to report");
  if (methods.empty()) {
    std::set<std::string> names;
    for (const auto& j : judgments) {
      names.insert(j.method_a);
      names.insert(j.method_b);
    }
    methods.assign(names.begin(), names.end());
  }
  if (std::find(methods.begin(), methods.end(), anchor) == methods.end()) {
    throw Error(Errc::InconsistentMethods, "anchor " + std::string(anchor) + " is not among the methods");
  }
  ScenarioReport report;
  report.anchor = std::string(anchor);
  report.methods = methods;
  report.bias = position_bias(judgments);

  std::map<Scenario, std::vector<PairwiseJudgment>> by_scenario;
  std::map<std::string, std::vector<PairwiseJudgment>> by_language;
  std::map<contexts::ContextType, std::vector<PairwiseJudgment>> by_type;
  for (const auto& j : judgments) {
    by_scenario[j.scenario].push_back(j);
    by_language[j.scenario.language.str()].push_back(j);
    by_type[j.scenario.context_type].push_back(j);
  }
  const auto cell = [&](std::string group, std::string key, const std::vector<PairwiseJudgment>& pool) {
    ReportCell c{std::move(group), std::move(key), pool.size(), std::nullopt, std::nullopt};
    try {
      c.fit = fit_judgments(pool, anchor, methods);
    } catch (const Error& e) {
      c.error = e.what();
    }
    report.cells.push_back(std::move(c));
  };
  for (const auto& [scenario, pool] : by_scenario) cell("scenario", scenario.key(), pool);
  for (const auto& [language, pool] : by_language) cell("language", language, pool);
  for (const auto& [type, pool] : by_type) cell("context_type", std::string(contexts::to_string(type)), pool);
  cell("overall", "overall", judgments);
  return report;
}

json to_json(const ScenarioReport& report) {
  json cells = json::array();
  for (const auto& c : report.cells) {
    json cell{{"group", c.group}, {"key", c.key}, {"judgments", c.judgments}};
    if (c.fit) {
      json rows = json::array();
      for (std::size_t i = 0; i < c.fit->methods.size(); ++i) {
        rows.push_back({{"method", c.fit->methods[i]},
                        {"xi", c.fit->xi[i]},
                        {"se", c.fit->se[i]},
                        {"ci_low", c.fit->ci_low[i]},
                        {"ci_high", c.fit->ci_high[i]},
                        {"significant", c.fit->significant(i)}});
      }
      cell["fit"] = {{"coefficients", std::move(rows)},
                     {"converged", c.fit->converged},
                     {"gradient_norm", c.fit->gradient_norm},
                     {"iterations", c.fit->iterations}};
    } else {
      cell["fit"] = nullptr;
    }
    cell["error"] = c.error ? json(*c.error) : json(nullptr);
    cells.push_back(std::move(cell));
  }
  return json{{"anchor", report.anchor},
              {"methods", report.methods},
              {"position_bias",
               {{"decisive", report.bias.decisive},
                {"first_wins", report.bias.first_wins},
                {"first_share", report.bias.first_share},
                {"warning", report.bias.warning}}},
              {"cells", std::move(cells)}};
}

namespace {

// Keeps "%.6f" from printing -0.000000.
double printable(double v) { return std::fabs(v) < 5e-7 ? 0.0 : v; }

}  // namespace

std::string to_csv(const ScenarioReport& report) {
  std::string out = "scenario,method,xi,se,ci_low,ci_high,significant\n";
  char buf[256];
  for (const auto& c : report.cells) {
    if (!c.fit) continue;
    const std::string label = c.group == "scenario" ? c.key : c.group == "overall" ? "overall" : c.group + ":" + c.key;
    for (std::size_t i = 0; i < c.fit->methods.size(); ++i) {
      std::snprintf(buf, sizeof(buf), ",%.6f,%.6f,%.6f,%.6f,%s\n", printable(c.fit->xi[i]), printable(c.fit->se[i]),
                    printable(c.fit->ci_low[i]), printable(c.fit->ci_high[i]), c.fit->significant(i) ? "true" : "false");
      out += label + "," + c.fit->methods[i] + buf;
    }
  }
  return out;
}

}  // namespace unirule::arena
