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

#ifndef UNIRULE_ERROR_HPP
#define UNIRULE_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace unirule {

/// Failure categories shared by every module. Each maps to one error named
/// in a module contract; callers branch on code(), not on message text.
enum class Errc {
  // rule-corpus
  MalformedDocument,
  MissingQuery,
  MalformedHeader,
  UnbalancedOptions,
  Io,
  InvalidRatio,
  // llm-gateway
  ProviderError,
  SchemaError,
  DimensionMismatch,
  InvalidArgument,
  // semantic-kb
  EmptyTranslation,
  VersionMismatch,
  ChecksumMismatch,
  // context-factory
  MissingDescription,
  InsufficientTestRules,
  CtiLeak,
  // agent-generator
  BudgetExceeded,
  MalformedOutput,
  // formal-model
  UniverseMismatch,
  EmptyRuleSpace,
  // arena-eval
  TooFewMethods,
  UnparseableVerdict,
  InconsistentMethods,
  DisconnectedGraph,
  NonConvergence,
  SingularHessian,
  LengthMismatch,
  DegenerateMarginals,
  // annotation service
  NotFound,
  Conflict,
};

std::string_view to_string(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace unirule

#endif  // UNIRULE_ERROR_HPP
