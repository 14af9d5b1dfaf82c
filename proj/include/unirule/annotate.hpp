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

// Backend for human labelling of judged pairs. Annotators see the same
// anonymized candidates in the same order the judge saw them.

#ifndef UNIRULE_ANNOTATE_HPP
#define UNIRULE_ANNOTATE_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "unirule/agent.hpp"
#include "unirule/arena.hpp"
#include "unirule/contexts.hpp"

namespace unirule::annotate {

struct AnnotationTask {
  std::string task_id;
  arena::PairwiseJudgment judgment;
  std::string context_text;
  std::string candidate_1;  // shown first
  std::string candidate_2;
};

/// One task per judgment, ids "task-0001", ... in judgment order. Context
/// text and rules are looked up by instance id and method. Throws
/// InvalidArgument when a judgment has no matching trace.
std::vector<AnnotationTask> build_tasks(const std::vector<arena::PairwiseJudgment>& judgments,
                                        const std::vector<agent::GenerationTrace>& traces);

struct HttpReply {
  int status = 200;
  json body;
};

/// Thread-safe label store with the HTTP handlers as plain functions.
class AnnotationService {
 public:
  AnnotationService(std::vector<AnnotationTask> tasks, std::size_t expected_annotators = 3);

  /// GET /api/tasks/next?annotator=ID
  HttpReply next_task(const std::string& annotator) const;
  /// POST /api/labels {task_id, annotator, outcome: first|second|tie}
  HttpReply post_label(const std::string& body);
  /// GET /api/progress
  HttpReply progress() const;
  /// GET /api/agreement
  HttpReply agreement() const;

  /// Labels as judgments (outcome mapped back to a/b), judge_id = annotator.
  std::vector<arena::PairwiseJudgment> labels_of(const std::string& annotator) const;
  std::vector<std::string> annotators() const;

  /// Each accepted label is also appended here as one JSON line.
  void set_label_log(std::filesystem::path path);
  /// Replays a label log written by set_label_log.
  void load_labels(const std::filesystem::path& path);

  std::size_t task_count() const noexcept { return tasks_.size(); }

 private:
  HttpReply add_label(const std::string& task_id, const std::string& annotator, const std::string& outcome,
                      bool log);

  std::vector<AnnotationTask> tasks_;
  std::map<std::string, std::size_t> task_index_;
  std::size_t expected_annotators_;
  mutable std::mutex mutex_;
  std::map<std::string, std::map<std::string, arena::Verdict>> labels_;  // annotator -> task -> verdict
  std::optional<std::filesystem::path> label_log_;
};

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::optional<std::filesystem::path> static_dir;
};

/// Serves the API until stop() is called on the returned handle's server.
class AnnotationServer {
 public:
  AnnotationServer(AnnotationService& service, ServerOptions options);
  ~AnnotationServer();

  /// Binds and returns the port; serving starts on listen().
  int bind();
  /// Blocks until stop().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace unirule::annotate

#endif  // UNIRULE_ANNOTATE_HPP
