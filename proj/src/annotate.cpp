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

#include "unirule/annotate.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include <httplib.h>

namespace unirule::annotate {

std::vector<AnnotationTask> build_tasks(const std::vector<arena::PairwiseJudgment>& judgments,
                                        const std::vector<agent::GenerationTrace>& traces) {
  std::map<std::string, const agent::GenerationTrace*> by_key;
  for (const auto& t : traces) by_key[t.instance_id() + "|" + std::string(agent::to_string(t.method))] = &t;
  const auto find = [&](const arena::PairwiseJudgment& j, const std::string& method) {
    const auto it = by_key.find(j.instance_id + "|" + method);
    if (it == by_key.end() || !it->second->ok()) {
      throw Error(Errc::InvalidArgument, "no rule for " + method + " on " + j.instance_id);
    }
    return it->second;
  };
  std::vector<AnnotationTask> tasks;
  tasks.reserve(judgments.size());
  char id[32];
  for (std::size_t i = 0; i < judgments.size(); ++i) {
    const auto& j = judgments[i];
    const auto* a = find(j, j.method_a);
    const auto* b = find(j, j.method_b);
    std::snprintf(id, sizeof(id), "task-%04zu", i + 1);
    const bool ab = j.presented_order == "ab";
    tasks.push_back({id, j, a->context.text, ab ? a->output_rule : b->output_rule, ab ? b->output_rule : a->output_rule});
  }
  return tasks;
}

namespace {

HttpReply fail(int status, std::string message) { return {status, json{{"error", std::move(message)}}}; }

std::optional<arena::Verdict> verdict_from_label(std::string_view text) {
  if (text == "first") return arena::Verdict::First;
  if (text == "second") return arena::Verdict::Second;
  if (text == "tie") return arena::Verdict::Tie;
  return std::nullopt;
}


json agreement_json(const std::vector<std::string>& x, const std::vector<std::string>& y) {
  json out{{"n", x.size()}};
  if (x.empty()) {
    out["agreement"] = nullptr;
    out["kappa"] = nullptr;
    return out;
  }
  std::size_t same = 0;
  for (std::size_t i = 0; i < x.size(); ++i) same += x[i] == y[i];
  out["agreement"] = static_cast<double>(same) / static_cast<double>(x.size());
  try {
    out["kappa"] = arena::cohens_kappa(x, y);
  } catch (const Error& e) {
    out["kappa"] = nullptr;
    out["error"] = e.what();
  }
  return out;
}

}  // namespace

AnnotationService::AnnotationService(std::vector<AnnotationTask> tasks, std::size_t expected_annotators)
    : tasks_(std::move(tasks)), expected_annotators_(expected_annotators) {
  for (std::size_t i = 0; i < tasks_.size(); ++i) {
    if (!task_index_.emplace(tasks_[i].task_id, i).second) {
      throw Error(Errc::InvalidArgument, "duplicate task id " + tasks_[i].task_id);
    }
  }
}

HttpReply AnnotationService::next_task(const std::string& annotator) const {
  if (trim(annotator).empty()) return fail(400, "annotator is required");
  std::lock_guard lock(mutex_);
  const auto it = labels_.find(annotator);
  const std::size_t done = it == labels_.end() ? 0 : it->second.size();
  const json progress{{"labeled", done}, {"total", tasks_.size()}};
  for (const auto& task : tasks_) {
    if (it != labels_.end() && it->second.count(task.task_id)) continue;
    return {200,
            {{"done", false},
             {"task",
              {{"task_id", task.task_id},
               {"language", task.judgment.scenario.language.str()},
               {"context", task.context_text},
               {"candidate_1", task.candidate_1},
               {"candidate_2", task.candidate_2}}},
             {"progress", progress}}};
  }
  return {200, {{"done", true}, {"task", nullptr}, {"progress", progress}}};
}

HttpReply AnnotationService::add_label(const std::string& task_id, const std::string& annotator,
                                       const std::string& outcome, bool log) {
  const auto verdict = verdict_from_label(outcome);
  if (!verdict) return fail(400, "outcome must be first, second or tie");
  if (trim(annotator).empty()) return fail(400, "annotator is required");
  if (!task_index_.count(task_id)) return fail(404, "unknown task " + task_id);
  std::lock_guard lock(mutex_);
  auto& mine = labels_[annotator];
  if (mine.count(task_id)) return fail(409, "task " + task_id + " is already labelled by " + annotator);
  mine.emplace(task_id, *verdict);
  if (log && label_log_) {
    std::ofstream out(*label_log_, std::ios::app);
    out << json{{"task_id", task_id}, {"annotator", annotator}, {"outcome", outcome}}.dump() << "\n";
    if (!out) throw Error(Errc::Io, "cannot append to " + label_log_->string());
  }
  return {200, {{"status", "ok"}, {"task_id", task_id}, {"annotator", annotator}, {"outcome", outcome}}};
}

HttpReply AnnotationService::post_label(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error&) {
    return fail(400, "body is not JSON");
  }
  if (!j.is_object()) return fail(400, "body must be an object");
  const auto field = [&](const char* name) -> std::optional<std::string> {
    const auto it = j.find(name);
    if (it == j.end() || !it->is_string()) return std::nullopt;
    return it->get<std::string>();
  };
  const auto task = field("task_id");
  const auto annotator = field("annotator");
  const auto outcome = field("outcome");
  if (!outcome) return fail(400, "outcome must be first, second or tie");
  if (!task || !annotator) return fail(400, "task_id and annotator are required strings");
  return add_label(*task, *annotator, *outcome, true);
}

HttpReply AnnotationService::progress() const {
  std::lock_guard lock(mutex_);
  json per = json::object();
  std::size_t submitted = 0;
  for (const auto& [annotator, labels] : labels_) {
    per[annotator] = labels.size();
    submitted += labels.size();
  }
  const std::size_t expected = tasks_.size() * expected_annotators_;
  return {200,
          {{"tasks", tasks_.size()},
           {"expected_annotators", expected_annotators_},
           {"expected_labels", expected},
           {"submitted_labels", submitted},
           {"annotators", per},
           {"complete", expected > 0 && submitted >= expected}}};
}

std::vector<std::string> AnnotationService::annotators() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [name, labels] : labels_) out.push_back(name);
  return out;
}

std::vector<arena::PairwiseJudgment> AnnotationService::labels_of(const std::string& annotator) const {
  std::lock_guard lock(mutex_);
  std::vector<arena::PairwiseJudgment> out;
  const auto it = labels_.find(annotator);
  if (it == labels_.end()) return out;
  for (const auto& task : tasks_) {
    const auto label = it->second.find(task.task_id);
    if (label == it->second.end()) continue;
    auto j = task.judgment;
    j.outcome = arena::unscramble(label->second, j.presented_order);
    j.judge_id = annotator;
    out.push_back(std::move(j));
  }
  return out;
}

HttpReply AnnotationService::agreement() const {
  std::map<std::string, std::map<std::string, arena::Verdict>> snapshot;
  {
    std::lock_guard lock(mutex_);
    snapshot = labels_;
  }
  // Compare unscrambled outcomes so "first" means the same thing to everyone.
  const auto outcome_of = [&](const std::string& task_id, arena::Verdict v) {
    const auto& j = tasks_[task_index_.at(task_id)].judgment;
    return std::string(arena::to_string(arena::unscramble(v, j.presented_order)));
  };
  json per = json::array();
  double kappa_sum = 0.0;
  std::size_t kappa_count = 0;
  for (const auto& [annotator, labels] : snapshot) {
    std::vector<std::string> human, judge;
    for (const auto& [task_id, verdict] : labels) {
      human.push_back(outcome_of(task_id, verdict));
      judge.emplace_back(arena::to_string(tasks_[task_index_.at(task_id)].judgment.outcome));
    }
    json row = agreement_json(human, judge);
    if (row["kappa"].is_number()) {
      kappa_sum += row["kappa"].get<double>();
      ++kappa_count;
    }
    per.push_back({{"annotator", annotator}, {"vs_judge", std::move(row)}});
  }
  json pairs = json::array();
  for (auto x = snapshot.begin(); x != snapshot.end(); ++x) {
    for (auto y = std::next(x); y != snapshot.end(); ++y) {
      std::vector<std::string> lx, ly;
      for (const auto& [task_id, verdict] : x->second) {
        const auto other = y->second.find(task_id);
        if (other == y->second.end()) continue;
        lx.push_back(outcome_of(task_id, verdict));
        ly.push_back(outcome_of(task_id, other->second));
      }
      pairs.push_back({{"annotators", {x->first, y->first}}, {"agreement", agreement_json(lx, ly)}});
    }
  }
  json body{{"annotators", std::move(per)}, {"pairwise", std::move(pairs)}};
  body["average_kappa_vs_judge"] = kappa_count ? json(kappa_sum / static_cast<double>(kappa_count)) : json(nullptr);
  return {200, std::move(body)};
}

void AnnotationService::set_label_log(std::filesystem::path path) {
  std::lock_guard lock(mutex_);
  label_log_ = std::move(path);
}

void AnnotationService::load_labels(const std::filesystem::path& path) {
  for (const auto& row : read_jsonl(path)) {
    const auto reply = add_label(row.value("task_id", ""), row.value("annotator", ""), row.value("outcome", ""), false);
    if (reply.status != 200 && reply.status != 409) {
      throw Error(Errc::SchemaError, path.string() + ": " + reply.body.value("error", "bad label"));
    }
  }
}

// ---------------------------------------------------------------------------
// HTTP glue

struct AnnotationServer::Impl {
  Impl(AnnotationService& s, ServerOptions o) : service(s), options(std::move(o)) {}

  AnnotationService& service;
  ServerOptions options;
  httplib::Server server;
};

AnnotationServer::AnnotationServer(AnnotationService& service, ServerOptions options)
    : impl_(std::make_unique<Impl>(service, std::move(options))) {
  auto& server = impl_->server;
  auto& svc = impl_->service;
  const auto send = [](httplib::Response& res, const HttpReply& reply) {
    res.status = reply.status;
    res.set_content(reply.body.dump(), "application/json");
  };
  server.Get("/api/tasks/next", [&svc, send](const httplib::Request& req, httplib::Response& res) {
    send(res, svc.next_task(req.get_param_value("annotator")));
  });
  server.Post("/api/labels", [&svc, send](const httplib::Request& req, httplib::Response& res) {
    send(res, svc.post_label(req.body));
  });
  server.Get("/api/progress", [&svc, send](const httplib::Request&, httplib::Response& res) {
    send(res, svc.progress());
  });
  server.Get("/api/agreement", [&svc, send](const httplib::Request&, httplib::Response& res) {
    send(res, svc.agreement());
  });
  server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string message = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      message = e.what();
    } catch (...) {
    }
    res.status = 500;
    res.set_content(json{{"error", message}}.dump(), "application/json");
  });
  if (impl_->options.static_dir) {
    if (!server.set_mount_point("/", impl_->options.static_dir->string())) {
      throw Error(Errc::Io, "cannot serve static files from " + impl_->options.static_dir->string());
    }
  }
}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::bind() {
  auto& o = impl_->options;
  int port = o.port;
  if (port == 0) {
    port = impl_->server.bind_to_any_port(o.host);
  } else if (!impl_->server.bind_to_port(o.host, port)) {
    port = -1;
  }
  if (port <= 0) throw Error(Errc::Io, "cannot bind " + o.host + ":" + std::to_string(o.port));
  return port;
}

void AnnotationServer::listen() { impl_->server.listen_after_bind(); }

void AnnotationServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace unirule::annotate
