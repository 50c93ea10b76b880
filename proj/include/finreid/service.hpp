/**
 * Copyright 2026 The finreid Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Match-review service: ranked candidate identities for pending query
// images, human decisions recorded in an append-only log, and the catalogue
// store rebuilt as a fold over that log.

#include <atomic>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "finreid/catalogue.hpp"
#include "finreid/data.hpp"
#include "finreid/error.hpp"
#include "finreid/model.hpp"

namespace httplib {
class Server;
}

namespace finreid::service {

/// Carries the HTTP status the error maps to.
class ServiceError : public Error {
 public:
  ServiceError(int status, const std::string& message) : Error("service", message), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

enum class Status { Pending, Confirmed, NewIndividual, Skipped };
enum class Action { Confirm, NewIndividual, Skip };

const char* to_string(Status s);
const char* to_string(Action a);
Action parse_action(const std::string& s);

struct CandidateView {
  std::size_t rank = 0;
  std::string identity_id;
  double distance = 0.0;
  std::vector<std::string> exemplars;
};

struct Decision {
  std::uint64_t seq = 0;
  std::string task_id;
  Action action = Action::Skip;
  std::string identity_id;
  bool override_candidates = false;
  std::string decided_by;
  std::string decided_at;
};

struct ReviewTask {
  std::string task_id;
  std::string query_image_id;
  std::string query_date;
  std::vector<CandidateView> candidates;
  Status status = Status::Pending;
  std::optional<Decision> decision;
};

struct Stats {
  std::size_t pending = 0;
  std::size_t confirmed = 0;
  std::size_t new_individual = 0;
  std::size_t skipped = 0;
  /// Decisions with a human identity label (confirm and new_individual).
  std::size_t labelled = 0;
  /// Fraction of labelled tasks whose label is the rank-1 / within the top-5
  /// suggestion; absent while nothing is labelled.
  std::optional<double> top1_agreement;
  std::optional<double> top5_agreement;
};

enum class TaskOrder {
  /// Ascending rank-1 distance.
  Confident,
  /// Descending rank-1 distance.
  Uncertain,
};

struct ServiceOptions {
  std::size_t k = 5;
  std::size_t exemplars = 3;
  TaskOrder order = TaskOrder::Confident;
  /// Decision log (JSONL); replayed at start-up, appended on each decision.
  std::string log_path;
  /// When set, the current store is written here after every decision.
  std::string store_out;
};

/// Immutable view shared by readers; replaced after each durable decision.
struct Snapshot {
  std::uint64_t version = 0;
  std::vector<ReviewTask> tasks;
  catalogue::Store store;
  std::vector<Decision> log;
};

class ReviewService {
 public:
  /// `query_embeddings` are the rows of `queries`, produced by the model
  /// whose fingerprint the store carries.
  ReviewService(catalogue::Store base_store, data::Manifest queries, Tensor query_embeddings,
                ServiceOptions options, data::Manifest gallery_images = {});

  std::shared_ptr<const Snapshot> snapshot() const { return std::atomic_load(&snapshot_); }

  std::optional<ReviewTask> next() const;
  /// Throws ServiceError(404) for unknown ids.
  ReviewTask task(const std::string& task_id) const;
  /// Durably records a decision. 404 unknown task, 409 already decided,
  /// 422 identity not among candidates (without override) or missing.
  ReviewTask decide(const std::string& task_id, Action action, const std::string& identity_id = {},
                    bool override_candidates = false, const std::string& decided_by = {});
  Stats stats() const;
  /// PNG bytes of a query or gallery image; 404 when unknown.
  std::string image_png(const std::string& image_id) const;

  const ServiceOptions& options() const { return options_; }

  /// Applies `log` to `base` in order; the result every replay reproduces.
  static catalogue::Store replay(const catalogue::Store& base, const std::vector<Decision>& log,
                                 const data::Manifest& queries, const Tensor& query_embeddings,
                                 const std::vector<ReviewTask>& tasks);

 private:
  void apply(Snapshot& s, const Decision& d) const;
  void append_log(const Decision& d) const;

  ServiceOptions options_;
  data::Manifest queries_;
  data::Manifest gallery_;
  Tensor query_embeddings_;
  std::vector<std::size_t> order_;
  std::shared_ptr<const Snapshot> snapshot_;
  std::mutex writer_;
};

std::string decision_to_json(const Decision& d);
Decision decision_from_json(const std::string& line);
/// Complete lines of a decision log; a torn final line is ignored.
std::vector<Decision> read_log(const std::string& path);

std::string task_json(const ReviewTask& t);
std::string stats_json(const Stats& s);

/// Routes of the review API bound to `service`.
void install_routes(httplib::Server& server, ReviewService& service);

}  // namespace finreid::service
