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

#include "finreid/service.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <numeric>

#include "json.hpp"

#include "finreid/binio.hpp"
#include "finreid/error.hpp"
#include "finreid/eval.hpp"

namespace finreid::service {

namespace {
using nlohmann::json;

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

std::size_t task_index(const std::vector<ReviewTask>& tasks, const std::string& id) {
  // Task ids are "t" + zero-padded position.
  if (id.size() < 2 || id[0] != 't') return tasks.size();
  std::size_t pos = 0;
  for (std::size_t i = 1; i < id.size(); ++i) {
    if (id[i] < '0' || id[i] > '9') return tasks.size();
    pos = pos * 10 + static_cast<std::size_t>(id[i] - '0');
    if (pos > tasks.size()) return tasks.size();
  }
  return pos < tasks.size() && tasks[pos].task_id == id ? pos : tasks.size();
}

std::string task_id_for(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "t%05zu", i);
  return buf;
}
}  // namespace

const char* to_string(Status s) {
  switch (s) {
    case Status::Pending: return "pending";
    case Status::Confirmed: return "confirmed";
    case Status::NewIndividual: return "new_individual";
    case Status::Skipped: return "skipped";
  }
  return "?";
}

const char* to_string(Action a) {
  switch (a) {
    case Action::Confirm: return "confirm";
    case Action::NewIndividual: return "new_individual";
    case Action::Skip: return "skip";
  }
  return "?";
}

Action parse_action(const std::string& s) {
  if (s == "confirm") return Action::Confirm;
  if (s == "new_individual") return Action::NewIndividual;
  if (s == "skip") return Action::Skip;
  throw ServiceError(400, "unknown action '" + s + "' (want confirm, new_individual or skip)");
}

// ---------------------------------------------------------------- log

std::string decision_to_json(const Decision& d) {
  json j{{"seq", d.seq},
         {"task_id", d.task_id},
         {"action", to_string(d.action)},
         {"identity_id", d.identity_id},
         {"override", d.override_candidates},
         {"decided_by", d.decided_by},
         {"decided_at", d.decided_at}};
  return j.dump();
}

Decision decision_from_json(const std::string& line) {
  try {
    const json j = json::parse(line);
    Decision d;
    d.seq = j.at("seq").get<std::uint64_t>();
    d.task_id = j.at("task_id").get<std::string>();
    d.action = parse_action(j.at("action").get<std::string>());
    d.identity_id = j.at("identity_id").get<std::string>();
    d.override_candidates = j.at("override").get<bool>();
    d.decided_by = j.at("decided_by").get<std::string>();
    d.decided_at = j.at("decided_at").get<std::string>();
    return d;
  } catch (const json::exception& e) {
    throw IoError("service", std::string("malformed decision log line: ") + e.what());
  }
}

std::vector<Decision> read_log(const std::string& path) {
  std::vector<Decision> out;
  if (path.empty() || !std::filesystem::exists(path)) return out;
  const std::string text = binio::read_file(path, "service");
  std::size_t start = 0;
  while (true) {
    const std::size_t nl = text.find('\n', start);
    if (nl == std::string::npos) break;  // torn tail from an interrupted append
    const std::string line = text.substr(start, nl - start);
    if (!line.empty()) {
      Decision d = decision_from_json(line);
      if (d.seq != out.size() + 1)
        throw IoError("service", "decision log out of order at seq " + std::to_string(d.seq));
      out.push_back(std::move(d));
    }
    start = nl + 1;
  }
  return out;
}

void ReviewService::append_log(const Decision& d) const {
  if (options_.log_path.empty()) return;
  const std::string line = decision_to_json(d) + "\n";
  const int fd = ::open(options_.log_path.c_str(), O_WRONLY | O_APPEND | O_CREAT, 0644);
  if (fd < 0) throw IoError("service", "cannot open decision log '" + options_.log_path + "'");
  std::size_t done = 0;
  while (done < line.size()) {
    const ssize_t n = ::write(fd, line.data() + done, line.size() - done);
    if (n <= 0) {
      ::close(fd);
      throw IoError("service", "write to decision log failed");
    }
    done += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0) {
    ::close(fd);
    throw IoError("service", "fsync of decision log failed");
  }
  ::close(fd);
}

// ---------------------------------------------------------------- service

ReviewService::ReviewService(catalogue::Store base_store, data::Manifest queries, Tensor query_embeddings,
                             ServiceOptions options, data::Manifest gallery_images)
    : options_(std::move(options)),
      queries_(std::move(queries)),
      gallery_(std::move(gallery_images)),
      query_embeddings_(std::move(query_embeddings)) {
  if (options_.k < 1) throw Error("service", "k must be at least 1");
  if (query_embeddings_.rank() != 2 || query_embeddings_.dim(0) != queries_.size() ||
      query_embeddings_.dim(1) != base_store.dim())
    throw ShapeError("service", "query embeddings " + shape_str(query_embeddings_.shape()) + " for " +
                                    std::to_string(queries_.size()) + " queries against a store of dimension " +
                                    std::to_string(base_store.dim()));
  auto snap = std::make_shared<Snapshot>(Snapshot{0, {}, base_store, {}});
  const std::size_t d = base_store.dim();
  for (std::size_t i = 0; i < queries_.size(); ++i) {
    ReviewTask t;
    t.task_id = task_id_for(i);
    t.query_image_id = queries_[i].image_id;
    t.query_date = queries_[i].date;
    if (!base_store.empty()) {
      const std::vector<double> q(query_embeddings_.data().begin() + static_cast<long>(i * d),
                                  query_embeddings_.data().begin() + static_cast<long>((i + 1) * d));
      const auto m = catalogue::match(base_store, q, options_.k, catalogue::IdentityScore::Nearest,
                                      options_.exemplars);
      for (std::size_t r = 0; r < m.candidates.size(); ++r)
        t.candidates.push_back({r + 1, m.candidates[r].identity_id, m.candidates[r].distance,
                                m.candidates[r].image_ids});
    }
    snap->tasks.push_back(std::move(t));
  }
  order_.resize(snap->tasks.size());
  std::iota(order_.begin(), order_.end(), 0);
  const auto key = [&](std::size_t i) {
    const auto& c = snap->tasks[i].candidates;
    return c.empty() ? std::numeric_limits<double>::infinity() : c.front().distance;
  };
  if (options_.order == TaskOrder::Confident)
    std::stable_sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
  else
    std::stable_sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) {
      // Tasks with no candidates stay last in either order.
      const double ka = key(a), kb = key(b);
      if (std::isinf(ka) != std::isinf(kb)) return std::isinf(kb);
      return ka > kb;
    });

  if (!options_.log_path.empty() && std::filesystem::exists(options_.log_path)) {
    // Drop a torn final line so later appends start on a line boundary.
    const std::string text = binio::read_file(options_.log_path, "service");
    const std::size_t keep = text.rfind('\n') == std::string::npos ? 0 : text.rfind('\n') + 1;
    if (keep != text.size()) std::filesystem::resize_file(options_.log_path, keep);
    for (const Decision& dec : read_log(options_.log_path)) apply(*snap, dec);
  }
  snap->version = snap->log.size();
  std::atomic_store(&snapshot_, std::shared_ptr<const Snapshot>(std::move(snap)));
}

void ReviewService::apply(Snapshot& s, const Decision& dec) const {
  const std::size_t i = task_index(s.tasks, dec.task_id);
  if (i == s.tasks.size()) throw IoError("service", "decision log names unknown task '" + dec.task_id + "'");
  ReviewTask& t = s.tasks[i];
  if (t.status != Status::Pending) throw IoError("service", "decision log decides task '" + dec.task_id + "' twice");
  switch (dec.action) {
    case Action::Confirm: t.status = Status::Confirmed; break;
    case Action::NewIndividual: t.status = Status::NewIndividual; break;
    case Action::Skip: t.status = Status::Skipped; break;
  }
  t.decision = dec;
  if (dec.action != Action::Skip) {
    const std::size_t d = s.store.dim();
    catalogue::Entry e{queries_[i].image_id, dec.identity_id, queries_[i].date,
                       std::vector<double>(query_embeddings_.data().begin() + static_cast<long>(i * d),
                                           query_embeddings_.data().begin() + static_cast<long>((i + 1) * d))};
    s.store.add(std::move(e));
  }
  s.log.push_back(dec);
}

catalogue::Store ReviewService::replay(const catalogue::Store& base, const std::vector<Decision>& log,
                                       const data::Manifest& queries, const Tensor& emb,
                                       const std::vector<ReviewTask>& tasks) {
  catalogue::Store store = base;
  const std::size_t d = base.dim();
  for (const auto& dec : log) {
    if (dec.action == Action::Skip) continue;
    const std::size_t i = task_index(tasks, dec.task_id);
    if (i == tasks.size()) throw IoError("service", "decision log names unknown task '" + dec.task_id + "'");
    store.add({queries[i].image_id, dec.identity_id, queries[i].date,
               std::vector<double>(emb.data().begin() + static_cast<long>(i * d),
                                   emb.data().begin() + static_cast<long>((i + 1) * d))});
  }
  return store;
}

std::optional<ReviewTask> ReviewService::next() const {
  const auto s = snapshot();
  for (std::size_t i : order_)
    if (s->tasks[i].status == Status::Pending) return s->tasks[i];
  return std::nullopt;
}

ReviewTask ReviewService::task(const std::string& task_id) const {
  const auto s = snapshot();
  const std::size_t i = task_index(s->tasks, task_id);
  if (i == s->tasks.size()) throw ServiceError(404, "unknown task '" + task_id + "'");
  return s->tasks[i];
}

ReviewTask ReviewService::decide(const std::string& task_id, Action action, const std::string& identity_id,
                                 bool override_candidates, const std::string& decided_by) {
  std::lock_guard<std::mutex> lock(writer_);
  const auto cur = snapshot();
  const std::size_t i = task_index(cur->tasks, task_id);
  if (i == cur->tasks.size()) throw ServiceError(404, "unknown task '" + task_id + "'");
  const ReviewTask& t = cur->tasks[i];
  if (t.status != Status::Pending)
    throw ServiceError(409, "task '" + task_id + "' already decided (" + to_string(t.status) + ")");

  Decision dec;
  dec.seq = cur->log.size() + 1;
  dec.task_id = task_id;
  dec.action = action;
  dec.override_candidates = override_candidates;
  dec.decided_by = decided_by;
  dec.decided_at = utc_now();
  if (action == Action::Confirm) {
    if (identity_id.empty()) throw ServiceError(422, "confirm needs an identity_id");
    const bool listed = std::any_of(t.candidates.begin(), t.candidates.end(),
                                    [&](const CandidateView& c) { return c.identity_id == identity_id; });
    if (!listed && !override_candidates)
      throw ServiceError(422, "identity '" + identity_id + "' is not among the candidates; set override to force");
    dec.identity_id = identity_id;
  } else if (action == Action::NewIndividual) {
    dec.identity_id = identity_id.empty() ? "new-" + task_id : identity_id;
    const bool known = std::any_of(cur->store.entries().begin(), cur->store.entries().end(),
                                   [&](const catalogue::Entry& e) { return e.identity_id == dec.identity_id; });
    if (known) throw ServiceError(422, "identity '" + dec.identity_id + "' already exists in the catalogue");
  }
  if (action != Action::Skip && cur->store.contains(t.query_image_id))
    throw ServiceError(409, "image '" + t.query_image_id + "' is already catalogued");
  if (action != Action::Skip && (dec.identity_id.size() >= catalogue::kIdWidth))
    throw ServiceError(422, "identity_id too long");

  auto next = std::make_shared<Snapshot>(*cur);
  apply(*next, dec);
  next->version = cur->version + 1;
  append_log(dec);  // durable before the new state becomes visible
  if (!options_.store_out.empty()) catalogue::store_save(next->store, options_.store_out);
  ReviewTask out = next->tasks[i];
  std::atomic_store(&snapshot_, std::shared_ptr<const Snapshot>(std::move(next)));
  return out;
}

Stats ReviewService::stats() const {
  const auto s = snapshot();
  Stats st;
  std::vector<eval::RankedRelevance> labelled;
  for (const auto& t : s->tasks) {
    switch (t.status) {
      case Status::Pending: ++st.pending; break;
      case Status::Confirmed: ++st.confirmed; break;
      case Status::NewIndividual: ++st.new_individual; break;
      case Status::Skipped: ++st.skipped; break;
    }
    if (t.status == Status::Confirmed || t.status == Status::NewIndividual) {
      eval::RankedRelevance rel;
      for (const auto& c : t.candidates) rel.push_back(c.identity_id == t.decision->identity_id);
      labelled.push_back(std::move(rel));
    }
  }
  st.labelled = labelled.size();
  if (!labelled.empty()) {
    st.top1_agreement = eval::topk_accuracy(labelled, 1);
    st.top5_agreement = eval::topk_accuracy(labelled, 5);
  }
  return st;
}

std::string ReviewService::image_png(const std::string& image_id) const {
  std::size_t i = queries_.find(image_id);
  if (i < queries_.size()) return data::encode_png(queries_[i].image);
  i = gallery_.find(image_id);
  if (i < gallery_.size()) return data::encode_png(gallery_[i].image);
  throw ServiceError(404, "unknown image '" + image_id + "'");
}

// ---------------------------------------------------------------- JSON views

std::string task_json(const ReviewTask& t) {
  json cands = json::array();
  for (const auto& c : t.candidates) {
    json ex = json::array();
    for (const auto& id : c.exemplars) ex.push_back({{"image_id", id}, {"url", "/images/" + id}});
    cands.push_back({{"rank", c.rank}, {"identity_id", c.identity_id}, {"distance", c.distance}, {"exemplars", ex}});
  }
  json j{{"task_id", t.task_id},
         {"query_image_id", t.query_image_id},
         {"query_image_url", "/images/" + t.query_image_id},
         {"query_date", t.query_date},
         {"status", to_string(t.status)},
         {"candidates", cands},
         {"decision", nullptr}};
  if (t.decision) j["decision"] = json::parse(decision_to_json(*t.decision));
  return j.dump();
}

std::string stats_json(const Stats& s) {
  json j{{"pending", s.pending},
         {"decided", s.confirmed + s.new_individual + s.skipped},
         {"confirmed", s.confirmed},
         {"new_individual", s.new_individual},
         {"skipped", s.skipped},
         {"labelled", s.labelled},
         {"top1_agreement", nullptr},
         {"top5_agreement", nullptr}};
  if (s.top1_agreement) j["top1_agreement"] = *s.top1_agreement;
  if (s.top5_agreement) j["top5_agreement"] = *s.top5_agreement;
  return j.dump();
}

}  // namespace finreid::service
