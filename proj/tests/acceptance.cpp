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

// Acceptance runner: one PASS/FAIL line per criterion, details indented
// below it. Exit status is the number of failed criteria.
//
//   finreid_acceptance                 all criteria
//   finreid_acceptance gradient e2e    a selection, by key

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <algorithm>
#include <functional>
#include <string>
#include <vector>

#include "checks.hpp"
#include "helpers.hpp"

#include "finreid/catalogue.hpp"
#include "finreid/eval.hpp"
#include "finreid/service.hpp"
#include "finreid/trainer.hpp"

using namespace finreid;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::vector<std::string> details;
};

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

bool finite_trace(const std::vector<trainer::TraceRow>& trace) {
  for (const auto& r : trace)
    if (!std::isfinite(r.loss) || !std::isfinite(r.mean_hardest_pos) || !std::isfinite(r.mean_hardest_neg))
      return false;
  return true;
}

const std::vector<std::uint64_t> kSeeds{1, 2, 3};
constexpr std::uint64_t kQuerySeed = 7;

// ------------------------------------------------------------------ criteria

Outcome gradient() {
  const auto t0 = Clock::now();
  const auto r = checks::gradient_suite(100);
  const double secs = seconds_since(t0);
  Outcome o;
  double worst = 0.0;
  std::string worst_name;
  for (const auto& [name, err] : r.primitive_max)
    if (err >= worst) worst = err, worst_name = name;
  o.pass = worst < 1e-5 && r.composition_max < 1e-4 && r.composition_cases == 100 && secs < 60.0;
  o.details.push_back(fmt("primitives: %zu, worst %.3e (%s), bound 1e-5", r.primitive_max.size(), worst,
                          worst_name.c_str()));
  o.details.push_back(fmt("composition: %zu tie-free cases (%zu tied skipped), worst %.3e, bound 1e-4",
                          r.composition_cases, r.composition_skipped, r.composition_max));
  o.details.push_back(fmt("runtime %.1f s, bound 60 s", secs));
  return o;
}

Outcome batch_hard() {
  const auto r = checks::batch_hard_suite(100);
  Outcome o;
  o.pass = r.batches == 100 && !r.index_mismatch && r.max_distance_error <= 1e-12 &&
           r.max_anchor_loss_error <= 1e-12 && r.max_total_error <= 1e-12;
  o.details.push_back(fmt("batches %zu; max error distance %.2e, per-anchor loss %.2e, total %.2e; bound 1e-12",
                          r.batches, r.max_distance_error, r.max_anchor_loss_error, r.max_total_error));
  o.details.push_back(std::string("selected indices ") + (r.index_mismatch ? "differ" : "agree"));
  return o;
}

Outcome metrics() {
  const auto r = checks::metric_suite(200, 30);
  Outcome o;
  o.pass = r.instances == 200 && !r.ranking_mismatch && r.max_topk_error <= 1e-12 && r.max_map_error <= 1e-12 &&
           r.max_ap_error <= 1e-12 && r.hand_cases_exact;
  o.details.push_back(fmt("instances %zu; max error top-k %.2e, mAP %.2e, AP %.2e; bound 1e-12", r.instances,
                          r.max_topk_error, r.max_map_error, r.max_ap_error));
  o.details.push_back(std::string("hand cases 1, 1/2, 5/6 ") + (r.hand_cases_exact ? "exact" : "NOT exact"));
  return o;
}

Outcome protocol() {
  const auto r = checks::protocol_suite(185, 5);
  Outcome o;
  bool sizes = r.fold_sizes.size() == 5;
  for (auto s : r.fold_sizes) sizes = sizes && s == 37;
  o.pass = r.identities == 185 && sizes && r.partition && r.cases_scanned > 0 && r.exclusion_violations == 0 &&
           r.relevance_violations == 0;
  std::string fs;
  for (auto s : r.fold_sizes) fs += (fs.empty() ? "" : " ") + std::to_string(s);
  o.details.push_back(fmt("185 identities -> fold sizes [%s]; partition %s", fs.c_str(), r.partition ? "yes" : "no"));
  o.details.push_back(fmt("%zu query cases scanned; same-day violations %zu, relevance violations %zu",
                          r.cases_scanned, r.exclusion_violations, r.relevance_violations));
  return o;
}

Outcome distractors() {
  const std::vector<std::size_t> counts{0, 150, 300, 600, 900, 1200};
  const auto r = checks::distractor_suite(counts);
  Outcome o;
  o.pass = r.cases > 0 && r.ap_increases == 0 && r.top1_increases == 0 && r.top5_increases == 0;
  o.details.push_back(fmt("%zu cases x %zu levels; increases: AP %zu, top-1 %zu, top-5 %zu (tolerance 0)", r.cases,
                          counts.size(), r.ap_increases, r.top1_increases, r.top5_increases));
  std::string maps;
  for (std::size_t i = 0; i < counts.size(); ++i) maps += fmt(" %zu:%.4f", counts[i], r.map_by_count[i]);
  o.details.push_back("mAP by distractor count:" + maps);
  return o;
}

trainer::TrainRunConfig e2e_config(std::size_t batches) {
  trainer::TrainRunConfig cfg;
  cfg.p = 10;
  cfg.k = 4;
  cfg.loss.margin = loss::MarginMode::soft();
  cfg.schedule = batches == 2000 ? trainer::Schedule{} : trainer::Schedule::scaled(batches);
  return cfg;
}

Outcome end_to_end() {
  const auto t0 = Clock::now();
  Outcome o;
  std::vector<double> top1, top5;
  bool finite = true;
  for (auto seed : kSeeds) {
    const auto split = checks::synthetic_split(50, 15, 12, 3, 32, seed);
    auto cfg = e2e_config(2000);
    cfg.seed_all(seed);
    const auto t1 = Clock::now();
    const auto res = trainer::train(cfg, split.train);
    const auto rep = checks::held_out_report(res.params, split.held_out, kQuerySeed);
    const bool fin = finite_trace(res.trace) && res.trace.size() == 2000;
    finite = finite && fin;
    top1.push_back(rep.top1);
    top5.push_back(rep.top5);
    o.details.push_back(fmt("seed %llu: top-1 %.2f%%, top-5 %.2f%%, mAP %.2f%%, %zu queries, trace %s, %.0f s",
                            static_cast<unsigned long long>(seed), 100 * rep.top1, 100 * rep.top5, 100 * rep.map,
                            rep.queries, fin ? "finite" : "NOT finite", seconds_since(t1)));
  }
  const auto m1 = eval::mean_se(top1), m5 = eval::mean_se(top5);
  const double secs = seconds_since(t0);
  o.pass = m1.mean >= 0.85 && m5.mean >= 0.95 && finite && secs <= 900.0;
  o.details.push_back(fmt("mean top-1 %.2f%% (>= 85), mean top-5 %.2f%% (>= 95)", 100 * m1.mean, 100 * m5.mean));
  o.details.push_back(fmt("runtime %.0f s for three runs, bound 900 s", secs));
  return o;
}

constexpr std::size_t kAblationBatches = 300;

Outcome ablation() {
  const auto t0 = Clock::now();
  Outcome o;
  // More held-out identities than the end-to-end split so top-5 does not
  // saturate at every setting.
  const auto split = checks::synthetic_split(50, 40, 12, 3, 32, 11);
  eval::AblationOptions opts;
  opts.base = e2e_config(kAblationBatches);
  opts.query_seed = kQuerySeed;

  auto metric_of = [](const std::vector<eval::AblationRow>& rows, std::size_t s, double eval::EvalReport::*m) {
    std::vector<double> v;
    for (const auto& r : rows)
      if (r.setting == s) v.push_back(r.report.*m);
    return eval::mean_se(v);
  };
  auto by_setting = [&](const std::vector<eval::AblationRow>& rows, std::size_t s) {
    return metric_of(rows, s, &eval::EvalReport::top5);
  };
  auto others = [&](const std::vector<eval::AblationRow>& rows, const std::vector<std::size_t>& settings) {
    std::string out = "    top-1 / mAP means:";
    for (auto s : settings)
      out += fmt(" %zu:%.2f/%.2f", s, 100 * metric_of(rows, s, &eval::EvalReport::top1).mean,
                 100 * metric_of(rows, s, &eval::EvalReport::map).mean);
    return out;
  };

  const std::vector<std::size_t> sizes{10, 25, 50};
  const auto rows = eval::ablation_individuals(split.train, split.held_out, sizes, kSeeds, opts);
  bool trend = true;
  std::string line = "individuals, top-5 mean +- SE:";
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const auto cur = by_setting(rows, sizes[i]);
    line += fmt(" %zu:%.2f+-%.2f", sizes[i], 100 * cur.mean, 100 * cur.se);
    if (i == 0) continue;
    const auto prev = by_setting(rows, sizes[i - 1]);
    trend = trend && cur.mean >= prev.mean - 2.0 * std::sqrt(prev.se * prev.se + cur.se * cur.se);
  }
  o.details.push_back(line + (trend ? "  (non-decreasing within 2 SE)" : "  (DECREASES beyond 2 SE)"));
  o.details.push_back(others(rows, sizes));

  const std::vector<std::size_t> caps{2, 4, 8, 12};
  const auto cap_rows = eval::ablation_images_per_id(split.train, split.held_out, caps, kSeeds, opts);
  line = "images per identity, top-5 mean +- SE:";
  for (auto c : caps) {
    const auto m = by_setting(cap_rows, c);
    line += fmt(" %zu:%.2f+-%.2f", c, 100 * m.mean, 100 * m.se);
  }
  const bool cap_ok = by_setting(cap_rows, 8).mean >= by_setting(cap_rows, 2).mean;
  o.details.push_back(line + (cap_ok ? "  (cap 8 >= cap 2)" : "  (cap 8 < cap 2)"));
  o.details.push_back(others(cap_rows, caps));
  o.details.push_back(fmt("%zu batches per run, 3 seeds, %zu held-out identities, %.0f s", kAblationBatches,
                          split.held_out.identity_count(), seconds_since(t0)));
  o.pass = trend && cap_ok;
  return o;
}

Outcome determinism() {
  Outcome o;
  data::SynthConfig sc;
  sc.num_identities = 8;
  sc.images_per_identity = 4;
  sc.days_per_identity = 2;
  sc.side = 16;
  sc.seed = 5;
  const auto manifest = data::synth_generate(sc);
  trainer::TrainRunConfig cfg;
  cfg.p = 4;
  cfg.k = 2;
  cfg.model.input_side = 16;
  cfg.model.conv_blocks = {{8, true}, {16, true}};
  cfg.model.head_hidden = 32;
  cfg.model.embed_dim = 8;
  cfg.schedule = trainer::Schedule::scaled(40);
  cfg.seed_all(9);

  auto straight = [&] {
    auto st = trainer::initial_state(cfg);
    trainer::run_batches(st, cfg, manifest, 40);
    return st;
  };
  const auto a = straight(), b = straight();
  const std::string ca = trainer::encode_checkpoint(cfg, a), cb = trainer::encode_checkpoint(cfg, b);
  const bool same_ckpt = ca == cb;
  const bool same_trace = trainer::format_trace_csv(a.trace) == trainer::format_trace_csv(b.trace);
  o.details.push_back(fmt("repeat run: checkpoint bytes %s (%zu B), trace %s", same_ckpt ? "identical" : "DIFFER",
                          ca.size(), same_trace ? "identical" : "DIFFERS"));

  testing::TempDir dir("accept");
  auto half = trainer::initial_state(cfg);
  trainer::run_batches(half, cfg, manifest, 17);
  trainer::checkpoint_save(cfg, half, dir.file("half.ckpt"));
  auto resumed = trainer::checkpoint_load(dir.file("half.ckpt"));
  trainer::run_batches(resumed.state, resumed.config, manifest, 40);
  const bool resume_ok = trainer::encode_checkpoint(resumed.config, resumed.state) == ca;
  o.details.push_back(std::string("resume at batch 17 of 40: ") + (resume_ok ? "bit-identical" : "DIFFERS"));

  catalogue::Store store(cfg.model.embed_dim, model::fingerprint(a.params));
  store.add(manifest.records(), eval::embed_manifest(a.params, manifest), model::fingerprint(a.params));
  catalogue::store_save(store, dir.file("store.bin"));
  const auto loaded = catalogue::store_load(dir.file("store.bin"));
  const bool store_ok = loaded == store && catalogue::encode_store(loaded) == catalogue::encode_store(store);
  o.details.push_back(fmt("store of %zu entries: save/load %s", store.size(), store_ok ? "exact" : "DIFFERS"));

  sc.num_identities = 6;
  sc.images_per_identity = 1;
  sc.first_index = 200;
  sc.id_prefix = "q";
  const auto queries = data::synth_generate(sc);
  const Tensor qemb = eval::embed_manifest(a.params, queries);
  service::ServiceOptions so;
  so.k = 3;
  so.log_path = dir.file("decisions.jsonl");
  std::vector<std::string> tasks_before;
  catalogue::Store after(1, 0);
  {
    service::ReviewService svc(store, queries, qemb, so);
    const auto initial = svc.snapshot();
    std::size_t i = 0;
    for (const auto& t : initial->tasks) {
      const auto& top = t.candidates[0].identity_id;
      if (i % 3 == 0) svc.decide(t.task_id, service::Action::Confirm, top);
      if (i % 3 == 1) svc.decide(t.task_id, service::Action::NewIndividual);
      if (i % 3 == 2) svc.decide(t.task_id, service::Action::Skip);
      ++i;
    }
    const auto final_snap = svc.snapshot();
    for (const auto& t : final_snap->tasks) tasks_before.push_back(service::task_json(t));
    after = final_snap->store;
  }
  service::ReviewService again(store, queries, qemb, so);
  const auto snap = again.snapshot();
  bool replay_ok = snap->store == after && snap->tasks.size() == tasks_before.size() &&
                   service::ReviewService::replay(store, service::read_log(so.log_path), queries, qemb,
                                                  snap->tasks) == after;
  for (std::size_t i = 0; replay_ok && i < tasks_before.size(); ++i)
    replay_ok = service::task_json(snap->tasks[i]) == tasks_before[i];
  o.details.push_back(fmt("decision log of %zu entries: replay %s", snap->log.size(), replay_ok ? "exact" : "DIFFERS"));

  o.pass = same_ckpt && same_trace && resume_ok && store_ok && replay_ok;
  return o;
}

Outcome no_ui() {
  namespace fs = std::filesystem;
  Outcome o;
  std::vector<std::string> found;
  for (const char* root : {FINREID_SOURCE_DIR, FINREID_BINARY_DIR}) {
    if (!fs::exists(root)) continue;
    for (auto it = fs::recursive_directory_iterator(root, fs::directory_options::skip_permission_denied);
         it != fs::recursive_directory_iterator(); ++it) {
      const auto name = it->path().filename().string();
      if (name == ".git" || name == "examples") {
        it.disable_recursion_pending();
        continue;
      }
      if (name == "package.json" || name == "node_modules" || name == "review-ui" || it->path().extension() == ".ts" ||
          it->path().extension() == ".tsx")
        found.push_back(it->path().string());
    }
  }
  o.pass = found.empty();
  o.details.push_back(found.empty() ? "no review-ui sources or build outputs; every criterion above ran in this process"
                                    : "review UI artefacts present, first: " + found.front());
  return o;
}

struct Criterion {
  const char* key;
  const char* title;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  trainer::configure_allocator();
  const std::vector<Criterion> all{
      {"gradient", "gradient correctness", gradient},
      {"batch-hard", "batch-hard oracle equivalence", batch_hard},
      {"metrics", "metric oracle equivalence", metrics},
      {"protocol", "protocol invariants", protocol},
      {"distractors", "distractor monotonicity", distractors},
      {"e2e", "end-to-end learning", end_to_end},
      {"ablation", "ablation trends", ablation},
      {"determinism", "determinism and durability", determinism},
      {"no-ui", "runs without the review UI", no_ui},
  };
  std::vector<std::string> wanted(argv + 1, argv + argc);
  int failed = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.key) == wanted.end()) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.details.push_back(std::string("exception: ") + e.what());
    }
    std::printf("%s  %-32s (%.1f s)\n", o.pass ? "PASS" : "FAIL", c.title, seconds_since(t0));
    for (const auto& d : o.details) std::printf("      %s\n", d.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed;
}
