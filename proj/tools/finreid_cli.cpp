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

// finreid command line: synthetic data, training, embedding, evaluation,
// matching, consistency checks and the review service.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <sstream>

#include "CLI11.hpp"
#include "httplib.h"

#include "finreid/binio.hpp"
#include "finreid/catalogue.hpp"
#include "finreid/data.hpp"
#include "finreid/error.hpp"
#include "finreid/eval.hpp"
#include "finreid/service.hpp"
#include "finreid/trainer.hpp"

namespace fs = std::filesystem;
using namespace finreid;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_file(const std::string& path, const char* what) {
  if (!fs::exists(path)) throw IoError("cli", std::string(what) + " '" + path + "' not found");
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (used != item.size() || v < 0) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw UsageError("bad integer '" + item + "' in list '" + text + "'");
    }
  }
  return out;
}

template <typename T>
void write_text(const std::string& path, const T& text) {
  binio::write_file_atomic(path, text, "cli");
}

// ---------------------------------------------------------------- training options

struct TrainFlags {
  std::size_t p = 10, k = 4, batches = 2000, warm = 0;
  double lr = 3e-4, margin_value = 0.0, decay = 0.0;
  std::string margin = "soft";
  std::size_t side = 32, hidden = 1024, embed_dim = 128;
  std::string blocks = "16,32,64";
  double bn_momentum = 0.9;
  bool l2 = false, no_augment = false, squared = false, mean_reduction = false;

  void attach(CLI::App* app) {
    app->add_option("--p", p, "identities per batch")->capture_default_str();
    app->add_option("--k", k, "images per identity")->capture_default_str();
    app->add_option("--batches", batches, "training batches")->capture_default_str();
    app->add_option("--warm", warm, "constant-lr batches (default 32% of --batches)");
    app->add_option("--lr", lr, "base learning rate")->capture_default_str();
    app->add_option("--decay", decay, "per-batch decay (0: reach lr/100 at the last batch)");
    app->add_option("--margin", margin, "soft or hard")->check(CLI::IsMember({"soft", "hard"}))->capture_default_str();
    app->add_option("--margin-value", margin_value, "hinge margin for --margin hard");
    app->add_option("--side", side, "input side in pixels")->capture_default_str();
    app->add_option("--hidden", hidden, "head hidden units")->capture_default_str();
    app->add_option("--embed-dim", embed_dim, "embedding dimension")->capture_default_str();
    app->add_option("--blocks", blocks, "conv block channels, comma separated")->capture_default_str();
    app->add_option("--bn-momentum", bn_momentum, "batch-norm running-stat momentum")->capture_default_str();
    app->add_flag("--l2-normalize", l2, "unit-length embeddings");
    app->add_flag("--no-augment", no_augment, "disable training augmentation");
    app->add_flag("--squared", squared, "squared Euclidean distance in the loss");
    app->add_flag("--mean-loss", mean_reduction, "mean instead of sum over anchors");
  }

  trainer::TrainRunConfig config(std::size_t channels, std::uint64_t seed) const {
    trainer::TrainRunConfig c;
    c.p = p;
    c.k = k;
    if (margin == "hard") {
      if (!(margin_value > 0.0)) throw UsageError("--margin hard needs a positive --margin-value");
      c.loss.margin = loss::MarginMode::hard(margin_value);
    }
    c.loss.squared = squared;
    c.loss.mean_reduction = mean_reduction;
    if (batches == 2000 && warm == 0) {
      c.schedule = trainer::Schedule{};
      c.schedule.base_lr = lr;
    } else {
      c.schedule = trainer::Schedule::scaled(batches, lr);
      if (warm > 0) c.schedule.warm_batches = warm;
    }
    c.schedule.decay_rate = decay;
    c.model.input_side = side;
    c.model.input_channels = channels;
    c.model.head_hidden = hidden;
    c.model.embed_dim = embed_dim;
    c.model.bn_momentum = bn_momentum;
    c.model.l2_normalize = l2;
    c.model.conv_blocks.clear();
    for (std::size_t ch : parse_sizes(blocks)) c.model.conv_blocks.push_back({ch, true});
    c.augment.enabled = !no_augment;
    c.seed_all(seed);
    c.validate();
    return c;
  }
};

// ---------------------------------------------------------------- subcommands

int cmd_synth(const data::SynthConfig& cfg, const std::string& out, const std::string& png_dir) {
  data::Manifest m = data::synth_generate(cfg);
  if (!png_dir.empty()) {
    fs::create_directories(png_dir);
    std::vector<data::ImageRecord> recs = m.records();
    const fs::path base = fs::absolute(out).parent_path();
    for (auto& r : recs) {
      const fs::path file = fs::absolute(fs::path(png_dir) / (r.image_id + ".png"));
      data::write_png(r.image, file.string());
      r.path = fs::relative(file, base).string();
      // PNG storage quantises to 8 bits; keep the record consistent with the file.
      r.image = data::read_png(file.string());
    }
    m = data::Manifest(std::move(recs));
  }
  data::save_manifest(m, out, !png_dir.empty());
  std::printf("wrote %zu records (%zu identities) to %s\n", m.size(), m.identity_count(), out.c_str());
  return 0;
}

std::size_t manifest_channels(const data::Manifest& m) { return m.empty() ? 1 : m[0].image.channels; }

int cmd_train(const TrainFlags& flags, std::uint64_t seed, const std::string& manifest_path, const std::string& out,
              const std::string& trace_path, const std::string& resume, std::size_t every) {
  require_file(manifest_path, "manifest");
  const data::Manifest m = data::load_manifest(manifest_path);
  trainer::TrainRunConfig cfg;
  trainer::TrainState state;
  if (!resume.empty()) {
    require_file(resume, "checkpoint");
    trainer::Checkpoint ck = trainer::checkpoint_load(resume);
    cfg = ck.config;
    state = std::move(ck.state);
  } else {
    cfg = flags.config(manifest_channels(m), seed);
    state = trainer::initial_state(cfg);
  }
  cfg.checkpoint_every = every;
  cfg.checkpoint_path = every > 0 ? out : std::string();
  const std::size_t total = cfg.schedule.total_batches;
  trainer::run_batches(state, cfg, m, total, [&](const trainer::TrainState& s) {
    if (s.next_batch % 100 == 0 || s.next_batch == total) {
      const auto& r = s.trace.back();
      std::fprintf(stderr, "batch %zu/%zu lr %.3g loss %.4f hp %.4f hn %.4f\n", s.next_batch, total, r.lr, r.loss,
                   r.mean_hardest_pos, r.mean_hardest_neg);
    }
  });
  trainer::checkpoint_save(cfg, state, out);
  if (!trace_path.empty()) trainer::write_trace_csv(state.trace, trace_path);
  std::printf("checkpoint %s fingerprint %016llx\n", out.c_str(),
              static_cast<unsigned long long>(model::fingerprint(state.params)));
  return 0;
}

int cmd_embed(const std::string& manifest_path, const std::string& ckpt, const std::string& out, bool append,
              const std::string& project) {
  require_file(manifest_path, "manifest");
  require_file(ckpt, "checkpoint");
  const data::Manifest m = data::load_manifest(manifest_path);
  const model::ModelParams params = trainer::load_params(ckpt);
  const Tensor emb = eval::embed_manifest(params, m);
  const std::uint64_t fp = model::fingerprint(params);
  catalogue::Store store = append && fs::exists(out) ? catalogue::store_load(out)
                                                    : catalogue::Store(params.config.embed_dim, fp);
  store.add(m.records(), emb, fp);
  catalogue::store_save(store, out);
  if (!project.empty()) {
    const Tensor xy = eval::project_2d(emb);
    std::string csv = "image_id,identity_id,x,y\n";
    char buf[64];
    for (std::size_t i = 0; i < m.size(); ++i) {
      std::snprintf(buf, sizeof buf, ",%.9g,%.9g\n", xy[i * 2], xy[i * 2 + 1]);
      csv += m[i].image_id + "," + m[i].identity_id + buf;
    }
    write_text(project, csv);
  }
  std::printf("store %s: %zu entries, D=%zu\n", out.c_str(), store.size(), store.dim());
  return 0;
}

struct EvalFlags {
  std::string manifest, checkpoint, distractors, counts = "0,150,300,600,900,1200";
  std::size_t folds = 5;
  std::string ablation, settings, seeds = "1,2,3";
  std::size_t eval_fold = 0;
  std::string out_csv, out_json;
};

int cmd_eval(const EvalFlags& f, const TrainFlags& tf, std::uint64_t seed) {
  require_file(f.manifest, "manifest");
  const data::Manifest m = data::load_manifest(f.manifest);
  const auto folds = eval::make_folds(m, f.folds);
  const std::size_t channels = manifest_channels(m);

  if (!f.ablation.empty()) {
    if (f.eval_fold >= folds.size()) throw UsageError("--eval-fold outside 0.." + std::to_string(folds.size() - 1));
    std::vector<std::string> pool_ids;
    for (const auto& fold : folds)
      if (fold.index != f.eval_fold) pool_ids.insert(pool_ids.end(), fold.identities.begin(), fold.identities.end());
    const data::Manifest pool = m.with_identities(pool_ids);
    const data::Manifest held = m.with_identities(folds[f.eval_fold].identities);
    eval::AblationOptions opt{tf.config(channels, seed), splitmix64(seed ^ 0x51)};
    std::vector<std::uint64_t> seeds;
    for (std::size_t s : parse_sizes(f.seeds)) seeds.push_back(s);
    std::vector<std::size_t> settings = parse_sizes(f.settings);
    std::vector<eval::AblationRow> rows;
    if (f.ablation == "individuals") {
      if (settings.empty()) settings = {10, 25, pool.identity_count()};
      rows = eval::ablation_individuals(pool, held, settings, seeds, opt);
    } else {
      if (settings.empty()) settings = {2, 4, 8, 12};
      rows = eval::ablation_images_per_id(pool, held, settings, seeds, opt);
    }
    const std::string csv = eval::ablation_csv(f.ablation == "individuals" ? "identities" : "image_cap", rows);
    if (!f.out_csv.empty()) write_text(f.out_csv, csv);
    std::fputs(csv.c_str(), stdout);
    return 0;
  }

  std::optional<model::ModelParams> fixed;
  if (!f.checkpoint.empty()) {
    require_file(f.checkpoint, "checkpoint");
    fixed = trainer::load_params(f.checkpoint);
  }
  std::optional<data::Manifest> dpool;
  std::vector<std::size_t> counts{0};
  if (!f.distractors.empty()) {
    require_file(f.distractors, "distractor manifest");
    dpool = data::load_manifest(f.distractors);
    for (const auto& id : dpool->identities())
      if (m.has_identity(id)) throw Error("eval", "distractor identity '" + id + "' also appears in the manifest");
    counts = parse_sizes(f.counts);
  }

  std::vector<eval::EvalReport> reports;
  for (const auto& fold : folds) {
    const data::Manifest held = m.with_identities(fold.identities);
    model::ModelParams params;
    if (fixed) {
      params = *fixed;
    } else {
      std::vector<std::string> train_ids;
      for (const auto& other : folds)
        if (other.index != fold.index) train_ids.insert(train_ids.end(), other.identities.begin(), other.identities.end());
      std::fprintf(stderr, "fold %zu: training on %zu identities\n", fold.index, train_ids.size());
      params = trainer::train(tf.config(channels, seed + fold.index), m.with_identities(train_ids)).params;
    }
    Rng qrng = Rng::stream(seed, 0xe0 + fold.index);
    const eval::QuerySet qs = eval::build_query_cases(held, qrng);
    const Tensor emb = eval::embed_manifest(params, held);
    if (dpool) {
      const eval::DistractorPool pool = eval::make_distractor_pool(*dpool, eval::embed_manifest(params, *dpool));
      for (auto& r : eval::distractor_sweep(qs, held, emb, pool, counts, fold.index)) reports.push_back(std::move(r));
    } else {
      reports.push_back(eval::evaluate(qs, held, emb, nullptr, 0, fold.index));
    }
  }
  const std::string csv = eval::report_csv(reports);
  if (!f.out_csv.empty()) write_text(f.out_csv, csv);
  if (!f.out_json.empty()) write_text(f.out_json, eval::report_json(reports));
  std::fputs(csv.c_str(), stdout);
  return 0;
}

std::vector<double> embed_query(const model::ModelParams& params, const std::string& image_path) {
  require_file(image_path, "query image");
  const data::Image im = data::read_image(image_path);
  const Tensor e = model::embed_eval(params, data::to_tensor(std::vector<data::Image>{im}, params.config.input_side));
  return e.values();
}

int cmd_match(const std::string& query, const std::string& store_path, const std::string& ckpt, std::size_t k,
              bool mean_score) {
  require_file(store_path, "store");
  require_file(ckpt, "checkpoint");
  const catalogue::Store store = catalogue::store_load(store_path);
  const model::ModelParams params = trainer::load_params(ckpt);
  if (model::fingerprint(params) != store.fingerprint())
    throw Error("catalogue", "checkpoint fingerprint does not match the store");
  const auto result = catalogue::match(store, embed_query(params, query), k,
                                       mean_score ? catalogue::IdentityScore::Mean : catalogue::IdentityScore::Nearest);
  std::printf("rank,identity_id,distance,nearest_image\n");
  for (std::size_t i = 0; i < result.candidates.size(); ++i) {
    const auto& c = result.candidates[i];
    std::printf("%zu,%s,%.9g,%s\n", i + 1, c.identity_id.c_str(), c.distance,
                c.image_ids.empty() ? "" : c.image_ids.front().c_str());
  }
  return 0;
}

int cmd_check(const std::string& store_path, double intra, double inter, const std::string& out) {
  require_file(store_path, "store");
  const catalogue::Store store = catalogue::store_load(store_path);
  catalogue::Thresholds t = catalogue::default_thresholds(store);
  if (intra > 0.0) t.intra = intra;
  if (inter > 0.0) t.inter = inter;
  const auto flags = catalogue::consistency_check(store, t);
  std::string csv = "kind,image_a,image_b,distance\n";
  char buf[64];
  for (const auto& fl : flags) {
    std::snprintf(buf, sizeof buf, ",%.9g\n", fl.distance);
    csv += std::string(fl.kind == catalogue::Flag::Kind::Intra ? "intra" : "inter") + "," + fl.image_a + "," +
           fl.image_b + buf;
  }
  if (!out.empty()) write_text(out, csv);
  std::fputs(csv.c_str(), stdout);
  std::fprintf(stderr, "intra threshold %.6g, inter threshold %.6g, %zu flags\n", t.intra, t.inter, flags.size());
  return 0;
}

struct ServeFlags {
  std::string store, checkpoint, queries, gallery, log, store_out, order = "confident", host = "127.0.0.1";
  int port = 8080;
  std::size_t k = 5;
};

int cmd_serve(const ServeFlags& f) {
  require_file(f.store, "store");
  require_file(f.checkpoint, "checkpoint");
  require_file(f.queries, "query manifest");
  catalogue::Store store = catalogue::store_load(f.store);
  const model::ModelParams params = trainer::load_params(f.checkpoint);
  if (model::fingerprint(params) != store.fingerprint())
    throw Error("catalogue", "checkpoint fingerprint does not match the store");
  data::Manifest queries = data::load_manifest(f.queries);
  data::Manifest gallery;
  if (!f.gallery.empty()) {
    require_file(f.gallery, "gallery manifest");
    gallery = data::load_manifest(f.gallery);
  }
  Tensor emb = eval::embed_manifest(params, queries);
  service::ServiceOptions opt;
  opt.k = f.k;
  opt.order = f.order == "uncertain" ? service::TaskOrder::Uncertain : service::TaskOrder::Confident;
  opt.log_path = f.log;
  opt.store_out = f.store_out;
  service::ReviewService svc(std::move(store), std::move(queries), std::move(emb), opt, std::move(gallery));
  httplib::Server server;
  service::install_routes(server, svc);
  std::fprintf(stderr, "serving %zu tasks on http://%s:%d\n", svc.snapshot()->tasks.size(), f.host.c_str(), f.port);
  if (!server.listen(f.host, f.port)) throw IoError("service", "cannot listen on " + f.host + ":" + std::to_string(f.port));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  trainer::configure_allocator();
  CLI::App app{"finreid: re-identification of individual animals from fin images"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "finreid 1.0.0");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.set_config("--config", "", "TOML file; a [subcommand] section holds that subcommand's long options");

  std::uint64_t seed = 0;
  const auto common = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "random seed")->capture_default_str();
  };

  // synth
  data::SynthConfig synth;
  std::string synth_out, png_dir;
  auto* s = app.add_subcommand("synth", "generate a synthetic fin manifest");
  common(s);
  s->add_option("--ids", synth.num_identities, "identities")->capture_default_str();
  s->add_option("--per-id", synth.images_per_identity, "images per identity")->capture_default_str();
  s->add_option("--days", synth.days_per_identity, "encounter days per identity")->capture_default_str();
  s->add_option("--side", synth.side, "image side")->capture_default_str();
  s->add_option("--channels", synth.channels, "1 or 3")->check(CLI::IsMember({1, 3}))->capture_default_str();
  s->add_option("--prefix", synth.id_prefix, "identity id prefix")->capture_default_str();
  s->add_option("--first-index", synth.first_index, "index of the first identity")->capture_default_str();
  s->add_option("--start-date", synth.start_date, "first encounter date")->capture_default_str();
  s->add_option("--png-dir", png_dir, "write PNG files and reference them by path");
  s->add_option("--out", synth_out, "output manifest")->required();

  // train
  TrainFlags tflags;
  std::string t_manifest, t_out, t_trace, t_resume;
  std::size_t t_every = 0;
  auto* t = app.add_subcommand("train", "train an embedding network");
  common(t);
  tflags.attach(t);
  t->add_option("--manifest", t_manifest, "training manifest")->required();
  t->add_option("--out", t_out, "checkpoint path")->required();
  t->add_option("--trace", t_trace, "loss trace CSV");
  t->add_option("--resume", t_resume, "continue from a checkpoint");
  t->add_option("--checkpoint-every", t_every, "batches between checkpoints (0: final only)");

  // embed
  std::string e_manifest, e_ckpt, e_out, e_project;
  bool e_append = false;
  auto* e = app.add_subcommand("embed", "embed a manifest into a catalogue store");
  common(e);
  e->add_option("--manifest", e_manifest, "manifest to embed")->required();
  e->add_option("--checkpoint", e_ckpt, "model checkpoint")->required();
  e->add_option("--out", e_out, "store path")->required();
  e->add_flag("--append", e_append, "append to an existing store");
  e->add_option("--project", e_project, "also write a 2-D projection CSV");

  // eval
  EvalFlags ef;
  TrainFlags eval_train;
  eval_train.batches = 2000;
  auto* ev = app.add_subcommand("eval", "cross-validated retrieval evaluation");
  common(ev);
  eval_train.attach(ev);
  ev->add_option("--manifest", ef.manifest, "labelled manifest")->required();
  ev->add_option("--checkpoint", ef.checkpoint, "evaluate this model on every fold instead of training per fold");
  ev->add_option("--folds", ef.folds, "number of folds")->capture_default_str();
  ev->add_option("--distractors", ef.distractors, "distractor manifest");
  ev->add_option("--distractor-counts", ef.counts, "nested distractor counts")->capture_default_str();
  ev->add_option("--ablation", ef.ablation, "individuals or images")->check(CLI::IsMember({"individuals", "images"}));
  ev->add_option("--ablation-settings", ef.settings, "sizes or caps, comma separated");
  ev->add_option("--ablation-seeds", ef.seeds, "training seeds, comma separated")->capture_default_str();
  ev->add_option("--eval-fold", ef.eval_fold, "held-out fold for ablations")->capture_default_str();
  ev->add_option("--out-csv", ef.out_csv, "CSV report");
  ev->add_option("--out-json", ef.out_json, "JSON report");

  // match
  std::string m_query, m_store, m_ckpt;
  std::size_t m_k = 5;
  bool m_mean = false;
  auto* mt = app.add_subcommand("match", "rank catalogue identities for a query image");
  common(mt);
  mt->add_option("--query", m_query, "query image (PNG or PGM)")->required();
  mt->add_option("--store", m_store, "catalogue store")->required();
  mt->add_option("--checkpoint", m_ckpt, "model checkpoint")->required();
  mt->add_option("--k", m_k, "identities to list")->capture_default_str();
  mt->add_flag("--mean-score", m_mean, "score identities by mean instead of nearest distance");

  // check
  std::string c_store, c_out;
  double c_intra = 0.0, c_inter = 0.0;
  auto* ck = app.add_subcommand("check", "flag inconsistent catalogue pairs");
  common(ck);
  ck->add_option("--store", c_store, "catalogue store")->required();
  ck->add_option("--intra", c_intra, "same-identity distance threshold (default: 95th percentile)");
  ck->add_option("--inter", c_inter, "cross-identity distance threshold (default: 5th percentile)");
  ck->add_option("--out", c_out, "flags CSV");

  // serve
  ServeFlags sf;
  auto* sv = app.add_subcommand("serve", "start the match-review HTTP service");
  common(sv);
  sv->add_option("--store", sf.store, "catalogue store")->required();
  sv->add_option("--checkpoint", sf.checkpoint, "model checkpoint")->required();
  sv->add_option("--queries", sf.queries, "pending query manifest")->required();
  sv->add_option("--gallery", sf.gallery, "manifest holding catalogue images");
  sv->add_option("--log", sf.log, "decision log")->required();
  sv->add_option("--store-out", sf.store_out, "store snapshot written after each decision");
  sv->add_option("--k", sf.k, "candidates per task")->capture_default_str();
  sv->add_option("--order", sf.order, "confident or uncertain")
      ->check(CLI::IsMember({"confident", "uncertain"}))
      ->capture_default_str();
  sv->add_option("--host", sf.host, "bind address")->capture_default_str();
  sv->add_option("--port", sf.port, "port")->capture_default_str();

  // `--config` is accepted anywhere; CLI11 only reads it on the top-level app.
  std::vector<std::string> args;
  for (int i = argc - 1; i >= 1; --i) args.emplace_back(argv[i]);
  for (std::size_t i = args.size(); i-- > 0;) {
    const std::string a = args[i];
    if (a == "--config" && i > 0) {
      const std::string v = args[i - 1];
      args.erase(args.begin() + static_cast<long>(i - 1), args.begin() + static_cast<long>(i + 1));
      args.push_back(v);
      args.push_back(a);
      --i;
    } else if (a.rfind("--config=", 0) == 0) {
      args.erase(args.begin() + static_cast<long>(i));
      args.push_back(a);
    }
  }

  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForVersion& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    std::fprintf(stderr, "error: cli: %s\n", ex.what());
    return 2;
  }

  try {
    if (*s) {
      synth.seed = seed;
      return cmd_synth(synth, synth_out, png_dir);
    }
    if (*t) return cmd_train(tflags, seed, t_manifest, t_out, t_trace, t_resume, t_every);
    if (*e) return cmd_embed(e_manifest, e_ckpt, e_out, e_append, e_project);
    if (*ev) return cmd_eval(ef, eval_train, seed);
    if (*mt) return cmd_match(m_query, m_store, m_ckpt, m_k, m_mean);
    if (*ck) return cmd_check(c_store, c_intra, c_inter, c_out);
    if (*sv) return cmd_serve(sf);
  } catch (const UsageError& ex) {
    std::fprintf(stderr, "error: cli: %s\n", ex.what());
    return 2;
  } catch (const finreid::Error& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return 1;
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: internal: %s\n", ex.what());
    return 1;
  }
  return 0;
}
