// Copyright 2026 The dsgg Authors. All Rights Reserved.
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

// Single entry point for the whole workflow. Artifacts live in a work
// directory; logs go to stderr and machine-readable output to stdout.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dsgg/pipeline/gradsuite.hpp"
#include "dsgg/pipeline/recipe.hpp"

namespace fs = std::filesystem;
using dsgg::numerics::Checkpoint;
using nlohmann::json;
using namespace dsgg::pipeline;

namespace {

const auto kStart = std::chrono::steady_clock::now();

void log(const std::string& msg) {
  const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - kStart).count();
  std::fprintf(stderr, "[%7.1fs] %s\n", t, msg.c_str());
}

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
  std::string work = "run";

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config, "JSON config file")->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "Master seed (overrides the config)");
    cmd->add_option("--set", sets, "Override a config key, e.g. --set train.lr_b=1e-4")->take_all();
    cmd->add_option("--work", work, "Work directory for artifacts")->capture_default_str();
  }

  PipelineConfig load() const {
    json j = json::object();
    if (!config.empty()) {
      std::ifstream in(config);
      if (!in) throw std::runtime_error("cannot open config " + config);
      j = json::parse(in);
    }
    for (const auto& s : sets) apply_override(j, s);
    if (seed) j["seed"] = *seed;
    return PipelineConfig::from_json(j);
  }

  fs::path path(const std::string& name) const { return fs::path(work) / name; }
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void require_file(const fs::path& p, const std::string& producer) {
  if (!fs::exists(p)) throw std::runtime_error("missing " + p.string() + " (run `dsgg " + producer + "` first)");
}

Checkpoint stage_checkpoint(const PipelineConfig& cfg) {
  Checkpoint c;
  c.seed = cfg.seed;
  c.config_hash = cfg.hash();
  c.meta["config"] = cfg.to_json();
  return c;
}

int gen_data(const Common& co, std::optional<std::size_t> n, std::optional<std::size_t> frames,
             std::optional<std::size_t> objects) {
  PipelineConfig cfg = co.load();
  if (n) cfg.data.n_videos = *n;
  if (frames) cfg.data.frames_per_video = *frames;
  if (objects) cfg.data.objects_per_frame = *objects;
  const Datasets d = make_datasets(cfg);
  fs::create_directories(co.work);
  dsgg::scene::write_jsonl(co.path("train.jsonl"), d.train);
  dsgg::scene::write_jsonl(co.path("test.jsonl"), d.test);
  log("wrote " + std::to_string(d.train.size()) + " train and " + std::to_string(d.test.size()) +
      " test videos to " + co.work);
  return 0;
}

int train_vqvae(const Common& co) {
  const PipelineConfig cfg = co.load();
  require_file(co.path("train.jsonl"), "gen-data");
  const auto train = dsgg::scene::read_jsonl(co.path("train.jsonl"));
  log("training the quantizer on " + std::to_string(train.size()) + " videos");
  dsgg::vqvae::TrainStats stats;
  auto vq = train_quantizer(cfg, train, &stats);
  Checkpoint c = stage_checkpoint(cfg);
  vq.save(c);
  c.meta["vqvae.initial_mse"] = stats.initial_mse;
  c.meta["vqvae.final_mse"] = stats.final_mse;
  c.meta["vqvae.perplexity"] = stats.perplexity;
  dsgg::numerics::save_checkpoint(co.path("vqvae.ckpt"), c);
  log("reconstruction mse " + std::to_string(stats.initial_mse) + " -> " + std::to_string(stats.final_mse) +
      ", perplexity " + std::to_string(stats.perplexity));
  return 0;
}

dsgg::vqvae::VqvaeModel load_vq(const Common& co) {
  require_file(co.path("vqvae.ckpt"), "train-vqvae");
  dsgg::vqvae::VqvaeModel vq;
  vq.load(dsgg::numerics::load_checkpoint(co.path("vqvae.ckpt")));
  return vq;
}

int build_vocab_cmd(const Common& co) {
  const PipelineConfig cfg = co.load();
  const auto vq = load_vq(co);
  VocabResult r = build_vocab(cfg, vq);
  Checkpoint c = stage_checkpoint(cfg);
  c.meta["ot.mode"] = std::string(ot_mode_name(cfg.ablation.ot));
  c.meta["ot.chosen_k"] = r.sweep.chosen_k;
  c.meta["ot.fallback"] = r.sweep.fallback;
  if (r.codebook.size() > 0) {
    c.put("ot.units", r.codebook.units);
    c.put("ot.marginals", dsgg::numerics::Tensor({1, r.codebook.marginals.size()}, r.codebook.marginals));
  }
  dsgg::numerics::save_checkpoint(co.path("vocab.ckpt"), c);
  write_text(co.path("sweep.csv"), sweep_csv(r.sweep));
  log("refined codebook size " + std::to_string(r.codebook.size()) + " (mode " +
      std::string(ot_mode_name(cfg.ablation.ot)) + "), sweep written to " + co.path("sweep.csv").string());
  return 0;
}

int pretrain_cmd(const Common& co) {
  const PipelineConfig cfg = co.load();
  if (cfg.reasoner.variant == ReasonerVariant::kNone) {
    log("reasoner.variant is none: nothing to pretrain");
    return 0;
  }
  dsgg::reasoner::PretrainStats stats;
  auto base = pretrain(cfg, &stats);
  Checkpoint c = stage_checkpoint(cfg);
  base->save(c);
  dsgg::numerics::save_checkpoint(co.path("base.ckpt"), c);
  log("base next-token loss " + std::to_string(stats.initial_loss) + " -> " + std::to_string(stats.final_loss));
  return 0;
}

int train_sgg(const Common& co, bool resume) {
  const PipelineConfig cfg = co.load();
  require_file(co.path("train.jsonl"), "gen-data");
  const auto train = dsgg::scene::read_jsonl(co.path("train.jsonl"));
  const fs::path model_path = co.path("model.ckpt");
  std::optional<Checkpoint> from;
  std::optional<FullModel> model;
  if (resume) {
    require_file(model_path, "train-sgg");
    from = dsgg::numerics::load_checkpoint(model_path);
    model.emplace(FullModel::load(*from));
    if (model->cfg.hash() != cfg.hash()) throw std::runtime_error("--resume: config differs from the checkpoint's");
    log("resuming at iteration " + std::to_string(from->meta.value("train.iteration", 0)));
  } else {
    auto vq = load_vq(co);
    require_file(co.path("vocab.ckpt"), "build-vocab");
    const Checkpoint vocab = dsgg::numerics::load_checkpoint(co.path("vocab.ckpt"));
    if (vocab.meta.value("ot.mode", std::string()) != ot_mode_name(cfg.ablation.ot))
      throw std::runtime_error("vocab.ckpt was built for ablation.ot=" + vocab.meta.value("ot.mode", std::string("?")) +
                               "; rerun build-vocab with this config");
    dsgg::numerics::Tensor units = vocab.has("ot.units") ? vocab.get("ot.units") : dsgg::numerics::Tensor();
    std::optional<dsgg::reasoner::ToyTransformer> base;
    if (cfg.reasoner.variant != ReasonerVariant::kNone) {
      require_file(co.path("base.ckpt"), "pretrain-base");
      base = dsgg::reasoner::ToyTransformer::load(dsgg::numerics::load_checkpoint(co.path("base.ckpt")));
    }
    model.emplace(cfg, std::move(vq), std::move(units), std::move(base));
  }
  Stage2Options opts;
  opts.checkpoint_path = model_path;
  opts.resume = from ? &*from : nullptr;
  opts.log = log;
  Stage2Log slog;
  train_stage2(*model, train, opts, &slog);
  const std::size_t total = cfg.train.phase_a_iters + cfg.train.phase_b_iters;
  dsgg::numerics::save_checkpoint(model_path, training_checkpoint(*model, nullptr, total, 'B'));
  if (model->reasoner) {
    Checkpoint a = stage_checkpoint(cfg);
    model->reasoner->save_adapters(a);
    dsgg::numerics::save_checkpoint(co.path("adapters.ckpt"), a);
  }
  std::ostringstream csv;
  csv.precision(17);
  csv << "iteration,phase,loss\n";
  for (const auto& r : slog.rows) csv << r.iteration << ',' << r.phase << ',' << r.loss << '\n';
  write_text(co.path(resume ? "train_log_resumed.csv" : "train_log.csv"), csv.str());
  log("wrote " + model_path.string());
  return 0;
}

std::vector<dsgg::scene::Task> parse_tasks(const std::string& s) {
  if (s == "all") return {dsgg::scene::Task::kPredCls, dsgg::scene::Task::kSgCls};
  return {dsgg::scene::parse_task(s)};
}

std::vector<dsgg::scene::Constraint> parse_constraints(const std::string& s) {
  if (s == "all") return {dsgg::scene::Constraint::kWith, dsgg::scene::Constraint::kNo};
  return {dsgg::scene::parse_constraint(s)};
}

FullModel load_model(const std::string& path) {
  if (!fs::exists(path)) throw std::runtime_error("checkpoint not found: " + path);
  return FullModel::load(dsgg::numerics::load_checkpoint(path));
}

int eval_cmd(const Common& co, std::string checkpoint, std::string data, const std::string& task,
             const std::string& constraint, std::vector<std::size_t> ks, const std::string& out) {
  if (checkpoint.empty()) checkpoint = co.path("model.ckpt").string();
  if (data.empty()) data = co.path("test.jsonl").string();
  FullModel model = load_model(checkpoint);
  if (ks.empty()) ks = model.cfg.eval_ks;
  for (auto k : ks)
    if (k == 0) throw std::invalid_argument("--k must be positive");
  const auto videos = dsgg::scene::read_jsonl(data);
  log("evaluating " + std::to_string(videos.size()) + " videos");
  auto table = evaluate_model(model, videos, parse_tasks(task), ks, parse_constraints(constraint));
  const bool csv = out.size() >= 4 && out.substr(out.size() - 4) == ".csv";
  const std::string text = csv ? table.to_csv() : table.to_json().dump(2) + "\n";
  if (out.empty()) {
    std::cout << text;
  } else {
    write_text(out, text);
    log("wrote " + out);
  }
  return 0;
}

int infer_cmd(const Common& co, std::string checkpoint, const std::string& data, std::size_t index,
              const std::string& task, const std::string& constraint, const std::string& out) {
  if (checkpoint.empty()) checkpoint = co.path("model.ckpt").string();
  FullModel model = load_model(checkpoint);
  const auto videos = dsgg::scene::read_jsonl(data);
  if (index >= videos.size())
    throw std::out_of_range("--video " + std::to_string(index) + " but " + data + " holds " +
                            std::to_string(videos.size()) + " videos");
  const auto& v = videos[index];
  auto pred = infer(model, v, dsgg::scene::parse_task(task), dsgg::scene::parse_constraint(constraint));
  const std::string line = dsgg::scene::prediction_to_json(v, pred).dump() + "\n";
  if (out.empty()) {
    std::cout << line;
  } else {
    write_text(out, line);
  }
  return 0;
}

int inspect_codebook(const Common& co, std::string checkpoint) {
  if (checkpoint.empty()) checkpoint = co.path("vqvae.ckpt").string();
  if (!fs::exists(checkpoint)) throw std::runtime_error("checkpoint not found: " + checkpoint);
  const Checkpoint c = dsgg::numerics::load_checkpoint(checkpoint);
  json report;
  if (c.has("vq.codebook")) {
    dsgg::vqvae::VqvaeModel vq;
    vq.load(c);
    const auto& units = vq.codebook.value;
    std::size_t dead = 0;
    for (double u : vq.usage) dead += u == 0.0;
    report["learned"] = {{"size", units.rows()},
                         {"dim", units.cols()},
                         {"usage", vq.usage},
                         {"dead_units", dead},
                         {"perplexity", dsgg::vqvae::perplexity(vq.usage)}};
    if (std::accumulate(vq.usage.begin(), vq.usage.end(), 0.0) > 0.0)
      report["learned"]["entropy"] = dsgg::otvocab::shannon_entropy(unit_frequencies(vq));
  }
  if (c.has("ot.units")) {
    const auto& u = c.get("ot.units");
    json refined = {{"size", u.rows()}, {"dim", u.cols()}};
    if (c.has("ot.marginals")) {
      auto m = c.get("ot.marginals").values();
      std::vector<double> marg(m.begin(), m.end());
      refined["marginals"] = marg;
      refined["entropy"] = dsgg::otvocab::shannon_entropy(marg);
    }
    if (c.meta.contains("ot.mode")) refined["mode"] = c.meta["ot.mode"];
    report["refined"] = refined;
  }
  if (report.is_null()) throw std::runtime_error(checkpoint + " holds no codebook");
  std::cout << report.dump(2) << "\n";
  return 0;
}

int grad_check(std::size_t seeds) {
  json cases = json::array();
  auto r = run_gradient_suite(seeds, [&](const GradCase& c) {
    if (!c.report.passed)
      log("FAIL " + c.name + " seed " + std::to_string(c.seed) + " rel err " +
          std::to_string(c.report.worst_rel_error) + " at " + c.report.worst_param);
    cases.push_back({{"case", c.name},
                     {"seed", c.seed},
                     {"passed", c.report.passed},
                     {"coords", c.report.coords_checked},
                     {"worst_rel_error", c.report.worst_rel_error},
                     {"worst_param", c.report.worst_param}});
  });
  json out = {{"passed", r.passed}, {"cases", r.cases.size()}, {"coords", r.coords},
              {"seconds", r.seconds}, {"results", cases}};
  std::cout << out.dump(2) << "\n";
  log(std::string(r.passed ? "all " : "NOT all ") + std::to_string(r.cases.size()) + " gradient cases passed");
  return r.passed ? 0 : 1;
}

std::string version_string() {
  std::string s = "dsgg " DSGG_VERSION_STRING;
  s += " (gcc " __VERSION__ ", " DSGG_BUILD_TYPE ", built " __DATE__ ")";
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic scene graph generation pipeline"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);

  Common co;
  std::optional<std::size_t> n_videos, frames, objects;
  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic train and test splits");
  co.attach(gen);
  gen->add_option("--n-videos", n_videos, "Training videos");
  gen->add_option("--frames", frames, "Frames per video");
  gen->add_option("--objects", objects, "Objects per frame, person included");

  auto* tvq = app.add_subcommand("train-vqvae", "Stage 1: train the VQ-VAE");
  co.attach(tvq);
  auto* bv = app.add_subcommand("build-vocab", "Refine the codebook (sweep CSV: k,size,H,dH)");
  co.attach(bv);
  auto* pb = app.add_subcommand("pretrain-base", "Pretrain the frozen reasoner base");
  co.attach(pb);
  bool resume = false;
  auto* ts = app.add_subcommand("train-sgg", "Stage 2: both unfreezing phases");
  co.attach(ts);
  ts->add_flag("--resume", resume, "Continue from <work>/model.ckpt");

  std::string checkpoint, data, task = "all", constraint = "all", out;
  std::vector<std::size_t> ks;
  auto* ev = app.add_subcommand("eval", "Recall@K report");
  co.attach(ev);
  ev->add_option("--checkpoint", checkpoint, "Model checkpoint (default <work>/model.ckpt)");
  ev->add_option("--data", data, "JSONL dataset (default <work>/test.jsonl)");
  ev->add_option("--task", task, "predcls|sgcls|all")->capture_default_str();
  ev->add_option("--constraint", constraint, "with|no|all")->capture_default_str();
  ev->add_option("--k", ks, "Recall cutoffs (default: config eval.ks)");
  ev->add_option("--out", out, "Report path, .json or .csv (default: JSON on stdout)");

  std::size_t video = 0;
  std::string infer_task = "predcls", infer_constraint = "with";
  auto* inf = app.add_subcommand("infer", "Predict one video, one JSONL line");
  co.attach(inf);
  inf->add_option("--checkpoint", checkpoint, "Model checkpoint (default <work>/model.ckpt)");
  inf->add_option("--data", data, "JSONL dataset")->required();
  inf->add_option("--video", video, "Index of the video in the dataset")->capture_default_str();
  inf->add_option("--task", infer_task, "predcls|sgcls")->capture_default_str();
  inf->add_option("--constraint", infer_constraint, "with|no")->capture_default_str();
  inf->add_option("--out", out, "Output path (default: stdout)");

  auto* ic = app.add_subcommand("inspect-codebook", "Usage and entropy of the learned or refined codebook");
  co.attach(ic);
  ic->add_option("--checkpoint", checkpoint, "vqvae.ckpt, vocab.ckpt or model.ckpt (default <work>/vqvae.ckpt)");

  std::size_t seeds = 4;
  auto* gc = app.add_subcommand("grad-check", "Finite-difference suite over every op and module");
  co.attach(gc);
  gc->add_option("--seeds", seeds, "Seeded instances per case")->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen) return gen_data(co, n_videos, frames, objects);
    if (*tvq) return train_vqvae(co);
    if (*bv) return build_vocab_cmd(co);
    if (*pb) return pretrain_cmd(co);
    if (*ts) return train_sgg(co, resume);
    if (*ev) return eval_cmd(co, checkpoint, data, task, constraint, ks, out);
    if (*inf) return infer_cmd(co, checkpoint, data, video, infer_task, infer_constraint, out);
    if (*ic) return inspect_codebook(co, checkpoint);
    if (*gc) {
      co.load();  // validates --config and --set even though the suite is fixed
      return grad_check(seeds);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
