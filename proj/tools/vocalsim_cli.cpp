// Copyright 2026 The vocalsim Authors
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

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "vocalsim/checkpoint.hpp"
#include "vocalsim/corpus.hpp"
#include "vocalsim/evaluation.hpp"
#include "vocalsim/retrieval.hpp"
#include "vocalsim/samplers.hpp"
#include "vocalsim/service.hpp"
#include "vocalsim/training.hpp"

#ifndef VOCALSIM_VERSION
#define VOCALSIM_VERSION "dev"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vocalsim;

namespace {

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("cli", "read", "cannot open " + p.string());
  return json::parse(in);
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error("cli", "write", "cannot write " + p.string());
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

std::string hash_json(const json& j) { return Fnv1a().update(j.dump()).hex(); }

// Run directory plus its manifest; every artifact is registered with a hash.
class Run {
 public:
  Run(std::string command, const std::string& explicit_dir, const json& config, std::uint64_t seed, int argc, char** argv)
      : command_(std::move(command)) {
    if (!explicit_dir.empty()) {
      dir_ = explicit_dir;
    } else {
      const char* root = std::getenv("VOCALSIM_RUN_ROOT");
      dir_ = fs::path(root && *root ? root : "runs") / (command_ + "-" + hash_json(config).substr(0, 8));
    }
    fs::create_directories(dir_);
    manifest_ = {{"command", command_},
                 {"argv", std::vector<std::string>(argv, argv + argc)},
                 {"config", config},
                 {"seed", seed},
                 {"tool_version", VOCALSIM_VERSION},
                 {"corpus_hash", nullptr},
                 {"checkpoint_hashes", json::object()},
                 {"outputs", json::object()}};
  }

  const fs::path& dir() const { return dir_; }
  fs::path path(const std::string& name) const { return dir_ / name; }

  void corpus(const std::string& hash) { manifest_["corpus_hash"] = hash; }
  void input_checkpoint(const std::string& name, const fs::path& p) { manifest_["checkpoint_hashes"][name] = file_hash(p); }
  void output(const fs::path& p) { manifest_["outputs"][fs::relative(p, dir_).string()] = file_hash(p); }
  void note(const std::string& key, const json& value) { manifest_[key] = value; }

  void finish() const { write_json(dir_ / "run_manifest.json", manifest_); }

 private:
  std::string command_;
  fs::path dir_;
  json manifest_;
};

struct CorpusOpts {
  std::string dir;
  std::uint64_t split_seed = 0;
  std::vector<int> split{8, 1, 1};

  void add(CLI::App* app) {
    app->add_option("--corpus", dir, "stem directory (manifest.json + WAV stems)")->required();
    app->add_option("--split-seed", split_seed, "seed of the artist-disjoint train/valid/test split");
    app->add_option("--split", split, "train valid test ratios")->expected(3);
  }

  Corpus load() const {
    std::vector<std::string> diag;
    Corpus c = load_stem_directory(dir, &diag);
    for (const auto& d : diag) std::cerr << "warning: " << d << "\n";
    if (c.tracks.empty()) throw Error("corpus", "load_stem_directory", "no usable tracks in " + dir);
    return artist_disjoint_split(std::move(c), {split[0], split[1], split[2]}, split_seed);
  }

  json to_json() const { return {{"dir", dir}, {"split_seed", split_seed}, {"split", split}}; }
};

std::vector<std::size_t> partition_indices(const Corpus& c, const std::string& spec) {
  std::vector<std::size_t> out;
  std::stringstream ss(spec);
  std::string part;
  while (std::getline(ss, part, ',')) {
    Partition p;
    if (part == "train") p = Partition::kTrain;
    else if (part == "valid") p = Partition::kValid;
    else if (part == "test") p = Partition::kTest;
    else throw Error("cli", "partition", "unknown partition '" + part + "'");
    const auto idx = c.partition(p);
    out.insert(out.end(), idx.begin(), idx.end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Defaults come from --config sections; explicit flags win.
struct Settings {
  TrainConfig train;
  SamplerConfig sampler;
  EvalConfig eval;
  std::string strategy = "cvsm-a";
  std::string input_mode = "vocals";
};

Settings load_settings(int argc, char** argv) {
  Settings s;
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) != "--config") continue;
    const json j = read_json(argv[i + 1]);
    if (j.contains("train")) s.train = j.at("train").get<TrainConfig>();
    if (j.contains("sampler")) s.sampler = j.at("sampler").get<SamplerConfig>();
    if (j.contains("eval")) s.eval = j.at("eval").get<EvalConfig>();
  }
  s.strategy = std::string(to_string(s.sampler.strategy));
  s.input_mode = std::string(to_string(s.eval.input_mode));
  return s;
}

void add_train_options(CLI::App* app, Settings& s) {
  auto& t = s.train;
  app->add_option("--strategy", s.strategy, "cola|mscol|cola-art|cvsm-a|cvsm-ah|cvsm-af|cvsm-art");
  app->add_option("--p-artificial", s.sampler.p_artificial, "artificial-anchor probability (cvsm-ah)");
  app->add_option("--stage-switch-fraction", s.sampler.stage_switch_fraction, "switch point of cvsm-af");
  app->add_option("--steps", t.total_steps, "total steps (full scale 8000)");
  app->add_option("--minibatches", t.minibatches_per_step, "minibatches per step (full scale 64)");
  app->add_option("--batch-size", t.batch_size, "pairs per minibatch (full scale 128)");
  app->add_option("--lr", t.lr_init, "initial learning rate");
  app->add_option("--lr-halve-window", t.lr_halve_window, "plateau window in steps (full scale 1000)");
  app->add_option("--val-check-interval", t.val_check_interval, "steps between validation checks");
  app->add_option("--val-pairs", t.val_pairs, "validation pairs");
  app->add_option("--seed", t.seed, "seed for initialization and sampling");
  app->add_option("--stages", t.encoder.stage_channels, "channels per encoder stage");
  app->add_option("--embed-dim", t.encoder.embed_dim, "embedding dimension");
  app->add_option("--proj-dim", t.encoder.proj_dim, "projection dimension");
}

void add_eval_options(CLI::App* app, Settings& s) {
  auto& e = s.eval;
  app->add_option("--input-mode", s.input_mode, "mixture|vocals");
  app->add_option("--artists", e.n_artists, "artists per repetition, M (full scale 50)");
  app->add_option("--repetitions", e.repetitions, "repetitions");
  app->add_option("--eer-trials", e.eer_trials, "same/different pairs for EER, K");
  app->add_option("--mnr-batch", e.mnr_batch, "candidates per MNR trial, N");
  app->add_option("--mnr-trials", e.mnr_trials, "MNR trials, K");
  app->add_option("--probe-lr", e.probe_lr, "probe learning rate");
  app->add_option("--probe-max-epochs", e.probe_max_epochs, "probe epoch limit");
  app->add_option("--probe-patience", e.probe_patience, "early-stopping patience");
  app->add_option("--folds", e.gender_folds, "gender cross-validation folds");
  app->add_option("--eval-seed", e.seed, "evaluation seed");
}

void finalize_settings(Settings& s) {
  s.sampler.strategy = parse_strategy(s.strategy);
  s.sampler.rng_seed = s.train.seed;
  s.eval.input_mode = parse_input_mode(s.input_mode);
}

void write_training_outputs(Run& run, const TrainResult& r, const json& meta) {
  std::ostringstream csv;
  csv.precision(17);
  csv << "step,train_loss,val_loss,lr\n";
  for (const auto& row : r.curve) csv << row.step << ',' << row.train_loss << ',' << row.val_loss << ',' << row.lr << '\n';
  write_text(run.path("loss_curve.csv"), csv.str());
  run.output(run.path("loss_curve.csv"));
  fs::create_directories(run.path("checkpoints"));
  Checkpoint final_ck{r.final_state, true, meta};
  save_checkpoint(run.path("checkpoints/final.ckpt"), final_ck);
  run.output(run.path("checkpoints/final.ckpt"));
  save_model(run.path("checkpoints/best.ckpt"), r.best_model, meta);
  run.output(run.path("checkpoints/best.ckpt"));
  json anchors = json::array();
  for (const auto& a : r.anchor_counts) anchors.push_back({a[0], a[1]});
  run.note("best_val_loss", std::isfinite(r.best_val_loss) ? json(r.best_val_loss) : json(nullptr));
  run.note("anchor_counts", anchors);
}

StepCallback progress(std::size_t total) {
  return [total](std::size_t step, double loss) {
    static std::size_t last = static_cast<std::size_t>(-1);
    if (step != last && (step + 1) % 10 == 0) std::cerr << "step " << step + 1 << "/" << total << " loss " << loss << "\n";
    last = step;
  };
}

std::vector<std::size_t> parse_sizes(const std::vector<std::string>& v) {
  std::vector<std::size_t> out;
  for (const auto& s : v) out.push_back(std::stoul(s));
  return out;
}

std::vector<std::string> read_lines_json_array(const fs::path& p, const char* key) {
  return read_json(p).at(key).get<std::vector<std::string>>();
}

volatile std::sig_atomic_t g_stop = 0;
StudyService* g_service = nullptr;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vocalsim: contrastive vocal-similarity experiments"};
  app.require_subcommand(1);
  app.fallthrough();  // lets --config follow the subcommand name
  std::string config_path;
  app.add_option("--config", config_path, "JSON file with train/sampler/eval sections");

  Settings s;
  try {
    s = load_settings(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  std::string run_dir;
  CorpusOpts corpus_opts;
  std::string checkpoint, partition, out;

  // synth-corpus
  auto* synth = app.add_subcommand("synth-corpus", "write a synthetic stem corpus");
  int n_artists = 10, n_tracks = 8;
  std::uint64_t corpus_seed = 7;
  double duration = 10.0;
  synth->add_option("--artists", n_artists, "artists");
  synth->add_option("--tracks", n_tracks, "tracks per artist");
  synth->add_option("--seed", corpus_seed, "corpus seed");
  synth->add_option("--duration", duration, "seconds per track");
  synth->add_option("--out", out, "output stem directory")->required();

  // pretrain / finetune
  auto* pre = app.add_subcommand("pretrain", "contrastive pre-training from scratch");
  corpus_opts.add(pre);
  add_train_options(pre, s);
  pre->add_option("--run-dir", run_dir, "output directory");

  auto* fine = app.add_subcommand("finetune", "continue a checkpoint on real mixture/vocal pairs");
  corpus_opts.add(fine);
  add_train_options(fine, s);
  fine->add_option("--checkpoint", checkpoint, "final.ckpt with optimizer state")->required();
  fine->add_option("--run-dir", run_dir, "output directory");

  // evaluation family
  std::vector<std::string> lengths{"1", "2", "3", "5", "10"};
  std::vector<double> fractions{0.1, 0.25, 0.5, 0.75, 1.0};
  struct EvalCmd {
    CLI::App* app;
    const char* default_partition;
  };
  std::vector<EvalCmd> evals;
  auto eval_cmd = [&](const char* name, const char* help, const char* part) {
    auto* c = app.add_subcommand(name, help);
    corpus_opts.add(c);
    add_eval_options(c, s);
    c->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    c->add_option("--partition", partition, std::string("comma-separated partitions (default ") + part + ")");
    c->add_option("--run-dir", run_dir, "output directory");
    evals.push_back({c, part});
    return c;
  };
  auto* eg = eval_cmd("eval-gender", "gender probe, artist-stratified folds", "valid,test");
  auto* ea = eval_cmd("eval-artist", "artist probe plus EER/MNR", "test");
  auto* es = eval_cmd("eval-similarity", "artist similarity EER/MNR", "test");
  auto* sc = eval_cmd("sweep-clip-length", "artist accuracy versus clip length", "test");
  sc->add_option("--lengths", lengths, "lengths in seconds");
  auto* sl = eval_cmd("sweep-low-resource", "artist accuracy versus probe data fraction", "test");
  sl->add_option("--fractions", fractions, "fractions in (0,1]");
  auto* cm = eval_cmd("cluster-metrics", "silhouette and intra/inter distance ratio by artist", "valid");

  // retrieval
  auto* bi = app.add_subcommand("build-index", "embed clips of several models into a retrieval index");
  corpus_opts.add(bi);
  std::vector<std::string> models;
  bi->add_option("--model", models, "model_id=checkpoint (repeatable)")->required();
  bi->add_option("--input-mode", s.input_mode, "mixture|vocals");
  bi->add_option("--partition", partition, "partitions to index (default test)");
  bi->add_option("--run-dir", run_dir, "output directory");

  auto* gt = app.add_subcommand("gen-trials", "generate listening-test trials");
  std::string mix_index, voc_index;
  TrialConfig trial_cfg;
  std::uint64_t trial_seed = 0;
  std::size_t n_queries = 0;
  gt->add_option("--mixture-index", mix_index, "index.json built with --input-mode mixture")->required();
  gt->add_option("--vocals-index", voc_index, "index.json built with --input-mode vocals")->required();
  gt->add_option("--n-per-respondent", trial_cfg.n_per_respondent, "trials per session");
  gt->add_option("--sessions", trial_cfg.sessions, "sessions");
  gt->add_option("--control-fraction", trial_cfg.control_fraction, "share of identical-recommendation trials kept");
  gt->add_option("--queries", n_queries, "query pool size (0 = all indexed tracks)");
  gt->add_option("--seed", trial_seed, "seed");
  gt->add_option("--run-dir", run_dir, "output directory");

  auto* sv = app.add_subcommand("serve", "serve the listening test over HTTP");
  std::string trials_path, log_path, host = "127.0.0.1", static_dir;
  int port = 8080;
  double window = 0.0;
  corpus_opts.add(sv);
  sv->add_option("--trials", trials_path, "trials.json from gen-trials")->required();
  sv->add_option("--mixture-index", mix_index, "index for the agreement matrix")->required();
  sv->add_option("--log", log_path, "response log (JSONL)")->required();
  sv->add_option("--host", host, "bind address");
  sv->add_option("--port", port, "port (0 = any)");
  sv->add_option("--query-window", window, "seconds of audio served per clip (0 = whole clip)");
  sv->add_option("--static-dir", static_dir, "UI bundle served at /");

  auto* rp = app.add_subcommand("report", "winrate and agreement tables from a response log");
  rp->add_option("--trials", trials_path, "trials.json")->required();
  rp->add_option("--mixture-index", mix_index, "index for the agreement matrix")->required();
  rp->add_option("--log", log_path, "response log (JSONL)")->required();
  rp->add_option("--run-dir", run_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    finalize_settings(s);
    if (synth->parsed()) {
      Corpus c = build_synthetic_corpus(n_artists, n_tracks, corpus_seed, SynthOptions{duration});
      write_stem_directory(c, out);
      json cfg = {{"artists", n_artists}, {"tracks", n_tracks}, {"seed", corpus_seed}, {"duration", duration}};
      Run run("synth-corpus", out, cfg, corpus_seed, argc, argv);
      run.corpus(c.manifest_hash());
      run.output(run.path("manifest.json"));
      run.finish();
      std::cout << c.manifest_hash() << "\n";
      return 0;
    }

    if (pre->parsed() || fine->parsed()) {
      const bool is_pre = pre->parsed();
      Corpus c = corpus_opts.load();
      json cfg = {{"train", s.train}, {"sampler", s.sampler}, {"corpus", corpus_opts.to_json()}};
      if (!is_pre) cfg["checkpoint"] = checkpoint;
      Run run(is_pre ? "pretrain" : "finetune", run_dir, cfg, s.train.seed, argc, argv);
      run.corpus(c.manifest_hash());
      write_json(run.path("config.json"), cfg);
      run.output(run.path("config.json"));
      json meta = {{"manifest", "run_manifest.json"}, {"config_hash", hash_json(cfg)}};
      TrainResult r;
      if (is_pre) {
        r = pretrain(s.train, s.sampler, c, progress(s.train.total_steps));
      } else {
        run.input_checkpoint("init", checkpoint);
        const Checkpoint ck = load_checkpoint(checkpoint);
        if (!ck.has_optimizer) throw Error("training", "finetune_in_domain", checkpoint + " has no optimizer state");
        r = finetune_in_domain(ck.state, s.train, s.sampler, c, progress(s.train.total_steps));
      }
      write_training_outputs(run, r, meta);
      run.finish();
      std::cout << run.dir().string() << "\n";
      return 0;
    }

    for (const auto& ev : evals) {
      if (!ev.app->parsed()) continue;
      const std::string name = ev.app->get_name();
      Corpus c = corpus_opts.load();
      const auto indices = partition_indices(c, partition.empty() ? ev.default_partition : partition);
      const ModelState model = load_checkpoint(checkpoint).state.model;
      json cfg = {{"eval", s.eval},
                  {"corpus", corpus_opts.to_json()},
                  {"partition", partition.empty() ? ev.default_partition : partition},
                  {"checkpoint", checkpoint}};
      if (ev.app == sc) cfg["lengths"] = lengths;
      if (ev.app == sl) cfg["fractions"] = fractions;
      Run run(name, run_dir, cfg, s.eval.seed, argc, argv);
      run.corpus(c.manifest_hash());
      run.input_checkpoint("model", checkpoint);

      std::vector<std::string> diag;
      const auto clips = embed_clips(c, indices, model, s.eval.input_mode, &diag);
      for (const auto& d : diag) std::cerr << "warning: " << d << "\n";
      MetricReport rep;
      if (ev.app == eg) rep = run_gender_eval(clips, s.eval);
      else if (ev.app == ea) rep = run_artist_eval(clips, s.eval);
      else if (ev.app == es) rep = run_similarity_eval(clips, s.eval);
      else if (ev.app == sc) rep = sweep_clip_length(clips, s.eval, parse_sizes(lengths));
      else if (ev.app == sl) rep = sweep_low_resource(clips, s.eval, fractions);
      else rep = run_cluster_eval(clips);
      rep.config = cfg;
      rep.config_hash = hash_json(cfg);
      rep.corpus_hash = c.manifest_hash();
      rep.checkpoint_hash = file_hash(checkpoint);
      rep.warnings.insert(rep.warnings.end(), diag.begin(), diag.end());
      json rj = rep.to_json();
      rj["manifest"] = "run_manifest.json";
      write_json(run.path("report.json"), rj);
      write_text(run.path("report.csv"), rep.to_csv());
      run.output(run.path("report.json"));
      run.output(run.path("report.csv"));
      run.finish();
      for (const auto& w : rep.warnings) std::cerr << "warning: " << w << "\n";
      std::cout << rep.to_csv();
      return 0;
    }

    if (bi->parsed()) {
      Corpus c = corpus_opts.load();
      const auto indices = partition_indices(c, partition.empty() ? "test" : partition);
      json cfg = {{"corpus", corpus_opts.to_json()}, {"models", models}, {"input_mode", s.input_mode},
                  {"partition", partition.empty() ? "test" : partition}};
      Run run("build-index", run_dir, cfg, 0, argc, argv);
      run.corpus(c.manifest_hash());
      std::vector<ModelState> states;
      std::vector<std::string> ids;
      for (const auto& m : models) {
        const auto eq = m.find('=');
        if (eq == std::string::npos) throw Error("cli", "build-index", "--model expects id=checkpoint, got " + m);
        ids.push_back(m.substr(0, eq));
        states.push_back(load_checkpoint(m.substr(eq + 1)).state.model);
        run.input_checkpoint(ids.back(), m.substr(eq + 1));
      }
      std::vector<NamedModel> named;
      for (std::size_t i = 0; i < ids.size(); ++i) named.push_back({ids[i], &states[i]});
      std::vector<std::string> diag;
      const RetrievalIndex idx = build_index(c, indices, named, s.eval.input_mode, &diag);
      for (const auto& d : diag) std::cerr << "warning: " << d << "\n";
      json j = idx.to_json();
      j["models"] = ids;
      j["manifest"] = "run_manifest.json";
      write_json(run.path("index.json"), j);
      run.output(run.path("index.json"));
      run.finish();
      std::cout << run.path("index.json").string() << "\n";
      return 0;
    }

    if (gt->parsed()) {
      const json mj = read_json(mix_index), vj = read_json(voc_index);
      const RetrievalIndex mi = RetrievalIndex::from_json(mj), vi = RetrievalIndex::from_json(vj);
      const auto ids = mj.at("models").get<std::vector<std::string>>();
      // Queries: tracks present in both indices for every model.
      std::vector<std::string> queries;
      for (const auto& t : mi.tracks(ids.front())) {
        bool ok = true;
        for (const auto& m : ids) ok = ok && mi.contains(m, t) && vi.contains(m, t);
        if (ok) queries.push_back(t);
      }
      Rng rng(derive_seed(trial_seed, "gen-trials"));
      if (n_queries > 0 && n_queries < queries.size()) {
        for (std::size_t i = 0; i < n_queries; ++i) std::swap(queries[i], queries[i + uniform_index(rng, queries.size() - i)]);
        queries.resize(n_queries);
        std::sort(queries.begin(), queries.end());
      }
      json cfg = {{"mixture_index", mix_index}, {"vocals_index", voc_index}, {"n_per_respondent", trial_cfg.n_per_respondent},
                  {"sessions", trial_cfg.sessions}, {"control_fraction", trial_cfg.control_fraction},
                  {"queries", n_queries}, {"seed", trial_seed}};
      Run run("gen-trials", run_dir, cfg, trial_seed, argc, argv);
      std::vector<std::string> warnings;
      const auto trials = generate_trials(mi, vi, queries, ids, trial_cfg, rng, &warnings);
      for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
      write_json(run.path("trials.json"),
                 {{"models", ids}, {"queries", queries}, {"trials", trials}, {"warnings", warnings}, {"manifest", "run_manifest.json"}});
      run.output(run.path("trials.json"));
      run.finish();
      std::cout << run.path("trials.json").string() << " (" << trials.size() << " trials)\n";
      return 0;
    }

    if (sv->parsed() || rp->parsed()) {
      const json tj = read_json(trials_path);
      const auto ids = tj.at("models").get<std::vector<std::string>>();
      const auto queries = tj.at("queries").get<std::vector<std::string>>();
      const auto trials = tj.at("trials").get<std::vector<Trial>>();
      const RetrievalIndex mi = RetrievalIndex::from_json(read_json(mix_index));
      const AgreementMatrix agree = agreement_matrix(mi, ids, queries);

      if (rp->parsed()) {
        json cfg = {{"trials", trials_path}, {"mixture_index", mix_index}, {"log", log_path}};
        if (!fs::exists(log_path)) throw Error("retrieval", "report", "response log not found: " + log_path);
        Run run("report", run_dir, cfg, 0, argc, argv);
        const auto responses = ResponseLog::read(log_path);
        run.note("responses", responses.size());
        run.note("log_hash", file_hash(log_path));
        for (const char* q : {"overall", "vocal"}) {
          json w = winrate_matrix(responses, ids, parse_question(q)).to_json();
          w["manifest"] = "run_manifest.json";
          write_json(run.path(std::string("winrate_") + q + ".json"), w);
          run.output(run.path(std::string("winrate_") + q + ".json"));
        }
        json a = agree.to_json();
        a["manifest"] = "run_manifest.json";
        write_json(run.path("agreement.json"), a);
        run.output(run.path("agreement.json"));
        run.finish();
        std::cout << run.dir().string() << "\n";
        return 0;
      }

      Corpus c = corpus_opts.load();
      StudyService service(StudyConfig{trials, ids, agree, log_path, &c, window, static_dir});
      const int bound = service.bind(host, port);
      std::cerr << "serving on http://" << host << ":" << bound << " (" << trials.size() << " trials, "
                << service.responses() << " responses replayed)\n";
      g_service = &service;
      std::signal(SIGINT, [](int) { g_stop = 1; if (g_service) g_service->stop(); });
      std::signal(SIGTERM, [](int) { g_stop = 1; if (g_service) g_service->stop(); });
      service.run();
      g_service = nullptr;
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
