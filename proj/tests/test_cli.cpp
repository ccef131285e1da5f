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

#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "json.hpp"
#include "vocalsim/checkpoint.hpp"

using namespace vocalsim;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code = -1;
  std::string out;  // stdout and stderr
};

Result run(const std::string& args, const std::string& env = {}) {
  const std::string cmd = env + (env.empty() ? "" : " ") + VOCALSIM_CLI_PATH + " " + args + " 2>&1";
  Result r;
  FILE* p = ::popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), p)) r.out += buf.data();
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

std::string last_line(const std::string& s) {
  auto end = s.find_last_not_of('\n');
  auto start = s.rfind('\n', end);
  return s.substr(start == std::string::npos ? 0 : start + 1, end - (start == std::string::npos ? 0 : start + 1) + 1);
}

struct Workspace {
  fs::path root;
  Workspace() {
    root = fs::temp_directory_path() / ("vocalsim-cli-" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Workspace() { fs::remove_all(root); }
  std::string operator/(const std::string& name) const { return (root / name).string(); }
};

const std::string kToy = " --stages 2 3 --embed-dim 4 --proj-dim 5 --batch-size 4 --minibatches 1 --val-pairs 4 --val-check-interval 1";

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("usage and errors") {
    const auto none = run("");
    CHECK(none.code != 0);
    const auto bad = run("synth-corpus --out /tmp/x --bogus 3");
    CHECK(bad.code != 0);
    CHECK(bad.out.find("bogus") != std::string::npos);
    const auto help = run("--help");
    CHECK(help.code == 0);
    CHECK(help.out.find("pretrain") != std::string::npos);
    const auto missing = run("pretrain --corpus /nonexistent/dir");
    CHECK(missing.code == 1);
    CHECK(missing.out.find("error: corpus::load_stem_directory") != std::string::npos);
  }

  TEST_CASE("pipeline") {
    Workspace ws;
    const auto a = run("synth-corpus --artists 10 --tracks 4 --seed 7 --duration 5 --out " + (ws / "corpus"));
    REQUIRE(a.code == 0);
    const auto b = run("synth-corpus --artists 10 --tracks 4 --seed 7 --duration 5 --out " + (ws / "corpus2"));
    REQUIRE(b.code == 0);
    CHECK(last_line(a.out) == last_line(b.out));
    const auto synth_manifest = read_json(ws.root / "corpus" / "run_manifest.json");
    CHECK(synth_manifest.at("corpus_hash") == last_line(a.out));

    const std::string corpus = " --corpus " + (ws / "corpus") + " --split 4 3 3";

    // Zero steps leave the initialization untouched.
    auto r = run("pretrain" + corpus + kToy + " --steps 0 --seed 5 --run-dir " + (ws / "init"));
    REQUIRE_MESSAGE(r.code == 0, r.out);
    EncoderConfig enc;
    enc.stage_channels = {2, 3};
    enc.embed_dim = 4;
    enc.proj_dim = 5;
    CHECK(load_checkpoint(ws.root / "init" / "checkpoints" / "final.ckpt").state.model.hash() ==
          ModelState::initialize(enc, 5).hash());

    r = run("pretrain" + corpus + kToy + " --strategy cvsm-ah --steps 2 --run-dir " + (ws / "pre"));
    REQUIRE_MESSAGE(r.code == 0, r.out);
    const auto m = read_json(ws.root / "pre" / "run_manifest.json");
    CHECK(m.at("command") == "pretrain");
    CHECK(m.at("config").at("sampler").at("strategy") == "cvsm-ah");
    CHECK(m.at("config").at("train").at("total_steps") == 2);
    CHECK(m.at("corpus_hash").is_string());
    CHECK(m.at("tool_version").is_string());
    for (const char* out : {"config.json", "loss_curve.csv", "checkpoints/final.ckpt", "checkpoints/best.ckpt"})
      CHECK_MESSAGE(m.at("outputs").contains(out), out);
    std::ifstream curve(ws.root / "pre" / "loss_curve.csv");
    std::string header;
    std::getline(curve, header);
    CHECK(header == "step,train_loss,val_loss,lr");

    // Same flags again reproduce the checkpoint bit for bit.
    r = run("pretrain" + corpus + kToy + " --strategy cvsm-ah --steps 2 --run-dir " + (ws / "pre2"));
    REQUIRE(r.code == 0);
    CHECK(file_hash(ws.root / "pre" / "checkpoints" / "final.ckpt") == file_hash(ws.root / "pre2" / "checkpoints" / "final.ckpt"));

    r = run("finetune" + corpus + kToy + " --steps 3 --checkpoint " + (ws / "pre/checkpoints/final.ckpt") + " --run-dir " + (ws / "fine"));
    REQUIRE_MESSAGE(r.code == 0, r.out);
    CHECK(load_checkpoint(ws.root / "fine" / "checkpoints" / "final.ckpt").state.step == 3);
    r = run("finetune" + corpus + kToy + " --steps 3 --checkpoint " + (ws / "pre/checkpoints/best.ckpt") + " --run-dir " + (ws / "fine2"));
    CHECK(r.code == 1);
    CHECK(r.out.find("optimizer") != std::string::npos);

    const std::string ckpt = " --checkpoint " + (ws / "pre/checkpoints/best.ckpt");
    const std::string eval = " --artists 3 --repetitions 2 --mnr-batch 3 --mnr-trials 5 --eer-trials 50";
    r = run("eval-artist" + corpus + ckpt + eval + " --run-dir " + (ws / "artist"));
    REQUIRE_MESSAGE(r.code == 0, r.out);
    const auto rep = read_json(ws.root / "artist" / "report.json");
    CHECK(rep.at("protocol") == "artist");
    CHECK(rep.at("checkpoint_hash") == file_hash(ws.root / "pre" / "checkpoints" / "best.ckpt"));
    CHECK(rep.at("manifest") == "run_manifest.json");
    CHECK(fs::exists(ws.root / "artist" / "report.csv"));

    r = run("eval-gender" + corpus + ckpt + " --partition train,valid,test --folds 2 --run-dir " + (ws / "gender"));
    REQUIRE_MESSAGE(r.code == 0, r.out);
    r = run("eval-similarity" + corpus + ckpt + eval + " --run-dir " + (ws / "sim"));
    REQUIRE_MESSAGE(r.code == 0, r.out);
    r = run("sweep-clip-length" + corpus + ckpt + eval + " --lengths 1 2 --run-dir " + (ws / "len"));
    REQUIRE_MESSAGE(r.code == 0, r.out);
    r = run("sweep-low-resource" + corpus + ckpt + eval + " --fractions 1 0.5 --run-dir " + (ws / "low"));
    REQUIRE_MESSAGE(r.code == 0, r.out);
    r = run("cluster-metrics" + corpus + ckpt + " --run-dir " + (ws / "cluster"));
    REQUIRE_MESSAGE(r.code == 0, r.out);
    r = run("eval-artist" + corpus + ckpt + " --artists 30 --run-dir " + (ws / "toomany"));
    CHECK(r.code == 1);
    CHECK(r.out.find("evaluation::") != std::string::npos);

    const std::string models = " --model a=" + (ws / "pre/checkpoints/best.ckpt") + " --model b=" + (ws / "init/checkpoints/final.ckpt");
    r = run("build-index" + corpus + models + " --input-mode mixture --run-dir " + (ws / "imix"));
    REQUIRE_MESSAGE(r.code == 0, r.out);
    r = run("build-index" + corpus + models + " --input-mode vocals --run-dir " + (ws / "ivoc"));
    REQUIRE_MESSAGE(r.code == 0, r.out);
    CHECK(read_json(ws.root / "imix" / "index.json").at("models") == json({"a", "b"}));
    r = run("gen-trials --mixture-index " + (ws / "imix/index.json") + " --vocals-index " + (ws / "ivoc/index.json") +
            " --n-per-respondent 4 --control-fraction 1 --run-dir " + (ws / "trials"));
    REQUIRE_MESSAGE(r.code == 0, r.out);
    const auto trials = read_json(ws.root / "trials" / "trials.json");
    CHECK(trials.at("trials").size() == 4);
    r = run("report --trials " + (ws / "trials/trials.json") + " --mixture-index " + (ws / "imix/index.json") + " --log " +
            (ws / "responses.jsonl") + " --run-dir " + (ws / "report"));
    CHECK(r.code == 1);
    CHECK(r.out.find("response log not found") != std::string::npos);
    std::ofstream(ws.root / "responses.jsonl").close();
    r = run("report --trials " + (ws / "trials/trials.json") + " --mixture-index " + (ws / "imix/index.json") + " --log " +
            (ws / "responses.jsonl") + " --run-dir " + (ws / "report"));
    REQUIRE_MESSAGE(r.code == 0, r.out);
    for (const char* f : {"winrate_overall.json", "winrate_vocal.json", "agreement.json", "run_manifest.json"})
      CHECK_MESSAGE(fs::exists(ws.root / "report" / f), f);
  }

  TEST_CASE("config file and run root") {
    Workspace ws;
    REQUIRE(run("synth-corpus --artists 4 --tracks 2 --seed 1 --duration 5 --out " + (ws / "c")).code == 0);
    std::ofstream(ws.root / "cfg.json") << R"({"train": {"total_steps": 0, "seed": 11, "encoder": {"stage_channels": [2], "embed_dim": 3, "proj_dim": 2}},
                                              "sampler": {"strategy": "mscol"}})";
    const auto r = run("pretrain --corpus " + (ws / "c") + " --split 2 1 1 --config " + (ws / "cfg.json") + " --seed 12",
                       "VOCALSIM_RUN_ROOT=" + (ws / "runs"));
    REQUIRE_MESSAGE(r.code == 0, r.out);
    const fs::path dir = last_line(r.out);
    CHECK(dir.parent_path() == ws.root / "runs");
    CHECK(dir.filename().string().rfind("pretrain-", 0) == 0);
    const auto m = read_json(dir / "run_manifest.json");
    CHECK(m.at("config").at("sampler").at("strategy") == "mscol");
    CHECK(m.at("config").at("train").at("seed") == 12);  // the flag wins over the file
    CHECK(m.at("config").at("train").at("encoder").at("embed_dim") == 3);
  }
}
