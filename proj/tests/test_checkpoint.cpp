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

#include <unistd.h>

#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "oracles.hpp"
#include "vocalsim/checkpoint.hpp"

using namespace vocalsim;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / ("vocalsim-ckpt-" + std::to_string(::getpid()) + "-" + name);
}

TrainingState trained_state() {
  static const TrainingState s = [] {
    TrainConfig c;
    c.total_steps = 4;
    c.minibatches_per_step = 1;
    c.batch_size = 4;
    c.val_pairs = 4;
    c.val_check_interval = 2;
    c.encoder = testing::toy_encoder();
    return pretrain(c, SamplerConfig{}, testing::small_corpus(10, 2, 5, 5.0)).final_state;
  }();
  return s;
}

}  // namespace

TEST_SUITE("checkpoint") {
  TEST_CASE("round trip is bit exact") {
    const auto path = temp_file("full.ckpt");
    Checkpoint ck;
    ck.state = trained_state();
    ck.metadata = {{"strategy", "cvsm-a"}};
    save_checkpoint(path, ck);
    const Checkpoint back = load_checkpoint(path);
    CHECK(back.has_optimizer);
    CHECK(back.state.model.hash() == ck.state.model.hash());
    CHECK(back.state.adam.m == ck.state.adam.m);
    CHECK(back.state.adam.v == ck.state.adam.v);
    CHECK(back.state.adam.t == ck.state.adam.t);
    CHECK(back.state.step == 4);
    CHECK(back.state.lr == ck.state.lr);
    CHECK(back.state.schedule.to_json() == ck.state.schedule.to_json());
    CHECK(back.metadata.at("strategy") == "cvsm-a");
    CHECK(nlohmann::json(back.state.model.config) == nlohmann::json(ck.state.model.config));

    // Saving the loaded checkpoint reproduces the same bytes.
    const auto again = temp_file("again.ckpt");
    save_checkpoint(again, back);
    CHECK(file_hash(again) == file_hash(path));
    fs::remove(path);
    fs::remove(again);
  }

  TEST_CASE("model only") {
    const auto path = temp_file("model.ckpt");
    const auto m = ModelState::initialize(EncoderConfig{}, 3);
    save_model(path, m);
    const auto back = load_checkpoint(path);
    CHECK_FALSE(back.has_optimizer);
    CHECK(back.state.model.hash() == m.hash());
    fs::remove(path);
  }

  TEST_CASE("corrupt files are rejected") {
    const auto path = temp_file("bad.ckpt");
    std::ofstream(path) << "not a checkpoint at all";
    CHECK_THROWS_AS(load_checkpoint(path), Error);

    save_model(path, ModelState::initialize(testing::toy_encoder(), 1));
    const auto size = fs::file_size(path);
    fs::resize_file(path, size - 8);
    CHECK_THROWS_AS(load_checkpoint(path), Error);

    save_model(path, ModelState::initialize(testing::toy_encoder(), 1));
    {
      std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
      f.seekp(8);
      const std::uint32_t v = 99;
      f.write(reinterpret_cast<const char*>(&v), 4);
    }
    try {
      load_checkpoint(path);
      FAIL("accepted version 99");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("version") != std::string::npos);
    }
    CHECK_THROWS_AS(load_checkpoint(temp_file("missing.ckpt")), Error);
    fs::remove(path);
  }
}
