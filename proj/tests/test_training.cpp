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

#include <cmath>
#include <numeric>

#include "doctest.h"
#include "oracles.hpp"
#include "vocalsim/training.hpp"

using namespace vocalsim;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, double scale, Rng& rng) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = scale * (2.0 * uniform_unit(rng) - 1.0);
  return m;
}

const Corpus& corpus() {
  static const Corpus c = testing::small_corpus(10, 3, 21, 5.0);
  return c;
}

TrainConfig toy_config(std::size_t steps) {
  TrainConfig c;
  c.total_steps = steps;
  c.minibatches_per_step = 1;
  c.batch_size = 6;
  c.val_pairs = 12;
  c.val_check_interval = 2;
  c.lr_halve_window = 20;
  c.seed = 9;
  c.encoder = testing::toy_encoder();
  return c;
}

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("loss hand examples") {
    CHECK(contrastive_loss_from_logits(Matrix::Constant(1, 1, 3.7)) == 0.0);
    for (int b : {2, 5, 32}) CHECK(contrastive_loss_from_logits(Matrix::Constant(b, b, 0.4)) == doctest::Approx(std::log(b)));
    const Matrix eye = Matrix::Identity(2, 2);
    const auto r = contrastive_loss(eye, eye, eye);
    CHECK(r.loss == doctest::Approx(std::log(1.0 + std::exp(-1.0))));
    CHECK(r.loss == doctest::Approx(0.31326).epsilon(1e-5));
    Matrix bad = Matrix::Zero(2, 2);
    bad(0, 1) = std::nan("");
    CHECK_THROWS_AS(contrastive_loss_from_logits(bad), Error);
    CHECK_THROWS_AS(contrastive_loss(eye, Matrix::Identity(3, 3), eye), Error);
  }

  TEST_CASE("loss matches the unstabilized definition") {
    Rng rng(1);
    for (int i = 0; i < 100; ++i) {
      const Matrix logits = random_matrix(8, 8, 3.0, rng);
      CHECK(std::abs(contrastive_loss_from_logits(logits) - testing::unstabilized_infonce(logits)) < 1e-6);
    }
  }

  TEST_CASE("loss survives large logits") {
    Matrix big = Matrix::Constant(4, 4, 800.0);
    big(0, 0) = 900.0;
    const double l = contrastive_loss_from_logits(big);
    CHECK(std::isfinite(l));
    CHECK(l == doctest::Approx(3.0 * std::log(4.0) / 4.0).epsilon(1e-9));
  }

  TEST_CASE("joint permutation leaves the loss unchanged") {
    Rng rng(2);
    for (int i = 0; i < 20; ++i) {
      const Matrix a = random_matrix(6, 4, 1.0, rng), p = random_matrix(6, 4, 1.0, rng), w = random_matrix(4, 4, 1.0, rng);
      Eigen::PermutationMatrix<Eigen::Dynamic> perm(6);
      perm.setIdentity();
      for (int k = 5; k > 0; --k) std::swap(perm.indices()[k], perm.indices()[uniform_index(rng, k + 1)]);
      const Matrix pa = perm * a, pp = perm * p;
      CHECK(contrastive_loss(pa, pp, w).loss == doctest::Approx(contrastive_loss(a, p, w).loss).epsilon(1e-12));
    }
  }

  TEST_CASE("loss gradients match finite differences") {
    Rng rng(3);
    const Matrix a = random_matrix(4, 3, 1.0, rng), p = random_matrix(4, 3, 1.0, rng), w = random_matrix(3, 3, 1.0, rng);
    const auto r = contrastive_loss(a, p, w);
    const double h = 1e-6;
    auto rel = [](double x, double y) { return std::abs(x - y) / std::max({std::abs(x), std::abs(y), 1e-8}); };
    for (Eigen::Index i = 0; i < 3; ++i)
      for (Eigen::Index j = 0; j < 3; ++j) {
        Matrix up = w, down = w;
        up(i, j) += h;
        down(i, j) -= h;
        const double fd = (contrastive_loss(a, p, up).loss - contrastive_loss(a, p, down).loss) / (2 * h);
        CHECK(rel(fd, r.grad_w(i, j)) < 1e-4);
      }
    for (Eigen::Index i = 0; i < 4; ++i)
      for (Eigen::Index j = 0; j < 3; ++j) {
        Matrix up = a, down = a;
        up(i, j) += h;
        down(i, j) -= h;
        CHECK(rel((contrastive_loss(up, p, w).loss - contrastive_loss(down, p, w).loss) / (2 * h), r.grad_anchors(i, j)) < 1e-4);
        up = p;
        down = p;
        up(i, j) += h;
        down(i, j) -= h;
        CHECK(rel((contrastive_loss(a, up, w).loss - contrastive_loss(a, down, w).loss) / (2 * h), r.grad_positives(i, j)) < 1e-4);
      }
  }

  TEST_CASE("initial loss stays in the sanity band") {
    const auto state = ModelState::initialize(EncoderConfig{}, 4);
    SamplingPool pool(corpus(), Partition::kTrain);
    SamplerConfig s;
    const auto batch = to_batch(sample_batch(s, pool, 8, 0, 1));
    const double l = batch_gradient(batch, state, nullptr);
    CHECK(l >= 0.0);
    CHECK(l <= std::log(8.0) + 2.0);
  }

  TEST_CASE("adam update") {
    auto state = ModelState::initialize(testing::toy_encoder(), 1);
    const auto before = state;
    auto grads = ModelState::zeros(state.config);
    auto adam = AdamState::zeros_like(state);
    optimizer_step(state, grads, adam, 1e-3);
    CHECK(state.hash() == before.hash());

    adam = AdamState::zeros_like(state);
    grads.tensors[0].data[0] = 1.0;
    optimizer_step(state, grads, adam, 1e-3);
    CHECK(state.tensors[0].data[0] - before.tensors[0].data[0] == doctest::Approx(-1e-3).epsilon(1e-6));
    CHECK(state.tensors[0].data[1] == before.tensors[0].data[1]);
    CHECK(adam.t == 1);
    optimizer_step(state, grads, adam, 1e-3);
    CHECK(adam.t == 2);
  }

  TEST_CASE("plateau schedule") {
    PlateauSchedule falling(250, 10);
    double lr = 1.0;
    for (std::size_t step = 10; step <= 2000; step += 10) lr = falling.update(step, 10.0 - step * 1e-3, lr);
    CHECK(lr == 1.0);

    PlateauSchedule flat(250, 10);
    lr = 1.0;
    for (std::size_t step = 10; step <= 1010; step += 10) lr = flat.update(step, 1.0, lr);
    CHECK(flat.halvings() == 4);
    CHECK(lr == 1.0 / 16.0);

    PlateauSchedule late(250, 1);
    lr = 1.0;
    lr = late.update(1, 1.0, lr);
    for (std::size_t step = 2; step < 250; ++step) lr = late.update(step, 1.0, lr);
    lr = late.update(250, 0.9, lr);  // improvement one step before the window closes
    for (std::size_t step = 251; step < 500; ++step) lr = late.update(step, 0.9, lr);
    CHECK(lr == 1.0);
    CHECK(late.halvings() == 0);
    lr = late.update(500, 0.9, lr);
    CHECK(late.halvings() == 1);

    const auto round = PlateauSchedule::from_json(flat.to_json());
    CHECK(round.to_json() == flat.to_json());
  }

  TEST_CASE("config validation and json") {
    TrainConfig c = toy_config(10);
    c.val_check_interval = 3;
    CHECK_THROWS_AS(c.validate(), Error);
    c = toy_config(10);
    c.lr_init = 0.0;
    CHECK_THROWS_AS(c.validate(), Error);
    c = toy_config(10);
    const TrainConfig back = nlohmann::json(c).get<TrainConfig>();
    CHECK(nlohmann::json(back) == nlohmann::json(c));
  }

  TEST_CASE("zero steps keep the initialization") {
    const auto r = pretrain(toy_config(0), SamplerConfig{}, corpus());
    CHECK(r.final_state.model.hash() == ModelState::initialize(testing::toy_encoder(), 9).hash());
    CHECK(r.curve.empty());
    auto cfg = toy_config(0);
    const auto f = finetune_in_domain(r.final_state, cfg, SamplerConfig{}, corpus());
    CHECK(f.final_state.model.hash() == r.final_state.model.hash());
  }

  TEST_CASE("training is reproducible and records curves") {
    SamplerConfig s;
    s.rng_seed = 3;
    const auto a = pretrain(toy_config(6), s, corpus());
    const auto b = pretrain(toy_config(6), s, corpus());
    CHECK(a.final_state.model.hash() == b.final_state.model.hash());
    CHECK(a.best_model.hash() == b.best_model.hash());
    REQUIRE(a.curve.size() == 3);
    CHECK(a.curve.back().step == 6);
    CHECK(a.final_state.adam.t == 6);
    for (const auto& k : a.anchor_counts) CHECK(k[1] == 6);
  }

  TEST_CASE("two-stage run equals the single scheduled run") {
    SamplerConfig af;
    af.strategy = Strategy::kCvsmAF;
    af.rng_seed = 4;
    const auto single = pretrain(toy_config(50), af, corpus());
    const std::size_t sw = stage_switch_step(0.75, 50);
    REQUIRE(sw == 38);
    for (std::size_t s = 0; s < 50; ++s) {
      CHECK(single.anchor_counts[s][1] == (s < sw ? 6u : 0u));
      CHECK(single.anchor_counts[s][0] == (s < sw ? 0u : 6u));
    }

    SamplerConfig a = af;
    a.strategy = Strategy::kCvsmA;
    const auto first = pretrain(toy_config(sw), a, corpus());
    const auto second = finetune_in_domain(first.final_state, toy_config(50), af, corpus());
    CHECK(second.final_state.model.hash() == single.final_state.model.hash());
    CHECK(second.final_state.lr == single.final_state.lr);
    CHECK(second.final_state.adam.t == single.final_state.adam.t);
    CHECK(second.best_model.hash() == single.best_model.hash());
  }

  TEST_CASE("finetune rejects mismatched dimensions") {
    const auto r = pretrain(toy_config(0), SamplerConfig{}, corpus());
    auto cfg = toy_config(4);
    cfg.encoder.embed_dim = 7;
    CHECK_THROWS_AS(finetune_in_domain(r.final_state, cfg, SamplerConfig{}, corpus()), Error);
  }
}
