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

#include "doctest.h"
#include "oracles.hpp"
#include "vocalsim/encoder.hpp"
#include "vocalsim/training.hpp"

using namespace vocalsim;

namespace {

MelFrameMatrix random_mel(std::size_t frames, std::size_t bands, std::uint64_t seed) {
  Rng rng(seed);
  MelFrameMatrix m;
  m.frames = frames;
  m.values.resize(frames * bands);
  for (auto& v : m.values) v = 4.0 * uniform_unit(rng) - 2.0;
  return m;
}

Vector random_vector(Eigen::Index n, Rng& rng) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = 2.0 * uniform_unit(rng) - 1.0;
  return v;
}

}  // namespace

TEST_SUITE("encoder") {
  TEST_CASE("default shape and parameter count") {
    const auto s = ModelState::initialize(EncoderConfig{}, 1);
    CHECK(s.parameter_count() == 340714);
    CHECK(s.all_finite());
    const Vector e = encode(random_mel(98, 64, 1), s);
    CHECK(e.size() == 128);
    const Vector y = project(e, s);
    CHECK(y.size() == 512);
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      CHECK(y[i] > -1.0);
      CHECK(y[i] < 1.0);
    }
    CHECK(s.bilinear_matrix().isApprox(0.1 * Matrix::Identity(512, 512)));
  }

  TEST_CASE("tensor layout") {
    const auto s = ModelState::initialize(testing::toy_encoder(), 2);
    CHECK(s.tensors[s.dw_weight(0)].name == "stage0.dw.weight");
    CHECK(s.tensors[s.pw_weight(1)].shape == std::vector<std::size_t>{3, 2});
    CHECK(s.tensors[s.head_weight()].shape == std::vector<std::size_t>{4, 3});
    CHECK(s.tensors[s.proj_weight()].shape == std::vector<std::size_t>{5, 4});
    CHECK(s.tensors[s.bilinear()].name == "bilinear");
    CHECK(&s.get("norm.gain") == &s.tensors[s.norm_gain()]);
    CHECK_THROWS_AS(s.get("nope"), Error);
    CHECK(ModelState::initialize(testing::toy_encoder(), 2).hash() == s.hash());
    CHECK(ModelState::initialize(testing::toy_encoder(), 3).hash() != s.hash());
  }

  TEST_CASE("zero input is deterministic") {
    const auto s = ModelState::initialize(EncoderConfig{}, 4);
    MelFrameMatrix zero;
    zero.frames = 98;
    zero.values.assign(98 * 64, 0.0);
    const Vector a = encode(zero, s);
    const Vector b = encode(zero, s);
    CHECK(a == b);
    CHECK(a.allFinite());
  }

  TEST_CASE("input validation") {
    const auto s = ModelState::initialize(EncoderConfig{}, 1);
    CHECK_THROWS_AS(encode(random_mel(7, 64, 1), s), Error);  // three pooling stages need 8
    CHECK_NOTHROW(encode(random_mel(8, 64, 1), s));
    MelFrameMatrix bad = random_mel(98, 64, 1);
    bad.values.pop_back();
    CHECK_THROWS_AS(encode(bad, s), Error);
    EncoderConfig c;
    c.stage_channels.clear();
    CHECK_THROWS_AS(c.validate(), Error);
    c = EncoderConfig{};
    c.embed_dim = 0;
    CHECK_THROWS_AS(c.validate(), Error);
  }

  TEST_CASE("layer norm before tanh") {
    const auto s = ModelState::initialize(EncoderConfig{}, 5);
    ProjectTrace t;
    project(encode(random_mel(98, 64, 2), s), s, &t);
    CHECK(t.normalized.mean() == doctest::Approx(0.0).epsilon(1e-6).scale(1.0));
    const double var = (t.normalized.array() - t.normalized.mean()).square().mean();
    CHECK(std::abs(var - 1.0) < 1e-6);
  }

  TEST_CASE("bilinear similarity") {
    Vector e1 = Vector::Zero(2), e2 = Vector::Zero(2);
    e1[0] = 1.0;
    e2[1] = 1.0;
    CHECK(bilinear_similarity(e1, e1, Matrix::Identity(2, 2)) == 1.0);
    CHECK(bilinear_similarity(e1, e2, Matrix::Zero(2, 2)) == 0.0);
    Matrix w = Matrix::Zero(2, 2);
    w(0, 1) = 2.0;
    CHECK(bilinear_similarity(e1, e2, w) == 2.0);
    CHECK_THROWS_AS(bilinear_similarity(e1, Vector::Zero(3), w), Error);

    Rng rng(7);
    for (int i = 0; i < 100; ++i) {
      const Vector y = random_vector(6, rng), yh = random_vector(6, rng);
      Matrix m(6, 6);
      for (Eigen::Index r = 0; r < 6; ++r) m.row(r) = random_vector(6, rng).transpose();
      const double alpha = 10.0 * uniform_unit(rng) - 5.0;
      CHECK(bilinear_similarity(alpha * y, yh, m) == doctest::Approx(alpha * bilinear_similarity(y, yh, m)));
      CHECK(bilinear_similarity(y, alpha * yh, m) == doctest::Approx(alpha * bilinear_similarity(y, yh, m)));
    }
  }

  TEST_CASE("full-chain gradients match finite differences") {
    for (std::uint64_t seed : {1, 2, 3}) {
      CAPTURE(seed);
      const auto batch = testing::toy_batch(seed);
      const auto state = testing::generic_toy_state(seed);
      const auto check = testing::finite_difference_check(batch, state);
      CAPTURE(check.worst);
      CHECK(check.checked == state.parameter_count());
      CHECK(check.max_rel_error < 1e-5);
    }
  }

  TEST_CASE("state arithmetic and config json") {
    auto a = ModelState::initialize(testing::toy_encoder(), 1);
    auto z = ModelState::zeros(a.config);
    CHECK(z.parameter_count() == a.parameter_count());
    const auto before = a.hash();
    a.add(z);
    CHECK(a.hash() == before);
    z.set_zero();
    CHECK(z.all_finite());
    z.tensors[0].data[0] = std::nan("");
    CHECK_FALSE(z.all_finite());
    EncoderConfig c = testing::toy_encoder();
    c.input_bands = 16;
    const EncoderConfig back = nlohmann::json(c).get<EncoderConfig>();
    CHECK(back.stage_channels == c.stage_channels);
    CHECK(back.input_bands == 16);
    CHECK(back.proj_dim == 5);
  }

  TEST_CASE("configurable band count") {
    EncoderConfig c = testing::toy_encoder();
    c.input_bands = 16;
    const auto s = ModelState::initialize(c, 1);
    CHECK(encode(random_mel(16, 16, 1), s).size() == 4);
    CHECK_THROWS_AS(encode(random_mel(16, 64, 1), s), Error);
  }
}
