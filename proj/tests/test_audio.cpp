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

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>

#include "doctest.h"
#include "oracles.hpp"
#include "vocalsim/audio.hpp"
#include "vocalsim/wav.hpp"

using namespace vocalsim;

namespace {

AudioBuffer constant(double seconds, float value) {
  AudioBuffer b;
  b.samples.assign(seconds_to_samples(seconds), value);
  return b;
}

AudioBuffer sine(double seconds, double hz, double amplitude) {
  AudioBuffer b;
  b.samples.resize(seconds_to_samples(seconds));
  for (std::size_t n = 0; n < b.size(); ++n)
    b.samples[n] = static_cast<float>(amplitude * std::sin(2.0 * std::numbers::pi * hz * n / kSampleRate));
  return b;
}

AudioBuffer noise(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  AudioBuffer b;
  b.samples.resize(n);
  for (auto& s : b.samples) s = static_cast<float>(uniform_unit(rng) - 0.5);
  return b;
}

}  // namespace

TEST_SUITE("audio") {
  TEST_CASE("segments drop the remainder") {
    CHECK(frame_segments(constant(30, 0.1f)).size() == 6);
    const auto twelve = frame_segments(constant(12, 0.1f));
    REQUIRE(twelve.size() == 2);
    CHECK(twelve[1].size() == 80000);
    CHECK(frame_segments(constant(4, 0.1f)).empty());
  }

  TEST_CASE("excerpt bounds") {
    AudioBuffer seg;
    for (int i = 0; i < 80000; ++i) seg.samples.push_back(static_cast<float>(i) / 80000.0f);
    const auto first = crop_excerpt(seg, 0.0);
    REQUIRE(first.size() == 16000);
    CHECK(first.samples.front() == seg.samples[0]);
    const auto last = crop_excerpt(seg, 4.0);
    REQUIRE(last.size() == 16000);
    CHECK(last.samples.back() == seg.samples.back());
    CHECK_THROWS_AS(crop_excerpt(seg, 4.5), Error);
    CHECK_THROWS_AS(crop_excerpt(seg, -1.0), Error);
  }

  TEST_CASE("mean amplitude and activity gate") {
    CHECK(mean_amplitude(constant(1, 0.0f)) == 0.0);
    CHECK(mean_amplitude(constant(1, 0.5f)) == doctest::Approx(0.5));
    const auto quiet = sine(1.0, 100.0, 0.009);  // 100 whole periods
    CHECK(mean_amplitude(quiet) == doctest::Approx(2.0 * 0.009 / std::numbers::pi).epsilon(1e-4));
    CHECK_FALSE(is_vocal_active(quiet));
    CHECK_FALSE(is_vocal_active(constant(1, 0.0f)));
    CHECK(is_vocal_active(constant(1, 0.5f)));
    CHECK_THROWS_AS(mean_amplitude(std::span<const float>{}), Error);
  }

  TEST_CASE("activity gate is exactly the threshold comparison") {
    Rng rng(3);
    for (int trial = 0; trial < 500; ++trial) {
      AudioBuffer b = noise(400 + uniform_index(rng, 2000), trial);
      const float g = static_cast<float>(0.04 * uniform_unit(rng));
      for (auto& s : b.samples) s *= g;
      CHECK(is_vocal_active(b) == (mean_amplitude(b) >= kActivityThreshold));
    }
  }

  TEST_CASE("mel shape and silence") {
    const auto m = mel_spectrogram(constant(1, 0.0f));
    CHECK(m.frames == 98);
    CHECK(m.values.size() == 98 * 64);
    for (double v : m.values) CHECK(v == std::log(kLogFloor));
    const std::vector<float> short_input(399, 0.0f);
    CHECK_THROWS_AS(mel_spectrogram(short_input), Error);
  }

  TEST_CASE("framing count holds for random lengths") {
    Rng rng(11);
    for (int i = 0; i < 200; ++i) {
      const std::size_t n = 400 + uniform_index(rng, 40000);
      CHECK(mel_frame_count(n) == (n - 400) / 160 + 1);
    }
    const auto m = mel_spectrogram(noise(1234, 1));
    CHECK(m.frames == (1234 - 400) / 160 + 1);
  }

  TEST_CASE("1 kHz sine matches the direct DFT reference") {
    const auto x = sine(1.0, 1000.0, 1.0);
    const auto m = mel_spectrogram(x);
    int nearest = 0;
    for (int b = 1; b < kMelBands; ++b)
      if (std::abs(mel_filterbank().center_hz(b) - 1000.0) < std::abs(mel_filterbank().center_hz(nearest) - 1000.0))
        nearest = b;
    for (std::size_t f = 0; f < m.frames; ++f) {
      const auto row = m.values.begin() + static_cast<std::ptrdiff_t>(f * kMelBands);
      CHECK(std::max_element(row, row + kMelBands) - row == nearest);
    }
    const auto ref = testing::direct_dft_log_mel(x.view());
    REQUIRE(ref.size() == m.values.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i)
      worst = std::max(worst, std::abs(m.values[i] - ref[i]) / std::max(1.0, std::abs(ref[i])));
    CHECK(worst < 1e-4);
  }

  TEST_CASE("noise matches the direct DFT reference") {
    const auto x = noise(2000, 5);
    const auto m = mel_spectrogram(x);
    const auto ref = testing::direct_dft_log_mel(x.view());
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(m.values[i] == doctest::Approx(ref[i]).epsilon(1e-6));
  }

  TEST_CASE("trailing samples beyond the last full window are ignored") {
    Rng rng(2);
    for (int i = 0; i < 20; ++i) {
      const auto x = noise(400 + uniform_index(rng, 5000), i);
      const std::size_t used = (mel_frame_count(x.size()) - 1) * kHopLength + kWindowLength;
      const std::size_t spare = kHopLength - 1 - (x.size() - used);
      AudioBuffer y = x;
      for (std::size_t k = 0; k < spare; ++k) y.samples.push_back(0.3f);
      CHECK(mel_spectrogram(y).values == mel_spectrogram(x).values);
    }
  }

  TEST_CASE("gain never lowers any entry") {
    const auto x = noise(4000, 9);
    const auto base = mel_spectrogram(x);
    for (float g : {1.01f, 1.5f, 3.0f}) {
      AudioBuffer y = x;
      for (auto& s : y.samples) s *= g;
      const auto scaled = mel_spectrogram(y);
      for (std::size_t i = 0; i < base.values.size(); ++i) CHECK(scaled.values[i] >= base.values[i]);
    }
  }

  TEST_CASE("filterbank triangles") {
    const auto& fb = mel_filterbank();
    for (int b = 0; b < kMelBands; ++b) {
      double peak = 0.0;
      for (int k = 0; k < MelFilterbank::kBins; ++k) {
        const double w = fb.weight(b, k);
        CHECK(w >= 0.0);
        CHECK(w <= 1.0);
        peak = std::max(peak, w);
        if (k < fb.first_bin(b) || k >= fb.end_bin(b)) CHECK(w == 0.0);
      }
      CHECK(peak > 0.0);
      if (b > 0) CHECK(fb.center_hz(b) > fb.center_hz(b - 1));
    }
    CHECK(hz_to_mel(mel_to_hz(1234.5)) == doctest::Approx(1234.5));
  }

  TEST_CASE("wav round trip and rejection") {
    const auto x = sine(0.5, 440.0, 0.5);
    const auto f32 = decode_wav(encode_wav(x, WavEncoding::kFloat32));
    CHECK(f32.samples == x.samples);
    const auto pcm = decode_wav(encode_wav(x, WavEncoding::kPcm16));
    REQUIRE(pcm.size() == x.size());
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(pcm.samples[i] - x.samples[i]) < 1.0 / 32000.0);

    auto bytes = encode_wav(x, WavEncoding::kPcm16);
    auto other_rate = bytes;
    const std::uint32_t rate = 44100;
    std::memcpy(other_rate.data() + 24, &rate, 4);
    try {
      decode_wav(other_rate);
      FAIL("accepted 44.1 kHz");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("44100") != std::string::npos);
    }
    auto stereo = bytes;
    stereo[22] = 2;
    try {
      decode_wav(stereo);
      FAIL("accepted stereo");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("channel") != std::string::npos);
    }
    CHECK_THROWS_AS(decode_wav({1, 2, 3}), Error);
  }

  TEST_CASE("buffer validation") {
    CHECK_THROWS_AS(validate(AudioBuffer{}), Error);
    AudioBuffer bad = constant(0.1, 0.0f);
    bad.samples[3] = std::nanf("");
    CHECK_THROWS_AS(validate(bad), Error);
    bad = constant(0.1, 0.0f);
    bad.sample_rate = 22050;
    CHECK_THROWS_AS(validate(bad), Error);
    CHECK_NOTHROW(validate(constant(0.1, 0.0f)));
  }
}
