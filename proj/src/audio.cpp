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

#include "vocalsim/audio.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>

namespace vocalsim {

void validate(const AudioBuffer& buffer) {
  if (buffer.sample_rate != kSampleRate)
    throw Error("audio", "validate",
                "sample rate " + std::to_string(buffer.sample_rate) + " Hz, expected 16000 Hz");
  if (buffer.empty()) throw Error("audio", "validate", "empty buffer");
  for (float s : buffer.samples)
    if (!std::isfinite(s)) throw Error("audio", "validate", "non-finite sample");
}

std::size_t seconds_to_samples(double seconds) {
  return static_cast<std::size_t>(std::llround(seconds * kSampleRate));
}

std::vector<AudioBuffer> frame_segments(const AudioBuffer& buffer, double segment_len) {
  const std::size_t seg = seconds_to_samples(segment_len);
  if (seg == 0) throw Error("audio", "frame_segments", "segment length must be positive");
  std::vector<AudioBuffer> out;
  for (std::size_t start = 0; start + seg <= buffer.size(); start += seg)
    out.push_back(crop_samples(buffer, start, seg));
  return out;
}

AudioBuffer crop_samples(const AudioBuffer& buffer, std::size_t offset, std::size_t length) {
  if (offset > buffer.size() || length > buffer.size() - offset)
    throw Error("audio", "crop_excerpt",
                "span [" + std::to_string(offset) + ", " + std::to_string(offset + length) +
                    ") exceeds buffer of " + std::to_string(buffer.size()) + " samples");
  AudioBuffer out;
  out.sample_rate = buffer.sample_rate;
  out.samples.assign(buffer.samples.begin() + static_cast<std::ptrdiff_t>(offset),
                     buffer.samples.begin() + static_cast<std::ptrdiff_t>(offset + length));
  return out;
}

AudioBuffer crop_excerpt(const AudioBuffer& segment, double offset, double excerpt_len) {
  if (offset < 0.0) throw Error("audio", "crop_excerpt", "negative offset");
  return crop_samples(segment, seconds_to_samples(offset), seconds_to_samples(excerpt_len));
}

double mean_amplitude(std::span<const float> samples) {
  if (samples.empty()) throw Error("audio", "mean_amplitude", "empty buffer");
  double acc = 0.0;
  for (float s : samples) acc += std::fabs(static_cast<double>(s));
  return acc / static_cast<double>(samples.size());
}

bool is_vocal_active(std::span<const float> samples, double threshold) {
  return mean_amplitude(samples) >= threshold;
}

std::size_t mel_frame_count(std::size_t n_samples) {
  if (n_samples < kWindowLength) return 0;
  return (n_samples - kWindowLength) / kHopLength + 1;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank::MelFilterbank()
    : edges_hz_(kMelBands + 2), weights_(kMelBands * kBins, 0.0), support_(2 * kMelBands, 0) {
  const double top = hz_to_mel(kMelHighHz);
  for (int i = 0; i < kMelBands + 2; ++i)
    edges_hz_[i] = mel_to_hz(top * i / (kMelBands + 1));
  for (int m = 0; m < kMelBands; ++m) {
    const double lo = edges_hz_[m], mid = edges_hz_[m + 1], hi = edges_hz_[m + 2];
    for (int k = 0; k < kBins; ++k) {
      const double f = static_cast<double>(k) * kSampleRate / kFftSize;
      double w = 0.0;
      if (f > lo && f <= mid)
        w = (f - lo) / (mid - lo);
      else if (f > mid && f < hi)
        w = (hi - f) / (hi - mid);
      weights_[m * kBins + k] = w;
    }
    int first = kBins, end = 0;
    for (int k = 0; k < kBins; ++k) {
      if (weights_[m * kBins + k] != 0.0) {
        first = std::min(first, k);
        end = k + 1;
      }
    }
    support_[2 * m] = std::min(first, end);
    support_[2 * m + 1] = end;
  }
}

const MelFilterbank& mel_filterbank() {
  static const MelFilterbank bank;
  return bank;
}

const std::vector<double>& analysis_window() {
  static const std::vector<double> window = [] {
    std::vector<double> w(kWindowLength);
    for (int n = 0; n < kWindowLength; ++n)
      w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / kWindowLength);
    return w;
  }();
  return window;
}

namespace {

struct FftwDeleter {
  void operator()(void* p) const { fftw_free(p); }
};

// One r2c plan shared by all callers; fftw_execute_dft_r2c on fresh
// fftw_malloc'd buffers is thread-safe, planning is not (guarded by the
// function-local static).
fftw_plan shared_plan() {
  static const fftw_plan plan = [] {
    std::unique_ptr<double, FftwDeleter> in(fftw_alloc_real(kFftSize));
    std::unique_ptr<fftw_complex, FftwDeleter> out(fftw_alloc_complex(kFftSize / 2 + 1));
    return fftw_plan_dft_r2c_1d(kFftSize, in.get(), out.get(), FFTW_ESTIMATE);
  }();
  return plan;
}

}  // namespace

MelFrameMatrix mel_spectrogram(std::span<const float> samples) {
  if (samples.size() < static_cast<std::size_t>(kWindowLength))
    throw Error("audio", "mel_spectrogram",
                "excerpt of " + std::to_string(samples.size()) +
                    " samples is shorter than one 400-sample window");
  const fftw_plan plan = shared_plan();
  const auto& window = analysis_window();
  const auto& bank = mel_filterbank();
  constexpr int kBins = MelFilterbank::kBins;

  std::unique_ptr<double, FftwDeleter> in(fftw_alloc_real(kFftSize));
  std::unique_ptr<fftw_complex, FftwDeleter> out(fftw_alloc_complex(kBins));
  std::vector<double> power(kBins);

  MelFrameMatrix mel;
  mel.frames = mel_frame_count(samples.size());
  mel.values.assign(mel.frames * kMelBands, 0.0);
  for (std::size_t f = 0; f < mel.frames; ++f) {
    const std::size_t start = f * kHopLength;
    double* buf = in.get();
    for (int n = 0; n < kWindowLength; ++n) buf[n] = samples[start + n] * window[n];
    for (int n = kWindowLength; n < kFftSize; ++n) buf[n] = 0.0;
    fftw_execute_dft_r2c(plan, buf, out.get());
    const fftw_complex* spec = out.get();
    for (int k = 0; k < kBins; ++k) power[k] = spec[k][0] * spec[k][0] + spec[k][1] * spec[k][1];
    for (int m = 0; m < kMelBands; ++m) {
      double e = 0.0;
      for (int k = bank.first_bin(m); k < bank.end_bin(m); ++k) e += bank.weight(m, k) * power[k];
      mel.at(f, m) = std::log(e + kLogFloor);
    }
  }
  return mel;
}

}  // namespace vocalsim
