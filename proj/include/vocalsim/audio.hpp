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

#ifndef VOCALSIM_AUDIO_HPP_
#define VOCALSIM_AUDIO_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include "vocalsim/common.hpp"

namespace vocalsim {

/// Mono audio at 16 kHz. Samples are stored in single precision; every
/// analysis routine accumulates in double.
struct AudioBuffer {
  std::vector<float> samples;
  int sample_rate = kSampleRate;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
  std::span<const float> view() const { return samples; }
};

/// Checks the AudioBuffer invariants (16 kHz, finite, non-empty).
void validate(const AudioBuffer& buffer);

inline constexpr double kSegmentSeconds = 5.0;
inline constexpr double kExcerptSeconds = 1.0;
inline constexpr double kActivityThreshold = 0.01;

std::size_t seconds_to_samples(double seconds);

/// Consecutive non-overlapping segments; the trailing remainder is dropped.
/// Returns an empty list when the buffer is shorter than one segment.
std::vector<AudioBuffer> frame_segments(const AudioBuffer& buffer,
                                        double segment_len = kSegmentSeconds);

/// Copies excerpt_len seconds starting at offset seconds. Throws when the
/// requested span leaves the segment.
AudioBuffer crop_excerpt(const AudioBuffer& segment, double offset,
                         double excerpt_len = kExcerptSeconds);

AudioBuffer crop_samples(const AudioBuffer& buffer, std::size_t offset, std::size_t length);

double mean_amplitude(std::span<const float> samples);
inline double mean_amplitude(const AudioBuffer& b) { return mean_amplitude(b.view()); }

bool is_vocal_active(std::span<const float> samples, double threshold = kActivityThreshold);
inline bool is_vocal_active(const AudioBuffer& b, double threshold = kActivityThreshold) {
  return is_vocal_active(b.view(), threshold);
}

// Log-mel frontend constants.
inline constexpr int kMelBands = 64;
inline constexpr int kWindowLength = 400;  // 25 ms
inline constexpr int kHopLength = 160;     // 10 ms
inline constexpr int kFftSize = 512;
inline constexpr double kLogFloor = 1e-6;
inline constexpr double kMelHighHz = 8000.0;

/// frames x 64 matrix of log-mel energies, row-major by frame.
struct MelFrameMatrix {
  std::size_t frames = 0;
  std::vector<double> values;

  double at(std::size_t frame, std::size_t band) const { return values[frame * kMelBands + band]; }
  double& at(std::size_t frame, std::size_t band) { return values[frame * kMelBands + band]; }
};

std::size_t mel_frame_count(std::size_t n_samples);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular HTK-style filterbank over the 257 rfft bins of a 512-point
/// FFT. Filter m rises from edge m to a peak of 1 at edge m+1 and falls to 0
/// at edge m+2, with 66 edges equally spaced on the mel scale over 0-8 kHz.
class MelFilterbank {
 public:
  MelFilterbank();

  double center_hz(int band) const { return edges_hz_[band + 1]; }
  double weight(int band, int bin) const { return weights_[band * kBins + bin]; }
  // Half-open range of bins with non-zero weight for a band.
  int first_bin(int band) const { return support_[2 * band]; }
  int end_bin(int band) const { return support_[2 * band + 1]; }

  static constexpr int kBins = kFftSize / 2 + 1;

 private:
  std::vector<double> edges_hz_;
  std::vector<double> weights_;
  std::vector<int> support_;
};

const MelFilterbank& mel_filterbank();

/// Periodic Hann window of kWindowLength samples.
const std::vector<double>& analysis_window();

MelFrameMatrix mel_spectrogram(std::span<const float> samples);
inline MelFrameMatrix mel_spectrogram(const AudioBuffer& excerpt) {
  return mel_spectrogram(excerpt.view());
}

}  // namespace vocalsim

#endif  // VOCALSIM_AUDIO_HPP_
