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

#ifndef VOCALSIM_SAMPLERS_HPP_
#define VOCALSIM_SAMPLERS_HPP_

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "vocalsim/audio.hpp"
#include "vocalsim/corpus.hpp"

namespace vocalsim {

/// Contrastive pair construction strategies.
///   kCola     two time-shifted mixture excerpts of one segment
///   kMscol    real mixture excerpt vs. the vocal stem over the same span
///   kCvsmA    artificial mixture (vocal + foreign accompaniment) vs. that vocal
///   kCvsmAH   per-pair Bernoulli(p_artificial) choice between kCvsmA and kMscol
///   kCvsmAF   kCvsmA until the stage switch, kMscol afterwards
///   kCvsmArt  mixture excerpt vs. vocal excerpt of the same artist
///   kColaArt  two mixture excerpts of the same artist
enum class Strategy { kCola, kMscol, kCvsmA, kCvsmAH, kCvsmAF, kCvsmArt, kColaArt };

/// Canonical CLI spelling ("cola", "mscol", "cvsm-a", "cvsm-ah", "cvsm-af",
/// "cvsm-art", "cola-art").
std::string_view to_string(Strategy s);
/// Accepts the CLI spelling and the upper-case enum names (e.g. "CVSM_AH").
Strategy parse_strategy(std::string_view s);

/// True when the positive of every pair is a vocal-stem excerpt.
bool pairs_against_vocals(Strategy s);

struct SamplerConfig {
  Strategy strategy = Strategy::kCvsmA;
  double p_artificial = 0.5;
  double stage_switch_fraction = 0.75;
  double excerpt_len = kExcerptSeconds;
  std::uint64_t rng_seed = 0;
  /// CVSM_A positives: false takes the vocal span used inside the artificial
  /// mixture; true takes a different vocal-active offset of the same segment.
  bool shift_vocal_positive = false;

  void validate() const;
};

void to_json(nlohmann::json& j, const SamplerConfig& c);
void from_json(const nlohmann::json& j, SamplerConfig& c);

inline constexpr int kActivityRetries = 32;

enum class AnchorKind { kReal, kArtificial };

/// Location of an excerpt: track index in the corpus and first sample.
struct ExcerptSpan {
  std::size_t track = 0;
  std::size_t start = 0;
};

struct ContrastivePair {
  AudioBuffer anchor;
  AudioBuffer positive;
  AnchorKind anchor_kind = AnchorKind::kReal;
  std::string anchor_track;
  std::string positive_track;
  ExcerptSpan anchor_span;
  ExcerptSpan positive_span;
  // Only set for artificial anchors.
  ExcerptSpan accompaniment_span;
};

/// Tracks of one partition, indexed by artist. Holds a reference to the
/// corpus, which must outlive the pool.
class SamplingPool {
 public:
  SamplingPool(const Corpus& corpus, Partition partition);

  const Corpus& corpus() const { return *corpus_; }
  const std::vector<std::size_t>& tracks() const { return tracks_; }
  const std::vector<std::string>& artists() const { return artists_; }
  const std::vector<std::size_t>& tracks_of(const std::string& artist) const { return by_artist_.at(artist); }

 private:
  const Corpus* corpus_;
  std::vector<std::size_t> tracks_;
  std::vector<std::string> artists_;
  std::map<std::string, std::vector<std::size_t>> by_artist_;
};

/// Vocal excerpt superimposed with an accompaniment excerpt of another song.
AudioBuffer make_artificial_mixture(const AudioBuffer& vocal, const AudioBuffer& foreign_accompaniment);

/// First step at which a two-stage (kCvsmAF) run uses only real anchors:
/// ceil(fraction * total_steps).
std::size_t stage_switch_step(double fraction, std::size_t total_steps);

/// Strategy actually used for pairs at step_index (resolves kCvsmAF).
Strategy strategy_at(const SamplerConfig& config, std::size_t step_index, std::size_t total_steps);

ContrastivePair sample_pair(const SamplerConfig& config, const SamplingPool& pool, std::size_t step_index,
                            std::size_t total_steps, Rng& rng);

/// batch_size pairs; pair `slot` draws from its own stream
/// derive_seed(config.rng_seed, {step_index, minibatch, slot}).
std::vector<ContrastivePair> sample_batch(const SamplerConfig& config, const SamplingPool& pool,
                                          std::size_t batch_size, std::size_t step_index,
                                          std::size_t total_steps, std::size_t minibatch = 0);

}  // namespace vocalsim

#endif  // VOCALSIM_SAMPLERS_HPP_
