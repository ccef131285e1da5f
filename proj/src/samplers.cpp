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

#include "vocalsim/samplers.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>

namespace vocalsim {
namespace {

struct StrategyName {
  Strategy strategy;
  std::string_view cli;
  std::string_view upper;
};

constexpr std::array<StrategyName, 7> kStrategyNames{{
    {Strategy::kCola, "cola", "COLA"},
    {Strategy::kMscol, "mscol", "MSCOL"},
    {Strategy::kCvsmA, "cvsm-a", "CVSM_A"},
    {Strategy::kCvsmAH, "cvsm-ah", "CVSM_AH"},
    {Strategy::kCvsmAF, "cvsm-af", "CVSM_AF"},
    {Strategy::kCvsmArt, "cvsm-art", "CVSM_ART"},
    {Strategy::kColaArt, "cola-art", "COLA_ART"},
}};

[[noreturn]] void fail(const std::string& what) { throw Error("samplers", "sample_pair", what); }

AudioBuffer copy(std::span<const float> samples) {
  AudioBuffer out;
  out.samples.assign(samples.begin(), samples.end());
  return out;
}

}  // namespace

std::string_view to_string(Strategy s) {
  for (const auto& n : kStrategyNames)
    if (n.strategy == s) return n.cli;
  return "unknown";
}

Strategy parse_strategy(std::string_view s) {
  for (const auto& n : kStrategyNames)
    if (n.cli == s || n.upper == s) return n.strategy;
  throw Error("samplers", "parse_strategy", "unknown strategy '" + std::string(s) + "'");
}

bool pairs_against_vocals(Strategy s) { return s != Strategy::kCola && s != Strategy::kColaArt; }

void SamplerConfig::validate() const {
  if (!(p_artificial >= 0.0 && p_artificial <= 1.0))
    throw Error("samplers", "config", "p_artificial must lie in [0, 1]");
  if (!(stage_switch_fraction > 0.0 && stage_switch_fraction <= 1.0))
    throw Error("samplers", "config", "stage_switch_fraction must lie in (0, 1]");
  if (!(excerpt_len > 0.0 && excerpt_len <= kSegmentSeconds))
    throw Error("samplers", "config", "excerpt_len must lie in (0, 5] seconds");
}

SamplingPool::SamplingPool(const Corpus& corpus, Partition partition)
    : corpus_(&corpus), tracks_(corpus.partition(partition)) {
  const std::size_t segment = seconds_to_samples(kSegmentSeconds);
  std::erase_if(tracks_, [&](std::size_t i) { return corpus.tracks[i].vocals.size() < segment; });
  for (std::size_t i : tracks_) by_artist_[corpus.tracks[i].artist_id].push_back(i);
  for (const auto& [artist, _] : by_artist_) artists_.push_back(artist);
}

AudioBuffer make_artificial_mixture(const AudioBuffer& vocal, const AudioBuffer& foreign_accompaniment) {
  if (vocal.size() != foreign_accompaniment.size())
    throw Error("samplers", "make_artificial_mixture",
                "length mismatch (" + std::to_string(vocal.size()) + " vs " +
                    std::to_string(foreign_accompaniment.size()) + ")");
  return sum_clamped(vocal.view(), foreign_accompaniment.view());
}

std::size_t stage_switch_step(double fraction, std::size_t total_steps) {
  return static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(total_steps)));
}

Strategy strategy_at(const SamplerConfig& config, std::size_t step_index, std::size_t total_steps) {
  if (config.strategy != Strategy::kCvsmAF) return config.strategy;
  return step_index < stage_switch_step(config.stage_switch_fraction, total_steps) ? Strategy::kCvsmA
                                                                                    : Strategy::kMscol;
}

namespace {

class PairBuilder {
 public:
  PairBuilder(const SamplerConfig& config, const SamplingPool& pool, Rng& rng)
      : pool_(pool),
        corpus_(pool.corpus()),
        rng_(rng),
        excerpt_(seconds_to_samples(config.excerpt_len)),
        segment_(seconds_to_samples(kSegmentSeconds)),
        shift_(config.shift_vocal_positive) {
    if (pool.tracks().empty()) fail("sampling partition has no tracks of at least 5 s");
  }

  std::size_t random_track() { return pool_.tracks()[uniform_index(rng_, pool_.tracks().size())]; }

  const std::string& random_artist() { return pool_.artists()[uniform_index(rng_, pool_.artists().size())]; }

  std::size_t random_track_of(const std::string& artist) {
    const auto& tracks = pool_.tracks_of(artist);
    return tracks[uniform_index(rng_, tracks.size())];
  }

  std::size_t random_segment(std::size_t track) {
    return uniform_index(rng_, corpus_.tracks[track].vocals.size() / segment_);
  }

  std::size_t random_offset() { return uniform_index(rng_, segment_ - excerpt_ + 1); }

  ExcerptSpan random_span(std::size_t track) {
    const std::size_t seg = random_segment(track);
    return {track, seg * segment_ + random_offset()};
  }

  // Span on `track` whose vocal stem passes the activity gate.
  ExcerptSpan active_vocal_span(std::size_t track, const std::string& context) {
    for (int attempt = 0; attempt < kActivityRetries; ++attempt) {
      const ExcerptSpan span = random_span(track);
      if (is_vocal_active(vocal_view(span))) return span;
    }
    fail("no vocal-active excerpt found after " + std::to_string(kActivityRetries) + " attempts on track " +
         corpus_.tracks[track].track_id + context);
  }

  // Vocal-active span at another offset of the segment holding `s`.
  ExcerptSpan shifted_vocal_span(const ExcerptSpan& s) {
    const std::size_t base = s.start / segment_ * segment_;
    for (int attempt = 0; attempt < kActivityRetries; ++attempt) {
      const ExcerptSpan span{s.track, base + random_offset()};
      if (span.start != s.start && is_vocal_active(vocal_view(span))) return span;
    }
    fail("no second vocal-active offset found after " + std::to_string(kActivityRetries) + " attempts on track " +
         corpus_.tracks[s.track].track_id);
  }

  std::span<const float> vocal_view(const ExcerptSpan& s) const {
    return std::span<const float>(corpus_.tracks[s.track].vocals.samples).subspan(s.start, excerpt_);
  }
  std::span<const float> accompaniment_view(const ExcerptSpan& s) const {
    return std::span<const float>(corpus_.tracks[s.track].accompaniment.samples).subspan(s.start, excerpt_);
  }

  AudioBuffer vocal(const ExcerptSpan& s) const { return copy(vocal_view(s)); }
  AudioBuffer accompaniment(const ExcerptSpan& s) const { return copy(accompaniment_view(s)); }
  AudioBuffer mix(const ExcerptSpan& s) const { return sum_clamped(vocal_view(s), accompaniment_view(s)); }

  const std::string& id(const ExcerptSpan& s) const { return corpus_.tracks[s.track].track_id; }

  ContrastivePair cola() {
    const std::size_t track = random_track();
    const std::size_t base = random_segment(track) * segment_;
    const std::size_t a = random_offset();
    std::size_t b = random_offset();
    if (segment_ > excerpt_)
      while (b == a) b = random_offset();
    return real_pair({track, base + a}, {track, base + b}, /*vocal_positive=*/false);
  }

  ContrastivePair mscol() {
    const std::size_t track = random_track();
    const ExcerptSpan span = active_vocal_span(track, "");
    return real_pair(span, span, /*vocal_positive=*/true);
  }

  ContrastivePair cvsm_a() {
    if (pool_.tracks().size() < 2) fail("artificial mixtures need at least two tracks");
    const std::size_t track = random_track();
    const ExcerptSpan vocal_span = active_vocal_span(track, "");
    std::size_t other = random_track();
    while (other == track) other = random_track();
    const ExcerptSpan acc_span = random_span(other);
    const ExcerptSpan positive_span = shift_ ? shifted_vocal_span(vocal_span) : vocal_span;

    ContrastivePair p;
    p.positive = vocal(positive_span);
    p.anchor = make_artificial_mixture(vocal(vocal_span), accompaniment(acc_span));
    p.anchor_kind = AnchorKind::kArtificial;
    p.anchor_span = vocal_span;
    p.positive_span = positive_span;
    p.accompaniment_span = acc_span;
    p.anchor_track = id(vocal_span);
    p.positive_track = id(vocal_span);
    return p;
  }

  ContrastivePair by_artist(bool vocal_positive) {
    const std::string& artist = random_artist();
    const ExcerptSpan anchor = random_span(random_track_of(artist));
    const std::size_t positive_track = random_track_of(artist);
    const ExcerptSpan positive =
        vocal_positive ? active_vocal_span(positive_track, " (artist " + artist + ")") : random_span(positive_track);
    return real_pair(anchor, positive, vocal_positive);
  }

 private:
  ContrastivePair real_pair(const ExcerptSpan& anchor, const ExcerptSpan& positive, bool vocal_positive) {
    ContrastivePair p;
    p.anchor = mix(anchor);
    p.positive = vocal_positive ? vocal(positive) : mix(positive);
    p.anchor_kind = AnchorKind::kReal;
    p.anchor_span = anchor;
    p.positive_span = positive;
    p.anchor_track = id(anchor);
    p.positive_track = id(positive);
    return p;
  }

  const SamplingPool& pool_;
  const Corpus& corpus_;
  Rng& rng_;
  std::size_t excerpt_;
  std::size_t segment_;
  bool shift_;
};

}  // namespace

void to_json(nlohmann::json& j, const SamplerConfig& c) {
  j = {{"strategy", std::string(to_string(c.strategy))},
       {"p_artificial", c.p_artificial},
       {"stage_switch_fraction", c.stage_switch_fraction},
       {"excerpt_len", c.excerpt_len},
       {"rng_seed", c.rng_seed},
       {"shift_vocal_positive", c.shift_vocal_positive}};
}

void from_json(const nlohmann::json& j, SamplerConfig& c) {
  if (j.contains("strategy")) c.strategy = parse_strategy(j.at("strategy").get<std::string>());
  if (j.contains("p_artificial")) j.at("p_artificial").get_to(c.p_artificial);
  if (j.contains("stage_switch_fraction")) j.at("stage_switch_fraction").get_to(c.stage_switch_fraction);
  if (j.contains("excerpt_len")) j.at("excerpt_len").get_to(c.excerpt_len);
  if (j.contains("rng_seed")) j.at("rng_seed").get_to(c.rng_seed);
  if (j.contains("shift_vocal_positive")) j.at("shift_vocal_positive").get_to(c.shift_vocal_positive);
}

ContrastivePair sample_pair(const SamplerConfig& config, const SamplingPool& pool, std::size_t step_index,
                            std::size_t total_steps, Rng& rng) {
  config.validate();
  PairBuilder builder(config, pool, rng);
  Strategy strategy = strategy_at(config, step_index, total_steps);
  if (strategy == Strategy::kCvsmAH)
    strategy = uniform_unit(rng) < config.p_artificial ? Strategy::kCvsmA : Strategy::kMscol;
  switch (strategy) {
    case Strategy::kCola:
      return builder.cola();
    case Strategy::kMscol:
      return builder.mscol();
    case Strategy::kCvsmA:
      return builder.cvsm_a();
    case Strategy::kCvsmArt:
      return builder.by_artist(/*vocal_positive=*/true);
    case Strategy::kColaArt:
      return builder.by_artist(/*vocal_positive=*/false);
    case Strategy::kCvsmAH:
    case Strategy::kCvsmAF:
      break;
  }
  fail("unresolved strategy");
}

std::vector<ContrastivePair> sample_batch(const SamplerConfig& config, const SamplingPool& pool,
                                          std::size_t batch_size, std::size_t step_index,
                                          std::size_t total_steps, std::size_t minibatch) {
  std::vector<ContrastivePair> batch(batch_size);
  for (std::size_t slot = 0; slot < batch_size; ++slot) {
    Rng rng(derive_seed(config.rng_seed, {step_index, minibatch, slot}));
    try {
      batch[slot] = sample_pair(config, pool, step_index, total_steps, rng);
    } catch (const Error& e) {
      throw Error("samplers", "sample_batch",
                  "step " + std::to_string(step_index) + " minibatch " + std::to_string(minibatch) + " slot " +
                      std::to_string(slot) + ": " + e.what());
    }
  }
  return batch;
}

}  // namespace vocalsim
