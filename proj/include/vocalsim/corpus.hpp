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

#ifndef VOCALSIM_CORPUS_HPP_
#define VOCALSIM_CORPUS_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "vocalsim/audio.hpp"

namespace vocalsim {

enum class Gender { kMale, kFemale, kUnknown };

std::string_view to_string(Gender g);
Gender parse_gender(std::string_view s);

enum class Partition { kTrain, kValid, kTest };

std::string_view to_string(Partition p);

struct StemTrack {
  std::string track_id;
  std::string artist_id;
  Gender gender = Gender::kUnknown;
  AudioBuffer vocals;
  AudioBuffer accompaniment;

  double duration() const { return vocals.duration(); }
};

/// Throws unless artist_id is non-empty and both stems are valid 16 kHz
/// buffers of equal length.
void validate(const StemTrack& track);

/// Samplewise a + b, hard-clamped to [-1, 1]. Lengths must match.
AudioBuffer sum_clamped(std::span<const float> a, std::span<const float> b);

/// The song mixture of a track: vocals + accompaniment, clamped.
AudioBuffer mixture(const StemTrack& track);

/// Voice parameters of one synthetic singer. Identity lives entirely in
/// these fields; accompaniment is generated independently of them.
struct ArtistProfile {
  std::string artist_id;
  double f0_low = 0.0;
  double f0_high = 0.0;
  std::array<double, 3> formant_centers{};
  std::array<double, 3> formant_bandwidths{80.0, 100.0, 140.0};
  double vibrato_rate = 5.5;
  double vibrato_depth = 0.02;  // fraction of F0
  double spectral_tilt = 1.2;   // harmonic k has amplitude k^-tilt
  double breathiness = 0.02;

  inline static constexpr double kMaleUpperF0 = 165.0;

  Gender gender() const { return f0_high < kMaleUpperF0 ? Gender::kMale : Gender::kFemale; }
};

void validate(const ArtistProfile& profile);

/// Draws a profile in the male (F0 below 165 Hz) or female range.
ArtistProfile random_profile(std::string artist_id, bool male, Rng& rng);

/// Deterministic given (profile, duration, seed). Duration must be >= 5 s.
StemTrack synth_track(const ArtistProfile& profile, double duration, std::uint64_t seed,
                      std::string track_id = {});

struct Corpus {
  std::vector<StemTrack> tracks;
  std::map<std::string, Partition> split;
  nlohmann::json provenance = nlohmann::json::object();

  const StemTrack& track(std::string_view track_id) const;
  std::optional<std::size_t> find(std::string_view track_id) const;

  /// Indices of tracks in a partition, in corpus order.
  std::vector<std::size_t> partition(Partition p) const;
  /// Distinct artist ids among the given track indices, sorted.
  std::vector<std::string> artists(std::span<const std::size_t> indices) const;
  std::vector<std::string> artists() const;

  /// Hash over track metadata, stem samples and the split.
  std::string manifest_hash() const;
};

struct SynthOptions {
  double track_duration = 10.0;
};

Corpus build_synthetic_corpus(int n_artists, int tracks_per_artist, std::uint64_t seed,
                              const SynthOptions& options = {});

/// Partitions artists (never tracks) by the given ratio with largest
/// remainder rounding; every partition receives at least one artist.
Corpus artist_disjoint_split(Corpus corpus, std::array<int, 3> ratios = {8, 1, 1},
                             std::uint64_t seed = 0);

/// True when some artist owns tracks in more than one partition, or a
/// track has no partition.
bool has_artist_leakage(const Corpus& corpus);

/// Reads <root>/manifest.json and <root>/<track_id>/{vocals,accompaniment}.wav.
/// Broken tracks are skipped and described in diagnostics. All loaded
/// tracks start in the train partition.
Corpus load_stem_directory(const std::filesystem::path& root,
                           std::vector<std::string>* diagnostics = nullptr);

/// Writes the layout read by load_stem_directory (32-bit float stems) plus
/// provenance.json.
void write_stem_directory(const Corpus& corpus, const std::filesystem::path& root);

}  // namespace vocalsim

#endif  // VOCALSIM_CORPUS_HPP_
