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

#include "vocalsim/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <set>

#include "vocalsim/wav.hpp"

namespace vocalsim {

std::string_view to_string(Gender g) {
  switch (g) {
    case Gender::kMale:
      return "male";
    case Gender::kFemale:
      return "female";
    case Gender::kUnknown:
      break;
  }
  return "unknown";
}

Gender parse_gender(std::string_view s) {
  if (s == "male" || s == "m") return Gender::kMale;
  if (s == "female" || s == "f") return Gender::kFemale;
  return Gender::kUnknown;
}

std::string_view to_string(Partition p) {
  switch (p) {
    case Partition::kTrain:
      return "train";
    case Partition::kValid:
      return "valid";
    case Partition::kTest:
      break;
  }
  return "test";
}

void validate(const StemTrack& track) {
  if (track.artist_id.empty()) throw Error("corpus", "validate", "track " + track.track_id + " has no artist id");
  validate(track.vocals);
  validate(track.accompaniment);
  if (track.vocals.size() != track.accompaniment.size())
    throw Error("corpus", "validate",
                "track " + track.track_id + ": vocals have " + std::to_string(track.vocals.size()) +
                    " samples, accompaniment " + std::to_string(track.accompaniment.size()));
}

AudioBuffer sum_clamped(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size())
    throw Error("corpus", "mixture",
                "stem length mismatch (" + std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  AudioBuffer out;
  out.samples.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out.samples[i] = std::clamp(a[i] + b[i], -1.0F, 1.0F);
  return out;
}

AudioBuffer mixture(const StemTrack& track) {
  return sum_clamped(track.vocals.view(), track.accompaniment.view());
}

void validate(const ArtistProfile& p) {
  auto bad = [&](const std::string& why) {
    throw Error("corpus", "synth_track", "degenerate profile " + p.artist_id + ": " + why);
  };
  if (!(p.f0_low >= 80.0 && p.f0_high <= 400.0 && p.f0_low < p.f0_high)) bad("F0 range outside [80, 400] Hz");
  for (std::size_t i = 0; i < p.formant_centers.size(); ++i) {
    if (!(p.formant_centers[i] > 0.0 && p.formant_centers[i] < kSampleRate / 2.0)) bad("formant out of band");
    if (i > 0 && !(p.formant_centers[i] > p.formant_centers[i - 1])) bad("formants not strictly increasing");
    if (!(p.formant_bandwidths[i] > 0.0)) bad("non-positive formant bandwidth");
  }
  if (!(p.vibrato_rate > 0.0 && p.vibrato_depth >= 0.0 && p.vibrato_depth < 0.2)) bad("vibrato");
  if (!(p.spectral_tilt > 0.0) || !(p.breathiness >= 0.0)) bad("source shape");
}

namespace {

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform_unit(rng); }

// Two-pole resonator normalized to unit gain at its center frequency.
class Resonator {
 public:
  Resonator(double center, double bandwidth) { tune(center, bandwidth); }
  // Keeps the filter state, so retuning mid-signal does not click.
  void tune(double center, double bandwidth) {
    const double r = std::exp(-std::numbers::pi * bandwidth / kSampleRate);
    const double theta = 2.0 * std::numbers::pi * center / kSampleRate;
    a1_ = 2.0 * r * std::cos(theta);
    a2_ = -r * r;
    gain_ = (1.0 - r) * std::sqrt(1.0 - 2.0 * r * std::cos(2.0 * theta) + r * r);
  }
  double operator()(double x) {
    const double y = gain_ * x + a1_ * y1_ + a2_ * y2_;
    y2_ = y1_;
    y1_ = y;
    return y;
  }

 private:
  double a1_ = 0, a2_ = 0, gain_ = 0, y1_ = 0, y2_ = 0;
};

void normalize_rms(std::vector<double>& x, double target, double gate = 0.0) {
  double acc = 0.0;
  std::size_t n = 0;
  for (double v : x) {
    if (std::fabs(v) > gate) {
      acc += v * v;
      ++n;
    }
  }
  if (n == 0 || acc == 0.0) return;
  const double g = target / std::sqrt(acc / static_cast<double>(n));
  for (double& v : x) v *= g;
}

AudioBuffer to_buffer(const std::vector<double>& x) {
  AudioBuffer out;
  out.samples.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out.samples[i] = static_cast<float>(std::clamp(x[i], -1.0, 1.0));
  return out;
}

std::vector<double> synth_vocals(const ArtistProfile& p, std::size_t n, Rng& rng) {
  constexpr double kFs = kSampleRate;
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  constexpr double kMaxHarmonicHz = 5000.0;
  constexpr std::size_t kRamp = 480;  // 30 ms fades

  // Per-song performance: formant shift, key, vocal effort and vibrato width.
  const double shift = uniform(rng, 0.95, 1.05);
  const double key = std::pow(2.0, uniform(rng, -2.0, 2.0) / 12.0);
  const double tilt = std::max(0.3, p.spectral_tilt + uniform(rng, -0.3, 0.3));
  const double breathiness = p.breathiness * uniform(rng, 0.5, 1.5);
  const double vibrato_depth = p.vibrato_depth * uniform(rng, 0.5, 1.5);
  // Transposed notes stay inside the profile's gender band.
  const bool male = p.gender() == Gender::kMale;
  const double band_lo = male ? 80.0 : ArtistProfile::kMaleUpperF0 + 5.0;
  const double band_hi = male ? ArtistProfile::kMaleUpperF0 - 5.0 : 400.0;
  std::vector<double> envelope(n, 0.0), f0(n, 0.0);
  // Vowel per note: (start sample, per-formant scale).
  std::vector<std::pair<std::size_t, std::array<double, 3>>> vowels;

  std::size_t pos = static_cast<std::size_t>(uniform(rng, 0.0, 0.3) * kFs);
  while (pos < n) {
    const auto phrase = static_cast<std::size_t>(uniform(rng, 1.5, 3.5) * kFs);
    const std::size_t end = std::min(n, pos + phrase);
    std::size_t note_start = pos;
    double prev = 0.0;
    while (note_start < end) {
      const std::size_t note_end =
          std::min(end, note_start + static_cast<std::size_t>(uniform(rng, 0.2, 0.5) * kFs));
      const double target = std::clamp(uniform(rng, p.f0_low, p.f0_high) * key, band_lo, band_hi);
      const double level = uniform(rng, 0.7, 1.0);
      vowels.push_back({note_start, {uniform(rng, 0.85, 1.15), uniform(rng, 0.85, 1.15), uniform(rng, 0.93, 1.07)}});
      if (prev == 0.0) prev = target;
      for (std::size_t i = note_start; i < note_end; ++i) {
        // 40 ms portamento into each note.
        const double glide = std::min(1.0, static_cast<double>(i - note_start) / 640.0);
        f0[i] = prev + (target - prev) * glide;
        envelope[i] = level;
      }
      prev = target;
      note_start = note_end;
    }
    for (std::size_t i = pos; i < end; ++i) {
      const std::size_t from_start = i - pos, to_end = end - 1 - i;
      const double ramp = std::min({1.0, static_cast<double>(from_start) / kRamp,
                                    static_cast<double>(to_end) / kRamp});
      envelope[i] *= ramp;
    }
    // Short breaths between phrases, occasionally an instrumental break.
    const double gap = uniform_unit(rng) < 0.15 ? uniform(rng, 1.2, 2.5) : uniform(rng, 0.15, 0.6);
    pos = end + static_cast<std::size_t>(gap * kFs);
  }

  const int max_harmonics = static_cast<int>(kMaxHarmonicHz / band_lo * 1.1) + 1;
  std::vector<double> harmonic_gain(max_harmonics + 1);
  for (int k = 1; k <= max_harmonics; ++k) harmonic_gain[k] = std::pow(static_cast<double>(k), -tilt);

  std::vector<double> source(n, 0.0);
  double phase = 0.0, vib_phase = uniform(rng, 0.0, kTwoPi);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    vib_phase += kTwoPi * p.vibrato_rate / kFs;
    if (envelope[i] == 0.0) continue;
    const double f = f0[i] * (1.0 + vibrato_depth * std::sin(vib_phase));
    phase = std::fmod(phase + kTwoPi * f / kFs, kTwoPi);
    // Harmonic sum via the Chebyshev recurrence sin((k+1)x) = 2cos(x)sin(kx) - sin((k-1)x).
    const double c2 = 2.0 * std::cos(phase);
    double s_prev = 0.0, s_cur = std::sin(phase), acc = 0.0;
    const int harmonics = std::clamp(static_cast<int>(kMaxHarmonicHz / f), 1, max_harmonics);
    for (int k = 1; k <= harmonics; ++k) {
      acc += harmonic_gain[k] * s_cur;
      const double s_next = c2 * s_cur - s_prev;
      s_prev = s_cur;
      s_cur = s_next;
    }
    source[i] = envelope[i] * (acc + breathiness * noise(rng));
  }

  std::vector<double> out(n, 0.0);
  std::array<Resonator, 3> formants{
      Resonator(p.formant_centers[0] * shift, p.formant_bandwidths[0]),
      Resonator(p.formant_centers[1] * shift, p.formant_bandwidths[1]),
      Resonator(p.formant_centers[2] * shift, p.formant_bandwidths[2])};
  std::size_t next_vowel = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (next_vowel < vowels.size() && vowels[next_vowel].first == i) {
      const auto& scale = vowels[next_vowel++].second;
      for (std::size_t k = 0; k < 3; ++k)
        formants[k].tune(std::min(p.formant_centers[k] * shift * scale[k], 7000.0), p.formant_bandwidths[k]);
    }
    // Parallel formant branches with decreasing weight, plus a little of the
    // raw source so the glottal harmonics stay visible.
    const double x = source[i];
    out[i] = formants[0](x) + 0.7 * formants[1](x) + 0.4 * formants[2](x) + 0.05 * x;
  }
  normalize_rms(out, 0.1, 1e-4);
  return out;
}

std::vector<double> synth_accompaniment(std::size_t n, Rng& rng) {
  constexpr double kFs = kSampleRate;
  constexpr double kTwoPi = 2.0 * std::numbers::pi;

  std::vector<double> out(n, 0.0);
  // Sustained chord on a per-song root.
  const double root = uniform(rng, 90.0, 300.0);
  const double third = uniform_unit(rng) < 0.5 ? 1.25 : 1.2;
  const std::array<double, 3> chord{root, root * third, root * 1.5};
  const double tremolo = uniform(rng, 0.2, 2.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / kFs;
    double v = 0.0;
    for (double f : chord) v += std::sin(kTwoPi * f * t) + 0.3 * std::sin(2.0 * kTwoPi * f * t);
    out[i] = 0.25 * v * (0.8 + 0.2 * std::sin(kTwoPi * tremolo * t));
  }

  // Percussive clicks on the beat, band-passed noise bursts on off-beats.
  const double beat = 60.0 / uniform(rng, 80.0, 160.0);
  const double burst_center = uniform(rng, 500.0, 5000.0);
  const double click_level = uniform(rng, 0.8, 1.6);
  std::normal_distribution<double> noise(0.0, 1.0);
  Resonator band(burst_center, burst_center / 2.0);
  const double click_decay = std::exp(-1.0 / (0.004 * kFs));
  const double burst_decay = std::exp(-1.0 / (0.06 * kFs));
  double click_env = 0.0, burst_env = 0.0;
  const auto beat_samples = static_cast<std::size_t>(beat * kFs);
  for (std::size_t i = 0; i < n; ++i) {
    if (i % beat_samples == 0) click_env = click_level;
    if (i % beat_samples == beat_samples / 2 && uniform_unit(rng) < 0.8) burst_env = 1.0;
    const double w = noise(rng);
    out[i] += click_env * w + 6.0 * burst_env * band(w);
    click_env *= click_decay;
    burst_env *= burst_decay;
  }
  normalize_rms(out, 0.08);
  return out;
}

}  // namespace

ArtistProfile random_profile(std::string artist_id, bool male, Rng& rng) {
  ArtistProfile p;
  p.artist_id = std::move(artist_id);
  if (male) {
    p.f0_low = uniform(rng, 82.0, 112.0);
    p.f0_high = std::min(p.f0_low * uniform(rng, 1.25, 1.45), 160.0);
  } else {
    p.f0_low = uniform(rng, 175.0, 240.0);
    p.f0_high = std::min(p.f0_low * uniform(rng, 1.25, 1.5), 395.0);
  }
  const double f1 = uniform(rng, 350.0, 850.0);
  const double f2 = std::min(f1 + uniform(rng, 400.0, 1400.0), 2600.0);
  const double f3 = f2 + uniform(rng, 300.0, 900.0);
  p.formant_centers = {f1, f2, f3};
  p.formant_bandwidths = {uniform(rng, 50.0, 120.0), uniform(rng, 70.0, 160.0), uniform(rng, 100.0, 220.0)};
  p.vibrato_rate = uniform(rng, 4.5, 7.0);
  p.vibrato_depth = uniform(rng, 0.005, 0.04);
  p.spectral_tilt = uniform(rng, 0.7, 2.0);
  p.breathiness = uniform(rng, 0.0, 0.15);
  return p;
}

StemTrack synth_track(const ArtistProfile& profile, double duration, std::uint64_t seed,
                      std::string track_id) {
  validate(profile);
  if (!(duration >= kSegmentSeconds))
    throw Error("corpus", "synth_track", "duration must be at least 5 s");
  const std::size_t n = seconds_to_samples(duration);
  Rng voice_rng(derive_seed(seed, "vocals"));
  Rng band_rng(derive_seed(seed, "accompaniment"));

  StemTrack t;
  t.track_id = track_id.empty() ? profile.artist_id + "_" + to_hex(seed).substr(0, 8) : std::move(track_id);
  t.artist_id = profile.artist_id;
  t.gender = profile.gender();
  t.vocals = to_buffer(synth_vocals(profile, n, voice_rng));
  t.accompaniment = to_buffer(synth_accompaniment(n, band_rng));
  return t;
}

const StemTrack& Corpus::track(std::string_view track_id) const {
  const auto i = find(track_id);
  if (!i) throw Error("corpus", "track", "unknown track " + std::string(track_id));
  return tracks[*i];
}

std::optional<std::size_t> Corpus::find(std::string_view track_id) const {
  for (std::size_t i = 0; i < tracks.size(); ++i)
    if (tracks[i].track_id == track_id) return i;
  return std::nullopt;
}

std::vector<std::size_t> Corpus::partition(Partition p) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    const auto it = split.find(tracks[i].track_id);
    if (it != split.end() && it->second == p) out.push_back(i);
  }
  return out;
}

std::vector<std::string> Corpus::artists(std::span<const std::size_t> indices) const {
  std::set<std::string> ids;
  for (std::size_t i : indices) ids.insert(tracks.at(i).artist_id);
  return {ids.begin(), ids.end()};
}

std::vector<std::string> Corpus::artists() const {
  std::vector<std::size_t> all(tracks.size());
  std::iota(all.begin(), all.end(), 0);
  return artists(all);
}

std::string Corpus::manifest_hash() const {
  Fnv1a h;
  for (const auto& t : tracks) {
    h.update(t.track_id).update(t.artist_id).update(to_string(t.gender));
    h.update(t.vocals.samples.data(), t.vocals.samples.size() * sizeof(float));
    h.update(t.accompaniment.samples.data(), t.accompaniment.samples.size() * sizeof(float));
  }
  for (const auto& [id, part] : split) h.update(id).update(to_string(part));
  return h.hex();
}

Corpus build_synthetic_corpus(int n_artists, int tracks_per_artist, std::uint64_t seed,
                              const SynthOptions& options) {
  if (n_artists < 3 || tracks_per_artist < 2)
    throw Error("corpus", "build_synthetic_corpus", "need at least 3 artists and 2 tracks per artist");
  Corpus corpus;
  nlohmann::json profiles = nlohmann::json::array();
  for (int a = 0; a < n_artists; ++a) {
    char artist_id[32];
    std::snprintf(artist_id, sizeof artist_id, "artist_%03d", a);
    Rng profile_rng(derive_seed(seed, {0x70726f66ULL, static_cast<std::uint64_t>(a)}));
    const ArtistProfile profile = random_profile(artist_id, a % 2 == 0, profile_rng);
    profiles.push_back({{"artist_id", profile.artist_id},
                        {"gender", to_string(profile.gender())},
                        {"f0_range", {profile.f0_low, profile.f0_high}},
                        {"formant_centers", profile.formant_centers},
                        {"vibrato_rate", profile.vibrato_rate}});
    for (int k = 0; k < tracks_per_artist; ++k) {
      char track_id[80];
      std::snprintf(track_id, sizeof track_id, "%s_track_%02d", artist_id, k);
      const std::uint64_t track_seed =
          derive_seed(seed, {static_cast<std::uint64_t>(a), static_cast<std::uint64_t>(k)});
      corpus.tracks.push_back(synth_track(profile, options.track_duration, track_seed, track_id));
      corpus.split[track_id] = Partition::kTrain;
    }
  }
  corpus.provenance = {{"generator", "synthetic"},
                       {"n_artists", n_artists},
                       {"tracks_per_artist", tracks_per_artist},
                       {"seed", seed},
                       {"track_duration", options.track_duration},
                       {"profiles", profiles}};
  return corpus;
}

Corpus artist_disjoint_split(Corpus corpus, std::array<int, 3> ratios, std::uint64_t seed) {
  std::vector<std::string> artists = corpus.artists();
  const int total_ratio = ratios[0] + ratios[1] + ratios[2];
  if (ratios[0] <= 0 || ratios[1] <= 0 || ratios[2] <= 0)
    throw Error("corpus", "artist_disjoint_split", "ratios must be positive");
  if (artists.size() < ratios.size())
    throw Error("corpus", "artist_disjoint_split",
                std::to_string(artists.size()) + " artists cannot fill 3 partitions");

  Rng rng(derive_seed(seed, "artist_disjoint_split"));
  for (std::size_t i = artists.size(); i > 1; --i) std::swap(artists[i - 1], artists[uniform_index(rng, i)]);

  // Largest remainder apportionment; ties go to the earlier partition.
  const auto n = static_cast<long>(artists.size());
  std::array<long, 3> count{};
  std::array<double, 3> remainder{};
  long assigned = 0;
  for (int p = 0; p < 3; ++p) {
    const double exact = static_cast<double>(n) * ratios[p] / total_ratio;
    count[p] = static_cast<long>(std::floor(exact));
    remainder[p] = exact - static_cast<double>(count[p]);
    assigned += count[p];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return remainder[a] > remainder[b]; });
  for (int i = 0; assigned < n; ++i, ++assigned) ++count[order[i % 3]];
  for (int p = 0; p < 3; ++p) {
    while (count[p] == 0) {
      const auto donor = std::max_element(count.begin(), count.end()) - count.begin();
      --count[donor];
      ++count[p];
    }
  }

  std::map<std::string, Partition> by_artist;
  std::size_t cursor = 0;
  for (int p = 0; p < 3; ++p)
    for (long i = 0; i < count[p]; ++i) by_artist[artists[cursor++]] = static_cast<Partition>(p);
  corpus.split.clear();
  for (const auto& t : corpus.tracks) corpus.split[t.track_id] = by_artist.at(t.artist_id);
  return corpus;
}

bool has_artist_leakage(const Corpus& corpus) {
  std::map<std::string, Partition> seen;
  for (const auto& t : corpus.tracks) {
    const auto it = corpus.split.find(t.track_id);
    if (it == corpus.split.end()) return true;
    const auto [pos, inserted] = seen.emplace(t.artist_id, it->second);
    if (!inserted && pos->second != it->second) return true;
  }
  return false;
}

Corpus load_stem_directory(const std::filesystem::path& root, std::vector<std::string>* diagnostics) {
  namespace fs = std::filesystem;
  auto note = [&](const std::string& msg) {
    if (diagnostics) diagnostics->push_back(msg);
  };
  Corpus corpus;
  corpus.provenance = {{"generator", "stem_directory"}, {"root", root.string()}};
  if (!fs::is_directory(root)) throw Error("corpus", "load_stem_directory", root.string() + " is not a directory");

  const fs::path manifest_path = root / "manifest.json";
  if (!fs::exists(manifest_path)) {
    note("warning: " + manifest_path.string() + " not found; corpus is empty");
    return corpus;
  }
  nlohmann::json manifest;
  try {
    std::ifstream in(manifest_path);
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("corpus", "load_stem_directory", "malformed manifest: " + std::string(e.what()));
  }
  if (!manifest.is_object()) throw Error("corpus", "load_stem_directory", "manifest must be a JSON object");
  if (manifest.empty()) note("warning: manifest lists no tracks; corpus is empty");

  for (const auto& [track_id, meta] : manifest.items()) {
    if (!meta.is_object()) continue;
    const fs::path dir = root / track_id;
    try {
      StemTrack t;
      t.track_id = track_id;
      t.artist_id = meta.value("artist_id", std::string{});
      t.gender = parse_gender(meta.value("gender", std::string{"unknown"}));
      for (const char* stem : {"vocals.wav", "accompaniment.wav"})
        if (!fs::exists(dir / stem)) throw Error("corpus", "load_stem_directory", "missing " + std::string(stem));
      t.vocals = read_wav(dir / "vocals.wav");
      t.accompaniment = read_wav(dir / "accompaniment.wav");
      validate(t);
      corpus.split[t.track_id] = Partition::kTrain;
      corpus.tracks.push_back(std::move(t));
    } catch (const std::exception& e) {
      note("skipped track " + track_id + ": " + e.what());
    }
  }
  return corpus;
}

void write_stem_directory(const Corpus& corpus, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  fs::create_directories(root);
  nlohmann::json manifest = nlohmann::json::object();
  for (const auto& t : corpus.tracks) {
    fs::create_directories(root / t.track_id);
    write_wav(root / t.track_id / "vocals.wav", t.vocals);
    write_wav(root / t.track_id / "accompaniment.wav", t.accompaniment);
    manifest[t.track_id] = {{"artist_id", t.artist_id}, {"gender", to_string(t.gender)}};
  }
  std::ofstream(root / "manifest.json") << manifest.dump(2) << '\n';
  nlohmann::json prov = corpus.provenance;
  prov["manifest_hash"] = corpus.manifest_hash();
  std::ofstream(root / "provenance.json") << prov.dump(2) << '\n';
}

}  // namespace vocalsim
