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

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "vocalsim/corpus.hpp"
#include "vocalsim/wav.hpp"

using namespace vocalsim;
namespace fs = std::filesystem;

namespace {

AudioBuffer constant(std::size_t n, float v) {
  AudioBuffer b;
  b.samples.assign(n, v);
  return b;
}

// Metadata-only corpus: stems are tiny, which is all splitting needs.
Corpus skeleton(int artists, int tracks_per_artist) {
  Corpus c;
  for (int a = 0; a < artists; ++a)
    for (int t = 0; t < tracks_per_artist; ++t) {
      StemTrack s;
      s.artist_id = "a" + std::to_string(a);
      s.track_id = s.artist_id + "-t" + std::to_string(t);
      s.vocals = constant(16, 0.1f);
      s.accompaniment = constant(16, 0.1f);
      c.split[s.track_id] = Partition::kTrain;
      c.tracks.push_back(std::move(s));
    }
  return c;
}

std::set<std::string> artists_in(const Corpus& c, Partition p) {
  std::set<std::string> out;
  for (auto i : c.partition(p)) out.insert(c.tracks[i].artist_id);
  return out;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("vocalsim-corpus-" + std::to_string(::getpid()) + "-" + std::to_string(counter()++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int n = 0;
    return n;
  }
};

}  // namespace

TEST_SUITE("corpus") {
  TEST_CASE("mixture sums and clamps") {
    StemTrack t;
    t.artist_id = "a";
    t.vocals = constant(100, 0.3f);
    t.accompaniment = constant(100, 0.0f);
    CHECK(mixture(t).samples == t.vocals.samples);
    CHECK(sum_clamped(constant(8, 0.5f).view(), constant(8, 0.5f).view()).samples == constant(8, 1.0f).samples);
    CHECK(sum_clamped(constant(8, 0.8f).view(), constant(8, 0.8f).view()).samples == constant(8, 1.0f).samples);
    CHECK(sum_clamped(constant(8, -0.8f).view(), constant(8, -0.8f).view()).samples == constant(8, -1.0f).samples);
    CHECK_THROWS_AS(sum_clamped(constant(8, 0.1f).view(), constant(9, 0.1f).view()), Error);
  }

  TEST_CASE("mixture is local") {
    Rng rng(4);
    const auto p = random_profile("x", true, rng);
    const auto t = synth_track(p, 5.0, 1);
    const auto full = mixture(t);
    for (int i = 0; i < 20; ++i) {
      const std::size_t off = uniform_index(rng, t.vocals.size() - 100);
      const std::size_t len = 1 + uniform_index(rng, t.vocals.size() - off);
      const auto part = sum_clamped(crop_samples(t.vocals, off, len).view(), crop_samples(t.accompaniment, off, len).view());
      CHECK(part.samples == crop_samples(full, off, len).samples);
    }
  }

  TEST_CASE("synthetic tracks are deterministic and stable in level") {
    Rng rng(8);
    const auto p = random_profile("singer", false, rng);
    validate(p);
    const auto a = synth_track(p, 5.0, 42);
    const auto b = synth_track(p, 5.0, 42);
    CHECK(a.vocals.samples == b.vocals.samples);
    CHECK(a.accompaniment.samples == b.accompaniment.samples);
    validate(a);
    CHECK(a.duration() == doctest::Approx(5.0));

    std::vector<double> levels;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const auto t = synth_track(p, 5.0, 1000 + seed);
      CHECK(t.vocals.samples != a.vocals.samples);
      levels.push_back(mean_amplitude(t.vocals));
    }
    auto sorted = levels;
    std::nth_element(sorted.begin(), sorted.begin() + 50, sorted.end());
    const double median = sorted[50];
    for (double m : levels) {
      CHECK(m >= 0.5 * median);
      CHECK(m <= 1.5 * median);
    }
  }

  TEST_CASE("profile validation") {
    Rng rng(1);
    for (int i = 0; i < 50; ++i) {
      const bool male = i % 2 == 0;
      const auto p = random_profile("p", male, rng);
      CHECK_NOTHROW(validate(p));
      CHECK(p.f0_low >= 80.0);
      CHECK(p.f0_high <= 400.0);
      CHECK((p.gender() == Gender::kMale) == male);
    }
    auto bad = random_profile("p", true, rng);
    bad.formant_centers = {900.0, 800.0, 2500.0};
    CHECK_THROWS_AS(validate(bad), Error);
    CHECK_THROWS_AS(synth_track(bad, 5.0, 1), Error);
    bad = random_profile("p", true, rng);
    bad.f0_low = 40.0;
    CHECK_THROWS_AS(validate(bad), Error);
    CHECK_THROWS_AS(synth_track(random_profile("p", true, rng), 4.0, 1), Error);
  }

  TEST_CASE("synthetic corpus counts and hash") {
    const Corpus c = build_synthetic_corpus(10, 8, 7, SynthOptions{5.0});
    CHECK(c.tracks.size() == 80);
    CHECK(c.artists().size() == 10);
    for (const auto& t : c.tracks) CHECK_NOTHROW(validate(t));
    CHECK(build_synthetic_corpus(10, 8, 7, SynthOptions{5.0}).manifest_hash() == c.manifest_hash());
    CHECK(build_synthetic_corpus(10, 8, 8, SynthOptions{5.0}).manifest_hash() != c.manifest_hash());
    std::set<Gender> genders;
    for (const auto& t : c.tracks) genders.insert(t.gender);
    CHECK(genders.size() == 2);
  }

  TEST_CASE("artist split of ten artists") {
    const Corpus c = artist_disjoint_split(skeleton(10, 3), {8, 1, 1}, 5);
    CHECK(artists_in(c, Partition::kTrain).size() == 8);
    CHECK(artists_in(c, Partition::kValid).size() == 1);
    CHECK(artists_in(c, Partition::kTest).size() == 1);
    CHECK_FALSE(has_artist_leakage(c));
    CHECK(artist_disjoint_split(skeleton(10, 3), {8, 1, 1}, 5).split == c.split);
    CHECK_THROWS_AS(artist_disjoint_split(skeleton(2, 3), {8, 1, 1}, 5), Error);
  }

  TEST_CASE("random corpora never leak artists") {
    Rng rng(99);
    for (int i = 0; i < 100; ++i) {
      const int artists = 3 + static_cast<int>(uniform_index(rng, 40));
      const int tracks = 1 + static_cast<int>(uniform_index(rng, 5));
      const Corpus c = artist_disjoint_split(skeleton(artists, tracks), {8, 1, 1}, rng());
      CHECK(c.split.size() == c.tracks.size());
      CHECK_FALSE(has_artist_leakage(c));
      const auto tr = artists_in(c, Partition::kTrain), va = artists_in(c, Partition::kValid),
                 te = artists_in(c, Partition::kTest);
      CHECK_FALSE(va.empty());
      CHECK_FALSE(te.empty());
      for (const auto& a : va) CHECK((tr.count(a) + te.count(a)) == 0);
      for (const auto& a : te) CHECK(tr.count(a) == 0);
    }
  }

  TEST_CASE("leakage detection") {
    Corpus c = artist_disjoint_split(skeleton(5, 2), {3, 1, 1}, 1);
    CHECK_FALSE(has_artist_leakage(c));
    const auto& t = c.tracks[c.partition(Partition::kTest).front()];
    const auto sibling = std::find_if(c.tracks.begin(), c.tracks.end(),
                                      [&](const StemTrack& s) { return s.artist_id == t.artist_id && s.track_id != t.track_id; });
    REQUIRE(sibling != c.tracks.end());
    c.split[sibling->track_id] = Partition::kTrain;
    CHECK(has_artist_leakage(c));
    c = artist_disjoint_split(skeleton(5, 2), {3, 1, 1}, 1);
    c.split.erase(c.tracks.front().track_id);
    CHECK(has_artist_leakage(c));
  }

  TEST_CASE("stem directory ingestion") {
    TempDir empty;
    std::vector<std::string> diag;
    CHECK(load_stem_directory(empty.path, &diag).tracks.empty());
    CHECK_FALSE(diag.empty());

    TempDir dir;
    Corpus src = build_synthetic_corpus(3, 2, 1, SynthOptions{5.0});
    src.tracks.resize(2);
    write_stem_directory(src, dir.path);
    diag.clear();
    Corpus loaded = load_stem_directory(dir.path, &diag);
    REQUIRE(loaded.tracks.size() == 2);
    for (const auto& t : loaded.tracks) {
      const auto& orig = src.track(t.track_id);
      CHECK(t.artist_id == orig.artist_id);
      CHECK(t.gender == orig.gender);
      CHECK(t.vocals.samples == orig.vocals.samples);
      CHECK(loaded.split.at(t.track_id) == Partition::kTrain);
    }

    // A track with only vocals is skipped; unknown manifest fields are ignored.
    fs::create_directories(dir.path / "lonely");
    write_wav(dir.path / "lonely" / "vocals.wav", src.tracks[0].vocals);
    {
      std::ifstream in(dir.path / "manifest.json");
      auto m = nlohmann::json::parse(in);
      m["lonely"] = {{"artist_id", "z"}, {"gender", "female"}, {"label", "extra"}};
      m[src.tracks[0].track_id]["comment"] = "ignored";
      std::ofstream(dir.path / "manifest.json") << m.dump();
    }
    diag.clear();
    loaded = load_stem_directory(dir.path, &diag);
    CHECK(loaded.tracks.size() == 2);
    REQUIRE(diag.size() == 1);
    CHECK(diag[0].find("lonely") != std::string::npos);

    // Wrong sample rate and mismatched stems are per-track diagnostics.
    fs::create_directories(dir.path / "short");
    write_wav(dir.path / "short" / "vocals.wav", src.tracks[0].vocals);
    write_wav(dir.path / "short" / "accompaniment.wav", crop_samples(src.tracks[0].accompaniment, 0, 100));
    {
      std::ifstream in(dir.path / "manifest.json");
      auto m = nlohmann::json::parse(in);
      m["short"] = {{"artist_id", "y"}};
      std::ofstream(dir.path / "manifest.json") << m.dump();
    }
    diag.clear();
    loaded = load_stem_directory(dir.path, &diag);
    CHECK(loaded.tracks.size() == 2);
    CHECK(diag.size() == 2);
    CHECK_THROWS_AS(load_stem_directory(dir.path / "missing"), Error);
  }

  TEST_CASE("gender names") {
    CHECK(parse_gender(to_string(Gender::kMale)) == Gender::kMale);
    CHECK(parse_gender(to_string(Gender::kFemale)) == Gender::kFemale);
  }
}
