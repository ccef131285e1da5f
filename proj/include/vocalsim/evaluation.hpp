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

#ifndef VOCALSIM_EVALUATION_HPP_
#define VOCALSIM_EVALUATION_HPP_

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "vocalsim/corpus.hpp"
#include "vocalsim/encoder.hpp"

namespace vocalsim {

enum class InputMode { kMixture, kVocals };

std::string_view to_string(InputMode m);
InputMode parse_input_mode(std::string_view s);

struct EvalConfig {
  InputMode input_mode = InputMode::kVocals;
  std::size_t n_artists = 10;  // full scale: 50
  std::size_t repetitions = 5;
  std::size_t eer_trials = 5000;
  std::size_t mnr_batch = 50;
  std::size_t mnr_trials = 100;
  double probe_lr = 5e-4;
  std::size_t probe_max_epochs = 200;
  std::size_t probe_patience = 6;
  std::size_t probe_batch = 8;
  std::size_t gender_folds = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const EvalConfig& c);
void from_json(const nlohmann::json& j, EvalConfig& c);

struct ClipEmbedding {
  std::string track_id;
  std::string artist_id;
  Gender gender = Gender::kUnknown;
  std::vector<Vector> excerpt_embeddings;  // pre-projection, one per active excerpt
  Vector mean_embedding;                   // unit norm
};

/// Mean of the excerpt embeddings, L2-normalized.
Vector normalized_mean(std::span<const Vector> excerpts);

/// Embeds every non-overlapping 1 s excerpt whose vocal stem passes the
/// activity gate. Returns nullopt (with a diagnostic) when none does.
std::optional<ClipEmbedding> embed_clip(const StemTrack& track, const ModelState& model, InputMode mode,
                                        std::string* diagnostic = nullptr);

/// embed_clip over `indices` in parallel; excluded clips are reported.
std::vector<ClipEmbedding> embed_clips(const Corpus& corpus, std::span<const std::size_t> indices,
                                       const ModelState& model, InputMode mode,
                                       std::vector<std::string>* diagnostics = nullptr);

/// Mean of probability vectors, then argmax (lowest index wins ties).
int aggregate_predictions(std::span<const Vector> probabilities);

/// Stops once `patience` epochs pass without a strict improvement.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience) : patience_(patience) {}

  /// Records the metric of the next epoch; true if it is a new best. On a
  /// tie, a strictly lower `tiebreak_loss` also counts as progress, so a
  /// saturated metric does not end training while the loss still falls.
  bool observe(double metric, double tiebreak_loss = std::numeric_limits<double>::quiet_NaN());
  bool should_stop() const { return epoch_ - best_epoch_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }
  std::size_t epoch() const { return epoch_; }
  double best() const { return best_; }

 private:
  std::size_t patience_;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
  double best_ = 0.0;
  double best_loss_ = std::numeric_limits<double>::quiet_NaN();
  bool has_best_ = false;
};

/// Softmax linear classifier over standardized excerpt embeddings.
struct ProbeModel {
  Matrix weight;  // classes x dim
  Vector bias;
  Vector feature_mean;
  Vector feature_scale;
  std::size_t epochs_trained = 0;
  double best_valid_accuracy = 0.0;

  std::size_t classes() const { return static_cast<std::size_t>(weight.rows()); }
  Vector probabilities(const Vector& embedding) const;
  /// Clip-wise label from the first `max_excerpts` excerpts (0 = all).
  int predict(const ClipEmbedding& clip, std::size_t max_excerpts = 0) const;
  bool all_finite() const;
};

/// A labeled view onto a set of clips.
struct LabeledClips {
  std::vector<const ClipEmbedding*> clips;
  std::vector<int> labels;

  std::size_t size() const { return clips.size(); }
  void add(const ClipEmbedding& clip, int label) {
    clips.push_back(&clip);
    labels.push_back(label);
  }
};

ProbeModel train_probe(const LabeledClips& train, const LabeledClips& valid, std::size_t n_classes,
                       const EvalConfig& config, std::uint64_t seed);

double clip_accuracy(const ProbeModel& probe, const LabeledClips& clips, std::size_t max_excerpts = 0);

struct Scores {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
};

/// Macro-F1 averages over the classes present in `labels`.
Scores accuracy_and_macro_f1(std::span<const int> predictions, std::span<const int> labels);

/// Threshold sweep: FAR(t) = share of negatives >= t, FRR(t) = share of
/// positives < t; the crossing is linearly interpolated.
double eer(std::span<const double> positive_similarities, std::span<const double> negative_similarities);

/// (r - 1) / (N - 1), r = 1 + number of distractors strictly more similar.
double normalized_rank(double positive_similarity, std::span<const double> distractor_similarities);

/// Mean normalized rank over `trials` random query/positive/distractor sets of
/// size `batch` (cosine similarity of mean embeddings).
double mnr(std::span<const ClipEmbedding> clips, std::size_t batch, std::size_t trials, Rng& rng);

/// Same-artist and different-artist cosine similarities, up to `trials` each,
/// sampled without replacement.
std::pair<std::vector<double>, std::vector<double>> sample_verification_pairs(
    std::span<const ClipEmbedding> clips, std::size_t trials, Rng& rng);

struct ClusterMetrics {
  double silhouette = 0.0;
  double intra_inter_ratio = 0.0;
};

/// Cosine distance; per-point values averaged per cluster, then over clusters.
ClusterMetrics cluster_metrics(std::span<const Vector> embeddings, std::span<const int> labels);

struct MetricRow {
  std::string metric;
  double param = 0.0;  // clip length, data fraction, ... (0 when unused)
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> samples;
};

struct MetricReport {
  std::string protocol;
  nlohmann::json config = nlohmann::json::object();
  std::string config_hash;
  std::string corpus_hash;
  std::string checkpoint_hash;
  std::vector<MetricRow> rows;
  std::vector<std::string> warnings;

  void add(std::string metric, std::vector<double> samples, double param = 0.0);
  const MetricRow& row(std::string_view metric, double param = 0.0) const;

  nlohmann::json to_json() const;
  std::string to_csv() const;
  /// Hash over the serialized JSON.
  std::string hash() const;
};

/// Population mean and standard deviation.
std::pair<double, double> mean_std(std::span<const double> values);

/// Gender probe with artist-stratified folds.
MetricReport run_gender_eval(std::span<const ClipEmbedding> clips, const EvalConfig& config);

/// One repetition of the artist-identification protocol.
struct ArtistRun {
  std::vector<const ClipEmbedding*> clips;  // clips of the sampled artists
  std::vector<int> labels;                  // artist index per clip
  std::vector<std::size_t> train, valid, test;
  std::uint64_t probe_seed = 0;
  ProbeModel probe;
};

/// Samples artists and splits their clips 8:1:1 at random; every artist keeps
/// at least one training clip. Probes are not trained yet.
std::vector<ArtistRun> plan_artist_runs(std::span<const ClipEmbedding> clips, const EvalConfig& config);

/// Trains the probe of `run` on a subset of its train/valid clips.
void fit_artist_probe(ArtistRun& run, const EvalConfig& config,
                      std::span<const std::size_t> train, std::span<const std::size_t> valid);

MetricReport run_artist_eval(std::span<const ClipEmbedding> clips, const EvalConfig& config,
                             std::vector<ArtistRun>* runs = nullptr);

/// Clip accuracy when only the first L active excerpts of each test clip are
/// used, for every L in `lengths` (seconds).
MetricReport sweep_clip_length(std::span<const ClipEmbedding> clips, const EvalConfig& config,
                               std::span<const std::size_t> lengths);

/// Class-stratified subsample of `indices` keeping `fraction` of each class
/// (at least one per class), in the original order.
std::vector<std::size_t> stratified_subset(std::span<const std::size_t> indices, std::span<const int> labels,
                                           double fraction, Rng& rng);

/// Probe retrained on a fraction of the train and valid clips.
MetricReport sweep_low_resource(std::span<const ClipEmbedding> clips, const EvalConfig& config,
                                std::span<const double> fractions);

/// Cluster metrics of clip mean embeddings grouped by artist.
MetricReport run_cluster_eval(std::span<const ClipEmbedding> clips);

/// EER and MNR over the clips of M sampled artists, repeated.
MetricReport run_similarity_eval(std::span<const ClipEmbedding> clips, const EvalConfig& config);

}  // namespace vocalsim

#endif  // VOCALSIM_EVALUATION_HPP_
