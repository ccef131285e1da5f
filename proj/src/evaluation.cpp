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

#include "vocalsim/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

namespace vocalsim {
namespace {

using ClipRefs = std::vector<const ClipEmbedding*>;

ClipRefs refs(std::span<const ClipEmbedding> clips) {
  ClipRefs out;
  out.reserve(clips.size());
  for (const auto& c : clips) out.push_back(&c);
  return out;
}

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

// First k elements of a uniform random permutation of v.
template <typename T>
void partial_shuffle(std::vector<T>& v, std::size_t k, Rng& rng) {
  k = std::min(k, v.size());
  for (std::size_t i = 0; i < k; ++i) std::swap(v[i], v[i + uniform_index(rng, v.size() - i)]);
  v.resize(k);
}

std::string config_hash(const nlohmann::json& j) { return Fnv1a().update(j.dump()).hex(); }

MetricReport new_report(std::string protocol, const EvalConfig& config) {
  MetricReport r;
  r.protocol = std::move(protocol);
  r.config = config;
  r.config_hash = config_hash(r.config);
  return r;
}

// Probes must never see test clips.
void check_disjoint(const ClipRefs& train, const ClipRefs& valid, const ClipRefs& test, std::string_view op) {
  std::set<std::string> held;
  for (const auto* c : test) held.insert(c->track_id);
  for (const auto* list : {&train, &valid})
    for (const auto* c : *list)
      if (held.count(c->track_id))
        throw Error("evaluation", op, "clip " + c->track_id + " appears in both probe and test data");
}

double mnr_impl(const ClipRefs& clips, std::size_t batch, std::size_t trials, Rng& rng) {
  if (batch < 2) throw Error("evaluation", "mnr", "batch must be at least 2");
  if (trials == 0) throw Error("evaluation", "mnr", "trials must be positive");
  if (clips.size() < batch)
    throw Error("evaluation", "mnr", "need at least " + std::to_string(batch) + " clips, have " +
                                         std::to_string(clips.size()));
  std::map<std::string, std::vector<std::size_t>> by_artist;
  for (std::size_t i = 0; i < clips.size(); ++i) by_artist[clips[i]->artist_id].push_back(i);
  std::vector<std::size_t> queries;
  for (std::size_t i = 0; i < clips.size(); ++i)
    if (by_artist[clips[i]->artist_id].size() >= 2 && clips.size() - by_artist[clips[i]->artist_id].size() >= batch - 1)
      queries.push_back(i);
  if (queries.empty()) throw Error("evaluation", "mnr", "no artist has two clips and enough distractors");

  double total = 0.0;
  for (std::size_t k = 0; k < trials; ++k) {
    const std::size_t q = queries[uniform_index(rng, queries.size())];
    const auto& same = by_artist[clips[q]->artist_id];
    std::size_t p;
    do p = same[uniform_index(rng, same.size())];
    while (p == q);
    std::vector<std::size_t> others;
    for (std::size_t i = 0; i < clips.size(); ++i)
      if (clips[i]->artist_id != clips[q]->artist_id) others.push_back(i);
    partial_shuffle(others, batch - 1, rng);
    std::vector<double> d;
    d.reserve(others.size());
    for (auto i : others) d.push_back(clips[q]->mean_embedding.dot(clips[i]->mean_embedding));
    total += normalized_rank(clips[q]->mean_embedding.dot(clips[p]->mean_embedding), d);
  }
  return total / static_cast<double>(trials);
}

std::pair<std::vector<double>, std::vector<double>> pairs_impl(const ClipRefs& clips, std::size_t trials, Rng& rng) {
  using Pair = std::pair<std::size_t, std::size_t>;
  const std::size_t n = clips.size();
  std::vector<Pair> pos;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (clips[i]->artist_id == clips[j]->artist_id) pos.emplace_back(i, j), ++n_pos;
  const std::size_t n_neg = n * (n - 1) / 2 - n_pos;
  if (pos.empty() || n_neg == 0)
    throw Error("evaluation", "sample_verification_pairs", "need same-artist and different-artist pairs");
  partial_shuffle(pos, trials, rng);

  std::vector<Pair> neg;
  constexpr std::size_t kEnumerateLimit = 1 << 20;
  if (n_neg <= kEnumerateLimit) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (clips[i]->artist_id != clips[j]->artist_id) neg.emplace_back(i, j);
    partial_shuffle(neg, trials, rng);
  } else {
    std::set<Pair> seen;
    while (neg.size() < trials) {
      std::size_t i = uniform_index(rng, n), j = uniform_index(rng, n);
      if (i == j || clips[i]->artist_id == clips[j]->artist_id) continue;
      if (i > j) std::swap(i, j);
      if (seen.insert({i, j}).second) neg.emplace_back(i, j);
    }
  }
  auto sims = [&](const std::vector<Pair>& ps) {
    std::vector<double> out;
    for (auto [i, j] : ps) out.push_back(clips[i]->mean_embedding.dot(clips[j]->mean_embedding));
    return out;
  };
  return {sims(pos), sims(neg)};
}

Vector standardize(const ProbeModel& p, const Vector& x) { return (x - p.feature_mean).cwiseProduct(p.feature_scale); }

struct AdamBuf {
  Matrix mw, vw;
  Vector mb, vb;
  std::uint64_t t = 0;
};

}  // namespace

std::string_view to_string(InputMode m) { return m == InputMode::kMixture ? "mixture" : "vocals"; }

InputMode parse_input_mode(std::string_view s) {
  if (s == "mixture") return InputMode::kMixture;
  if (s == "vocals") return InputMode::kVocals;
  throw Error("evaluation", "parse_input_mode", "unknown input mode '" + std::string(s) + "'");
}

void EvalConfig::validate() const {
  if (n_artists < 2) throw Error("evaluation", "config", "n_artists must be at least 2");
  if (repetitions == 0 || eer_trials == 0 || mnr_trials == 0 || probe_max_epochs == 0 || probe_patience == 0 ||
      probe_batch == 0 || gender_folds < 2 || mnr_batch < 2)
    throw Error("evaluation", "config", "counts must be positive (folds and MNR batch at least 2)");
  if (!(probe_lr > 0.0)) throw Error("evaluation", "config", "probe_lr must be positive");
}

void to_json(nlohmann::json& j, const EvalConfig& c) {
  j = {{"input_mode", std::string(to_string(c.input_mode))},
       {"n_artists", c.n_artists},
       {"repetitions", c.repetitions},
       {"eer_trials", c.eer_trials},
       {"mnr_batch", c.mnr_batch},
       {"mnr_trials", c.mnr_trials},
       {"probe_lr", c.probe_lr},
       {"probe_max_epochs", c.probe_max_epochs},
       {"probe_patience", c.probe_patience},
       {"probe_batch", c.probe_batch},
       {"gender_folds", c.gender_folds},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, EvalConfig& c) {
  if (j.contains("input_mode")) c.input_mode = parse_input_mode(j.at("input_mode").get<std::string>());
  auto get = [&](const char* k, auto& v) {
    if (j.contains(k)) j.at(k).get_to(v);
  };
  get("n_artists", c.n_artists);
  get("repetitions", c.repetitions);
  get("eer_trials", c.eer_trials);
  get("mnr_batch", c.mnr_batch);
  get("mnr_trials", c.mnr_trials);
  get("probe_lr", c.probe_lr);
  get("probe_max_epochs", c.probe_max_epochs);
  get("probe_patience", c.probe_patience);
  get("probe_batch", c.probe_batch);
  get("gender_folds", c.gender_folds);
  get("seed", c.seed);
}

Vector normalized_mean(std::span<const Vector> excerpts) {
  if (excerpts.empty()) throw Error("evaluation", "normalized_mean", "no excerpts");
  Vector m = Vector::Zero(excerpts.front().size());
  for (const auto& e : excerpts) m += e;
  const double n = m.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw Error("evaluation", "normalized_mean", "mean embedding has zero norm");
  return m / n;
}

std::optional<ClipEmbedding> embed_clip(const StemTrack& track, const ModelState& model, InputMode mode,
                                        std::string* diagnostic) {
  const std::size_t len = seconds_to_samples(kExcerptSeconds);
  const auto voc = track.vocals.view();
  const auto acc = track.accompaniment.view();
  ClipEmbedding out{track.track_id, track.artist_id, track.gender, {}, {}};
  for (std::size_t start = 0; start + len <= voc.size(); start += len) {
    const auto v = voc.subspan(start, len);
    if (!is_vocal_active(v)) continue;
    if (mode == InputMode::kVocals) {
      out.excerpt_embeddings.push_back(encode(mel_spectrogram(v), model));
    } else {
      const AudioBuffer mix = sum_clamped(v, acc.subspan(start, len));
      out.excerpt_embeddings.push_back(encode(mel_spectrogram(mix), model));
    }
  }
  if (out.excerpt_embeddings.empty()) {
    if (diagnostic) *diagnostic = "embed_clip: " + track.track_id + " has no vocal-active excerpt; excluded";
    return std::nullopt;
  }
  out.mean_embedding = normalized_mean(out.excerpt_embeddings);
  return out;
}

std::vector<ClipEmbedding> embed_clips(const Corpus& corpus, std::span<const std::size_t> indices,
                                       const ModelState& model, InputMode mode,
                                       std::vector<std::string>* diagnostics) {
  std::vector<std::optional<ClipEmbedding>> slots(indices.size());
  std::vector<std::string> notes(indices.size());
  parallel_for(indices.size(), [&](std::size_t i) {
    slots[i] = embed_clip(corpus.tracks.at(indices[i]), model, mode, &notes[i]);
  });
  std::vector<ClipEmbedding> out;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i]) out.push_back(std::move(*slots[i]));
    else if (diagnostics) diagnostics->push_back(notes[i]);
  }
  return out;
}

int aggregate_predictions(std::span<const Vector> probabilities) {
  if (probabilities.empty()) throw Error("evaluation", "aggregate_predictions", "no predictions");
  Vector mean = Vector::Zero(probabilities.front().size());
  for (const auto& p : probabilities) mean += p;
  int best = 0;
  for (int k = 1; k < mean.size(); ++k)
    if (mean[k] > mean[best]) best = k;
  return best;
}

bool EarlyStopper::observe(double metric, double tiebreak_loss) {
  ++epoch_;
  if (!has_best_ || metric > best_ || (metric == best_ && tiebreak_loss < best_loss_)) {
    has_best_ = true;
    best_ = metric;
    best_loss_ = tiebreak_loss;
    best_epoch_ = epoch_;
    return true;
  }
  return false;
}

Vector ProbeModel::probabilities(const Vector& embedding) const {
  Vector z = weight * standardize(*this, embedding) + bias;
  z.array() -= z.maxCoeff();
  z = z.array().exp();
  return z / z.sum();
}

int ProbeModel::predict(const ClipEmbedding& clip, std::size_t max_excerpts) const {
  const std::size_t n =
      max_excerpts == 0 ? clip.excerpt_embeddings.size() : std::min(max_excerpts, clip.excerpt_embeddings.size());
  std::vector<Vector> probs;
  probs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) probs.push_back(probabilities(clip.excerpt_embeddings[i]));
  return aggregate_predictions(probs);
}

bool ProbeModel::all_finite() const { return weight.allFinite() && bias.allFinite(); }

double clip_accuracy(const ProbeModel& probe, const LabeledClips& clips, std::size_t max_excerpts) {
  if (clips.size() == 0) throw Error("evaluation", "clip_accuracy", "no clips");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < clips.size(); ++i) hit += probe.predict(*clips.clips[i], max_excerpts) == clips.labels[i];
  return static_cast<double>(hit) / static_cast<double>(clips.size());
}

ProbeModel train_probe(const LabeledClips& train, const LabeledClips& valid, std::size_t n_classes,
                       const EvalConfig& config, std::uint64_t seed) {
  if (train.size() == 0 || valid.size() == 0) throw Error("evaluation", "train_probe", "empty train or valid split");
  if (std::set<int>(train.labels.begin(), train.labels.end()).size() < 2)
    throw Error("evaluation", "train_probe", "train split has fewer than two classes");
  for (int l : train.labels)
    if (l < 0 || static_cast<std::size_t>(l) >= n_classes) throw Error("evaluation", "train_probe", "label out of range");

  // Flatten excerpts.
  std::vector<const Vector*> xs;
  std::vector<int> ys;
  for (std::size_t i = 0; i < train.size(); ++i)
    for (const auto& e : train.clips[i]->excerpt_embeddings) xs.push_back(&e), ys.push_back(train.labels[i]);
  const auto dim = xs.front()->size();

  ProbeModel p;
  p.feature_mean = Vector::Zero(dim);
  for (const auto* x : xs) p.feature_mean += *x;
  p.feature_mean /= static_cast<double>(xs.size());
  Vector var = Vector::Zero(dim);
  for (const auto* x : xs) var += (*x - p.feature_mean).cwiseAbs2();
  var /= static_cast<double>(xs.size());
  p.feature_scale = var.unaryExpr([](double v) { return 1.0 / std::max(std::sqrt(v), 1e-8); });
  p.weight = Matrix::Zero(static_cast<Eigen::Index>(n_classes), dim);
  p.bias = Vector::Zero(static_cast<Eigen::Index>(n_classes));

  std::vector<Vector> feats;
  feats.reserve(xs.size());
  for (const auto* x : xs) feats.push_back(standardize(p, *x));

  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  AdamBuf adam{Matrix::Zero(p.weight.rows(), dim), Matrix::Zero(p.weight.rows(), dim),
               Vector::Zero(p.bias.size()), Vector::Zero(p.bias.size()), 0};
  Rng rng(seed);
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  EarlyStopper stopper(config.probe_patience);
  ProbeModel best = p;
  Matrix gw(p.weight.rows(), dim);
  Vector gb(p.bias.size());

  while (stopper.epoch() < config.probe_max_epochs) {
    shuffle(order, rng);
    for (std::size_t s = 0; s < order.size(); s += config.probe_batch) {
      const std::size_t e = std::min(order.size(), s + config.probe_batch);
      gw.setZero();
      gb.setZero();
      for (std::size_t k = s; k < e; ++k) {
        const Vector& x = feats[order[k]];
        Vector z = p.weight * x + p.bias;
        z.array() -= z.maxCoeff();
        z = z.array().exp();
        z /= z.sum();
        z[ys[order[k]]] -= 1.0;
        gw.noalias() += z * x.transpose();
        gb += z;
      }
      const double inv = 1.0 / static_cast<double>(e - s);
      gw *= inv;
      gb *= inv;
      ++adam.t;
      const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(adam.t));
      const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(adam.t));
      adam.mw = kBeta1 * adam.mw + (1 - kBeta1) * gw;
      adam.vw = kBeta2 * adam.vw + (1 - kBeta2) * gw.cwiseAbs2();
      adam.mb = kBeta1 * adam.mb + (1 - kBeta1) * gb;
      adam.vb = kBeta2 * adam.vb + (1 - kBeta2) * gb.cwiseAbs2();
      p.weight.array() -= config.probe_lr * (adam.mw.array() / c1) / ((adam.vw.array() / c2).sqrt() + kEps);
      p.bias.array() -= config.probe_lr * (adam.mb.array() / c1) / ((adam.vb.array() / c2).sqrt() + kEps);
    }
    const double acc = clip_accuracy(p, valid);
    double loss = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < valid.size(); ++i)
      for (const auto& e : valid.clips[i]->excerpt_embeddings) {
        loss -= std::log(std::max(p.probabilities(e)[valid.labels[i]], 1e-300));
        ++n;
      }
    if (stopper.observe(acc, loss / static_cast<double>(n))) {
      best = p;
      best.best_valid_accuracy = acc;
    }
    if (stopper.should_stop()) break;
  }
  best.epochs_trained = stopper.epoch();
  if (!best.all_finite()) throw Error("evaluation", "train_probe", "probe parameters are not finite");
  return best;
}

Scores accuracy_and_macro_f1(std::span<const int> predictions, std::span<const int> labels) {
  if (labels.empty()) throw Error("evaluation", "accuracy_and_macro_f1", "empty input");
  if (predictions.size() != labels.size())
    throw Error("evaluation", "accuracy_and_macro_f1", "predictions and labels differ in length");
  std::map<int, std::array<std::size_t, 3>> tally;  // tp, fp, fn
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    tally[labels[i]];
    if (predictions[i] == labels[i]) {
      ++hit;
      ++tally[labels[i]][0];
    } else {
      ++tally[labels[i]][2];
      ++tally[predictions[i]][1];
    }
  }
  const std::set<int> present(labels.begin(), labels.end());
  double f1_sum = 0.0;
  for (int c : present) {
    const auto [tp, fp, fn] = tally[c];
    const double denom = static_cast<double>(2 * tp + fp + fn);
    f1_sum += denom > 0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
  }
  return {static_cast<double>(hit) / static_cast<double>(labels.size()), f1_sum / static_cast<double>(present.size())};
}

double eer(std::span<const double> positive_similarities, std::span<const double> negative_similarities) {
  if (positive_similarities.empty() || negative_similarities.empty())
    throw Error("evaluation", "eer", "need positive and negative similarities");
  std::vector<double> pos(positive_similarities.begin(), positive_similarities.end());
  std::vector<double> neg(negative_similarities.begin(), negative_similarities.end());
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  std::vector<double> ts(pos);
  ts.insert(ts.end(), neg.begin(), neg.end());
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  ts.push_back(std::numeric_limits<double>::infinity());

  auto far = [&](double t) {
    return static_cast<double>(neg.end() - std::lower_bound(neg.begin(), neg.end(), t)) / static_cast<double>(neg.size());
  };
  auto frr = [&](double t) {
    return static_cast<double>(std::lower_bound(pos.begin(), pos.end(), t) - pos.begin()) / static_cast<double>(pos.size());
  };
  double prev_far = far(ts[0]), prev_frr = frr(ts[0]);
  if (prev_far <= prev_frr) return prev_far;
  for (std::size_t k = 1; k < ts.size(); ++k) {
    const double fa = far(ts[k]), fr = frr(ts[k]);
    if (fa <= fr) {
      if (fa == fr) return fa;
      const double d0 = prev_far - prev_frr, d1 = fa - fr;
      const double alpha = d0 / (d0 - d1);
      return prev_far + alpha * (fa - prev_far);
    }
    prev_far = fa;
    prev_frr = fr;
  }
  return prev_far;  // unreachable: FAR(+inf) = 0 < 1 = FRR(+inf)
}

double normalized_rank(double positive_similarity, std::span<const double> distractor_similarities) {
  if (distractor_similarities.empty()) throw Error("evaluation", "normalized_rank", "no distractors");
  std::size_t above = 0;
  for (double d : distractor_similarities) above += d > positive_similarity;
  return static_cast<double>(above) / static_cast<double>(distractor_similarities.size());
}

double mnr(std::span<const ClipEmbedding> clips, std::size_t batch, std::size_t trials, Rng& rng) {
  return mnr_impl(refs(clips), batch, trials, rng);
}

std::pair<std::vector<double>, std::vector<double>> sample_verification_pairs(std::span<const ClipEmbedding> clips,
                                                                              std::size_t trials, Rng& rng) {
  return pairs_impl(refs(clips), trials, rng);
}

ClusterMetrics cluster_metrics(std::span<const Vector> embeddings, std::span<const int> labels) {
  if (embeddings.size() != labels.size()) throw Error("evaluation", "cluster_metrics", "length mismatch");
  std::map<int, std::vector<std::size_t>> clusters;
  for (std::size_t i = 0; i < labels.size(); ++i) clusters[labels[i]].push_back(i);
  if (clusters.size() < 2) throw Error("evaluation", "cluster_metrics", "need at least two clusters");
  for (const auto& [label, members] : clusters)
    if (members.size() < 2)
      throw Error("evaluation", "cluster_metrics", "cluster " + std::to_string(label) + " has fewer than two points");

  const std::size_t n = embeddings.size();
  std::vector<Vector> unit;
  for (const auto& e : embeddings) {
    const double norm = e.norm();
    if (!(norm > 0.0)) throw Error("evaluation", "cluster_metrics", "zero embedding");
    unit.push_back(e / norm);
  }
  Matrix dist(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) dist(i, j) = std::max(0.0, 1.0 - unit[i].dot(unit[j]));

  ClusterMetrics out;
  for (const auto& [label, members] : clusters) {
    double sil = 0.0, intra = 0.0, inter = 0.0;
    std::size_t n_inter = 0;
    for (auto i : members) {
      double a = 0.0;
      for (auto j : members)
        if (j != i) a += dist(i, j);
      a /= static_cast<double>(members.size() - 1);
      double b = std::numeric_limits<double>::infinity();
      for (const auto& [other, om] : clusters) {
        if (other == label) continue;
        double m = 0.0;
        for (auto j : om) m += dist(i, j);
        inter += m;
        n_inter += om.size();
        b = std::min(b, m / static_cast<double>(om.size()));
      }
      const double denom = std::max(a, b);
      sil += denom > 0.0 ? (b - a) / denom : 0.0;
      intra += a;
    }
    intra /= static_cast<double>(members.size());
    inter /= static_cast<double>(n_inter);
    if (!(inter > 0.0)) throw Error("evaluation", "cluster_metrics", "clusters coincide (zero inter-cluster distance)");
    out.silhouette += sil / static_cast<double>(members.size());
    out.intra_inter_ratio += intra / inter;
  }
  out.silhouette /= static_cast<double>(clusters.size());
  out.intra_inter_ratio /= static_cast<double>(clusters.size());
  return out;
}

std::pair<double, double> mean_std(std::span<const double> values) {
  if (values.empty()) return {0.0, 0.0};
  const double m = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double v = 0.0;
  for (double x : values) v += (x - m) * (x - m);
  return {m, std::sqrt(v / static_cast<double>(values.size()))};
}

void MetricReport::add(std::string metric, std::vector<double> samples, double param) {
  MetricRow r;
  r.metric = std::move(metric);
  r.param = param;
  std::tie(r.mean, r.stddev) = mean_std(samples);
  r.samples = std::move(samples);
  rows.push_back(std::move(r));
}

const MetricRow& MetricReport::row(std::string_view metric, double param) const {
  for (const auto& r : rows)
    if (r.metric == metric && r.param == param) return r;
  throw Error("evaluation", "report", "no row " + std::string(metric));
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json rs = nlohmann::json::array();
  for (const auto& r : rows)
    rs.push_back({{"metric", r.metric}, {"param", r.param}, {"mean", r.mean}, {"std", r.stddev}, {"samples", r.samples}});
  return {{"protocol", protocol},     {"config", config},           {"config_hash", config_hash},
          {"corpus_hash", corpus_hash}, {"checkpoint_hash", checkpoint_hash}, {"rows", rs},
          {"warnings", warnings}};
}

std::string MetricReport::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "protocol,metric,param,mean,std,n,config_hash,corpus_hash,checkpoint_hash\n";
  for (const auto& r : rows)
    out << protocol << ',' << r.metric << ',' << r.param << ',' << r.mean << ',' << r.stddev << ',' << r.samples.size()
        << ',' << config_hash << ',' << corpus_hash << ',' << checkpoint_hash << '\n';
  return out.str();
}

std::string MetricReport::hash() const { return Fnv1a().update(to_json().dump()).hex(); }

MetricReport run_gender_eval(std::span<const ClipEmbedding> clips, const EvalConfig& config) {
  config.validate();
  MetricReport report = new_report("gender", config);
  // Artists per gender, shuffled, dealt round-robin into folds.
  std::map<Gender, std::vector<std::string>> artists;
  {
    std::map<Gender, std::set<std::string>> seen;
    for (const auto& c : clips)
      if (c.gender != Gender::kUnknown) seen[c.gender].insert(c.artist_id);
    for (auto& [g, s] : seen) artists[g].assign(s.begin(), s.end());
  }
  if (artists.size() < 2) throw Error("evaluation", "run_gender_eval", "need clips of both genders");
  Rng rng(derive_seed(config.seed, "gender-folds"));
  std::size_t folds = config.gender_folds;
  for (auto& [g, list] : artists) {
    shuffle(list, rng);
    folds = std::min(folds, list.size());
  }
  if (folds < 2) throw Error("evaluation", "run_gender_eval", "need at least two artists per gender");
  if (folds < config.gender_folds)
    report.warnings.push_back("fold count reduced to " + std::to_string(folds) + " (too few artists per gender)");
  std::map<std::string, std::size_t> fold_of;
  for (const auto& [g, list] : artists)
    for (std::size_t i = 0; i < list.size(); ++i) fold_of[list[i]] = i % folds;

  std::vector<double> acc, f1;
  for (std::size_t f = 0; f < folds; ++f) {
    std::vector<std::size_t> rest;
    std::vector<int> rest_labels;
    LabeledClips test;
    for (std::size_t i = 0; i < clips.size(); ++i) {
      if (clips[i].gender == Gender::kUnknown) continue;
      const int label = clips[i].gender == Gender::kMale ? 0 : 1;
      if (fold_of.at(clips[i].artist_id) == f) test.add(clips[i], label);
      else rest.push_back(i), rest_labels.push_back(label);
    }
    // A stratified ninth of the training folds' clips monitors early stopping.
    Rng vrng(derive_seed(derive_seed(config.seed, "gender-valid"), {f}));
    std::vector<std::size_t> pos(rest.size());
    std::iota(pos.begin(), pos.end(), 0);
    const auto vpos = stratified_subset(pos, rest_labels, 1.0 / 9.0, vrng);
    std::vector<bool> is_valid(rest.size(), false);
    for (auto p : vpos) is_valid[p] = true;
    LabeledClips train, valid;
    for (std::size_t p = 0; p < rest.size(); ++p) (is_valid[p] ? valid : train).add(clips[rest[p]], rest_labels[p]);
    check_disjoint(train.clips, valid.clips, test.clips, "run_gender_eval");

    const ProbeModel probe = train_probe(train, valid, 2, config, derive_seed(derive_seed(config.seed, "gender-probe"), {f}));
    std::vector<int> pred;
    for (const auto* c : test.clips) pred.push_back(probe.predict(*c));
    const Scores s = accuracy_and_macro_f1(pred, test.labels);
    acc.push_back(s.accuracy);
    f1.push_back(s.macro_f1);
  }
  report.add("accuracy", std::move(acc));
  report.add("macro_f1", std::move(f1));
  return report;
}

std::vector<std::size_t> stratified_subset(std::span<const std::size_t> indices, std::span<const int> labels,
                                           double fraction, Rng& rng) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw Error("evaluation", "stratified_subset", "fraction must lie in (0, 1]");
  if (indices.size() != labels.size()) throw Error("evaluation", "stratified_subset", "length mismatch");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < indices.size(); ++i) by_class[labels[i]].push_back(i);
  std::vector<std::size_t> keep;
  for (auto& [label, pos] : by_class) {
    const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(pos.size()))));
    if (k < pos.size()) partial_shuffle(pos, k, rng);
    keep.insert(keep.end(), pos.begin(), pos.end());
  }
  std::sort(keep.begin(), keep.end());
  std::vector<std::size_t> out;
  for (auto p : keep) out.push_back(indices[p]);
  return out;
}

std::vector<ArtistRun> plan_artist_runs(std::span<const ClipEmbedding> clips, const EvalConfig& config) {
  config.validate();
  std::set<std::string> available;
  for (const auto& c : clips) available.insert(c.artist_id);
  if (available.size() < config.n_artists)
    throw Error("evaluation", "run_artist_eval",
                "need " + std::to_string(config.n_artists) + " artists, have " + std::to_string(available.size()));

  std::vector<ArtistRun> runs;
  for (std::size_t r = 0; r < config.repetitions; ++r) {
    Rng rng(derive_seed(derive_seed(config.seed, "artist-eval"), {r}));
    std::vector<std::string> pick(available.begin(), available.end());
    partial_shuffle(pick, config.n_artists, rng);
    std::sort(pick.begin(), pick.end());
    std::map<std::string, int> label_of;
    for (std::size_t k = 0; k < pick.size(); ++k) label_of[pick[k]] = static_cast<int>(k);

    ArtistRun run;
    run.probe_seed = derive_seed(derive_seed(config.seed, "artist-probe"), {r});
    for (const auto& c : clips)
      if (auto it = label_of.find(c.artist_id); it != label_of.end()) run.clips.push_back(&c), run.labels.push_back(it->second);
    const std::size_t n = run.clips.size();
    const std::size_t n_valid = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n))));
    const std::size_t n_test = n_valid;
    if (n < n_valid + n_test + config.n_artists)
      throw Error("evaluation", "run_artist_eval", "insufficient clips: " + std::to_string(n) + " for " +
                                                       std::to_string(config.n_artists) + " artists");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    shuffle(order, rng);
    std::vector<std::size_t> train(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_valid + n_test));
    std::vector<std::size_t> valid(order.end() - static_cast<std::ptrdiff_t>(n_valid + n_test),
                                   order.end() - static_cast<std::ptrdiff_t>(n_test));
    std::vector<std::size_t> test(order.end() - static_cast<std::ptrdiff_t>(n_test), order.end());

    // Repair: an artist without training clips trades a held-out clip for a
    // training clip of an artist that has several.
    auto count_train = [&](int label) {
      return static_cast<std::size_t>(std::count_if(train.begin(), train.end(), [&](auto i) { return run.labels[i] == label; }));
    };
    for (int label = 0; label < static_cast<int>(pick.size()); ++label) {
      if (count_train(label) > 0) continue;
      for (auto* held : {&valid, &test}) {
        auto it = std::find_if(held->begin(), held->end(), [&](auto i) { return run.labels[i] == label; });
        if (it == held->end()) continue;
        auto donor = std::find_if(train.rbegin(), train.rend(), [&](auto i) { return count_train(run.labels[i]) > 1; });
        std::swap(*it, *donor);
        break;
      }
    }
    std::sort(train.begin(), train.end());
    std::sort(valid.begin(), valid.end());
    std::sort(test.begin(), test.end());
    run.train = std::move(train);
    run.valid = std::move(valid);
    run.test = std::move(test);
    runs.push_back(std::move(run));
  }
  return runs;
}

namespace {

LabeledClips labeled(const ArtistRun& run, std::span<const std::size_t> idx) {
  LabeledClips out;
  for (auto i : idx) out.add(*run.clips[i], run.labels[i]);
  return out;
}

Scores test_scores(const ArtistRun& run, std::size_t max_excerpts = 0) {
  std::vector<int> pred, truth;
  for (auto i : run.test) {
    pred.push_back(run.probe.predict(*run.clips[i], max_excerpts));
    truth.push_back(run.labels[i]);
  }
  return accuracy_and_macro_f1(pred, truth);
}

std::size_t mnr_batch_for(const ClipRefs& clips, std::size_t requested, std::vector<std::string>& warnings) {
  std::map<std::string, std::size_t> per;
  std::size_t most = 0;
  for (const auto* c : clips) most = std::max(most, ++per[c->artist_id]);
  const std::size_t cap = std::min(clips.size(), clips.size() - most + 1);
  if (cap < requested) {
    warnings.push_back("MNR batch reduced from " + std::to_string(requested) + " to " + std::to_string(cap));
    return cap;
  }
  return requested;
}

void add_similarity_rows(MetricReport& report, const std::vector<ClipRefs>& groups, const EvalConfig& config) {
  std::vector<double> e, m;
  for (std::size_t r = 0; r < groups.size(); ++r) {
    Rng rng(derive_seed(derive_seed(config.seed, "similarity"), {r}));
    auto [pos, neg] = pairs_impl(groups[r], config.eer_trials, rng);
    e.push_back(eer(pos, neg));
    const std::size_t batch = mnr_batch_for(groups[r], config.mnr_batch, report.warnings);
    m.push_back(mnr_impl(groups[r], batch, config.mnr_trials, rng));
  }
  report.add("eer", std::move(e));
  report.add("mnr", std::move(m));
}

}  // namespace

void fit_artist_probe(ArtistRun& run, const EvalConfig& config, std::span<const std::size_t> train,
                      std::span<const std::size_t> valid) {
  const LabeledClips tr = labeled(run, train), va = labeled(run, valid), te = labeled(run, run.test);
  check_disjoint(tr.clips, va.clips, te.clips, "run_artist_eval");
  std::set<int> classes(run.labels.begin(), run.labels.end());
  run.probe = train_probe(tr, va, classes.size(), config, run.probe_seed);
}

MetricReport run_artist_eval(std::span<const ClipEmbedding> clips, const EvalConfig& config, std::vector<ArtistRun>* out) {
  MetricReport report = new_report("artist", config);
  auto runs = plan_artist_runs(clips, config);
  std::vector<double> acc, f1;
  std::vector<ClipRefs> groups;
  for (auto& run : runs) {
    fit_artist_probe(run, config, run.train, run.valid);
    const Scores s = test_scores(run);
    acc.push_back(s.accuracy);
    f1.push_back(s.macro_f1);
    groups.push_back(run.clips);
  }
  report.add("accuracy", std::move(acc));
  report.add("macro_f1", std::move(f1));
  add_similarity_rows(report, groups, config);
  if (out) *out = std::move(runs);
  return report;
}

MetricReport sweep_clip_length(std::span<const ClipEmbedding> clips, const EvalConfig& config,
                               std::span<const std::size_t> lengths) {
  MetricReport report = new_report("clip_length", config);
  auto runs = plan_artist_runs(clips, config);
  for (auto& run : runs) fit_artist_probe(run, config, run.train, run.valid);
  for (std::size_t len : lengths) {
    if (len == 0) throw Error("evaluation", "sweep_clip_length", "clip length must be positive");
    std::vector<double> acc, used;
    for (const auto& run : runs) {
      acc.push_back(test_scores(run, len).accuracy);
      double u = 0.0;
      for (auto i : run.test) u += static_cast<double>(std::min(len, run.clips[i]->excerpt_embeddings.size()));
      used.push_back(u / static_cast<double>(run.test.size()));
    }
    report.add("accuracy", std::move(acc), static_cast<double>(len));
    report.add("excerpts_per_clip", std::move(used), static_cast<double>(len));
  }
  return report;
}

MetricReport sweep_low_resource(std::span<const ClipEmbedding> clips, const EvalConfig& config,
                                std::span<const double> fractions) {
  MetricReport report = new_report("low_resource", config);
  auto runs = plan_artist_runs(clips, config);
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw Error("evaluation", "sweep_low_resource", "fractions must lie in (0, 1]");
    std::vector<double> acc, count;
    for (std::size_t r = 0; r < runs.size(); ++r) {
      auto& run = runs[r];
      std::uint64_t bits;
      std::memcpy(&bits, &f, sizeof bits);
      Rng rng(derive_seed(run.probe_seed, {bits}));
      auto subset = [&](const std::vector<std::size_t>& idx) {
        std::vector<int> lab;
        for (auto i : idx) lab.push_back(run.labels[i]);
        return stratified_subset(idx, lab, f, rng);
      };
      const auto tr = subset(run.train);
      const auto va = subset(run.valid);
      fit_artist_probe(run, config, tr, va);
      acc.push_back(test_scores(run).accuracy);
      count.push_back(static_cast<double>(tr.size() + va.size()));
    }
    report.add("accuracy", std::move(acc), f);
    report.add("probe_clips", std::move(count), f);
  }
  return report;
}

MetricReport run_cluster_eval(std::span<const ClipEmbedding> clips) {
  MetricReport report;
  report.protocol = "cluster";
  std::map<std::string, int> label_of;
  std::vector<Vector> emb;
  std::vector<int> labels;
  for (const auto& c : clips) {
    auto [it, fresh] = label_of.emplace(c.artist_id, static_cast<int>(label_of.size()));
    emb.push_back(c.mean_embedding);
    labels.push_back(it->second);
  }
  const ClusterMetrics m = cluster_metrics(emb, labels);
  report.add("silhouette", {m.silhouette});
  report.add("intra_inter_ratio", {m.intra_inter_ratio});
  report.config_hash = config_hash(report.config);
  return report;
}

MetricReport run_similarity_eval(std::span<const ClipEmbedding> clips, const EvalConfig& config) {
  MetricReport report = new_report("similarity", config);
  const auto runs = plan_artist_runs(clips, config);
  std::vector<ClipRefs> groups;
  for (const auto& run : runs) groups.push_back(run.clips);
  add_similarity_rows(report, groups, config);
  return report;
}

}  // namespace vocalsim
