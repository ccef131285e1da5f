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

#ifndef VOCALSIM_TRAINING_HPP_
#define VOCALSIM_TRAINING_HPP_

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <vector>

#include "json.hpp"
#include "vocalsim/corpus.hpp"
#include "vocalsim/encoder.hpp"
#include "vocalsim/samplers.hpp"

namespace vocalsim {

/// Anchors and positives after the log-mel frontend.
struct ContrastiveBatch {
  std::vector<MelFrameMatrix> anchors;
  std::vector<MelFrameMatrix> positives;
  std::vector<AnchorKind> anchor_kinds;

  std::size_t size() const { return anchors.size(); }
};

ContrastiveBatch to_batch(const std::vector<ContrastivePair>& pairs);

struct TrainConfig {
  std::size_t total_steps = 2000;        // full scale: 8000
  std::size_t minibatches_per_step = 4;  // full scale: 64
  std::size_t batch_size = 32;           // full scale: 128
  double lr_init = 1e-3;
  std::size_t lr_halve_window = 250;     // full scale: 1000
  std::size_t val_check_interval = 10;
  std::size_t running_average_checks = 10;
  std::size_t val_pairs = 512;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  EncoderConfig encoder;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct LossResult {
  double loss = 0.0;
  Matrix grad_anchors;    // B x P
  Matrix grad_positives;  // B x P
  Matrix grad_w;          // P x P
};

/// Batch-mean InfoNCE over bilinear logits L[i][j] = a_i^T W p_j:
///   loss = -(1/B) sum_i log softmax_j(L[i][.])[i]
/// evaluated with row-max subtraction.
LossResult contrastive_loss(const Matrix& anchor_projections, const Matrix& positive_projections,
                            Eigen::Ref<const Matrix> w);

/// Same objective from a precomputed B x B logit matrix; optionally returns
/// dLoss/dLogits.
double contrastive_loss_from_logits(const Matrix& logits, Matrix* grad_logits = nullptr);

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t t = 0;

  static AdamState zeros_like(const ModelState& state);
};

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam update of every tensor in `state`.
void optimizer_step(ModelState& state, const ModelState& grads, AdamState& adam, double lr,
                    const AdamHyper& hyper = {});

/// Halves the learning rate when the running average of validation losses
/// has not improved for `window` steps, then restarts the patience clock.
class PlateauSchedule {
 public:
  PlateauSchedule() = default;
  PlateauSchedule(std::size_t window, std::size_t average_over) : window_(window), average_over_(average_over) {}

  /// Records the validation loss measured after `step` and returns the
  /// learning rate to use from now on.
  double update(std::size_t step, double val_loss, double current_lr);
  void reset();

  std::size_t halvings() const { return halvings_; }

  nlohmann::json to_json() const;
  static PlateauSchedule from_json(const nlohmann::json& j);

 private:
  std::size_t window_ = 1000;
  std::size_t average_over_ = 10;
  std::deque<double> recent_;
  bool has_best_ = false;
  double best_ = 0.0;
  std::size_t clock_start_ = 0;
  std::size_t halvings_ = 0;
};

/// Everything needed to resume optimization.
struct TrainingState {
  ModelState model;
  AdamState adam;
  PlateauSchedule schedule;
  std::size_t step = 0;  // steps completed
  double lr = 1e-3;
  bool finetune_stage = false;
};

struct LossCurveRow {
  std::size_t step = 0;  // steps completed when measured
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  TrainingState final_state;
  ModelState best_model;
  double best_val_loss = 0.0;
  std::vector<LossCurveRow> curve;
  /// Per step: {real anchors, artificial anchors}.
  std::vector<std::array<std::size_t, 2>> anchor_counts;
};

/// Optional observer invoked after each step (used by the CLI for progress).
using StepCallback = std::function<void(std::size_t step, double minibatch_loss)>;

/// Trains from a fresh initialization for config.total_steps steps. A
/// kCvsmAF sampler switches to real pairs (and a real-pair validation set)
/// at stage_switch_step().
TrainResult pretrain(const TrainConfig& config, const SamplerConfig& sampler, const Corpus& corpus,
                     const StepCallback& on_step = {});

/// Continues `checkpoint` up to config.total_steps with real mixture/vocal
/// pairs only; Adam moments, learning rate and the global step counter carry
/// over.
TrainResult finetune_in_domain(const TrainingState& checkpoint, const TrainConfig& config,
                               const SamplerConfig& sampler, const Corpus& corpus,
                               const StepCallback& on_step = {});

/// Forward + backward over one batch: returns the loss and accumulates
/// gradients of every parameter into `grads` (which must be zeroed by the
/// caller). Results do not depend on the worker count.
double batch_gradient(const ContrastiveBatch& batch, const ModelState& state, ModelState* grads);

}  // namespace vocalsim

#endif  // VOCALSIM_TRAINING_HPP_
