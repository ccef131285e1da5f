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

#include "vocalsim/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace vocalsim {

ContrastiveBatch to_batch(const std::vector<ContrastivePair>& pairs) {
  ContrastiveBatch b;
  b.anchors.resize(pairs.size());
  b.positives.resize(pairs.size());
  b.anchor_kinds.resize(pairs.size());
  parallel_for(2 * pairs.size(), [&](std::size_t i) {
    const auto& p = pairs[i / 2];
    if (i % 2 == 0)
      b.anchors[i / 2] = mel_spectrogram(p.anchor);
    else
      b.positives[i / 2] = mel_spectrogram(p.positive);
  });
  for (std::size_t i = 0; i < pairs.size(); ++i) b.anchor_kinds[i] = pairs[i].anchor_kind;
  return b;
}

void TrainConfig::validate() const {
  if (minibatches_per_step == 0 || batch_size == 0 || val_check_interval == 0 || lr_halve_window == 0 ||
      running_average_checks == 0 || val_pairs == 0)
    throw Error("training", "config", "step, batch and window sizes must be positive");
  if (!(lr_init > 0.0)) throw Error("training", "config", "lr_init must be positive");
  if (total_steps % val_check_interval != 0)
    throw Error("training", "config",
                "val_check_interval " + std::to_string(val_check_interval) + " does not divide total_steps " +
                    std::to_string(total_steps));
  encoder.validate();
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"total_steps", c.total_steps},
       {"minibatches_per_step", c.minibatches_per_step},
       {"batch_size", c.batch_size},
       {"lr_init", c.lr_init},
       {"lr_halve_window", c.lr_halve_window},
       {"val_check_interval", c.val_check_interval},
       {"running_average_checks", c.running_average_checks},
       {"val_pairs", c.val_pairs},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"epsilon", c.epsilon},
       {"seed", c.seed},
       {"encoder", c.encoder}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.total_steps = j.value("total_steps", d.total_steps);
  c.minibatches_per_step = j.value("minibatches_per_step", d.minibatches_per_step);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.lr_init = j.value("lr_init", d.lr_init);
  c.lr_halve_window = j.value("lr_halve_window", d.lr_halve_window);
  c.val_check_interval = j.value("val_check_interval", d.val_check_interval);
  c.running_average_checks = j.value("running_average_checks", d.running_average_checks);
  c.val_pairs = j.value("val_pairs", d.val_pairs);
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  c.epsilon = j.value("epsilon", d.epsilon);
  c.seed = j.value("seed", d.seed);
  c.encoder = j.contains("encoder") ? j.at("encoder").get<EncoderConfig>() : d.encoder;
}

double contrastive_loss_from_logits(const Matrix& logits, Matrix* grad_logits) {
  const auto b = logits.rows();
  if (b < 1 || logits.cols() != b) throw Error("training", "contrastive_loss", "logits must be a non-empty B x B matrix");
  if (!logits.allFinite()) throw Error("training", "contrastive_loss", "non-finite logits");
  if (grad_logits) grad_logits->resize(b, b);
  double total = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const double row_max = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd shifted = logits.row(i).array() - row_max;
    const Eigen::RowVectorXd e = shifted.array().exp();
    const double z = e.sum();
    total += std::log(z) - shifted(i);
    if (grad_logits) {
      grad_logits->row(i) = e / z;
      (*grad_logits)(i, i) -= 1.0;
    }
  }
  const double inv_b = 1.0 / static_cast<double>(b);
  if (grad_logits) *grad_logits *= inv_b;
  return total * inv_b;
}

LossResult contrastive_loss(const Matrix& anchors, const Matrix& positives, Eigen::Ref<const Matrix> w) {
  if (anchors.rows() != positives.rows() || anchors.cols() != w.rows() || positives.cols() != w.cols())
    throw Error("training", "contrastive_loss", "projection and W dimensions disagree");
  const Matrix wp = w * positives.transpose();  // P x B
  const Matrix logits = anchors * wp;
  LossResult r;
  Matrix g;
  r.loss = contrastive_loss_from_logits(logits, &g);
  r.grad_anchors = g * wp.transpose();
  r.grad_positives = g.transpose() * (anchors * w);
  r.grad_w = anchors.transpose() * g * positives;
  return r;
}

AdamState AdamState::zeros_like(const ModelState& state) {
  AdamState a;
  for (const auto& t : state.tensors) {
    a.m.emplace_back(t.data.size(), 0.0);
    a.v.emplace_back(t.data.size(), 0.0);
  }
  return a;
}

void optimizer_step(ModelState& state, const ModelState& grads, AdamState& adam, double lr, const AdamHyper& hyper) {
  if (adam.m.size() != state.tensors.size()) adam = AdamState::zeros_like(state);
  ++adam.t;
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(adam.t));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(adam.t));
  for (std::size_t k = 0; k < state.tensors.size(); ++k) {
    auto& p = state.tensors[k].data;
    const auto& g = grads.tensors.at(k).data;
    auto& m = adam.m[k];
    auto& v = adam.v[k];
    if (g.size() != p.size()) throw Error("training", "optimizer_step", "gradient shape mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g[i];
      v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + hyper.epsilon);
    }
  }
}

double PlateauSchedule::update(std::size_t step, double val_loss, double current_lr) {
  recent_.push_back(val_loss);
  while (recent_.size() > average_over_) recent_.pop_front();
  const double avg = std::accumulate(recent_.begin(), recent_.end(), 0.0) / static_cast<double>(recent_.size());
  if (!has_best_ || avg < best_) {
    has_best_ = true;
    best_ = avg;
    clock_start_ = step;
    return current_lr;
  }
  if (step - clock_start_ >= window_) {
    clock_start_ = step;
    ++halvings_;
    return current_lr * 0.5;
  }
  return current_lr;
}

void PlateauSchedule::reset() {
  recent_.clear();
  has_best_ = false;
  best_ = 0.0;
  clock_start_ = 0;
}

nlohmann::json PlateauSchedule::to_json() const {
  return {{"window", window_},       {"average_over", average_over_}, {"recent", recent_},
          {"has_best", has_best_},   {"best", best_},                 {"clock_start", clock_start_},
          {"halvings", halvings_}};
}

PlateauSchedule PlateauSchedule::from_json(const nlohmann::json& j) {
  PlateauSchedule s(j.at("window").get<std::size_t>(), j.at("average_over").get<std::size_t>());
  for (double v : j.at("recent")) s.recent_.push_back(v);
  s.has_best_ = j.at("has_best").get<bool>();
  s.best_ = j.at("best").get<double>();
  s.clock_start_ = j.at("clock_start").get<std::size_t>();
  s.halvings_ = j.at("halvings").get<std::size_t>();
  return s;
}

namespace {

// Number of gradient accumulation chunks; fixed so the summation order, and
// hence the result, does not depend on the worker count.
constexpr std::size_t kGradientChunks = 8;

struct ExcerptForward {
  EncodeTrace encode;
  ProjectTrace project;
};

}  // namespace

double batch_gradient(const ContrastiveBatch& batch, const ModelState& state, ModelState* grads) {
  const std::size_t b = batch.size();
  if (b == 0 || batch.positives.size() != b) throw Error("training", "batch_gradient", "empty or ragged batch");
  const auto p = static_cast<Eigen::Index>(state.config.proj_dim);

  std::vector<ExcerptForward> traces(grads ? 2 * b : 0);
  Matrix anchors(static_cast<Eigen::Index>(b), p), positives(static_cast<Eigen::Index>(b), p);
  parallel_for(2 * b, [&](std::size_t i) {
    const bool is_anchor = i < b;
    const std::size_t row = is_anchor ? i : i - b;
    const MelFrameMatrix& mel = is_anchor ? batch.anchors[row] : batch.positives[row];
    EncodeTrace* et = grads ? &traces[i].encode : nullptr;
    ProjectTrace* pt = grads ? &traces[i].project : nullptr;
    const Vector y = project(encode(mel, state, et), state, pt);
    (is_anchor ? anchors : positives).row(static_cast<Eigen::Index>(row)) = y.transpose();
  });

  if (!grads) {
    const Matrix logits = anchors * state.bilinear_matrix() * positives.transpose();
    return contrastive_loss_from_logits(logits);
  }

  LossResult loss = contrastive_loss(anchors, positives, state.bilinear_matrix());
  const std::size_t n = 2 * b;
  const std::size_t chunks = std::min(kGradientChunks, n);
  std::vector<ModelState> partial(chunks);
  parallel_for(chunks, [&](std::size_t c) {
    ModelState& acc = partial[c];
    acc = ModelState::zeros(state.config);
    for (std::size_t i = c * n / chunks; i < (c + 1) * n / chunks; ++i) {
      const bool is_anchor = i < b;
      const auto row = static_cast<Eigen::Index>(is_anchor ? i : i - b);
      const Vector g_y = (is_anchor ? loss.grad_anchors : loss.grad_positives).row(row).transpose();
      const Vector g_e = project_backward(traces[i].project, g_y, state, acc);
      encode_backward(traces[i].encode, g_e, state, acc);
    }
  });
  for (const auto& part : partial) grads->add(part);
  grads->bilinear_matrix() += loss.grad_w;
  return loss.loss;
}

namespace {

class Trainer {
 public:
  Trainer(const TrainConfig& config, const SamplerConfig& sampler, const Corpus& corpus)
      : config_(config), sampler_(sampler), train_(corpus, Partition::kTrain), valid_(corpus, Partition::kValid) {
    config_.validate();
    sampler_.validate();
    if (train_.tracks().empty()) throw Error("training", "pretrain", "corpus has no train partition");
    if (valid_.tracks().empty()) throw Error("training", "pretrain", "corpus has no valid partition");
  }

  TrainResult run(TrainingState state, const StepCallback& on_step) {
    TrainResult result;
    const std::size_t switch_step = sampler_.strategy == Strategy::kCvsmAF
                                        ? stage_switch_step(sampler_.stage_switch_fraction, config_.total_steps)
                                        : std::numeric_limits<std::size_t>::max();
    if (state.finetune_stage) {
      build_validation(/*finetune=*/true);
    } else if (state.step >= switch_step) {
      enter_finetune(state);
    } else {
      build_validation(/*finetune=*/false);
    }
    result.best_model = state.model;
    result.best_val_loss = std::numeric_limits<double>::infinity();

    const AdamHyper hyper{config_.beta1, config_.beta2, config_.epsilon};
    double interval_loss = 0.0;
    std::size_t interval_count = 0;
    ModelState grads = ModelState::zeros(state.model.config);
    for (std::size_t s = state.step; s < config_.total_steps; ++s) {
      if (s == switch_step && !state.finetune_stage) {
        enter_finetune(state);
        result.best_val_loss = std::numeric_limits<double>::infinity();
      }
      SamplerConfig step_sampler = sampler_;
      if (state.finetune_stage) step_sampler.strategy = Strategy::kMscol;

      std::array<std::size_t, 2> kinds{0, 0};
      for (std::size_t mb = 0; mb < config_.minibatches_per_step; ++mb) {
        const auto pairs = sample_batch(step_sampler, train_, config_.batch_size, s, config_.total_steps, mb);
        const ContrastiveBatch batch = to_batch(pairs);
        for (auto k : batch.anchor_kinds) ++kinds[k == AnchorKind::kArtificial ? 1 : 0];
        grads.set_zero();
        const double loss = batch_gradient(batch, state.model, &grads);
        optimizer_step(state.model, grads, state.adam, state.lr, hyper);
        interval_loss += loss;
        ++interval_count;
        if (on_step) on_step(s, loss);
      }
      result.anchor_counts.push_back(kinds);
      state.step = s + 1;

      if (state.step % config_.val_check_interval == 0) {
        const double val = validation_loss(state.model);
        state.lr = state.schedule.update(state.step, val, state.lr);
        result.curve.push_back({state.step, interval_loss / static_cast<double>(interval_count), val, state.lr});
        interval_loss = 0.0;
        interval_count = 0;
        if (val < result.best_val_loss) {
          result.best_val_loss = val;
          result.best_model = state.model;
        }
      }
    }
    if (!state.model.all_finite()) throw Error("training", "pretrain", "parameters diverged to non-finite values");
    result.final_state = std::move(state);
    return result;
  }

 private:
  void enter_finetune(TrainingState& state) {
    state.finetune_stage = true;
    state.schedule.reset();
    build_validation(/*finetune=*/true);
  }

  void build_validation(bool finetune) {
    SamplerConfig v = sampler_;
    v.strategy = finetune ? Strategy::kMscol : strategy_at(sampler_, 0, config_.total_steps);
    v.rng_seed = derive_seed(sampler_.rng_seed, finetune ? "validation-finetune" : "validation");
    validation_.clear();
    for (std::size_t start = 0; start < config_.val_pairs; start += config_.batch_size) {
      const std::size_t n = std::min(config_.batch_size, config_.val_pairs - start);
      validation_.push_back(to_batch(sample_batch(v, valid_, n, 0, config_.total_steps, start / config_.batch_size)));
    }
  }

  double validation_loss(const ModelState& model) const {
    double acc = 0.0;
    for (const auto& b : validation_) acc += batch_gradient(b, model, nullptr);
    return acc / static_cast<double>(validation_.size());
  }

  TrainConfig config_;
  SamplerConfig sampler_;
  SamplingPool train_;
  SamplingPool valid_;
  std::vector<ContrastiveBatch> validation_;
};

}  // namespace

TrainResult pretrain(const TrainConfig& config, const SamplerConfig& sampler, const Corpus& corpus,
                     const StepCallback& on_step) {
  Trainer trainer(config, sampler, corpus);
  TrainingState state;
  state.model = ModelState::initialize(config.encoder, config.seed);
  state.adam = AdamState::zeros_like(state.model);
  state.schedule = PlateauSchedule(config.lr_halve_window, config.running_average_checks);
  state.lr = config.lr_init;
  return trainer.run(std::move(state), on_step);
}

TrainResult finetune_in_domain(const TrainingState& checkpoint, const TrainConfig& config,
                               const SamplerConfig& sampler, const Corpus& corpus, const StepCallback& on_step) {
  const auto& have = checkpoint.model.config;
  const auto& want = config.encoder;
  if (have.stage_channels != want.stage_channels || have.embed_dim != want.embed_dim ||
      have.proj_dim != want.proj_dim || have.input_bands != want.input_bands)
    throw Error("training", "finetune_in_domain", "checkpoint encoder dimensions differ from the config");
  if (checkpoint.step > config.total_steps)
    throw Error("training", "finetune_in_domain", "checkpoint is already past total_steps");
  SamplerConfig real = sampler;
  real.strategy = Strategy::kMscol;
  Trainer trainer(config, real, corpus);
  TrainingState state = checkpoint;
  if (!state.finetune_stage) {
    state.finetune_stage = true;
    state.schedule.reset();
  }
  return trainer.run(std::move(state), on_step);
}

}  // namespace vocalsim
