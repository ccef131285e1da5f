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

#ifndef VOCALSIM_ENCODER_HPP_
#define VOCALSIM_ENCODER_HPP_

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "vocalsim/audio.hpp"

namespace vocalsim {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Shape of the spectrogram encoder: a stack of depthwise-separable stages
/// (3x3 depthwise, 1x1 pointwise, ReLU, 2x2 average pool), a 1x1 head
/// convolution to embed_dim channels, and global average pooling.
struct EncoderConfig {
  std::vector<int> stage_channels{16, 32, 64};
  int embed_dim = 128;
  int proj_dim = 512;
  int input_bands = kMelBands;

  void validate() const;
  /// Smallest time/frequency extent the pooling stack accepts.
  std::size_t min_extent() const { return std::size_t{1} << stage_channels.size(); }
};

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);

struct Tensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> data;
};

/// All trainable parameters. Tensor order is fixed by the config:
///   per stage s: stage<s>.dw.weight [C_in,3,3], stage<s>.dw.bias [C_in],
///                stage<s>.pw.weight [C_out,C_in], stage<s>.pw.bias [C_out]
///   head.weight [E,C_last], head.bias [E]
///   proj.weight [P,E], proj.bias [P], norm.gain [P], norm.bias [P]
///   bilinear [P,P]
struct ModelState {
  EncoderConfig config;
  std::vector<Tensor> tensors;

  /// Zero-filled state with the layout of `config`.
  static ModelState zeros(const EncoderConfig& config);
  /// Fan-in scaled uniform kernels, zero biases, unit gain, W = 0.1 I.
  static ModelState initialize(const EncoderConfig& config, std::uint64_t seed);

  std::size_t parameter_count() const;
  void set_zero();
  void add(const ModelState& other);
  bool all_finite() const;

  const Tensor& get(const std::string& name) const;

  // Layout indices.
  std::size_t dw_weight(std::size_t stage) const { return 4 * stage; }
  std::size_t dw_bias(std::size_t stage) const { return 4 * stage + 1; }
  std::size_t pw_weight(std::size_t stage) const { return 4 * stage + 2; }
  std::size_t pw_bias(std::size_t stage) const { return 4 * stage + 3; }
  std::size_t head_weight() const { return 4 * config.stage_channels.size(); }
  std::size_t head_bias() const { return head_weight() + 1; }
  std::size_t proj_weight() const { return head_weight() + 2; }
  std::size_t proj_bias() const { return head_weight() + 3; }
  std::size_t norm_gain() const { return head_weight() + 4; }
  std::size_t norm_bias() const { return head_weight() + 5; }
  std::size_t bilinear() const { return head_weight() + 6; }

  Eigen::Map<const Matrix> bilinear_matrix() const;
  Eigen::Map<Matrix> bilinear_matrix();

  /// Hash of names, shapes and parameter bits.
  std::string hash() const;
};

inline constexpr double kLayerNormEps = 1e-9;

/// Activations kept by the forward pass for backpropagation.
struct EncodeTrace {
  struct Stage {
    int channels_in = 0, channels_out = 0, height = 0, width = 0;
    std::vector<double> input;     // C_in x H x W
    std::vector<double> depthwise; // C_in x H x W
    std::vector<double> pointwise; // C_out x H x W, pre-activation
  };
  std::vector<Stage> stages;
  int head_height = 0, head_width = 0;
  std::vector<double> head_input;  // C_last x h x w
  std::vector<double> head_pre;    // E x h x w, pre-activation
  Vector embedding;
};

struct ProjectTrace {
  Vector input;
  Vector normalized;  // layer-norm output before gain/bias
  double inv_std = 0.0;
  Vector output;      // tanh output
};

/// Pre-projection embedding (embed_dim). Throws if the spectrogram has the
/// wrong band count or too few frames for the pooling depth.
Vector encode(const MelFrameMatrix& mel, const ModelState& state, EncodeTrace* trace = nullptr);

/// Accumulates parameter gradients of a scalar loss into `grads` given
/// dLoss/dEmbedding.
void encode_backward(const EncodeTrace& trace, const Vector& grad_embedding, const ModelState& state,
                     ModelState& grads);

/// tanh(layernorm(linear(e))), entries strictly inside (-1, 1).
Vector project(const Vector& embedding, const ModelState& state, ProjectTrace* trace = nullptr);

/// Accumulates projection-head gradients; returns dLoss/dEmbedding.
Vector project_backward(const ProjectTrace& trace, const Vector& grad_output, const ModelState& state,
                        ModelState& grads);

/// y^T W y_hat.
double bilinear_similarity(const Vector& y, const Vector& y_hat, Eigen::Ref<const Matrix> w);

}  // namespace vocalsim

#endif  // VOCALSIM_ENCODER_HPP_
