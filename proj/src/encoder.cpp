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

#include "vocalsim/encoder.hpp"

#include <algorithm>
#include <cmath>

namespace vocalsim {

using MatMap = Eigen::Map<Matrix>;
using ConstMatMap = Eigen::Map<const Matrix>;
using VecMap = Eigen::Map<Vector>;
using ConstVecMap = Eigen::Map<const Vector>;

void EncoderConfig::validate() const {
  if (stage_channels.empty()) throw Error("encoder", "config", "at least one stage required");
  for (int c : stage_channels)
    if (c <= 0) throw Error("encoder", "config", "stage channel counts must be positive");
  if (embed_dim <= 0 || proj_dim <= 0 || input_bands <= 0)
    throw Error("encoder", "config", "dimensions must be positive");
}

void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = {{"stage_channels", c.stage_channels},
       {"embed_dim", c.embed_dim},
       {"proj_dim", c.proj_dim},
       {"input_bands", c.input_bands}};
}

void from_json(const nlohmann::json& j, EncoderConfig& c) {
  c.stage_channels = j.at("stage_channels").get<std::vector<int>>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.proj_dim = j.at("proj_dim").get<int>();
  c.input_bands = j.value("input_bands", kMelBands);
}

ModelState ModelState::zeros(const EncoderConfig& config) {
  config.validate();
  ModelState s;
  s.config = config;
  auto add = [&](std::string name, std::vector<std::size_t> shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    s.tensors.push_back({std::move(name), std::move(shape), std::vector<double>(n, 0.0)});
  };
  std::size_t in = 1;
  for (std::size_t k = 0; k < config.stage_channels.size(); ++k) {
    const auto out = static_cast<std::size_t>(config.stage_channels[k]);
    const std::string p = "stage" + std::to_string(k);
    add(p + ".dw.weight", {in, 3, 3});
    add(p + ".dw.bias", {in});
    add(p + ".pw.weight", {out, in});
    add(p + ".pw.bias", {out});
    in = out;
  }
  const auto e = static_cast<std::size_t>(config.embed_dim);
  const auto p = static_cast<std::size_t>(config.proj_dim);
  add("head.weight", {e, in});
  add("head.bias", {e});
  add("proj.weight", {p, e});
  add("proj.bias", {p});
  add("norm.gain", {p});
  add("norm.bias", {p});
  add("bilinear", {p, p});
  return s;
}

ModelState ModelState::initialize(const EncoderConfig& config, std::uint64_t seed) {
  ModelState s = zeros(config);
  Rng rng(derive_seed(seed, "initialize"));
  auto fill = [&](std::size_t index, double bound) {
    for (double& v : s.tensors[index].data) v = bound * (2.0 * uniform_unit(rng) - 1.0);
  };
  std::size_t in = 1;
  for (std::size_t k = 0; k < config.stage_channels.size(); ++k) {
    // Kernels feeding a rectifier use the He-uniform bound sqrt(6 / fan_in).
    fill(s.dw_weight(k), std::sqrt(6.0 / 9.0));
    fill(s.pw_weight(k), std::sqrt(6.0 / static_cast<double>(in)));
    in = static_cast<std::size_t>(config.stage_channels[k]);
  }
  fill(s.head_weight(), std::sqrt(6.0 / static_cast<double>(in)));
  fill(s.proj_weight(), 1.0 / std::sqrt(static_cast<double>(config.embed_dim)));
  std::fill(s.tensors[s.norm_gain()].data.begin(), s.tensors[s.norm_gain()].data.end(), 1.0);
  auto w = s.bilinear_matrix();
  w.setIdentity();
  w *= 0.1;
  return s;
}

std::size_t ModelState::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.data.size();
  return n;
}

void ModelState::set_zero() {
  for (auto& t : tensors) std::fill(t.data.begin(), t.data.end(), 0.0);
}

void ModelState::add(const ModelState& other) {
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto& a = tensors[i].data;
    const auto& b = other.tensors.at(i).data;
    for (std::size_t k = 0; k < a.size(); ++k) a[k] += b[k];
  }
}

bool ModelState::all_finite() const {
  for (const auto& t : tensors)
    for (double v : t.data)
      if (!std::isfinite(v)) return false;
  return true;
}

const Tensor& ModelState::get(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t;
  throw Error("encoder", "get", "no tensor named " + name);
}

Eigen::Map<const Matrix> ModelState::bilinear_matrix() const {
  const auto& t = tensors[bilinear()];
  return {t.data.data(), static_cast<Eigen::Index>(t.shape[0]), static_cast<Eigen::Index>(t.shape[1])};
}

Eigen::Map<Matrix> ModelState::bilinear_matrix() {
  auto& t = tensors[bilinear()];
  return {t.data.data(), static_cast<Eigen::Index>(t.shape[0]), static_cast<Eigen::Index>(t.shape[1])};
}

std::string ModelState::hash() const {
  Fnv1a h;
  for (const auto& t : tensors) {
    h.update(t.name);
    for (auto d : t.shape) h.update_pod(static_cast<std::uint64_t>(d));
    h.update(t.data.data(), t.data.size() * sizeof(double));
  }
  return h.hex();
}

namespace {

// 3x3 depthwise convolution with zero "same" padding, per channel.
void depthwise_forward(const double* in, int channels, int h, int w, const double* kernel, const double* bias,
                       double* out) {
  for (int c = 0; c < channels; ++c) {
    const double* k = kernel + 9 * c;
    const double* src = in + static_cast<std::ptrdiff_t>(c) * h * w;
    double* dst = out + static_cast<std::ptrdiff_t>(c) * h * w;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = bias[c];
        for (int ky = -1; ky <= 1; ++ky) {
          const int yy = y + ky;
          if (yy < 0 || yy >= h) continue;
          for (int kx = -1; kx <= 1; ++kx) {
            const int xx = x + kx;
            if (xx < 0 || xx >= w) continue;
            acc += k[(ky + 1) * 3 + (kx + 1)] * src[yy * w + xx];
          }
        }
        dst[y * w + x] = acc;
      }
    }
  }
}

void depthwise_backward(const double* in, int channels, int h, int w, const double* kernel, const double* grad_out,
                        double* grad_kernel, double* grad_bias, double* grad_in) {
  for (int c = 0; c < channels; ++c) {
    const double* k = kernel + 9 * c;
    const double* src = in + static_cast<std::ptrdiff_t>(c) * h * w;
    const double* g = grad_out + static_cast<std::ptrdiff_t>(c) * h * w;
    double* gk = grad_kernel + 9 * c;
    double* gi = grad_in ? grad_in + static_cast<std::ptrdiff_t>(c) * h * w : nullptr;
    double gb = 0.0;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double go = g[y * w + x];
        gb += go;
        for (int ky = -1; ky <= 1; ++ky) {
          const int yy = y + ky;
          if (yy < 0 || yy >= h) continue;
          for (int kx = -1; kx <= 1; ++kx) {
            const int xx = x + kx;
            if (xx < 0 || xx >= w) continue;
            gk[(ky + 1) * 3 + (kx + 1)] += go * src[yy * w + xx];
            if (gi) gi[yy * w + xx] += go * k[(ky + 1) * 3 + (kx + 1)];
          }
        }
      }
    }
    grad_bias[c] += gb;
  }
}

// ReLU followed by 2x2 stride-2 average pooling; odd trailing rows/columns
// are dropped.
void relu_pool_forward(const double* in, int channels, int h, int w, double* out) {
  const int ph = h / 2, pw = w / 2;
  for (int c = 0; c < channels; ++c) {
    const double* src = in + static_cast<std::ptrdiff_t>(c) * h * w;
    double* dst = out + static_cast<std::ptrdiff_t>(c) * ph * pw;
    for (int y = 0; y < ph; ++y) {
      for (int x = 0; x < pw; ++x) {
        const double* p = src + 2 * y * w + 2 * x;
        dst[y * pw + x] = 0.25 * (std::max(p[0], 0.0) + std::max(p[1], 0.0) + std::max(p[w], 0.0) +
                                  std::max(p[w + 1], 0.0));
      }
    }
  }
}

void relu_pool_backward(const double* pre, int channels, int h, int w, const double* grad_out, double* grad_pre) {
  const int ph = h / 2, pw = w / 2;
  std::fill(grad_pre, grad_pre + static_cast<std::ptrdiff_t>(channels) * h * w, 0.0);
  for (int c = 0; c < channels; ++c) {
    const double* src = pre + static_cast<std::ptrdiff_t>(c) * h * w;
    const double* g = grad_out + static_cast<std::ptrdiff_t>(c) * ph * pw;
    double* dst = grad_pre + static_cast<std::ptrdiff_t>(c) * h * w;
    for (int y = 0; y < ph; ++y) {
      for (int x = 0; x < pw; ++x) {
        const double q = 0.25 * g[y * pw + x];
        for (int o : {0, 1, w, w + 1}) {
          const std::ptrdiff_t i = 2 * y * w + 2 * x + o;
          dst[i] = src[i] > 0.0 ? q : 0.0;
        }
      }
    }
  }
}

}  // namespace

Vector encode(const MelFrameMatrix& mel, const ModelState& state, EncodeTrace* trace) {
  const EncoderConfig& cfg = state.config;
  if (mel.values.size() != mel.frames * static_cast<std::size_t>(cfg.input_bands))
    throw Error("encoder", "encode", "spectrogram must have " + std::to_string(cfg.input_bands) + " bands");
  if (mel.frames < cfg.min_extent() || static_cast<std::size_t>(cfg.input_bands) < cfg.min_extent())
    throw Error("encoder", "encode",
                std::to_string(mel.frames) + " frames is too few for " + std::to_string(cfg.stage_channels.size()) +
                    " pooling stages (need " + std::to_string(cfg.min_extent()) + ")");

  EncodeTrace local;
  EncodeTrace& t = trace ? *trace : local;
  t.stages.assign(cfg.stage_channels.size(), {});

  int h = static_cast<int>(mel.frames), w = cfg.input_bands, c_in = 1;
  std::vector<double> x(mel.values);
  for (std::size_t s = 0; s < cfg.stage_channels.size(); ++s) {
    auto& st = t.stages[s];
    const int c_out = cfg.stage_channels[s];
    st.channels_in = c_in;
    st.channels_out = c_out;
    st.height = h;
    st.width = w;
    const std::ptrdiff_t hw = static_cast<std::ptrdiff_t>(h) * w;
    st.input = std::move(x);
    st.depthwise.resize(static_cast<std::size_t>(c_in * hw));
    depthwise_forward(st.input.data(), c_in, h, w, state.tensors[state.dw_weight(s)].data.data(),
                      state.tensors[state.dw_bias(s)].data.data(), st.depthwise.data());

    st.pointwise.resize(static_cast<std::size_t>(c_out * hw));
    ConstMatMap kernel(state.tensors[state.pw_weight(s)].data.data(), c_out, c_in);
    ConstVecMap bias(state.tensors[state.pw_bias(s)].data.data(), c_out);
    MatMap pre(st.pointwise.data(), c_out, hw);
    pre.noalias() = kernel * ConstMatMap(st.depthwise.data(), c_in, hw);
    pre.colwise() += bias;

    x.assign(static_cast<std::size_t>(c_out) * (h / 2) * (w / 2), 0.0);
    relu_pool_forward(st.pointwise.data(), c_out, h, w, x.data());
    h /= 2;
    w /= 2;
    c_in = c_out;
  }

  const std::ptrdiff_t hw = static_cast<std::ptrdiff_t>(h) * w;
  t.head_height = h;
  t.head_width = w;
  t.head_input = std::move(x);
  t.head_pre.resize(static_cast<std::size_t>(cfg.embed_dim * hw));
  MatMap pre(t.head_pre.data(), cfg.embed_dim, hw);
  pre.noalias() = ConstMatMap(state.tensors[state.head_weight()].data.data(), cfg.embed_dim, c_in) *
                  ConstMatMap(t.head_input.data(), c_in, hw);
  pre.colwise() += ConstVecMap(state.tensors[state.head_bias()].data.data(), cfg.embed_dim);
  t.embedding = pre.cwiseMax(0.0).rowwise().mean();
  return t.embedding;
}

void encode_backward(const EncodeTrace& t, const Vector& grad_embedding, const ModelState& state, ModelState& grads) {
  const EncoderConfig& cfg = state.config;
  const std::ptrdiff_t hw = static_cast<std::ptrdiff_t>(t.head_height) * t.head_width;
  const int c_last = cfg.stage_channels.back();

  ConstMatMap head_pre(t.head_pre.data(), cfg.embed_dim, hw);
  Matrix g_pre = (head_pre.array() > 0.0).cast<double>().matrix();
  g_pre.array().colwise() *= (grad_embedding / static_cast<double>(hw)).array();

  MatMap(grads.tensors[grads.head_weight()].data.data(), cfg.embed_dim, c_last).noalias() +=
      g_pre * ConstMatMap(t.head_input.data(), c_last, hw).transpose();
  VecMap(grads.tensors[grads.head_bias()].data.data(), cfg.embed_dim) += g_pre.rowwise().sum();
  Matrix g_x = ConstMatMap(state.tensors[state.head_weight()].data.data(), cfg.embed_dim, c_last).transpose() * g_pre;

  for (std::size_t s = t.stages.size(); s-- > 0;) {
    const auto& st = t.stages[s];
    const std::ptrdiff_t shw = static_cast<std::ptrdiff_t>(st.height) * st.width;
    Matrix g_pw(st.channels_out, shw);
    relu_pool_backward(st.pointwise.data(), st.channels_out, st.height, st.width, g_x.data(), g_pw.data());

    MatMap(grads.tensors[grads.pw_weight(s)].data.data(), st.channels_out, st.channels_in).noalias() +=
        g_pw * ConstMatMap(st.depthwise.data(), st.channels_in, shw).transpose();
    VecMap(grads.tensors[grads.pw_bias(s)].data.data(), st.channels_out) += g_pw.rowwise().sum();
    const Matrix g_dw =
        ConstMatMap(state.tensors[state.pw_weight(s)].data.data(), st.channels_out, st.channels_in).transpose() *
        g_pw;

    const bool need_input_grad = s > 0;
    Matrix g_in;
    if (need_input_grad) g_in.setZero(st.channels_in, shw);
    depthwise_backward(st.input.data(), st.channels_in, st.height, st.width,
                       state.tensors[state.dw_weight(s)].data.data(), g_dw.data(),
                       grads.tensors[grads.dw_weight(s)].data.data(), grads.tensors[grads.dw_bias(s)].data.data(),
                       need_input_grad ? g_in.data() : nullptr);
    if (need_input_grad) g_x = std::move(g_in);
  }
}

Vector project(const Vector& embedding, const ModelState& state, ProjectTrace* trace) {
  const EncoderConfig& cfg = state.config;
  if (embedding.size() != cfg.embed_dim)
    throw Error("encoder", "project", "embedding has " + std::to_string(embedding.size()) + " entries, expected " +
                                          std::to_string(cfg.embed_dim));
  const Vector z = ConstMatMap(state.tensors[state.proj_weight()].data.data(), cfg.proj_dim, cfg.embed_dim) *
                       embedding +
                   ConstVecMap(state.tensors[state.proj_bias()].data.data(), cfg.proj_dim);
  const double mean = z.mean();
  const double var = (z.array() - mean).square().mean();
  const double inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
  const Vector normalized = (z.array() - mean) * inv_std;
  const Vector out = (normalized.array() * ConstVecMap(state.tensors[state.norm_gain()].data.data(), cfg.proj_dim).array() +
                      ConstVecMap(state.tensors[state.norm_bias()].data.data(), cfg.proj_dim).array())
                         .tanh();
  if (trace) {
    trace->input = embedding;
    trace->normalized = normalized;
    trace->inv_std = inv_std;
    trace->output = out;
  }
  return out;
}

Vector project_backward(const ProjectTrace& t, const Vector& grad_output, const ModelState& state, ModelState& grads) {
  const EncoderConfig& cfg = state.config;
  const Vector g_n = grad_output.array() * (1.0 - t.output.array().square());
  VecMap(grads.tensors[grads.norm_gain()].data.data(), cfg.proj_dim) += g_n.cwiseProduct(t.normalized);
  VecMap(grads.tensors[grads.norm_bias()].data.data(), cfg.proj_dim) += g_n;
  const Vector g_hat = g_n.cwiseProduct(ConstVecMap(state.tensors[state.norm_gain()].data.data(), cfg.proj_dim));
  const double mean_g = g_hat.mean();
  const double mean_gx = g_hat.cwiseProduct(t.normalized).mean();
  const Vector g_z = t.inv_std * (g_hat.array() - mean_g - t.normalized.array() * mean_gx).matrix();
  MatMap(grads.tensors[grads.proj_weight()].data.data(), cfg.proj_dim, cfg.embed_dim).noalias() +=
      g_z * t.input.transpose();
  VecMap(grads.tensors[grads.proj_bias()].data.data(), cfg.proj_dim) += g_z;
  return ConstMatMap(state.tensors[state.proj_weight()].data.data(), cfg.proj_dim, cfg.embed_dim).transpose() * g_z;
}

double bilinear_similarity(const Vector& y, const Vector& y_hat, Eigen::Ref<const Matrix> w) {
  if (w.rows() != y.size() || w.cols() != y_hat.size())
    throw Error("encoder", "bilinear_similarity",
                "dimension mismatch: y " + std::to_string(y.size()) + ", W " + std::to_string(w.rows()) + "x" +
                    std::to_string(w.cols()) + ", y_hat " + std::to_string(y_hat.size()));
  return y.dot(w * y_hat);
}

}  // namespace vocalsim
