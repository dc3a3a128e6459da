// src/recognizer.cc
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "scriptine/recognizer.h"

#include <cmath>

#include "scriptine/error.h"
#include "scriptine/log.h"

namespace scriptine {

LogitMatrix forward(const ModelParams& params, const LineImage& img, bool train_mode, RngStream& rng) {
  const auto arch = architecture_of(params);
  const auto& tensors = train_mode ? params.tensors : params.ema;
  return network_forward<float>(arch, tensors, img.pixels, train_mode, train_mode ? &rng : nullptr, nullptr)
      .cast<double>();
}

Prediction recognize(const ModelParams& params, const LineImage& img) {
  RngStream unused(0);
  const auto arch = architecture_of(params);
  auto pred = greedy_decode(forward(params, pad_to_frames(img, arch), false, unused), params.codec);
  pred.line_ref = img.source.key();
  return pred;
}

template <typename Real>
double loss_and_gradient(const Architecture& arch, const TensorSet<Real>& params, const GrayImage& image,
                         std::span<const int> label, bool train, RngStream* rng, TensorSet<Real>* grads) {
  ForwardTrace<Real> trace;
  const Mat<Real> logits = network_forward<Real>(arch, params, image, train, rng, grads ? &trace : nullptr);
  const auto ctc = ctc_loss(logits.template cast<double>(), label);
  if (grads) network_backward<Real>(arch, params, trace, ctc.grad.template cast<Real>(), *grads);
  return ctc.loss;
}

template double loss_and_gradient(const Architecture&, const TensorSet<float>&, const GrayImage&,
                                  std::span<const int>, bool, RngStream*, TensorSet<float>*);
template double loss_and_gradient(const Architecture&, const TensorSet<double>&, const GrayImage&,
                                  std::span<const int>, bool, RngStream*, TensorSet<double>*);

OptimizerState OptimizerState::for_params(const ModelParams& params) {
  OptimizerState st;
  st.m = zeros_like(params.tensors);
  st.v = zeros_like(params.tensors);
  return st;
}

StepResult train_step(ModelParams& params, OptimizerState& opt, std::span<const LineSample> batch, RngStream& rng,
                      const AdamConfig& config) {
  if (batch.empty()) throw InputError("train_step needs a nonempty batch");
  const auto arch = architecture_of(params);
  auto grads = zeros_like(params.tensors);
  StepResult result;
  double loss_sum = 0.0;
  for (const auto& sample : batch) {
    const auto label = params.codec.encode(sample.text);
    if (sample.image.width() < arch.width_divisor || !ctc_feasible(arch.frames(sample.image.width()), label)) {
      ++result.skipped;
      continue;
    }
    loss_sum += loss_and_gradient<float>(arch, params.tensors, sample.image.pixels, label, true, &rng, &grads);
    ++result.used;
  }
  params.meta.samples_seen += static_cast<long>(batch.size());
  if (result.skipped > 0) SCRIPTINE_DEBUG("train_step skipped " << result.skipped << " infeasible samples");
  if (result.used == 0) return result;
  result.mean_loss = loss_sum / result.used;

  ++opt.step;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(opt.step));
  const float decay = static_cast<float>(1.0 - config.learning_rate * config.weight_decay);
  const float inv_used = 1.0f / static_cast<float>(result.used);
  const auto b1 = static_cast<float>(config.beta1), b2 = static_cast<float>(config.beta2);
  const float ema = static_cast<float>(config.ema_decay);
  for (auto& [name, tensor] : params.tensors) {
    auto& g = grads.at(name).data;
    auto& m = opt.m.at(name).data;
    auto& v = opt.v.at(name).data;
    auto& shadow = params.ema.at(name).data;
    for (std::size_t i = 0; i < tensor.data.size(); ++i) {
      const float gi = g[i] * inv_used;
      m[i] = b1 * m[i] + (1.0f - b1) * gi;
      v[i] = b2 * v[i] + (1.0f - b2) * gi * gi;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      float theta = tensor.data[i] * decay;
      theta -= static_cast<float>(config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon));
      tensor.data[i] = theta;
      shadow[i] = ema * shadow[i] + (1.0f - ema) * theta;
    }
  }
  return result;
}

LineImage pad_to_frames(const LineImage& img, const Architecture& arch, int min_frames) {
  const int needed = min_frames * arch.width_divisor;
  if (img.width() >= needed) return img;
  LineImage out;
  out.source = img.source;
  out.pixels = GrayImage(img.height(), needed, 1.0f);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) out.pixels.at(y, x) = img.pixels.at(y, x);
  }
  return out;
}

}  // namespace scriptine
