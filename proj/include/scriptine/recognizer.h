// include/scriptine/recognizer.h
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

#pragma once

#include <span>
#include <string>

#include "scriptine/ctc.h"
#include "scriptine/image.h"
#include "scriptine/model.h"
#include "scriptine/rng.h"

namespace scriptine {

// A preprocessed line image with its ground truth.
struct LineSample {
  LineImage image;
  std::u32string text;
};

// Train mode runs the raw tensors with dropout drawn from `rng`; eval mode
// runs the EMA tensors and is deterministic.
LogitMatrix forward(const ModelParams& params, const LineImage& img, bool train_mode, RngStream& rng);

// Eval-mode forward followed by greedy decoding.
Prediction recognize(const ModelParams& params, const LineImage& img);

// CTC loss of one line; when `grads` is non-null the parameter gradient is
// accumulated into it. Works in float for training and double for gradient
// checks.
template <typename Real>
double loss_and_gradient(const Architecture& arch, const TensorSet<Real>& params, const GrayImage& image,
                         std::span<const int> label, bool train, RngStream* rng, TensorSet<Real>* grads);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
  double weight_decay = 1e-5;  // decoupled
  double ema_decay = 0.99;
};

struct OptimizerState {
  TensorSet<float> m;
  TensorSet<float> v;
  long step = 0;

  static OptimizerState for_params(const ModelParams& params);
};

struct StepResult {
  double mean_loss = 0.0;
  int used = 0;
  int skipped = 0;  // infeasible samples
};

// One Adam step on the mean CTC loss of `batch`. Weight decay is applied
// directly to the weights (theta *= 1 - lr * wd) before the Adam update, then
// the EMA shadow moves toward the new weights. Infeasible samples are skipped
// and counted; samples_seen grows by the full batch size.
StepResult train_step(ModelParams& params, OptimizerState& opt, std::span<const LineSample> batch, RngStream& rng,
                      const AdamConfig& config = {});

// Pads a line on the right with background so the network yields at least
// `min_frames` frames.
LineImage pad_to_frames(const LineImage& img, const Architecture& arch, int min_frames = 1);

}  // namespace scriptine
