// include/scriptine/ctc.h
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

#include "scriptine/model.h"
#include "scriptine/network.h"
#include "scriptine/prediction.h"

namespace scriptine {

// Frames x classes, time-major; column 0 is the blank.
using LogitMatrix = Mat<double>;

struct CtcResult {
  double loss = 0.0;
  LogitMatrix grad;  // d(loss)/d(logits)
};

// A label of length L with r adjacent repeats needs at least L + r frames.
bool ctc_feasible(int frames, std::span<const int> label);

// Negative log-likelihood of `label` under the per-frame softmax of `logits`,
// by the forward-backward recursion in log space, with its exact gradient.
// Label indices must be >= 1. Throws InfeasibleError when the label cannot fit.
CtcResult ctc_loss(const LogitMatrix& logits, std::span<const int> label);

// Reference loss by enumerating every frame path: -log of the summed
// probability of paths that collapse to `label`. `probs` holds per-frame
// distributions. Refuses (ParameterError) when classes^frames > 1e6.
double ctc_loss_bruteforce(const Mat<double>& probs, std::span<const int> label);

Mat<double> softmax_rows(const LogitMatrix& logits);

// Best-path decoding: per-frame argmax (ties to the lower index), repeats
// collapsed, blanks dropped. Each character's confidence is the mean softmax
// probability over its argmax run; its position is the run's first frame.
Prediction greedy_decode(const LogitMatrix& logits, const Codec& codec);

}  // namespace scriptine
