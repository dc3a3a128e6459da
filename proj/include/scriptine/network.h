// include/scriptine/network.h
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

#include <Eigen/Core>
#include <variant>
#include <vector>

#include "scriptine/image.h"
#include "scriptine/model.h"
#include "scriptine/rng.h"
#include "scriptine/tensor.h"

namespace scriptine {

template <typename Real>
using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Activations kept by the forward pass for backpropagation.
template <typename Real>
struct ForwardTrace {
  struct Conv {
    Mat<Real> cols;  // im2col of the input
    Mat<Real> out;   // post-ReLU, channels x (h * w)
    int width = 0;
  };
  struct Pool {
    std::vector<int> argmax;  // per output element, flat index within its channel
    int in_h = 0, in_w = 0, out_h = 0, out_w = 0;
  };
  struct LstmDirection {
    Mat<Real> gates;  // post-activation [i f g o]
    Mat<Real> cell;
    Mat<Real> cell_tanh;
    Mat<Real> hidden;
  };
  struct Lstm {
    Mat<Real> input;
    LstmDirection fw, bw;
    Mat<Real> mask;  // inverted-dropout mask on the output, empty when inactive
  };

  std::vector<std::variant<Conv, Pool>> stack;
  int frames = 0;
  std::vector<Lstm> lstms;
  Mat<Real> head_input;
  Mat<Real> head_mask;
};

// Logits (frames x classes) for a line whose height equals the architecture's
// input height. The network sees ink as 1 (1 - pixel). Dropout is active only
// when `train` is set and `rng` is non-null. Throws ShapeError on a wrong
// height or a line narrower than the total pool width.
template <typename Real>
Mat<Real> network_forward(const Architecture& arch, const TensorSet<Real>& params, const GrayImage& image,
                          bool train, RngStream* rng, ForwardTrace<Real>* trace);

// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(logits).
template <typename Real>
void network_backward(const Architecture& arch, const TensorSet<Real>& params, const ForwardTrace<Real>& trace,
                      const Mat<Real>& dlogits, TensorSet<Real>& grads);

}  // namespace scriptine
