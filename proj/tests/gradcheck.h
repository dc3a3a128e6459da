// tests/gradcheck.h
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

// Central finite-difference check of the network gradient.
#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "scriptine/recognizer.h"

namespace gradcheck {

// Uniform weights in [-scale, scale] for every tensor of `arch`.
template <typename Real>
scriptine::TensorSet<Real> random_tensors(const scriptine::Architecture& arch, scriptine::RngStream& rng,
                                          double scale) {
  scriptine::TensorSet<Real> set;
  for (const auto& [name, shape] : scriptine::tensor_shapes(arch)) {
    auto t = scriptine::Tensor<Real>::zeros(shape);
    for (auto& v : t.data) v = static_cast<Real>(scale * rng.uniform(-1.0, 1.0));
    set.emplace(name, std::move(t));
  }
  return set;
}

struct Report {
  double max_rel_error = 0.0;
  std::string worst;  // tensor[index]
  std::size_t checked = 0;
};

// Relative error |a - n| / max(|a|, |n|, 1e-6) over every parameter.
inline Report run(const scriptine::Architecture& arch, scriptine::TensorSet<double> params,
                  const scriptine::GrayImage& image, const std::vector<int>& label, double h = 1e-5) {
  auto grads = scriptine::zeros_like(params);
  scriptine::loss_and_gradient<double>(arch, params, image, label, false, nullptr, &grads);
  Report report;
  for (auto& [name, tensor] : params) {
    for (std::size_t i = 0; i < tensor.data.size(); ++i) {
      const double saved = tensor.data[i];
      tensor.data[i] = saved + h;
      const double up = scriptine::loss_and_gradient<double>(arch, params, image, label, false, nullptr, nullptr);
      tensor.data[i] = saved - h;
      const double down = scriptine::loss_and_gradient<double>(arch, params, image, label, false, nullptr, nullptr);
      tensor.data[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double analytic = grads.at(name).data[i];
      const double rel =
          std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst = name + "[" + std::to_string(i) + "]";
      }
      ++report.checked;
    }
  }
  return report;
}

}  // namespace gradcheck
