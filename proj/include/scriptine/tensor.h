// include/scriptine/tensor.h
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

#include <cstddef>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

namespace scriptine {

template <typename Real>
struct Tensor {
  std::vector<int> shape;
  std::vector<Real> data;

  static Tensor zeros(std::vector<int> dims) {
    Tensor t;
    t.shape = std::move(dims);
    t.data.assign(element_count(t.shape), Real(0));
    return t;
  }

  static std::size_t element_count(const std::vector<int>& dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                           [](std::size_t a, int d) { return a * static_cast<std::size_t>(d); });
  }

  std::size_t size() const { return data.size(); }
  bool operator==(const Tensor&) const = default;
};

// Ordered by name, so iteration order is deterministic.
template <typename Real>
using TensorSet = std::map<std::string, Tensor<Real>>;

template <typename To, typename From>
TensorSet<To> cast_tensors(const TensorSet<From>& in) {
  TensorSet<To> out;
  for (const auto& [name, t] : in) {
    Tensor<To> c;
    c.shape = t.shape;
    c.data.assign(t.data.begin(), t.data.end());
    out.emplace(name, std::move(c));
  }
  return out;
}

template <typename Real>
TensorSet<Real> zeros_like(const TensorSet<Real>& in) {
  TensorSet<Real> out;
  for (const auto& [name, t] : in) out.emplace(name, Tensor<Real>::zeros(t.shape));
  return out;
}

template <typename Real>
std::size_t parameter_count(const TensorSet<Real>& set) {
  std::size_t n = 0;
  for (const auto& [name, t] : set) n += t.size();
  return n;
}

}  // namespace scriptine
