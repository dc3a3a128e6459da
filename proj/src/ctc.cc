// src/ctc.cc
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

#include "scriptine/ctc.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "scriptine/error.h"

namespace scriptine {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

int repeats(std::span<const int> label) {
  int r = 0;
  for (std::size_t i = 1; i < label.size(); ++i) r += label[i] == label[i - 1] ? 1 : 0;
  return r;
}

}  // namespace

bool ctc_feasible(int frames, std::span<const int> label) {
  return frames >= static_cast<int>(label.size()) + repeats(label);
}

Mat<double> softmax_rows(const LogitMatrix& logits) {
  Mat<double> out(logits.rows(), logits.cols());
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    const double hi = logits.row(t).maxCoeff();
    out.row(t) = (logits.row(t).array() - hi).exp();
    out.row(t) /= out.row(t).sum();
  }
  return out;
}

CtcResult ctc_loss(const LogitMatrix& logits, std::span<const int> label) {
  const int frames = static_cast<int>(logits.rows());
  const int classes = static_cast<int>(logits.cols());
  for (int l : label) {
    if (l < 1 || l >= classes) throw InputError("CTC label index " + std::to_string(l) + " out of range");
  }
  if (frames < 1 || !ctc_feasible(frames, label)) {
    throw InfeasibleError("label of length " + std::to_string(label.size()) + " does not fit in " +
                          std::to_string(frames) + " frames");
  }

  Mat<double> logp(frames, classes);
  for (int t = 0; t < frames; ++t) {
    const double hi = logits.row(t).maxCoeff();
    const double lse = hi + std::log((logits.row(t).array() - hi).exp().sum());
    logp.row(t) = logits.row(t).array() - lse;
  }

  const int states = 2 * static_cast<int>(label.size()) + 1;
  std::vector<int> ext(static_cast<std::size_t>(states), 0);
  for (std::size_t i = 0; i < label.size(); ++i) ext[2 * i + 1] = label[i];
  auto can_skip = [&](int s) { return s >= 2 && ext[s] != 0 && ext[s] != ext[s - 2]; };

  // alpha includes the emission at t; beta covers frames after t.
  Mat<double> alpha = Mat<double>::Constant(frames, states, kNegInf);
  Mat<double> beta = Mat<double>::Constant(frames, states, kNegInf);
  alpha(0, 0) = logp(0, 0);
  if (states > 1) alpha(0, 1) = logp(0, ext[1]);
  for (int t = 1; t < frames; ++t) {
    for (int s = 0; s < states; ++s) {
      double a = alpha(t - 1, s);
      if (s >= 1) a = log_add(a, alpha(t - 1, s - 1));
      if (can_skip(s)) a = log_add(a, alpha(t - 1, s - 2));
      alpha(t, s) = a == kNegInf ? kNegInf : a + logp(t, ext[s]);
    }
  }
  beta(frames - 1, states - 1) = 0.0;
  if (states > 1) beta(frames - 1, states - 2) = 0.0;
  for (int t = frames - 2; t >= 0; --t) {
    for (int s = 0; s < states; ++s) {
      double b = beta(t + 1, s) + logp(t + 1, ext[s]);
      if (s + 1 < states) b = log_add(b, beta(t + 1, s + 1) + logp(t + 1, ext[s + 1]));
      if (s + 2 < states && can_skip(s + 2)) b = log_add(b, beta(t + 1, s + 2) + logp(t + 1, ext[s + 2]));
      beta(t, s) = b;
    }
  }

  double log_likelihood = alpha(frames - 1, states - 1);
  if (states > 1) log_likelihood = log_add(log_likelihood, alpha(frames - 1, states - 2));

  CtcResult result;
  result.loss = -log_likelihood;
  result.grad = logp.array().exp();
  for (int t = 0; t < frames; ++t) {
    for (int s = 0; s < states; ++s) {
      const double occ = alpha(t, s) + beta(t, s);
      if (occ != kNegInf) result.grad(t, ext[s]) -= std::exp(occ - log_likelihood);
    }
  }
  return result;
}

double ctc_loss_bruteforce(const Mat<double>& probs, std::span<const int> label) {
  const int frames = static_cast<int>(probs.rows());
  const int classes = static_cast<int>(probs.cols());
  double paths = 1.0;
  for (int t = 0; t < frames; ++t) paths *= classes;
  if (paths > 1e6) throw ParameterError("brute-force CTC refuses " + std::to_string(paths) + " paths");

  std::vector<int> path(static_cast<std::size_t>(frames), 0);
  std::vector<int> collapsed;
  double total = 0.0;
  while (true) {
    collapsed.clear();
    int prev = -1;
    for (int k : path) {
      if (k != prev && k != 0) collapsed.push_back(k);
      prev = k;
    }
    if (std::equal(collapsed.begin(), collapsed.end(), label.begin(), label.end())) {
      double p = 1.0;
      for (int t = 0; t < frames; ++t) p *= probs(t, path[static_cast<std::size_t>(t)]);
      total += p;
    }
    int t = frames - 1;
    while (t >= 0 && ++path[static_cast<std::size_t>(t)] == classes) path[static_cast<std::size_t>(t--)] = 0;
    if (t < 0) break;
  }
  return -std::log(total);
}

Prediction greedy_decode(const LogitMatrix& logits, const Codec& codec) {
  const auto probs = softmax_rows(logits);
  Prediction pred;
  int t = 0;
  const int frames = static_cast<int>(probs.rows());
  while (t < frames) {
    Eigen::Index best;
    probs.row(t).maxCoeff(&best);
    int end = t + 1;
    while (end < frames) {
      Eigen::Index next;
      probs.row(end).maxCoeff(&next);
      if (next != best) break;
      ++end;
    }
    if (best != 0) {
      double sum = 0.0;
      for (int i = t; i < end; ++i) sum += probs(i, best);
      pred.chars.push_back(codec.decode(static_cast<int>(best)));
      pred.confidences.push_back(sum / (end - t));
      pred.positions.push_back(t);
    }
    t = end;
  }
  return pred;
}

}  // namespace scriptine
