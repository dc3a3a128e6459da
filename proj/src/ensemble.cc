// src/ensemble.cc
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

#include "scriptine/ensemble.h"

#include <algorithm>
#include <cstdlib>
#include <map>
#include <utility>

#include "scriptine/error.h"
#include "scriptine/parallel.h"

namespace scriptine {

VoterSet cross_fold_train(const std::vector<LineSample>& gt, int n, const std::optional<ModelParams>& base,
                          const NetworkSpec& spec, int height, RngStream& rng, const TrainOptions& options,
                          int jobs) {
  if (n < 1) throw ParameterError("voter count must be at least 1");
  if (gt.size() < static_cast<std::size_t>(n)) {
    throw InputError("cross-fold training needs at least " + std::to_string(n) + " lines, got " +
                     std::to_string(gt.size()));
  }
  VoterSet set;
  set.fold_of.assign(gt.size(), 0);
  auto fold_rng = rng.fork(0);
  const auto order = fold_rng.permutation(gt.size());
  for (std::size_t k = 0; k < order.size(); ++k) set.fold_of[order[k]] = static_cast<int>(k % n);

  std::vector<std::u32string> texts;
  for (const auto& s : gt) texts.push_back(s.text);
  const Codec full_codec = Codec::from_texts(texts);

  set.voters.resize(n);
  set.logs.resize(n);
  parallel_for(static_cast<std::size_t>(n), jobs, [&](std::size_t v) {
    auto voter_options = options;
    auto& log = set.logs[v];
    voter_options.log = [&log](const EvalRecord& r) { log.push_back(r); };
    auto init_rng = rng.fork(100 + v);
    auto train_rng = rng.fork(200 + v);
    ModelParams init;
    if (base) {
      init = *base;
      adapt_codec(init, texts, init_rng);
    } else {
      init = instantiate(spec, height, full_codec, init_rng);
    }
    if (n == 1) {
      auto split_rng = rng.fork(300);
      auto [train, val] = split_validation(gt, options.val_fraction, split_rng);
      set.voters[v] = train_early_stopped(std::move(init), train, val, train_rng, voter_options);
      return;
    }
    std::vector<LineSample> train, val;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      (set.fold_of[i] == static_cast<int>(v) ? val : train).push_back(gt[i]);
    }
    set.voters[v] = train_early_stopped(std::move(init), train, val, train_rng, voter_options);
  });
  return set;
}

namespace {

struct Vote {
  char32_t ch;
  double conf;
  int pos;
};

using Column = std::vector<std::optional<Vote>>;  // one slot per voter

struct Tally {
  char32_t ch = 0;
  double sum = 0.0;
  std::size_t first_voter = 0;
  int pos = 0;
};

// Character with the largest confidence sum; ties go to the lowest voter.
std::optional<Tally> leading_char(const Column& col) {
  std::map<char32_t, Tally> sums;
  for (std::size_t v = 0; v < col.size(); ++v) {
    if (!col[v]) continue;
    auto [it, fresh] = sums.try_emplace(col[v]->ch, Tally{col[v]->ch, 0.0, v, col[v]->pos});
    it->second.sum += col[v]->conf;
  }
  std::optional<Tally> best;
  for (const auto& [ch, t] : sums) {
    if (!best || t.sum > best->sum || (t.sum == best->sum && t.first_voter < best->first_voter)) best = t;
  }
  return best;
}

using Cost = std::pair<int, int>;  // (edits, far-apart pairings)

Cost operator+(Cost a, Cost b) { return {a.first + b.first, a.second + b.second}; }

enum class Step { kDiag, kDel, kIns };

std::vector<Step> align_to_consensus(const std::vector<Column>& cols, const Prediction& pred) {
  const std::size_t m = cols.size(), k = pred.chars.size();
  std::vector<std::optional<Tally>> reps(m);
  for (std::size_t i = 0; i < m; ++i) reps[i] = leading_char(cols[i]);
  auto diag_cost = [&](std::size_t i, std::size_t j) {
    const auto& rep = reps[i];
    const int edit = (rep && rep->ch == pred.chars[j]) ? 0 : 1;
    const int far = (rep && std::abs(rep->pos - pred.positions[j]) > 2) ? 1 : 0;
    return Cost{edit + far, far};
  };
  std::vector<std::vector<Cost>> d(m + 1, std::vector<Cost>(k + 1));
  for (std::size_t i = 1; i <= m; ++i) d[i][0] = {static_cast<int>(i), 0};
  for (std::size_t j = 1; j <= k; ++j) d[0][j] = {static_cast<int>(j), 0};
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= k; ++j) {
      d[i][j] = std::min({d[i - 1][j - 1] + diag_cost(i - 1, j - 1), d[i - 1][j] + Cost{1, 0},
                          d[i][j - 1] + Cost{1, 0}});
    }
  }
  std::vector<Step> steps;
  std::size_t i = m, j = k;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] + diag_cost(i - 1, j - 1)) {
      steps.push_back(Step::kDiag);
      --i;
      --j;
    } else if (i > 0 && d[i][j] == d[i - 1][j] + Cost{1, 0}) {
      steps.push_back(Step::kDel);
      --i;
    } else {
      steps.push_back(Step::kIns);
      --j;
    }
  }
  std::reverse(steps.begin(), steps.end());
  return steps;
}

}  // namespace

Prediction confidence_vote(const std::vector<Prediction>& preds) {
  if (preds.empty()) throw InputError("voting needs at least one prediction");
  const std::size_t n = preds.size();
  for (const auto& p : preds) {
    if (p.line_ref != preds.front().line_ref) throw InputError("voters disagree on the line: " + p.line_ref);
    if (p.confidences.size() != p.chars.size() || p.positions.size() != p.chars.size()) {
      throw InputError("prediction for " + p.line_ref + " has mismatched lengths");
    }
  }

  std::vector<Column> cols;
  for (std::size_t v = 0; v < n; ++v) {
    const auto& p = preds[v];
    std::vector<Column> merged;
    std::size_t i = 0, j = 0;
    for (Step step : align_to_consensus(cols, p)) {
      if (step == Step::kIns) {
        merged.emplace_back(n);
      } else {
        merged.push_back(cols[i++]);
      }
      if (step != Step::kDel) {
        merged.back()[v] = Vote{p.chars[j], p.confidences[j], p.positions[j]};
        ++j;
      }
    }
    cols = std::move(merged);
  }

  Prediction out;
  out.line_ref = preds.front().line_ref;
  for (const auto& col : cols) {
    const auto best = leading_char(col);
    const bool has_gap = std::any_of(col.begin(), col.end(), [](const auto& v) { return !v; });
    if (!best || (has_gap && best->sum <= 0.0)) continue;
    int pos = best->pos;
    if (!out.positions.empty()) pos = std::max(pos, out.positions.back() + 1);
    out.chars.push_back(best->ch);
    out.confidences.push_back(best->sum / static_cast<double>(n));
    out.positions.push_back(pos);
  }
  return out;
}

Prediction recognize_voted(const std::vector<ModelParams>& voters, const LineImage& img) {
  std::vector<Prediction> preds;
  for (const auto& m : voters) preds.push_back(recognize(m, img));
  return confidence_vote(preds);
}

}  // namespace scriptine
