// src/eval.cc
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

#include "scriptine/eval.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <unordered_map>

#include "scriptine/error.h"
#include "scriptine/utf8.h"

namespace scriptine {

std::size_t Alignment::errors() const {
  return static_cast<std::size_t>(std::count_if(
      ops.begin(), ops.end(), [](const EditOp& op) { return op.kind != EditKind::kMatch; }));
}

std::pair<std::u32string, std::u32string> Alignment::replay() const {
  std::u32string gt, pred;
  for (const auto& op : ops) {
    if (op.kind != EditKind::kIns) gt.push_back(op.gt);
    if (op.kind != EditKind::kDel) pred.push_back(op.pred);
  }
  return {gt, pred};
}

EditResult edit_distance(std::u32string_view gt, std::u32string_view pred) {
  const std::size_t n = gt.size(), m = pred.size();
  std::vector<int> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> int& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = static_cast<int>(i);
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const int diag = at(i - 1, j - 1) + (gt[i - 1] == pred[j - 1] ? 0 : 1);
      at(i, j) = std::min({diag, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }

  EditResult result;
  result.distance = at(n, m);
  std::size_t i = n, j = m;
  auto& ops = result.alignment.ops;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && gt[i - 1] == pred[j - 1] && at(i, j) == at(i - 1, j - 1)) {
      ops.push_back({EditKind::kMatch, gt[i - 1], pred[j - 1]});
      --i, --j;
    } else if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + 1) {
      ops.push_back({EditKind::kSub, gt[i - 1], pred[j - 1]});
      --i, --j;
    } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ops.push_back({EditKind::kDel, gt[i - 1], 0});
      --i;
    } else {
      ops.push_back({EditKind::kIns, 0, pred[j - 1]});
      --j;
    }
  }
  std::reverse(ops.begin(), ops.end());
  return result;
}

double cer(const std::vector<LineText>& gt, const std::vector<LineText>& pred) {
  if (gt.size() != pred.size()) {
    throw InputError("cer: " + std::to_string(gt.size()) + " GT lines but " +
                     std::to_string(pred.size()) + " predictions");
  }
  std::unordered_map<std::string, const std::u32string*> by_id;
  for (const auto& p : pred) {
    if (!by_id.emplace(p.id, &p.text).second) throw InputError("cer: duplicate prediction id " + p.id);
  }
  std::unordered_map<std::string, int> seen;
  for (const auto& g : gt) {
    if (++seen[g.id] > 1) throw InputError("cer: duplicate GT id " + g.id);
  }
  long errors = 0, chars = 0;
  bool any_pred = false;
  for (const auto& g : gt) {
    auto it = by_id.find(g.id);
    if (it == by_id.end()) throw InputError("cer: no prediction for line " + g.id);
    errors += edit_distance(g.text, *it->second).distance;
    chars += static_cast<long>(g.text.size());
    any_pred = any_pred || !it->second->empty();
  }
  if (chars == 0) return any_pred ? 100.0 : 0.0;
  return 100.0 * static_cast<double>(errors) / static_cast<double>(chars);
}

long round_half_up(double x) { return static_cast<long>(std::floor(x + 0.5)); }

ImprovementRates improvement_rates(double fs_cer, double pt_cer, std::optional<double> prev_pt_cer) {
  ImprovementRates rates;
  if (fs_cer > 0.0) rates.over_fs = static_cast<int>(round_half_up(100.0 * (fs_cer - pt_cer) / fs_cer));
  if (prev_pt_cer && *prev_pt_cer > 0.0) {
    rates.over_prev = static_cast<int>(round_half_up(100.0 * (*prev_pt_cer - pt_cer) / *prev_pt_cer));
  }
  return rates;
}

std::string format_fixed(double x, int decimals) {
  const double scale = std::pow(10.0, decimals);
  const double rounded = static_cast<double>(round_half_up(x * scale)) / scale;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, rounded);
  return buf;
}

namespace {

struct Fragment {
  std::u32string gt, pred;
  auto operator<=>(const Fragment&) const = default;
};

void collect_fragments(const Alignment& alignment, std::map<Fragment, int>& counts) {
  const auto& ops = alignment.ops;
  std::size_t i = 0;
  while (i < ops.size()) {
    if (ops[i].kind == EditKind::kMatch) {
      ++i;
      continue;
    }
    std::size_t end = i;
    bool has_sub = false, has_gap = false;
    while (end < ops.size() && ops[end].kind != EditKind::kMatch) {
      has_sub = has_sub || ops[end].kind == EditKind::kSub;
      has_gap = has_gap || ops[end].kind != EditKind::kSub;
      ++end;
    }
    if (has_sub && has_gap) {
      Fragment merged;
      for (std::size_t k = i; k < end; ++k) {
        if (ops[k].kind != EditKind::kIns) merged.gt.push_back(ops[k].gt);
        if (ops[k].kind != EditKind::kDel) merged.pred.push_back(ops[k].pred);
      }
      ++counts[merged];
    } else {
      for (std::size_t k = i; k < end; ++k) {
        Fragment f;
        if (ops[k].kind != EditKind::kIns) f.gt.push_back(ops[k].gt);
        if (ops[k].kind != EditKind::kDel) f.pred.push_back(ops[k].pred);
        ++counts[f];
      }
    }
    i = end;
  }
}

}  // namespace

ConfusionTable confusion_table(const std::vector<std::pair<std::u32string, std::u32string>>& pairs,
                               std::size_t top_k) {
  std::map<Fragment, int> counts;
  ConfusionTable table;
  for (const auto& [gt, pred] : pairs) {
    const auto result = edit_distance(gt, pred);
    table.total_errors += result.distance;
    collect_fragments(result.alignment, counts);
  }
  for (const auto& [fragment, count] : counts) {
    table.rows.push_back({fragment.gt, fragment.pred, count,
                          100.0 * count / static_cast<double>(table.total_errors)});
  }
  std::stable_sort(table.rows.begin(), table.rows.end(), [](const auto& a, const auto& b) {
    if (a.count != b.count) return a.count > b.count;
    if (a.gt != b.gt) return a.gt < b.gt;
    return a.pred < b.pred;
  });
  if (table.rows.size() > top_k) table.rows.resize(top_k);
  return table;
}

double line_confidence(const Prediction& pred) {
  if (pred.confidences.empty()) return 0.0;
  return std::accumulate(pred.confidences.begin(), pred.confidences.end(), 0.0) /
         static_cast<double>(pred.confidences.size());
}

namespace {

std::string show_fragment(const std::u32string& s) {
  std::u32string shown = s;
  std::replace(shown.begin(), shown.end(), U' ', U'␣');
  return utf8_encode(shown);
}

}  // namespace

std::string format_confusion_tsv(const ConfusionTable& table) {
  std::string out = "GT\tPRED\tCNT\t%\n";
  for (const auto& row : table.rows) {
    out += show_fragment(row.gt) + '\t' + show_fragment(row.pred) + '\t' +
           std::to_string(row.count) + '\t' + format_fixed(row.percent, 1) + '\n';
  }
  return out;
}

}  // namespace scriptine
