// include/scriptine/eval.h
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

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "scriptine/prediction.h"

namespace scriptine {

enum class EditKind { kMatch, kSub, kDel, kIns };

struct EditOp {
  EditKind kind;
  char32_t gt = 0;    // unset for kIns
  char32_t pred = 0;  // unset for kDel

  bool operator==(const EditOp&) const = default;
};

struct Alignment {
  std::vector<EditOp> ops;

  std::size_t errors() const;
  // Replays the ops; returns the (gt, pred) pair they describe.
  std::pair<std::u32string, std::u32string> replay() const;
};

struct EditResult {
  int distance = 0;
  Alignment alignment;
};

// Unit-cost Levenshtein distance. The backtrace prefers match, then
// substitution, then deletion, then insertion.
EditResult edit_distance(std::u32string_view gt, std::u32string_view pred);

struct LineText {
  std::string id;
  std::u32string text;
};

// Pooled character error rate in percent: 100 * sum(distance) / sum(|gt|).
// Lines are paired by id. A corpus with no GT characters scores 100 if any
// prediction is nonempty, 0 otherwise.
double cer(const std::vector<LineText>& gt, const std::vector<LineText>& pred);

struct ImprovementRates {
  std::optional<int> over_fs;
  std::optional<int> over_prev;
};

// Relative CER reductions in whole percent, rounded half up. A zero
// denominator yields an empty optional.
ImprovementRates improvement_rates(double fs_cer, double pt_cer, std::optional<double> prev_pt_cer);

struct ConfusionRow {
  std::u32string gt;
  std::u32string pred;
  int count = 0;
  double percent = 0.0;
};

struct ConfusionTable {
  std::vector<ConfusionRow> rows;
  int total_errors = 0;
};

// Most frequent confusions over aligned (gt, pred) pairs. A run of adjacent
// errors containing a substitution together with deletions or insertions is
// reported as one multi-character row ("in" -> "m"); all other error ops are
// counted individually. Percentages are relative to the unmerged op count.
ConfusionTable confusion_table(const std::vector<std::pair<std::u32string, std::u32string>>& pairs,
                               std::size_t top_k = 10);

double line_confidence(const Prediction& pred);

long round_half_up(double x);
std::string format_fixed(double x, int decimals);

// Table renderers. Spaces in confusion fragments are shown as U+2423.
std::string format_confusion_tsv(const ConfusionTable& table);

}  // namespace scriptine
