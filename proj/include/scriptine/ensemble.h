// include/scriptine/ensemble.h
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
#include <vector>

#include "scriptine/prediction.h"
#include "scriptine/protocol.h"

namespace scriptine {

struct VoterSet {
  std::vector<ModelParams> voters;
  std::vector<int> fold_of;  // per input line
  std::vector<std::vector<EvalRecord>> logs;  // per voter
};

// Partitions the lines into n folds (position in an rng permutation, modulo
// n) and trains voter i on the other folds with fold i as validation, from
// `base` when given, otherwise from a fresh model over the full alphabet.
// n = 1 trains a single model with the usual held-out split. Voters train
// concurrently on up to `jobs` threads.
VoterSet cross_fold_train(const std::vector<LineSample>& gt, int n, const std::optional<ModelParams>& base,
                          const NetworkSpec& spec, int height, RngStream& rng, const TrainOptions& options,
                          int jobs = 1);

// Character-level confidence voting. Voters are aligned one by one against
// the running column consensus by edit distance; among equal-cost alignments,
// those pairing characters more than two frames apart are avoided. Each column
// elects the character with the largest confidence sum (an absent character
// votes for a gap with confidence 0); ties go to the lowest voter index, and
// a gap beats a character whose sum is not positive. The winner's confidence
// is its sum divided by the number of voters.
Prediction confidence_vote(const std::vector<Prediction>& preds);

// Votes the voters' recognitions of one line.
Prediction recognize_voted(const std::vector<ModelParams>& voters, const LineImage& img);

}  // namespace scriptine
