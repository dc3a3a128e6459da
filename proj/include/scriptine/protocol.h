// include/scriptine/protocol.h
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

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "scriptine/lineproc.h"
#include "scriptine/model.h"
#include "scriptine/pagexml.h"
#include "scriptine/recognizer.h"

namespace scriptine {

struct EarlyStopConfig {
  int patience = 5;
  int max_epochs = 100;
  long min_eval_samples = 1000;
};

// Evaluations happen every eval_every_samples training samples. An epoch is
// one pass over the (augmented) training set.
struct EarlyStopState {
  double best_cer = std::numeric_limits<double>::infinity();
  int evals_since_best = 0;
  int epoch = 0;
  long eval_every_samples = 0;
  long epoch_samples = 0;
  long samples_seen = 0;
  int evals = 0;
  bool improved = false;  // last update set a new best
  bool stopped = false;

  static EarlyStopState start(long epoch_samples, const EarlyStopConfig& config = {});
  // Samples to train before the next evaluation; never crosses the epoch cap.
  long next_interval(const EarlyStopConfig& config = {}) const;
};

// Records one evaluation taken after next_interval() more samples. A strictly
// lower CER is an improvement (the caller snapshots the model); the run stops
// after `patience` consecutive non-improvements or at the epoch cap.
EarlyStopState early_stop_update(EarlyStopState state, double val_cer, const EarlyStopConfig& config = {});

struct EvalRecord {
  int epoch = 0;
  long samples_seen = 0;
  double val_cer = 0.0;
  double best = 0.0;
  bool stopped = false;
};

std::string eval_record_json(const EvalRecord& record);

struct TrainOptions {
  int augment = 5;  // degraded copies per line and epoch, besides the original
  int batch_size = 16;
  int cutoff = 150;
  double val_fraction = 0.1;
  DegradeConfig degrade;
  AdamConfig adam;
  EarlyStopConfig stop;
  std::function<void(const EvalRecord&)> log;
  // Replaces the validation CER when set.
  std::function<double(const ModelParams&)> validate;
};

// Pages drawn uniformly without replacement until the drawn line count reaches
// `cutoff` or every page is drawn. Returns page indices in draw order, which
// is a prefix of rng.permutation(line_counts.size()).
std::vector<std::size_t> select_balanced_pages(const std::vector<int>& line_counts, int cutoff, RngStream& rng);

// Transcribed lines of one page, cropped, binarized and scaled to `height`.
struct PageLines {
  std::string manuscript;
  std::string page;
  std::vector<LineSample> lines;
};

PageLines prepare_page(const Page& page, const GrayImage& raster, const std::string& manuscript,
                       const BinarizeMethod& method, int height);

std::vector<LineSample> flatten(const std::vector<PageLines>& pages);

// Holds out round(fraction * n) lines (at least one) for validation. Needs at
// least two lines.
std::pair<std::vector<LineSample>, std::vector<LineSample>> split_validation(const std::vector<LineSample>& lines,
                                                                              double fraction, RngStream& rng);

double validation_cer(const ModelParams& params, const std::vector<LineSample>& lines);

// Trains from `start` until the early stopper fires and returns the
// best-validation snapshot. Each epoch presents every line once as is and
// `augment` times degraded, in a fresh random order.
ModelParams train_early_stopped(ModelParams start, const std::vector<LineSample>& train,
                                const std::vector<LineSample>& val, RngStream& rng, const TrainOptions& options);

struct TwoStageResult {
  ModelParams stage1;
  ModelParams model;
  std::vector<LineSample> stage2_lines;
};

// Stage 1 trains on every line (from `base` when given), stage 2 continues
// from the stage-1 result on balanced page selections per manuscript.
TwoStageResult two_stage_train(const std::vector<PageLines>& corpus, const NetworkSpec& spec, int height,
                               const std::optional<ModelParams>& base, RngStream& rng, const TrainOptions& options);

// Codec adaptation, then early-stopped training on `gt`.
ModelParams finetune(const ModelParams& base, const std::vector<LineSample>& gt, RngStream& rng,
                     const TrainOptions& options);

// Early-stopped training of a freshly instantiated model.
ModelParams train_from_scratch(const NetworkSpec& spec, int height, const std::vector<LineSample>& gt,
                               RngStream& rng, const TrainOptions& options);

}  // namespace scriptine
