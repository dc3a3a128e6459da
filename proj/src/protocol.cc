// src/protocol.cc
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

#include "scriptine/protocol.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <nlohmann/json.hpp>

#include "scriptine/error.h"
#include "scriptine/eval.h"
#include "scriptine/log.h"

namespace scriptine {

EarlyStopState EarlyStopState::start(long epoch_samples, const EarlyStopConfig& config) {
  if (epoch_samples < 1) throw ParameterError("an epoch needs at least one sample");
  EarlyStopState s;
  s.epoch_samples = epoch_samples;
  s.eval_every_samples = std::max(config.min_eval_samples, epoch_samples);
  return s;
}

long EarlyStopState::next_interval(const EarlyStopConfig& config) const {
  const long cap = static_cast<long>(config.max_epochs) * epoch_samples;
  return std::max(0L, std::min(eval_every_samples, cap - samples_seen));
}

EarlyStopState early_stop_update(EarlyStopState state, double val_cer, const EarlyStopConfig& config) {
  if (state.stopped) return state;
  state.samples_seen += state.next_interval(config);
  state.epoch = static_cast<int>(state.samples_seen / state.epoch_samples);
  ++state.evals;
  state.improved = val_cer < state.best_cer;
  if (state.improved) {
    state.best_cer = val_cer;
    state.evals_since_best = 0;
  } else {
    ++state.evals_since_best;
  }
  state.stopped = state.evals_since_best >= config.patience || state.epoch >= config.max_epochs;
  return state;
}

std::string eval_record_json(const EvalRecord& record) {
  nlohmann::ordered_json j;
  j["epoch"] = record.epoch;
  j["samples_seen"] = record.samples_seen;
  j["val_cer"] = record.val_cer;
  j["best"] = record.best;
  j["stopped"] = record.stopped;
  return j.dump();
}

std::vector<std::size_t> select_balanced_pages(const std::vector<int>& line_counts, int cutoff, RngStream& rng) {
  if (cutoff < 1) throw ParameterError("cutoff must be at least 1");
  const auto order = rng.permutation(line_counts.size());
  std::vector<std::size_t> picked;
  long drawn = 0;
  for (std::size_t idx : order) {
    if (drawn >= cutoff) break;
    picked.push_back(idx);
    drawn += line_counts[idx];
  }
  return picked;
}

PageLines prepare_page(const Page& page, const GrayImage& raster, const std::string& manuscript,
                       const BinarizeMethod& method, int height) {
  PageLines out{manuscript, page_id(page), {}};
  for (const auto& line : page.lines) {
    if (line.transcription.empty()) continue;
    auto img = extract_line_image(raster, line);
    img.source = {manuscript, out.page, line.id};
    out.lines.push_back({normalize_height(binarize(img, method), height), line.transcription});
  }
  return out;
}

std::vector<LineSample> flatten(const std::vector<PageLines>& pages) {
  std::vector<LineSample> out;
  for (const auto& p : pages) out.insert(out.end(), p.lines.begin(), p.lines.end());
  return out;
}

std::pair<std::vector<LineSample>, std::vector<LineSample>> split_validation(const std::vector<LineSample>& lines,
                                                                              double fraction, RngStream& rng) {
  if (lines.size() < 2) throw InputError("training needs at least two lines (one held out for validation)");
  const auto n = lines.size();
  auto held = static_cast<std::size_t>(round_half_up(fraction * static_cast<double>(n)));
  held = std::clamp<std::size_t>(held, 1, n - 1);
  const auto order = rng.permutation(n);
  std::vector<bool> is_val(n, false);
  for (std::size_t i = 0; i < held; ++i) is_val[order[i]] = true;
  std::pair<std::vector<LineSample>, std::vector<LineSample>> out;
  for (std::size_t i = 0; i < n; ++i) (is_val[i] ? out.second : out.first).push_back(lines[i]);
  return out;
}

double validation_cer(const ModelParams& params, const std::vector<LineSample>& lines) {
  std::vector<LineText> gt, pred;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto id = std::to_string(i);
    gt.push_back({id, lines[i].text});
    pred.push_back({id, recognize(params, lines[i].image).chars});
  }
  return cer(gt, pred);
}

namespace {

void check_heights(const ModelParams& params, const std::vector<LineSample>& lines) {
  for (const auto& s : lines) {
    if (s.image.height() != params.input_height) {
      throw ShapeError("line " + s.image.source.key() + " has height " + std::to_string(s.image.height()) +
                       ", model expects " + std::to_string(params.input_height));
    }
  }
}

std::vector<std::u32string> texts_of(const std::vector<LineSample>& lines) {
  std::vector<std::u32string> out;
  for (const auto& s : lines) out.push_back(s.text);
  return out;
}

}  // namespace

ModelParams train_early_stopped(ModelParams start, const std::vector<LineSample>& train,
                                const std::vector<LineSample>& val, RngStream& rng, const TrainOptions& options) {
  if (train.empty() || val.empty()) throw InputError("training and validation sets must be nonempty");
  if (options.batch_size < 1 || options.augment < 0) throw ParameterError("bad batch size or augmentation count");
  check_heights(start, train);
  check_heights(start, val);

  const auto copies = static_cast<std::size_t>(options.augment) + 1;
  const auto epoch_samples = static_cast<long>(train.size() * copies);
  auto state = EarlyStopState::start(epoch_samples, options.stop);
  auto opt = OptimizerState::for_params(start);
  ModelParams params = std::move(start);
  ModelParams best = params;

  std::vector<std::size_t> order;
  std::size_t pos = 0;
  auto next_sample = [&]() {
    if (pos == order.size()) {
      order = rng.permutation(static_cast<std::size_t>(epoch_samples));
      pos = 0;
    }
    const std::size_t k = order[pos++];
    const auto& src = train[k / copies];
    if (k % copies == 0) return src;
    return LineSample{degrade(src.image, rng, options.degrade), src.text};
  };

  std::vector<LineSample> batch;
  while (!state.stopped) {
    long remaining = state.next_interval(options.stop);
    while (remaining > 0) {
      const long n = std::min<long>(options.batch_size, remaining);
      batch.clear();
      for (long i = 0; i < n; ++i) batch.push_back(next_sample());
      train_step(params, opt, batch, rng, options.adam);
      remaining -= n;
    }
    const double val_cer = options.validate ? options.validate(params) : validation_cer(params, val);
    state = early_stop_update(state, val_cer, options.stop);
    params.meta.epochs = state.epoch;
    if (state.improved) best = params;
    SCRIPTINE_DEBUG("epoch " << state.epoch << " val_cer " << val_cer << " best " << state.best_cer);
    if (options.log) options.log({state.epoch, state.samples_seen, val_cer, state.best_cer, state.stopped});
  }
  return best;
}

TwoStageResult two_stage_train(const std::vector<PageLines>& corpus, const NetworkSpec& spec, int height,
                               const std::optional<ModelParams>& base, RngStream& rng, const TrainOptions& options) {
  const auto lines = flatten(corpus);
  if (lines.empty()) throw InputError("corpus has no transcribed lines");
  ModelParams init;
  if (base) {
    init = *base;
    auto codec_rng = rng.fork(1);
    adapt_codec(init, texts_of(lines), codec_rng);
  } else {
    auto init_rng = rng.fork(1);
    init = instantiate(spec, height, Codec::from_texts(texts_of(lines)), init_rng);
  }

  TwoStageResult result;
  {
    auto split_rng = rng.fork(2);
    auto [train, val] = split_validation(lines, options.val_fraction, split_rng);
    auto train_rng = rng.fork(3);
    result.stage1 = train_early_stopped(std::move(init), train, val, train_rng, options);
  }

  std::map<std::string, std::vector<const PageLines*>> by_ms;
  for (const auto& p : corpus) {
    if (!p.lines.empty()) by_ms[p.manuscript].push_back(&p);
  }
  auto select_rng = rng.fork(4);
  std::uint64_t ms_index = 0;
  for (const auto& [name, pages] : by_ms) {
    std::vector<int> counts;
    for (const auto* p : pages) counts.push_back(static_cast<int>(p->lines.size()));
    auto ms_rng = select_rng.fork(ms_index++);
    for (auto idx : select_balanced_pages(counts, options.cutoff, ms_rng)) {
      const auto& page_lines = pages[idx]->lines;
      result.stage2_lines.insert(result.stage2_lines.end(), page_lines.begin(), page_lines.end());
    }
  }
  auto split_rng = rng.fork(5);
  auto [train, val] = split_validation(result.stage2_lines, options.val_fraction, split_rng);
  auto train_rng = rng.fork(6);
  result.model = train_early_stopped(result.stage1, train, val, train_rng, options);
  return result;
}

ModelParams finetune(const ModelParams& base, const std::vector<LineSample>& gt, RngStream& rng,
                     const TrainOptions& options) {
  if (gt.empty()) throw InputError("finetuning needs ground truth");
  ModelParams params = base;
  auto codec_rng = rng.fork(1);
  adapt_codec(params, texts_of(gt), codec_rng);
  auto split_rng = rng.fork(2);
  auto [train, val] = split_validation(gt, options.val_fraction, split_rng);
  auto train_rng = rng.fork(3);
  return train_early_stopped(std::move(params), train, val, train_rng, options);
}

ModelParams train_from_scratch(const NetworkSpec& spec, int height, const std::vector<LineSample>& gt,
                               RngStream& rng, const TrainOptions& options) {
  if (gt.empty()) throw InputError("training needs ground truth");
  auto init_rng = rng.fork(1);
  auto params = instantiate(spec, height, Codec::from_texts(texts_of(gt)), init_rng);
  auto split_rng = rng.fork(2);
  auto [train, val] = split_validation(gt, options.val_fraction, split_rng);
  auto train_rng = rng.fork(3);
  return train_early_stopped(std::move(params), train, val, train_rng, options);
}

}  // namespace scriptine
