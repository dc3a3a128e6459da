// include/scriptine/harness.h
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

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "scriptine/ensemble.h"
#include "scriptine/eval.h"
#include "scriptine/pagexml.h"
#include "scriptine/protocol.h"

namespace scriptine {

struct NestedSplits {
  std::vector<std::size_t> eval_pages;                  // indices into the page list
  std::map<int, std::vector<std::size_t>> train_sets;  // size -> pages
};

// Draws max(sizes) pages at random and repeatedly takes uniform subsets for
// the smaller sizes; every other page is evaluation data. Sizes must be
// positive and the page count must exceed the largest.
NestedSplits make_nested_splits(std::size_t page_count, std::vector<int> sizes, RngStream& rng);

struct ItaOptions {
  NetworkSpec spec;
  int height = 32;
  TrainOptions train;
  bool fs_ensemble = false;  // from-scratch arm as a voting ensemble
  int voters = 5;
  int jobs = 1;
};

struct ItaRow {
  int pages = 0;
  std::optional<double> fs_cer;
  std::optional<double> pt_cer;
  std::optional<int> impr_fs;
  std::optional<int> impr_prev;
};

struct ItaResultTable {
  std::string manuscript;
  std::vector<ItaRow> rows;
  std::map<std::string, std::vector<EvalRecord>> logs;  // per arm, e.g. "pt_4", "fs_4_v2"
  std::map<std::string, ConfusionTable> confusions;     // per arm on the evaluation pages, e.g. "base", "pt_4"
};

struct EvalScore {
  double cer = 0.0;
  ConfusionTable confusion;
};

// Pooled CER and confusions of a model (or of voted voters) on the given lines.
EvalScore score_lines(const ModelParams& model, const std::vector<LineSample>& lines);
EvalScore score_lines(const std::vector<ModelParams>& voters, const std::vector<LineSample>& lines);
double corpus_cer(const ModelParams& model, const std::vector<LineSample>& lines);
double corpus_cer(const std::vector<ModelParams>& voters, const std::vector<LineSample>& lines);

// Row 0 holds the base model's CER on the evaluation pages. For each size the
// PT arm finetunes a fresh copy of `base` and the FS arm trains from scratch;
// both are scored on the evaluation pages. Without a base only FS is run.
ItaResultTable run_ita(const std::vector<PageLines>& pages, const std::optional<ModelParams>& base,
                       const NestedSplits& splits, RngStream& rng, const ItaOptions& options);

// Columns: manuscript, pages, fs_cer, pt_cer, impr_fs, impr_prev; "-" marks a
// missing value.
std::string format_ita_tsv(const std::vector<ItaResultTable>& tables);

enum class SynthStyle { kA, kB };

struct SynthConfig {
  int n_manuscripts = 1;
  int pages_per_ms = 4;
  int lines_per_page = 8;
  SynthStyle style = SynthStyle::kA;
  int alphabet_size = 12;
  double writer_jitter = 1.0;
  int chars_per_line = 12;
  int line_height = 32;
  std::string name_prefix = "ms";
};

struct SynthManuscript {
  std::string name;
  Manuscript manuscript;
  std::vector<GrayImage> rasters;  // parallel to manuscript.pages
};

// Letters available to the generator, in alphabet order.
std::u32string synth_alphabet(int alphabet_size);

// Renders random words over the alphabet with parametric stroke glyphs. Glyph
// shapes depend only on the style; each manuscript adds a writer perturbation
// keyed by its index, and every glyph instance gets jitter scaled by
// writer_jitter. Lines end with a small dot close to the last letter.
std::vector<SynthManuscript> synth_corpus(const SynthConfig& config, RngStream& rng);

struct RenderedLine {
  GrayImage image;
  std::vector<int> glyph_x;  // left edge of each character's cell
};

// Renders `text` in the hand of manuscript `index` of a corpus drawn from
// `rng` with this config.
RenderedLine synth_render_line(const SynthConfig& config, int index, std::u32string_view text, RngStream& rng);

std::vector<PageLines> prepare_manuscript(const SynthManuscript& ms, const BinarizeMethod& method, int height);

}  // namespace scriptine
