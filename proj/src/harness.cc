// src/harness.cc
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

#include "scriptine/harness.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "scriptine/error.h"
#include "scriptine/eval.h"
#include "scriptine/parallel.h"
#include "scriptine/utf8.h"

namespace scriptine {

NestedSplits make_nested_splits(std::size_t page_count, std::vector<int> sizes, RngStream& rng) {
  if (sizes.empty()) throw ParameterError("no split sizes given");
  std::sort(sizes.begin(), sizes.end());
  sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());
  if (sizes.front() < 1) throw ParameterError("split sizes must be positive");
  const auto largest = static_cast<std::size_t>(sizes.back());
  if (page_count <= largest) {
    throw InputError("nested splits need more than " + std::to_string(largest) + " pages, got " +
                     std::to_string(page_count));
  }
  NestedSplits splits;
  const auto order = rng.permutation(page_count);
  std::vector<std::size_t> current(order.begin(), order.begin() + static_cast<long>(largest));
  splits.eval_pages.assign(order.begin() + static_cast<long>(largest), order.end());
  for (auto it = sizes.rbegin(); it != sizes.rend(); ++it) {
    const auto size = static_cast<std::size_t>(*it);
    if (size < current.size()) {
      rng.shuffle(current);
      current.resize(size);
    }
    splits.train_sets[*it] = current;
  }
  return splits;
}

namespace {

template <typename Recognize>
EvalScore score_with(const std::vector<LineSample>& lines, Recognize&& recognize_line) {
  std::vector<LineText> gt, pred;
  std::vector<std::pair<std::u32string, std::u32string>> pairs;
  for (const auto& s : lines) {
    const auto text = recognize_line(s.image).chars;
    gt.push_back({s.image.source.key(), s.text});
    pred.push_back({s.image.source.key(), text});
    pairs.emplace_back(s.text, text);
  }
  return {cer(gt, pred), confusion_table(pairs)};
}

}  // namespace

EvalScore score_lines(const ModelParams& model, const std::vector<LineSample>& lines) {
  return score_with(lines, [&](const LineImage& img) { return recognize(model, img); });
}

EvalScore score_lines(const std::vector<ModelParams>& voters, const std::vector<LineSample>& lines) {
  return score_with(lines, [&](const LineImage& img) { return recognize_voted(voters, img); });
}

double corpus_cer(const ModelParams& model, const std::vector<LineSample>& lines) {
  return score_lines(model, lines).cer;
}

double corpus_cer(const std::vector<ModelParams>& voters, const std::vector<LineSample>& lines) {
  return score_lines(voters, lines).cer;
}

namespace {

std::vector<LineSample> lines_of(const std::vector<PageLines>& pages, const std::vector<std::size_t>& picks) {
  std::vector<LineSample> out;
  for (auto i : picks) out.insert(out.end(), pages[i].lines.begin(), pages[i].lines.end());
  return out;
}

void check_ground_truth(const std::vector<PageLines>& pages, const NestedSplits& splits) {
  std::vector<std::size_t> used = splits.eval_pages;
  for (const auto& [size, set] : splits.train_sets) used.insert(used.end(), set.begin(), set.end());
  std::sort(used.begin(), used.end());
  used.erase(std::unique(used.begin(), used.end()), used.end());
  std::string missing;
  for (auto i : used) {
    if (i >= pages.size()) throw InputError("split refers to page index " + std::to_string(i) + " out of range");
    if (pages[i].lines.empty()) missing += (missing.empty() ? "" : ", ") + pages[i].page;
  }
  if (!missing.empty()) throw InputError("pages without ground truth: " + missing);
}

}  // namespace

ItaResultTable run_ita(const std::vector<PageLines>& pages, const std::optional<ModelParams>& base,
                       const NestedSplits& splits, RngStream& rng, const ItaOptions& options) {
  check_ground_truth(pages, splits);
  ItaResultTable table;
  if (!pages.empty()) table.manuscript = pages.front().manuscript;
  const auto eval_lines = lines_of(pages, splits.eval_pages);

  std::vector<int> sizes;
  for (const auto& [size, set] : splits.train_sets) sizes.push_back(size);

  // Arm 2k is PT at sizes[k], arm 2k + 1 is FS.
  const std::size_t arms = 2 * sizes.size();
  std::vector<std::optional<EvalScore>> results(arms);
  std::vector<std::map<std::string, std::vector<EvalRecord>>> logs(arms);
  parallel_for(arms, options.jobs, [&](std::size_t arm) {
    const int size = sizes[arm / 2];
    const bool pretrained = arm % 2 == 0;
    const auto train = lines_of(pages, splits.train_sets.at(size));
    auto opts = options.train;
    const std::string name = (pretrained ? "pt_" : "fs_") + std::to_string(size);
    if (pretrained) {
      if (!base) return;
      auto& log = logs[arm][name];
      opts.log = [&log](const EvalRecord& r) { log.push_back(r); };
      auto arm_rng = rng.fork(1000 + static_cast<std::uint64_t>(size));
      results[arm] = score_lines(finetune(*base, train, arm_rng, opts), eval_lines);
      return;
    }
    auto arm_rng = rng.fork(2000 + static_cast<std::uint64_t>(size));
    if (options.fs_ensemble) {
      auto set = cross_fold_train(train, options.voters, std::nullopt, options.spec, options.height, arm_rng, opts);
      for (std::size_t v = 0; v < set.logs.size(); ++v) logs[arm][name + "_v" + std::to_string(v)] = set.logs[v];
      results[arm] = score_lines(set.voters, eval_lines);
    } else {
      auto& log = logs[arm][name];
      opts.log = [&log](const EvalRecord& r) { log.push_back(r); };
      results[arm] =
          score_lines(train_from_scratch(options.spec, options.height, train, arm_rng, opts), eval_lines);
    }
  });

  std::optional<double> prev;
  if (base) {
    auto score = score_lines(*base, eval_lines);
    prev = score.cer;
    table.confusions["base"] = std::move(score.confusion);
    table.rows.push_back({0, std::nullopt, prev, std::nullopt, std::nullopt});
  }
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    ItaRow row;
    row.pages = sizes[k];
    const auto size = std::to_string(sizes[k]);
    if (results[2 * k]) {
      row.pt_cer = results[2 * k]->cer;
      table.confusions["pt_" + size] = results[2 * k]->confusion;
    }
    row.fs_cer = results[2 * k + 1]->cer;
    table.confusions["fs_" + size] = results[2 * k + 1]->confusion;
    if (row.pt_cer) {
      const auto rates = improvement_rates(*row.fs_cer, *row.pt_cer, prev);
      row.impr_fs = rates.over_fs;
      row.impr_prev = rates.over_prev;
      prev = row.pt_cer;
    }
    table.rows.push_back(row);
  }
  for (auto& arm_logs : logs) table.logs.merge(arm_logs);
  return table;
}

std::string format_ita_tsv(const std::vector<ItaResultTable>& tables) {
  auto cer_cell = [](const std::optional<double>& v) { return v ? format_fixed(*v, 2) : std::string("-"); };
  auto int_cell = [](const std::optional<int>& v) { return v ? std::to_string(*v) : std::string("-"); };
  std::ostringstream out;
  out << "manuscript\tpages\tfs_cer\tpt_cer\timpr_fs\timpr_prev\n";
  for (const auto& t : tables) {
    for (const auto& r : t.rows) {
      out << t.manuscript << '\t' << r.pages << '\t' << cer_cell(r.fs_cer) << '\t' << cer_cell(r.pt_cer) << '\t'
          << int_cell(r.impr_fs) << '\t' << int_cell(r.impr_prev) << '\n';
    }
  }
  return out.str();
}

// Synthetic handwriting.

namespace {

constexpr std::u32string_view kLetters = U"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMN";
constexpr std::uint64_t kGlyphSeed = 0x5c121e0f1e1dULL;

struct Pt {
  double u, v;  // u across the glyph width, v down the x-height body (0 top, 1 baseline)
};
using Stroke = std::vector<Pt>;
using Glyph = std::vector<Stroke>;

Glyph angular_glyph(RngStream& rng) {
  Glyph g;
  const int strokes = 2 + static_cast<int>(rng.index(2));
  for (int s = 0; s < strokes; ++s) {
    Stroke st;
    const int points = 2 + static_cast<int>(rng.index(2));
    while (static_cast<int>(st.size()) < points) {
      Pt p{0.5 * static_cast<double>(rng.index(3)), 0.5 * static_cast<double>(rng.index(3))};
      if (!st.empty() && st.back().u == p.u && st.back().v == p.v) continue;
      st.push_back(p);
    }
    g.push_back(st);
  }
  const double extend = rng.uniform();
  if (extend < 0.2) g.front().front().v = -0.6;
  else if (extend < 0.35) g.front().back().v = 1.5;
  return g;
}

Glyph curved_glyph(RngStream& rng) {
  Glyph g;
  const int strokes = 2 + static_cast<int>(rng.index(2));
  for (int s = 0; s < strokes; ++s) {
    const Pt a{rng.uniform(), rng.uniform()}, c{rng.uniform(-0.2, 1.2), rng.uniform(-0.2, 1.2)},
        b{rng.uniform(), rng.uniform()};
    Stroke st;
    for (int k = 0; k <= 8; ++k) {
      const double t = k / 8.0, w0 = (1 - t) * (1 - t), w1 = 2 * t * (1 - t), w2 = t * t;
      st.push_back({w0 * a.u + w1 * c.u + w2 * b.u, w0 * a.v + w1 * c.v + w2 * b.v});
    }
    g.push_back(st);
  }
  const double extend = rng.uniform();
  if (extend < 0.2) g.front().front().v = -0.6;
  else if (extend < 0.35) g.front().back().v = 1.5;
  return g;
}

Glyph base_glyph(SynthStyle style, std::size_t letter) {
  auto rng = RngStream(kGlyphSeed).fork((style == SynthStyle::kA ? 0xA000 : 0xB000) + letter);
  return style == SynthStyle::kA ? angular_glyph(rng) : curved_glyph(rng);
}

struct Writer {
  double slant = 0.0;
  double width_scale = 1.0;
  double thickness = 1.6;
  double spacing = 2.0;
  std::vector<Glyph> glyphs;  // per letter, perturbed
};

Writer make_writer(SynthStyle style, std::size_t letters, RngStream rng) {
  Writer w;
  w.slant = (style == SynthStyle::kB ? 0.3 : 0.0) + rng.uniform(-0.15, 0.15);
  w.width_scale = rng.uniform(0.85, 1.15);
  w.thickness = rng.uniform(1.3, 2.0);
  w.spacing = rng.uniform(1.5, 3.0);
  for (std::size_t c = 0; c < letters; ++c) {
    auto g = base_glyph(style, c);
    for (auto& st : g) {
      for (auto& p : st) {
        p.u += rng.uniform(-0.08, 0.08);
        p.v += rng.uniform(-0.08, 0.08);
      }
    }
    w.glyphs.push_back(std::move(g));
  }
  return w;
}

void draw_segment(GrayImage& img, double x0, double y0, double x1, double y1, double thickness) {
  const double r = thickness / 2 + 0.5;
  const int xa = std::max(0, static_cast<int>(std::floor(std::min(x0, x1) - r)));
  const int xb = std::min(img.width - 1, static_cast<int>(std::ceil(std::max(x0, x1) + r)));
  const int ya = std::max(0, static_cast<int>(std::floor(std::min(y0, y1) - r)));
  const int yb = std::min(img.height - 1, static_cast<int>(std::ceil(std::max(y0, y1) + r)));
  const double dx = x1 - x0, dy = y1 - y0, len2 = dx * dx + dy * dy;
  for (int y = ya; y <= yb; ++y) {
    for (int x = xa; x <= xb; ++x) {
      double t = len2 > 0 ? ((x - x0) * dx + (y - y0) * dy) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double d = std::hypot(x - (x0 + t * dx), y - (y0 + t * dy));
      const double ink = std::clamp(r - d, 0.0, 1.0);
      img.at(y, x) = std::min(img.at(y, x), static_cast<float>(1.0 - ink));
    }
  }
}

std::u32string random_text(const std::u32string& alphabet, int chars, RngStream& rng) {
  std::u32string text;
  while (static_cast<int>(text.size()) < chars - 1) {
    if (!text.empty()) text.push_back(U' ');
    const auto len = 2 + rng.index(4);
    for (std::size_t i = 0; i < len; ++i) text.push_back(alphabet[rng.index(alphabet.size())]);
  }
  text.push_back(U'.');
  return text;
}

RenderedLine render_line(std::u32string_view text, const std::u32string& alphabet, const Writer& w, int height,
                         double jitter, RngStream& rng) {
  const double top = std::round(0.3 * height), xh = std::round(0.4 * height);
  const double gw = 0.6 * xh * w.width_scale;
  const double baseline = top + xh;
  // Layout pass, then draw on a canvas of the final width.
  struct Placed {
    char32_t ch;
    double x;
    double dy;
    std::vector<double> noise;
  };
  std::vector<Placed> placed;
  RenderedLine out;
  double x = 4.0;
  for (char32_t ch : text) {
    if (ch != U' ' && ch != U'.' && alphabet.find(ch) == std::u32string::npos) {
      throw InputError("character outside the synthetic alphabet");
    }
    Placed p{ch, std::round(x), 0.0, {}};
    out.glyph_x.push_back(static_cast<int>(p.x));
    if (jitter > 0) p.dy = jitter * 0.7 * rng.normal();
    if (ch == U' ') {
      x += 0.9 * gw + w.spacing;
      continue;
    }
    if (ch == U'.') {
      placed.push_back(p);
      x += 4.0;
      continue;
    }
    const auto letter = alphabet.find(ch);
    if (jitter > 0) {
      for (const auto& st : w.glyphs[letter]) {
        for (std::size_t k = 0; k < st.size(); ++k) {
          p.noise.push_back(jitter * 0.03 * rng.normal());
          p.noise.push_back(jitter * 0.03 * rng.normal());
        }
      }
    }
    placed.push_back(std::move(p));
    x += gw + w.spacing + (jitter > 0 ? jitter * rng.uniform(-1.0, 1.0) : 0.0);
  }
  out.image = GrayImage(height, static_cast<int>(std::ceil(x + 4.0)));
  auto& img = out.image;
  for (const auto& p : placed) {
    if (p.ch == U'.') {
      const double cx = p.x + 1.0, cy = baseline - 1.0 + p.dy;
      draw_segment(img, cx, cy, cx + 0.3, cy, w.thickness * 1.1);
      continue;
    }
    const auto& glyph = w.glyphs[alphabet.find(p.ch)];
    std::size_t n = 0;
    for (const auto& st : glyph) {
      std::vector<std::pair<double, double>> pts;
      for (const auto& q : st) {
        double u = q.u, v = q.v;
        if (!p.noise.empty()) {
          u += p.noise[n];
          v += p.noise[n + 1];
        }
        n += 2;
        const double py = top + v * xh + p.dy;
        pts.emplace_back(p.x + u * gw + w.slant * (baseline - py), py);
      }
      for (std::size_t k = 1; k < pts.size(); ++k) {
        draw_segment(img, pts[k - 1].first, pts[k - 1].second, pts[k].first, pts[k].second, w.thickness);
      }
    }
  }
  return out;
}

}  // namespace

std::u32string synth_alphabet(int alphabet_size) {
  if (alphabet_size < 1 || alphabet_size > static_cast<int>(kLetters.size())) {
    throw ParameterError("alphabet size must be in [1, 40]");
  }
  return std::u32string(kLetters.substr(0, static_cast<std::size_t>(alphabet_size)));
}

std::vector<SynthManuscript> synth_corpus(const SynthConfig& config, RngStream& rng) {
  const auto alphabet = synth_alphabet(config.alphabet_size);
  if (config.line_height < 16) throw ParameterError("synthetic line height must be at least 16");
  if (config.chars_per_line < 3) throw ParameterError("synthetic lines need at least 3 characters");
  std::vector<SynthManuscript> out;
  for (int m = 0; m < config.n_manuscripts; ++m) {
    auto ms_rng = rng.fork(static_cast<std::uint64_t>(m));
    const Writer writer = make_writer(config.style, alphabet.size(), ms_rng.fork(0));
    SynthManuscript ms;
    ms.name = config.name_prefix + std::to_string(m);
    ms.manuscript.style = config.style == SynthStyle::kA ? Style::kGothic : Style::kBastarda;
    for (int p = 0; p < config.pages_per_ms; ++p) {
      auto page_rng = ms_rng.fork(1000 + static_cast<std::uint64_t>(p));
      std::vector<GrayImage> line_imgs;
      std::vector<std::u32string> texts;
      for (int l = 0; l < config.lines_per_page; ++l) {
        auto line_rng = page_rng.fork(static_cast<std::uint64_t>(l));
        texts.push_back(random_text(alphabet, config.chars_per_line, line_rng));
        line_imgs.push_back(render_line(texts.back(), alphabet, writer, config.line_height, config.writer_jitter,
                                        line_rng).image);
      }
      int width = 1;
      for (const auto& li : line_imgs) width = std::max(width, li.width + 4);
      const int gap = 4;
      Page page;
      page.image_ref = ms.name + "_p" + std::to_string(p) + ".png";
      page.width = width;
      page.height = config.lines_per_page * (config.line_height + gap) + gap;
      GrayImage raster(page.height, page.width);
      for (int l = 0; l < config.lines_per_page; ++l) {
        const int x0 = 2, y0 = gap + l * (config.line_height + gap);
        const auto& li = line_imgs[static_cast<std::size_t>(l)];
        for (int y = 0; y < li.height; ++y) {
          for (int x = 0; x < li.width; ++x) raster.at(y0 + y, x0 + x) = li.at(y, x);
        }
        TextLine line;
        line.id = "l" + std::to_string(l);
        line.polygon = {{x0, y0}, {x0 + li.width - 1, y0}, {x0 + li.width - 1, y0 + li.height - 1},
                        {x0, y0 + li.height - 1}};
        line.transcription = texts[static_cast<std::size_t>(l)];
        line.reading_order = l;
        page.lines.push_back(std::move(line));
      }
      ms.manuscript.pages.push_back(std::move(page));
      ms.rasters.push_back(std::move(raster));
    }
    out.push_back(std::move(ms));
  }
  return out;
}

RenderedLine synth_render_line(const SynthConfig& config, int index, std::u32string_view text, RngStream& rng) {
  const auto alphabet = synth_alphabet(config.alphabet_size);
  const Writer writer = make_writer(config.style, alphabet.size(), rng.fork(static_cast<std::uint64_t>(index)).fork(0));
  auto line_rng = rng.fork(0xF00D);
  return render_line(text, alphabet, writer, config.line_height, config.writer_jitter, line_rng);
}

std::vector<PageLines> prepare_manuscript(const SynthManuscript& ms, const BinarizeMethod& method, int height) {
  std::vector<PageLines> out;
  for (std::size_t p = 0; p < ms.manuscript.pages.size(); ++p) {
    out.push_back(prepare_page(ms.manuscript.pages[p], ms.rasters[p], ms.name, method, height));
  }
  return out;
}

}  // namespace scriptine
