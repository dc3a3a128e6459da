// tests/protocol_test.cc
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

#include <doctest.h>

#include <algorithm>
#include <functional>
#include <set>

#include "scriptine/utf8.h"
#include "scriptine/error.h"
#include "scriptine/harness.h"
#include "scriptine/protocol.h"

using namespace scriptine;

namespace {

// Number of evaluations after which a run stops, found by direct scan.
int stop_index_oracle(const std::vector<double>& series, int evals_per_cap) {
  double best = 1e300;
  int streak = 0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (series[i] < best) {
      best = series[i];
      streak = 0;
    } else {
      ++streak;
    }
    if (streak == 5 || static_cast<int>(i) + 1 == evals_per_cap) return static_cast<int>(i) + 1;
  }
  return -1;
}

std::vector<PageLines> synth_pages(int pages, int lines, RngStream& rng, const std::string& prefix = "ms",
                                   int manuscripts = 1) {
  SynthConfig cfg;
  cfg.n_manuscripts = manuscripts;
  cfg.pages_per_ms = pages;
  cfg.lines_per_page = lines;
  cfg.alphabet_size = 5;
  cfg.chars_per_line = 6;
  cfg.writer_jitter = 0.0;
  cfg.name_prefix = prefix;
  std::vector<PageLines> out;
  for (const auto& ms : synth_corpus(cfg, rng))
    for (auto& p : prepare_manuscript(ms, BinarizeMethod::sauvola(), 32)) out.push_back(std::move(p));
  return out;
}

const NetworkSpec& small_spec() {
  static const auto spec = parse_spec("conv=8:3x3,pool=2x2,conv=16:3x3,pool=2x2,lstm=32,dropout=0.0");
  return spec;
}

}  // namespace

TEST_CASE("early stopping on the scripted series") {
  auto s = EarlyStopState::start(2000);
  const std::vector<double> series{5.0, 4.0, 4.0, 4.0, 4.0, 4.0, 4.0};
  for (std::size_t i = 0; i < series.size(); ++i) {
    REQUIRE_FALSE(s.stopped);
    s = early_stop_update(s, series[i]);
  }
  CHECK(s.stopped);
  CHECK(s.evals == 7);
  CHECK(s.best_cer == 4.0);
  CHECK(s.evals_since_best == 5);

  s = EarlyStopState::start(2000);
  s = early_stop_update(s, 3.0);
  s = early_stop_update(s, 3.0);
  CHECK_FALSE(s.improved);
  CHECK(s.evals_since_best == 1);
}

TEST_CASE("strictly decreasing CER runs to the epoch cap") {
  for (long epoch_samples : {1L, 7L, 96L, 999L, 1000L, 1001L, 2500L}) {
    auto s = EarlyStopState::start(epoch_samples);
    CHECK(s.eval_every_samples == std::max(1000L, epoch_samples));
    double cer = 100.0;
    int evals = 0;
    while (!s.stopped) {
      s = early_stop_update(s, cer);
      cer -= 0.01;
      ++evals;
      REQUIRE(s.epoch <= 100);
    }
    CHECK(s.epoch == 100);
    CHECK(s.samples_seen == 100 * epoch_samples);
    CHECK(s.evals_since_best == 0);
    if (epoch_samples >= 1000) CHECK(evals == 100);
  }
  CHECK_THROWS_AS(EarlyStopState::start(0), ParameterError);
}

TEST_CASE("exhaustive traces agree with the direct scan") {
  // Every series of length 9 over three values, with a cap of 8 evaluations.
  const long epoch_samples = 1000;
  EarlyStopConfig cfg;
  cfg.max_epochs = 8;
  std::vector<double> series(9);
  int total = 1;
  for (std::size_t i = 0; i < series.size(); ++i) total *= 3;
  for (int code = 0; code < total; ++code) {
    int c = code;
    for (auto& v : series) {
      v = static_cast<double>(c % 3);
      c /= 3;
    }
    auto s = EarlyStopState::start(epoch_samples, cfg);
    int stopped_at = -1, best_at = -1;
    for (std::size_t i = 0; i < series.size() && !s.stopped; ++i) {
      s = early_stop_update(s, series[i], cfg);
      REQUIRE(s.evals_since_best <= 5);
      if (s.improved) best_at = static_cast<int>(i);
      if (s.stopped) stopped_at = static_cast<int>(i) + 1;
    }
    REQUIRE(stopped_at == stop_index_oracle(series, 8));
    const auto first_min = std::min_element(series.begin(), series.begin() + stopped_at) - series.begin();
    REQUIRE(best_at == first_min);
  }
}

TEST_CASE("an update after stopping changes nothing") {
  auto s = EarlyStopState::start(1000);
  for (int i = 0; i < 6; ++i) s = early_stop_update(s, 1.0);
  REQUIRE(s.stopped);
  const auto again = early_stop_update(s, 0.0);
  CHECK(again.evals == s.evals);
  CHECK(again.best_cer == 1.0);
}

TEST_CASE("balanced page selection examples") {
  RngStream rng(1);
  CHECK(select_balanced_pages({60, 60, 60}, 150, rng).size() == 3);
  CHECK(select_balanced_pages({50, 30, 20}, 150, rng).size() == 3);
  CHECK(select_balanced_pages({200}, 150, rng).size() == 1);
  const auto picked = select_balanced_pages({200, 200, 200, 200}, 150, rng);
  CHECK(picked.size() == 1);
  CHECK_THROWS_AS(select_balanced_pages({1}, 0, rng), ParameterError);
}

TEST_CASE("selection is a prefix of the stream's permutation") {
  RngStream rng(2);
  for (int n = 0; n < 200; ++n) {
    std::vector<int> counts(1 + rng.index(20));
    for (auto& c : counts) c = static_cast<int>(rng.index(80));
    auto a = rng.fork(static_cast<std::uint64_t>(n)), b = a;
    const auto picked = select_balanced_pages(counts, 150, a);
    const auto perm = b.permutation(counts.size());
    REQUIRE(picked.size() <= perm.size());
    CHECK(std::equal(picked.begin(), picked.end(), perm.begin()));
  }
}

TEST_CASE("validation split") {
  RngStream rng(3);
  std::vector<LineSample> lines(25);
  for (std::size_t i = 0; i < lines.size(); ++i) lines[i].text = std::u32string(1, U'a' + static_cast<char32_t>(i));
  auto [train, val] = split_validation(lines, 0.1, rng);
  CHECK(val.size() == 3);
  CHECK(train.size() == 22);
  std::set<std::u32string> seen;
  for (const auto& s : train) seen.insert(s.text);
  for (const auto& s : val) CHECK(seen.insert(s.text).second);
  CHECK(split_validation(std::vector<LineSample>(2), 0.1, rng).second.size() == 1);
  CHECK_THROWS_AS(split_validation(std::vector<LineSample>(1), 0.1, rng), InputError);
}

TEST_CASE("training returns the best snapshot") {
  RngStream rng(4);
  const auto pages = synth_pages(1, 4, rng);
  const auto lines = flatten(pages);
  auto params = instantiate(small_spec(), 32, Codec(synth_alphabet(5) + U" ."), rng);
  TrainOptions opt;
  opt.augment = 0;
  opt.stop.min_eval_samples = 8;
  const std::vector<double> script{9.0, 7.0, 3.0, 5.0, 3.0, 4.0, 8.0, 6.0, 1.0};
  std::size_t call = 0;
  std::vector<long> seen_at;
  opt.validate = [&](const ModelParams& p) {
    seen_at.push_back(p.meta.samples_seen);
    return script.at(call++);
  };
  std::vector<EvalRecord> log;
  opt.log = [&](const EvalRecord& r) { log.push_back(r); };
  const auto best = train_early_stopped(params, {lines[0], lines[1], lines[2]}, {lines[3]}, rng, opt);
  CHECK(call == 8);  // stops at the fifth evaluation without a new best
  REQUIRE(log.size() == 8);
  CHECK(log.back().stopped);
  CHECK(log.back().best == 3.0);
  CHECK(log[2].val_cer == 3.0);
  CHECK(best.meta.samples_seen == seen_at[2]);
  CHECK(eval_record_json(log[0]) ==
        "{\"epoch\":" + std::to_string(log[0].epoch) + ",\"samples_seen\":" + std::to_string(log[0].samples_seen) +
            ",\"val_cer\":9.0,\"best\":9.0,\"stopped\":false}");
}

TEST_CASE("finetune codec adaptation") {
  RngStream rng(5);
  const auto pages = synth_pages(1, 4, rng);
  auto gt = flatten(pages);
  TrainOptions opt;
  opt.stop.max_epochs = 1;
  opt.augment = 0;

  SUBCASE("alphabet already covered") {
    const auto base = instantiate(small_spec(), 32, Codec(synth_alphabet(8) + U" ."), rng);
    const auto tuned = finetune(base, gt, rng, opt);
    CHECK(tuned.codec == base.codec);
    for (const auto& [name, t] : base.tensors) CHECK(tuned.tensors.at(name).shape == t.shape);
  }
  SUBCASE("new characters are appended and old ones kept") {
    const auto base = instantiate(small_spec(), 32, Codec(U"abcxyz"), rng);
    const auto tuned = finetune(base, gt, rng, opt);
    CHECK(tuned.codec.chars().substr(0, 6) == U"abcxyz");
    std::set<char32_t> missing;
    for (const auto& s : gt)
      for (char32_t c : s.text)
        if (base.codec.index_of(c) < 0) missing.insert(c);
    CHECK(tuned.codec.chars() == U"abcxyz" + std::u32string(missing.begin(), missing.end()));
    CHECK(tuned.tensors.at("proj.w").shape[0] == 7 + static_cast<int>(missing.size()));
  }
  SUBCASE("height mismatch") {
    const auto base = instantiate(small_spec(), 16, Codec(U"abcde ."), rng);
    CHECK_THROWS_AS(finetune(base, gt, rng, opt), ShapeError);
  }
  CHECK_THROWS_AS(finetune(instantiate(small_spec(), 32, Codec(U"a"), rng), {}, rng, opt), InputError);
}

TEST_CASE("finetuning fits the five-line toy set") {
  RngStream rng(6);
  const auto pre = flatten(synth_pages(3, 8, rng, "pre"));
  const auto gt = flatten(synth_pages(1, 5, rng));
  const auto base = train_from_scratch(small_spec(), 32, pre, rng, TrainOptions{});
  const auto tuned = finetune(base, gt, rng, TrainOptions{});
  CHECK(corpus_cer(tuned, gt) == 0.0);
}

TEST_CASE("two-stage training") {
  TrainOptions opt;
  opt.stop.max_epochs = 1;
  opt.stop.min_eval_samples = 1;
  opt.augment = 0;
  opt.cutoff = 12;

  SUBCASE("small single manuscript keeps every line") {
    RngStream rng(7);
    const auto corpus = synth_pages(2, 4, rng);
    const auto result = two_stage_train(corpus, small_spec(), 32, std::nullopt, rng, opt);
    CHECK(result.stage2_lines.size() == 8);
  }
  SUBCASE("stage 2 is balanced per manuscript") {
    RngStream rng(8);
    auto corpus = synth_pages(6, 5, rng, "big");
    const auto small = synth_pages(3, 4, rng, "small");
    corpus.insert(corpus.end(), small.begin(), small.end());
    const auto result = two_stage_train(corpus, small_spec(), 32, std::nullopt, rng, opt);
    std::map<std::string, int> per_ms;
    std::set<std::string> all_keys;
    for (const auto& s : flatten(corpus)) all_keys.insert(s.image.source.key());
    for (const auto& s : result.stage2_lines) {
      per_ms[s.image.source.manuscript] += 1;
      CHECK(all_keys.count(s.image.source.key()) == 1);
    }
    CHECK(per_ms["big0"] >= 12);
    CHECK(per_ms["big0"] <= 12 + 5);
    CHECK(per_ms["small0"] == 12);
    CHECK(result.model.codec == result.stage1.codec);
  }
  SUBCASE("empty corpus") {
    RngStream rng(9);
    CHECK_THROWS_AS(two_stage_train({}, small_spec(), 32, std::nullopt, rng, opt), InputError);
  }
}
