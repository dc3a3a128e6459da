// tests/ctc_test.cc
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

#include <cmath>

#include "scriptine/ctc.h"
#include "scriptine/error.h"
#include "scriptine/rng.h"

using namespace scriptine;

namespace {

LogitMatrix log_probs(std::initializer_list<std::initializer_list<double>> rows) {
  LogitMatrix m(static_cast<int>(rows.size()), static_cast<int>(rows.begin()->size()));
  int r = 0;
  for (const auto& row : rows) {
    int c = 0;
    for (double p : row) m(r, c++) = std::log(p);
    ++r;
  }
  return m;
}

LogitMatrix random_logits(RngStream& rng, int t, int k) {
  LogitMatrix m(t, k);
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < k; ++j) m(i, j) = 2.0 * rng.normal();
  return m;
}

}  // namespace

TEST_CASE("single frame, single path") {
  const auto logits = log_probs({{0.25, 0.75}});
  const std::vector<int> label{1};
  CHECK(ctc_loss(logits, label).loss == doctest::Approx(-std::log(0.75)).epsilon(1e-12));
  CHECK(ctc_loss_bruteforce(softmax_rows(logits), label) == doctest::Approx(-std::log(0.75)).epsilon(1e-12));
}

TEST_CASE("two frames, uniform") {
  const auto logits = log_probs({{0.5, 0.5}, {0.5, 0.5}});
  const std::vector<int> label{1};
  CHECK(ctc_loss(logits, label).loss == doctest::Approx(-std::log(0.75)).epsilon(1e-12));
  CHECK(ctc_loss_bruteforce(softmax_rows(logits), label) == doctest::Approx(-std::log(0.75)).epsilon(1e-12));
}

TEST_CASE("feasibility") {
  CHECK(ctc_feasible(3, std::vector<int>{1, 1}));
  CHECK_FALSE(ctc_feasible(2, std::vector<int>{1, 1}));
  CHECK(ctc_feasible(2, std::vector<int>{1, 2}));
  CHECK(ctc_feasible(1, std::vector<int>{}));
  RngStream rng(1);
  CHECK_THROWS_AS(ctc_loss(random_logits(rng, 2, 3), std::vector<int>{1, 1}), InfeasibleError);
  CHECK_THROWS_AS(ctc_loss(random_logits(rng, 4, 3), std::vector<int>{0}), InputError);
  CHECK_THROWS_AS(ctc_loss(random_logits(rng, 4, 3), std::vector<int>{3}), InputError);
  CHECK_THROWS_AS(ctc_loss_bruteforce(softmax_rows(random_logits(rng, 13, 3)), std::vector<int>{1}), ParameterError);
}

TEST_CASE("dynamic programming matches path enumeration") {
  RngStream rng(2);
  int checked = 0;
  while (checked < 200) {
    const int t = 1 + static_cast<int>(rng.index(8));
    const int k = 2 + static_cast<int>(rng.index(3));
    std::vector<int> label(rng.index(4));
    for (auto& l : label) l = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(k - 1)));
    if (!ctc_feasible(t, label)) continue;
    const auto logits = random_logits(rng, t, k);
    const double dp = ctc_loss(logits, label).loss;
    const double brute = ctc_loss_bruteforce(softmax_rows(logits), label);
    REQUIRE(std::abs(dp - brute) < 1e-9);
    ++checked;
  }
}

TEST_CASE("gradient matches directional differences") {
  RngStream rng(3);
  for (int n = 0; n < 50; ++n) {
    const int t = 3 + static_cast<int>(rng.index(10)), k = 2 + static_cast<int>(rng.index(4));
    std::vector<int> label(1 + rng.index(3));
    for (auto& l : label) l = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(k - 1)));
    if (!ctc_feasible(t, label)) continue;
    const auto logits = random_logits(rng, t, k);
    const auto dir = random_logits(rng, t, k);
    const double h = 1e-5;
    const double numeric =
        (ctc_loss(logits + h * dir, label).loss - ctc_loss(logits - h * dir, label).loss) / (2 * h);
    const double analytic = (ctc_loss(logits, label).grad.array() * dir.array()).sum();
    CHECK(std::abs(numeric - analytic) <= 1e-6 * std::max(1.0, std::abs(analytic)));
  }
}

TEST_CASE("gradient rows sum to zero") {
  RngStream rng(4);
  const auto logits = random_logits(rng, 9, 4);
  const auto g = ctc_loss(logits, std::vector<int>{1, 3, 3}).grad;
  for (int r = 0; r < g.rows(); ++r) CHECK(std::abs(g.row(r).sum()) < 1e-12);
}

TEST_CASE("greedy decoding") {
  const Codec codec(U"abc");
  SUBCASE("textbook collapse") {
    // argmax sequence [-, a, a, -, c]
    const auto logits = log_probs({{0.7, 0.1, 0.1, 0.1},
                                   {0.1, 0.8, 0.05, 0.05},
                                   {0.1, 0.6, 0.2, 0.1},
                                   {0.9, 0.05, 0.0250, 0.025},
                                   {0.1, 0.1, 0.1, 0.7}});
    const auto p = greedy_decode(logits, codec);
    CHECK(p.chars == U"ac");
    CHECK(p.positions == std::vector<int>{1, 4});
    REQUIRE(p.confidences.size() == 2);
    CHECK(p.confidences[0] == doctest::Approx(0.7));
    CHECK(p.confidences[1] == doctest::Approx(0.7));
  }
  SUBCASE("repeat collapse") {
    const auto p = greedy_decode(log_probs({{0.1, 0.9, 0.0, 0.0}, {0.1, 0.9, 0.0, 0.0}}), codec);
    CHECK(p.chars == U"a");
    CHECK(p.positions == std::vector<int>{0});
  }
  SUBCASE("repeated character separated by blank") {
    const auto p = greedy_decode(log_probs({{0.1, 0.9, 0, 0}, {0.9, 0.1, 0, 0}, {0.1, 0.9, 0, 0}}), codec);
    CHECK(p.chars == U"aa");
  }
  SUBCASE("ties go to the lower index") {
    const auto p = greedy_decode(LogitMatrix::Zero(3, 4), codec);
    CHECK(p.chars.empty());
  }
  SUBCASE("random logits keep the invariants") {
    RngStream rng(5);
    for (int n = 0; n < 100; ++n) {
      const auto p = greedy_decode(random_logits(rng, 12, 4), codec);
      CHECK(p.chars.size() <= 12);
      CHECK(p.confidences.size() == p.chars.size());
      CHECK(p.positions.size() == p.chars.size());
      for (std::size_t i = 0; i < p.chars.size(); ++i) {
        CHECK(p.confidences[i] >= 0.0);
        CHECK(p.confidences[i] <= 1.0);
        if (i > 0) CHECK(p.positions[i] > p.positions[i - 1]);
      }
    }
  }
}
