// tests/util_test.cc
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

#include <atomic>
#include <set>
#include <stdexcept>

#include "scriptine/error.h"
#include "scriptine/parallel.h"
#include "scriptine/rng.h"
#include "scriptine/utf8.h"

using namespace scriptine;

TEST_CASE("utf8 round trip") {
  const std::u32string text = U"aſæᷓ \U0001F600";
  CHECK(utf8_decode(utf8_encode(text)) == text);
  CHECK(utf8_encode(U"ſ") == "\xC5\xBF");
}

TEST_CASE("utf8 errors carry offsets") {
  try {
    utf8_decode("ab\xC5");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.position() == 2);
  }
  CHECK_THROWS_AS(utf8_decode("\xFF"), ParseError);
  CHECK_THROWS_AS(utf8_decode("\xC5x"), ParseError);
}

TEST_CASE("rng streams are deterministic and keyed") {
  RngStream a(5), b(5);
  for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == b.next_u64());
  CHECK(RngStream::keyed(1, 2).next_u64() == RngStream::keyed(1, 2).next_u64());
  CHECK(RngStream::keyed(1, 2).next_u64() != RngStream::keyed(1, 3).next_u64());
  RngStream c(9);
  const auto f0 = c.fork(3).next_u64();
  c.next_u64();
  CHECK(c.fork(3).next_u64() == f0);
  CHECK(c.fork(4).next_u64() != f0);
}

TEST_CASE("rng draws are in range") {
  RngStream rng(3);
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(rng.index(7) < 7);
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(sum / 20000 == doctest::Approx(0.0).epsilon(0.05).scale(1.0));
  CHECK(sq / 20000 == doctest::Approx(1.0).epsilon(0.05));
  auto perm = rng.permutation(50);
  CHECK(std::set<std::size_t>(perm.begin(), perm.end()).size() == 50);
}

TEST_CASE("parallel_for covers every index and rethrows") {
  std::vector<int> hits(100, 0);
  parallel_for(100, 4, [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) CHECK(h == 1);
  CHECK_THROWS_AS(parallel_for(10, 3, [](std::size_t i) { if (i == 7) throw std::runtime_error("x"); }),
                  std::runtime_error);
}
