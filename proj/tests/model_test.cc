// tests/model_test.cc
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
#include <cstdio>
#include <filesystem>

#include "scriptine/error.h"
#include "scriptine/model.h"

using namespace scriptine;

TEST_CASE("codec") {
  const auto codec = Codec::from_texts({U"cab", U"b a"});
  CHECK(codec.chars() == U" abc");
  CHECK(codec.classes() == 5);
  CHECK(codec.index_of(U'a') == 2);
  CHECK(codec.index_of(U'z') == -1);
  CHECK(codec.encode(U"cab") == std::vector<int>{4, 2, 3});
  CHECK(codec.decode(1) == U' ');
  CHECK_THROWS_AS(codec.encode(U"az"), InputError);
  CHECK_THROWS_AS(Codec(U"aa"), ValidationError);
  auto grown = codec;
  CHECK(grown.extend({U"zab", U"y"}) == 2);
  CHECK(grown.chars() == U" abcyz");
}

TEST_CASE("def spec shapes at height 48") {
  const auto arch = plan_architecture(parse_spec(kDefSpec), 48, 11);
  CHECK(arch.feature_height == 12);
  CHECK(arch.feature_channels == 60);
  CHECK(arch.feature_dim == 720);
  CHECK(arch.width_divisor == 4);
  CHECK(arch.frames(100) == 25);
  CHECK(arch.projection_input == 400);
  const auto shapes = tensor_shapes(arch);
  CHECK(shapes.at("conv0.w") == std::vector<int>{40, 1, 3, 3});
  CHECK(shapes.at("conv1.w") == std::vector<int>{60, 40, 3, 3});
  CHECK(shapes.at("lstm0.fw.wx") == std::vector<int>{800, 720});
  CHECK(shapes.at("lstm0.bw.wh") == std::vector<int>{800, 200});
  CHECK(shapes.at("proj.w") == std::vector<int>{11, 400});
  CHECK(shapes.at("proj.b") == std::vector<int>{11});
}

TEST_CASE("tiny spec shapes") {
  const auto arch = plan_architecture(parse_spec("conv=2:3x3,pool=2x2,lstm=4,dropout=0.0"), 8, 4);
  CHECK(arch.feature_dim == 8);
  CHECK(tensor_shapes(arch).at("proj.w") == std::vector<int>{4, 8});
}

TEST_CASE("indivisible height is a shape error naming the pool product") {
  try {
    plan_architecture(parse_spec(kDefSpec), 30, 5);
    FAIL("accepted height 30");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find('4') != std::string::npos);
  }
  CHECK_THROWS_AS(plan_architecture(parse_spec("lstm=4,conv=2:3x3"), 8, 3), ShapeError);
}

TEST_CASE("instantiate is deterministic and Glorot-bounded") {
  const auto spec = parse_spec("conv=4:3x3,pool=2x2,lstm=6,dropout=0.5");
  const Codec codec(U"abc");
  RngStream a(1), b(1), c(2);
  const auto pa = instantiate(spec, 16, codec, a);
  const auto pb = instantiate(spec, 16, codec, b);
  const auto pc = instantiate(spec, 16, codec, c);
  CHECK(pa == pb);
  CHECK(pa.tensors != pc.tensors);
  CHECK(pa.ema == pa.tensors);
  CHECK(parameter_count(pa.tensors) == parameter_count(pc.tensors));
  const auto& w = pa.tensors.at("proj.w");
  const double limit = std::sqrt(6.0 / (w.shape[0] + w.shape[1]));
  for (float v : w.data) CHECK(std::abs(v) <= limit);
  for (float v : pa.tensors.at("proj.b").data) CHECK(v == 0.0f);
  // Forget gate bias (second quarter) starts at 1.
  const auto& bias = pa.tensors.at("lstm0.fw.b").data;
  CHECK(bias[0] == 0.0f);
  CHECK(bias[6] == 1.0f);
  CHECK(bias[12] == 0.0f);
}

TEST_CASE("serialization round-trips bit-exactly") {
  const auto spec = parse_spec("conv=4:3x3,pool=2x2,lstm=6,dropout=0.5");
  RngStream rng(3);
  auto params = instantiate(spec, 16, Codec(U"aſæ."), rng);
  params.ema.at("proj.b").data[1] = 0.125f;
  params.meta = {1234, 7};
  const auto bytes = serialize_model(params);
  CHECK(bytes.substr(0, 5) == "SCRM1");
  CHECK(deserialize_model(bytes) == params);
  CHECK(serialize_model(deserialize_model(bytes)) == bytes);
  const auto path = (std::filesystem::temp_directory_path() / "scriptine_model_test.scrm").string();
  save_model(path, params);
  CHECK(load_model(path) == params);
  std::remove(path.c_str());
  CHECK_THROWS(deserialize_model(bytes.substr(0, bytes.size() - 3)));
  CHECK_THROWS(deserialize_model("SCRM0" + bytes.substr(5)));
}

TEST_CASE("codec adaptation") {
  const auto spec = parse_spec("conv=4:3x3,pool=2x2,lstm=6,dropout=0.5");
  RngStream rng(4);
  const auto base = instantiate(spec, 16, Codec(U"abcdefghij"), rng);

  SUBCASE("subset alphabet is a no-op") {
    auto p = base;
    RngStream r(5);
    CHECK(adapt_codec(p, {U"abc", U"j"}, r) == 0);
    CHECK(p == base);
  }
  SUBCASE("two new characters grow the projection 11 to 13") {
    auto p = base;
    RngStream r(5);
    CHECK(adapt_codec(p, {U"abz", U"y"}, r) == 2);
    CHECK(p.codec.chars() == U"abcdefghijyz");
    const auto& w = p.tensors.at("proj.w");
    CHECK(w.shape == std::vector<int>{13, 12});
    CHECK(p.tensors.at("proj.b").shape == std::vector<int>{13});
    const auto& old = base.tensors.at("proj.w").data;
    CHECK(std::equal(old.begin(), old.end(), w.data.begin()));
    CHECK(std::equal(base.ema.at("proj.w").data.begin(), base.ema.at("proj.w").data.end(),
                     p.ema.at("proj.w").data.begin()));
    CHECK(p.ema.at("proj.w") == w);
    for (const auto& [name, t] : base.tensors) {
      if (!name.starts_with("proj")) CHECK(p.tensors.at(name) == t);
    }
    bool nonzero = false;
    for (std::size_t i = old.size(); i < w.data.size(); ++i) nonzero |= w.data[i] != 0.0f;
    CHECK(nonzero);
    CHECK(architecture_of(p).classes == 13);
  }
}
