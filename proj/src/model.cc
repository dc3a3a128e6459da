// src/model.cc
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

#include "scriptine/model.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "scriptine/error.h"
#include "scriptine/utf8.h"

namespace scriptine {

Codec::Codec(std::u32string chars) : chars_(std::move(chars)) {
  std::u32string sorted = chars_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ValidationError("codec contains duplicate characters");
  }
}

Codec Codec::from_texts(const std::vector<std::u32string>& texts) {
  std::set<char32_t> seen;
  for (const auto& t : texts) seen.insert(t.begin(), t.end());
  return Codec(std::u32string(seen.begin(), seen.end()));
}

int Codec::index_of(char32_t c) const {
  const auto pos = chars_.find(c);
  return pos == std::u32string::npos ? -1 : static_cast<int>(pos) + 1;
}

bool Codec::can_encode(std::u32string_view text) const {
  return std::all_of(text.begin(), text.end(), [&](char32_t c) { return index_of(c) > 0; });
}

std::vector<int> Codec::encode(std::u32string_view text) const {
  std::vector<int> out;
  out.reserve(text.size());
  for (char32_t c : text) {
    const int idx = index_of(c);
    if (idx < 0) throw InputError("character '" + utf8_encode(c) + "' is not in the codec");
    out.push_back(idx);
  }
  return out;
}

int Codec::extend(const std::vector<std::u32string>& texts) {
  std::set<char32_t> missing;
  for (const auto& t : texts) {
    for (char32_t c : t) {
      if (index_of(c) < 0) missing.insert(c);
    }
  }
  chars_.append(missing.begin(), missing.end());
  return static_cast<int>(missing.size());
}

Architecture plan_architecture(const NetworkSpec& spec, int input_height, int classes) {
  if (spec.layers.empty()) throw ShapeError("network spec has no layers");
  Architecture arch;
  arch.input_height = input_height;
  arch.classes = classes;

  int pool_h_product = 1;
  for (const auto& layer : spec.layers) {
    if (const auto* p = std::get_if<PoolLayer>(&layer)) pool_h_product *= p->pool_h;
  }
  if (input_height < 1 || input_height % pool_h_product != 0) {
    throw ShapeError("input height " + std::to_string(input_height) +
                     " is not divisible by the pool height product " + std::to_string(pool_h_product));
  }

  int channels = 1, height = input_height, conv_index = 0;
  bool seen_lstm = false;
  int feature = 0;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& layer = spec.layers[i];
    if (const auto* c = std::get_if<ConvLayer>(&layer)) {
      if (seen_lstm) throw ShapeError("conv layer after an lstm layer is not supported");
      arch.conv_stack.emplace_back(
          ConvStage{"conv" + std::to_string(conv_index++), channels, c->filters, c->kernel_h, c->kernel_w, height});
      channels = c->filters;
    } else if (const auto* p = std::get_if<PoolLayer>(&layer)) {
      if (seen_lstm) throw ShapeError("pool layer after an lstm layer is not supported");
      arch.conv_stack.emplace_back(PoolStage{p->pool_h, p->pool_w, channels, height});
      height /= p->pool_h;
      arch.width_divisor *= p->pool_w;
    } else if (const auto* l = std::get_if<LstmLayer>(&layer)) {
      if (!seen_lstm) feature = channels * height;
      LstmStage stage;
      stage.name = "lstm" + std::to_string(arch.lstms.size());
      stage.input = arch.lstms.empty() ? channels * height : 2 * arch.lstms.back().units;
      stage.units = l->units;
      // Each LSTM takes the rate of the first dropout token that follows it.
      for (std::size_t j = i + 1; j < spec.layers.size(); ++j) {
        if (const auto* d = std::get_if<DropoutLayer>(&spec.layers[j])) {
          stage.dropout = d->rate;
          break;
        }
      }
      arch.lstms.push_back(stage);
      seen_lstm = true;
    } else if (!seen_lstm) {
      arch.head_dropout = std::get<DropoutLayer>(layer).rate;
    }
  }
  arch.feature_channels = channels;
  arch.feature_height = height;
  arch.feature_dim = seen_lstm ? feature : channels * height;
  arch.projection_input = arch.lstms.empty() ? arch.feature_dim : 2 * arch.lstms.back().units;
  return arch;
}

std::map<std::string, std::vector<int>> tensor_shapes(const Architecture& arch) {
  std::map<std::string, std::vector<int>> shapes;
  for (const auto& stage : arch.conv_stack) {
    if (const auto* c = std::get_if<ConvStage>(&stage)) {
      shapes[c->name + ".w"] = {c->filters, c->in_channels, c->kernel_h, c->kernel_w};
      shapes[c->name + ".b"] = {c->filters};
    }
  }
  for (const auto& l : arch.lstms) {
    for (const char* dir : {".fw", ".bw"}) {
      shapes[l.name + dir + ".wx"] = {4 * l.units, l.input};
      shapes[l.name + dir + ".wh"] = {4 * l.units, l.units};
      shapes[l.name + dir + ".b"] = {4 * l.units};
    }
  }
  shapes["proj.w"] = {arch.classes, arch.projection_input};
  shapes["proj.b"] = {arch.classes};
  return shapes;
}

namespace {

bool is_bias(const std::string& name) { return name.size() >= 2 && name.ends_with(".b"); }

double glorot_limit(const std::vector<int>& shape) {
  double fan_in = 0, fan_out = 0;
  if (shape.size() == 4) {
    const double receptive = static_cast<double>(shape[2]) * shape[3];
    fan_in = shape[1] * receptive;
    fan_out = shape[0] * receptive;
  } else {
    fan_in = shape[1];
    fan_out = shape[0];
  }
  return std::sqrt(6.0 / (fan_in + fan_out));
}

void init_tensor(const std::string& name, Tensor<float>& t, RngStream& rng) {
  if (is_bias(name)) {
    if (name.starts_with("lstm")) {
      const int units = t.shape[0] / 4;
      std::fill(t.data.begin() + units, t.data.begin() + 2 * units, 1.0f);
    }
    return;
  }
  const double limit = glorot_limit(t.shape);
  for (auto& v : t.data) v = static_cast<float>(rng.uniform(-limit, limit));
}

}  // namespace

ModelParams instantiate(const NetworkSpec& spec, int input_height, const Codec& codec, RngStream& rng) {
  const auto arch = plan_architecture(spec, input_height, codec.classes());
  ModelParams params;
  params.spec = spec;
  params.codec = codec;
  params.input_height = input_height;
  for (const auto& [name, shape] : tensor_shapes(arch)) {
    auto t = Tensor<float>::zeros(shape);
    init_tensor(name, t, rng);
    params.tensors.emplace(name, std::move(t));
  }
  params.ema = params.tensors;
  return params;
}

Architecture architecture_of(const ModelParams& params) {
  return plan_architecture(params.spec, params.input_height, params.codec.classes());
}

int adapt_codec(ModelParams& params, const std::vector<std::u32string>& texts, RngStream& rng) {
  const int old_classes = params.codec.classes();
  const int added = params.codec.extend(texts);
  if (added == 0) return 0;
  const int classes = params.codec.classes();
  auto grow = [&](TensorSet<float>& set, RngStream& stream) {
    auto& w = set.at("proj.w");
    auto& b = set.at("proj.b");
    const int cols = w.shape[1];
    w.shape[0] = classes;
    b.shape[0] = classes;
    const double limit = glorot_limit(w.shape);
    w.data.resize(static_cast<std::size_t>(classes) * cols);
    for (std::size_t i = static_cast<std::size_t>(old_classes) * cols; i < w.data.size(); ++i) {
      w.data[i] = static_cast<float>(stream.uniform(-limit, limit));
    }
    b.data.resize(static_cast<std::size_t>(classes), 0.0f);
  };
  RngStream ema_rng = rng;
  grow(params.tensors, rng);
  grow(params.ema, ema_rng);
  return added;
}

namespace {

constexpr std::string_view kMagic = "SCRM1";

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.append(s);
  }
  void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }
  void raw(std::string_view s) { out_.append(s); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    const std::uint64_t lo = u32();
    const std::uint64_t hi = u32();
    return lo | (hi << 32);
  }
  std::string str() {
    const auto n = u32();
    need(n);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string_view raw(std::size_t n) {
    need(n);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw ParseError("model container truncated", pos_);
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

void write_tensor(Writer& w, const std::string& name, const Tensor<float>& t) {
  w.str(name);
  w.u32(static_cast<std::uint32_t>(t.shape.size()));
  for (int d : t.shape) w.u32(static_cast<std::uint32_t>(d));
  for (float v : t.data) w.f32(v);
}

}  // namespace

std::string serialize_model(const ModelParams& params) {
  Writer w;
  w.raw(kMagic);
  w.str(format_spec(params.spec));
  w.str(utf8_encode(params.codec.chars()));
  w.u32(static_cast<std::uint32_t>(params.input_height));
  w.u64(static_cast<std::uint64_t>(params.meta.samples_seen));
  w.u32(static_cast<std::uint32_t>(params.meta.epochs));
  w.u32(static_cast<std::uint32_t>(params.tensors.size() + params.ema.size()));
  for (const auto& [name, t] : params.tensors) write_tensor(w, name, t);
  for (const auto& [name, t] : params.ema) write_tensor(w, "ema/" + name, t);
  return w.take();
}

ModelParams deserialize_model(std::string_view bytes) {
  Reader r(bytes);
  if (r.raw(kMagic.size()) != kMagic) throw ParseError("not a SCRM1 model container", 0);
  ModelParams params;
  params.spec = parse_spec(r.str());
  params.codec = Codec(utf8_decode(r.str()));
  params.input_height = static_cast<int>(r.u32());
  params.meta.samples_seen = static_cast<long>(r.u64());
  params.meta.epochs = static_cast<int>(r.u32());
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    Tensor<float> t;
    t.shape.resize(r.u32());
    for (auto& d : t.shape) d = static_cast<int>(r.u32());
    t.data.resize(Tensor<float>::element_count(t.shape));
    for (auto& v : t.data) v = r.f32();
    if (name.starts_with("ema/")) {
      params.ema.emplace(name.substr(4), std::move(t));
    } else {
      params.tensors.emplace(std::move(name), std::move(t));
    }
  }
  if (!r.done()) throw ParseError("trailing bytes in model container", bytes.size());

  const auto shapes = tensor_shapes(architecture_of(params));
  for (const auto* set : {&params.tensors, &params.ema}) {
    if (set->size() != shapes.size()) throw ShapeError("model container tensor set does not match its spec");
    for (const auto& [name, shape] : shapes) {
      auto it = set->find(name);
      if (it == set->end() || it->second.shape != shape) throw ShapeError("tensor " + name + " has the wrong shape");
    }
  }
  return params;
}

void save_model(const std::string& path, const ModelParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write model " + path);
  const auto bytes = serialize_model(params);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

ModelParams load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read model " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_model(ss.str());
}

}  // namespace scriptine
