// include/scriptine/model.h
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

#include <iosfwd>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "scriptine/netspec.h"
#include "scriptine/rng.h"
#include "scriptine/tensor.h"

namespace scriptine {

// Character table. Output index 0 is the CTC blank; chars[i] is index i + 1.
class Codec {
 public:
  Codec() = default;
  explicit Codec(std::u32string chars);

  // Sorted unique characters of the given texts.
  static Codec from_texts(const std::vector<std::u32string>& texts);

  const std::u32string& chars() const { return chars_; }
  int size() const { return static_cast<int>(chars_.size()); }
  int classes() const { return size() + 1; }

  // Output index of c, or -1.
  int index_of(char32_t c) const;
  bool can_encode(std::u32string_view text) const;
  // Throws InputError naming the first unknown character.
  std::vector<int> encode(std::u32string_view text) const;
  char32_t decode(int index) const { return chars_.at(static_cast<std::size_t>(index - 1)); }

  // Appends characters of `texts` missing from the table; returns how many.
  int extend(const std::vector<std::u32string>& texts);

  bool operator==(const Codec&) const = default;

 private:
  std::u32string chars_;
};

struct TrainMeta {
  long samples_seen = 0;
  int epochs = 0;
  bool operator==(const TrainMeta&) const = default;
};

struct ModelParams {
  NetworkSpec spec;
  Codec codec;
  int input_height = 0;
  TensorSet<float> tensors;
  TensorSet<float> ema;  // evaluation weights
  TrainMeta meta;

  bool operator==(const ModelParams&) const = default;
};

// Resolved layer geometry for one (spec, input height, class count).
struct ConvStage {
  std::string name;
  int in_channels = 0;
  int filters = 0;
  int kernel_h = 0;
  int kernel_w = 0;
  int height = 0;  // input (= output) height
};

struct PoolStage {
  int pool_h = 0;
  int pool_w = 0;
  int in_channels = 0;
  int in_height = 0;
};

struct LstmStage {
  std::string name;
  int input = 0;
  int units = 0;
  double dropout = 0.0;
};

struct Architecture {
  int input_height = 0;
  std::vector<std::variant<ConvStage, PoolStage>> conv_stack;
  int feature_channels = 1;
  int feature_height = 0;
  int feature_dim = 0;
  int width_divisor = 1;
  std::vector<LstmStage> lstms;
  double head_dropout = 0.0;  // dropout before the projection when no LSTM follows
  int projection_input = 0;
  int classes = 0;

  int frames(int width) const { return width / width_divisor; }
};

// Throws ShapeError when input_height is not divisible by the product of the
// pool heights, or when conv/pool layers follow an LSTM.
Architecture plan_architecture(const NetworkSpec& spec, int input_height, int classes);

// Expected tensor shapes by name.
std::map<std::string, std::vector<int>> tensor_shapes(const Architecture& arch);

// Glorot-uniform weights, zero biases (LSTM forget gate bias 1). The EMA
// shadow starts as a copy of the weights.
ModelParams instantiate(const NetworkSpec& spec, int input_height, const Codec& codec, RngStream& rng);

Architecture architecture_of(const ModelParams& params);

// Grows the projection for characters of `texts` missing from the codec.
// Existing rows are copied bit-exactly; new rows are Glorot-initialized from
// `rng` in both the weights and the EMA shadow. Unused characters are kept.
// Returns the number of characters added.
int adapt_codec(ModelParams& params, const std::vector<std::u32string>& texts, RngStream& rng);

// Container format "SCRM1": magic, metadata (spec string, UTF-8 codec, input
// height, samples seen, epochs), then named tensors as little-endian float32
// with explicit shapes; EMA tensors are stored under "ema/<name>".
std::string serialize_model(const ModelParams& params);
ModelParams deserialize_model(std::string_view bytes);
void save_model(const std::string& path, const ModelParams& params);
ModelParams load_model(const std::string& path);

}  // namespace scriptine
