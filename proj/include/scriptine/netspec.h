// include/scriptine/netspec.h
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

#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace scriptine {

struct ConvLayer {
  int filters = 0;
  int kernel_h = 0;
  int kernel_w = 0;
  bool operator==(const ConvLayer&) const = default;
};

struct PoolLayer {
  int pool_h = 0;
  int pool_w = 0;
  bool operator==(const PoolLayer&) const = default;
};

// Always bidirectional.
struct LstmLayer {
  int units = 0;
  bool operator==(const LstmLayer&) const = default;
};

struct DropoutLayer {
  double rate = 0.0;
  bool operator==(const DropoutLayer&) const = default;
};

using Layer = std::variant<ConvLayer, PoolLayer, LstmLayer, DropoutLayer>;

struct NetworkSpec {
  std::vector<Layer> layers;
  bool operator==(const NetworkSpec&) const = default;
};

inline constexpr std::string_view kDefSpec =
    "conv=40:3x3,pool=2x2,conv=60:3x3,pool=2x2,lstm=200,dropout=0.5";
inline constexpr std::string_view kDeep3Spec =
    "conv=40:3x3,pool=2x2,conv=60:3x3,pool=2x2,conv=120:3x3,pool=2x2,"
    "lstm=200,lstm=200,lstm=200,dropout=0.5";

// Parses the comma-separated short notation:
//   conv=<filters>:<kh>x<kw>  pool=<ph>x<pw>  lstm=<units>  dropout=<rate>
// Throws ParseError carrying the offending token index.
NetworkSpec parse_spec(std::string_view text);

// Canonical text; parse_spec(format_spec(s)) == s.
std::string format_spec(const NetworkSpec& spec);

}  // namespace scriptine
