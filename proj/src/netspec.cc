// src/netspec.cc
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

#include "scriptine/netspec.h"

#include <array>
#include <charconv>
#include <cmath>

#include "scriptine/error.h"

namespace scriptine {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void fail(std::size_t token, const std::string& what) {
  throw ParseError("network spec token " + std::to_string(token) + ": " + what, token);
}

int parse_int(std::string_view s, std::size_t token) {
  int value = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (s.empty() || ec != std::errc() || end != s.data() + s.size()) {
    fail(token, "malformed integer '" + std::string(s) + "'");
  }
  return value;
}

double parse_float(std::string_view s, std::size_t token) {
  double value = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (s.empty() || ec != std::errc() || end != s.data() + s.size() || !std::isfinite(value)) {
    fail(token, "malformed number '" + std::string(s) + "'");
  }
  return value;
}

std::pair<int, int> parse_dims(std::string_view s, std::size_t token) {
  const auto x = s.find('x');
  if (x == std::string_view::npos) fail(token, "expected <int>x<int>, got '" + std::string(s) + "'");
  return {parse_int(s.substr(0, x), token), parse_int(s.substr(x + 1), token)};
}

// Keys the grammar knows about but this build does not model.
constexpr std::array<std::string_view, 6> kUnsupportedKeys = {"tconv", "concat", "bn", "dilconv",
                                                              "stride", "activation"};

Layer parse_token(std::string_view tok, std::size_t index) {
  const auto eq = tok.find('=');
  const auto key = tok.substr(0, eq);
  for (auto k : kUnsupportedKeys) {
    if (key == k) fail(index, "unsupported profile: '" + std::string(key) + "'");
  }
  if (eq == std::string_view::npos) fail(index, "unknown token '" + std::string(tok) + "'");
  const auto value = tok.substr(eq + 1);
  if (key == "conv") {
    const auto colon = value.find(':');
    if (colon == std::string_view::npos) fail(index, "expected conv=<filters>:<kh>x<kw>");
    if (value.find(':', colon + 1) != std::string_view::npos) {
      fail(index, "unsupported profile: conv strides/extensions are not supported");
    }
    const int filters = parse_int(value.substr(0, colon), index);
    const auto [kh, kw] = parse_dims(value.substr(colon + 1), index);
    if (filters < 1) fail(index, "conv filters must be >= 1");
    if (kh < 1 || kw < 1) fail(index, "conv kernel dims must be >= 1");
    return ConvLayer{filters, kh, kw};
  }
  if (key == "pool") {
    if (value.find(':') != std::string_view::npos) {
      fail(index, "unsupported profile: pool strides are not supported");
    }
    const auto [ph, pw] = parse_dims(value, index);
    if (ph < 1 || pw < 1) fail(index, "pool dims must be >= 1");
    return PoolLayer{ph, pw};
  }
  if (key == "lstm") {
    const int units = parse_int(value, index);
    if (units < 1) fail(index, "lstm units must be >= 1");
    return LstmLayer{units};
  }
  if (key == "dropout") {
    const double rate = parse_float(value, index);
    if (rate < 0.0 || rate >= 1.0) fail(index, "dropout rate must be in [0, 1)");
    return DropoutLayer{rate};
  }
  fail(index, "unknown token '" + std::string(tok) + "'");
}

}  // namespace

NetworkSpec parse_spec(std::string_view text) {
  NetworkSpec spec;
  if (trim(text).empty()) fail(0, "empty spec");
  std::size_t index = 0;
  std::size_t start = 0;
  while (true) {
    const auto comma = text.find(',', start);
    const auto tok = trim(text.substr(start, comma == std::string_view::npos ? text.npos : comma - start));
    if (tok.empty()) fail(index, "empty token");
    spec.layers.push_back(parse_token(tok, index));
    const bool after_lstm = index > 0 && std::holds_alternative<LstmLayer>(spec.layers[index - 1]);
    if (std::holds_alternative<DropoutLayer>(spec.layers.back()) && !after_lstm &&
        comma != std::string_view::npos) {
      fail(index, "dropout must follow an lstm or end the spec");
    }
    ++index;
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return spec;
}

std::string format_spec(const NetworkSpec& spec) {
  std::string out;
  for (const auto& layer : spec.layers) {
    if (!out.empty()) out += ',';
    if (const auto* c = std::get_if<ConvLayer>(&layer)) {
      out += "conv=" + std::to_string(c->filters) + ':' + std::to_string(c->kernel_h) + 'x' +
             std::to_string(c->kernel_w);
    } else if (const auto* p = std::get_if<PoolLayer>(&layer)) {
      out += "pool=" + std::to_string(p->pool_h) + 'x' + std::to_string(p->pool_w);
    } else if (const auto* l = std::get_if<LstmLayer>(&layer)) {
      out += "lstm=" + std::to_string(l->units);
    } else {
      char buf[32];
      const auto rate = std::get<DropoutLayer>(layer).rate;
      const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), rate);
      out += "dropout=";
      out.append(buf, end);
      // Keep a decimal point so the token reads as a rate ("0.0", not "0").
      if (std::string_view(buf, end - buf).find_first_of(".e") == std::string_view::npos) out += ".0";
    }
  }
  return out;
}

}  // namespace scriptine
