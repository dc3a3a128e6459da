// src/pagexml.cc
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

#include "scriptine/pagexml.h"

#include <expat.h>

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <memory>
#include <optional>

#include "scriptine/error.h"
#include "scriptine/utf8.h"

namespace scriptine {

namespace {

constexpr std::string_view kPageNamespacePrefix = "http://schema.primaresearch.org/PAGE/gts/pagecontent/";

struct RawLine {
  TextLine line;
  std::optional<int> custom_index;
  bool has_text = false;
};

struct RawRegion {
  std::string id;
  std::optional<int> custom_index;
  std::vector<RawLine> lines;
};

struct ParseState {
  XML_Parser parser = nullptr;
  std::vector<std::string> stack;  // local names
  bool saw_root = false;
  Page page;
  std::vector<RawRegion> regions;
  std::vector<std::size_t> region_stack;
  std::map<std::string, int> region_order;  // regionRef -> index
  int next_ref_position = 0;
  RawLine* current_line = nullptr;
  bool in_line_unicode = false;
  std::string unicode_text;
  std::string error;
  bool invalid = false;
};

std::string_view local_name(std::string_view qualified) {
  const auto bar = qualified.rfind('|');
  return bar == std::string_view::npos ? qualified : qualified.substr(bar + 1);
}

std::optional<std::string_view> attr(const XML_Char** atts, std::string_view name) {
  for (int i = 0; atts[i] != nullptr; i += 2) {
    if (local_name(atts[i]) == name) return std::string_view(atts[i + 1]);
  }
  return std::nullopt;
}

std::optional<int> to_int(std::string_view s) {
  int v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || end != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<int> custom_reading_index(std::optional<std::string_view> custom) {
  if (!custom) return std::nullopt;
  const auto pos = custom->find("readingOrder");
  if (pos == std::string_view::npos) return std::nullopt;
  const auto idx = custom->find("index:", pos);
  if (idx == std::string_view::npos) return std::nullopt;
  auto rest = custom->substr(idx + 6);
  const auto end = rest.find_first_of(";}");
  return to_int(rest.substr(0, end));
}

std::vector<Point> parse_points(std::string_view s, const std::string& line_id) {
  std::vector<Point> points;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\n' || s[i] == '\r')) ++i;
    if (i >= s.size()) break;
    auto end = s.find_first_of(" \t\n\r", i);
    if (end == std::string_view::npos) end = s.size();
    const auto pair = s.substr(i, end - i);
    const auto comma = pair.find(',');
    std::optional<int> x, y;
    if (comma != std::string_view::npos) {
      x = to_int(pair.substr(0, comma));
      y = to_int(pair.substr(comma + 1));
    }
    if (!x || !y) throw ValidationError("line " + line_id + ": malformed point '" + std::string(pair) + "'");
    points.push_back({*x, *y});
    i = end;
  }
  return points;
}

void on_start(void* data, const XML_Char* qname, const XML_Char** atts) {
  auto& st = *static_cast<ParseState*>(data);
  if (st.invalid) return;
  const std::string_view qualified(qname);
  const auto name = local_name(qualified);
  const std::string_view parent = st.stack.empty() ? std::string_view() : std::string_view(st.stack.back());

  if (!st.saw_root) {
    st.saw_root = true;
    const auto bar = qualified.rfind('|');
    const auto ns = bar == std::string_view::npos ? std::string_view() : qualified.substr(0, bar);
    if (name != "PcGts" || ns.substr(0, kPageNamespacePrefix.size()) != kPageNamespacePrefix) {
      st.error = "root element is not a PAGE PcGts element";
      st.invalid = true;
      XML_StopParser(st.parser, XML_FALSE);
      return;
    }
  }

  try {
    if (name == "Page") {
      st.page.image_ref = std::string(attr(atts, "imageFilename").value_or(""));
      st.page.width = to_int(attr(atts, "imageWidth").value_or("")).value_or(0);
      st.page.height = to_int(attr(atts, "imageHeight").value_or("")).value_or(0);
    } else if (name == "RegionRefIndexed" || name == "RegionRef") {
      if (auto ref = attr(atts, "regionRef")) {
        int index = st.next_ref_position++;
        if (name == "RegionRefIndexed") {
          index = to_int(attr(atts, "index").value_or("")).value_or(index);
        }
        st.region_order.emplace(std::string(*ref), index);
      }
    } else if (name == "TextRegion") {
      RawRegion region;
      region.id = std::string(attr(atts, "id").value_or(""));
      region.custom_index = custom_reading_index(attr(atts, "custom"));
      st.regions.push_back(std::move(region));
      st.region_stack.push_back(st.regions.size() - 1);
    } else if (name == "TextLine" && !st.region_stack.empty()) {
      auto& region = st.regions[st.region_stack.back()];
      RawLine line;
      line.line.id = std::string(attr(atts, "id").value_or(""));
      line.custom_index = custom_reading_index(attr(atts, "custom"));
      region.lines.push_back(std::move(line));
      st.current_line = &region.lines.back();
    } else if (name == "Coords" && parent == "TextLine" && st.current_line) {
      if (auto points = attr(atts, "points")) {
        st.current_line->line.polygon = parse_points(*points, st.current_line->line.id);
      }
    } else if (name == "Point" && st.stack.size() >= 2 && parent == "Coords" &&
               st.stack[st.stack.size() - 2] == "TextLine" && st.current_line) {
      // Pre-2013 documents list coordinates as Point children.
      const auto x = to_int(attr(atts, "x").value_or(""));
      const auto y = to_int(attr(atts, "y").value_or(""));
      if (!x || !y) throw ValidationError("line " + st.current_line->line.id + ": malformed Point");
      st.current_line->line.polygon.push_back({*x, *y});
    } else if (name == "Unicode" && parent == "TextEquiv" && st.stack.size() >= 2 &&
               st.stack[st.stack.size() - 2] == "TextLine" && st.current_line &&
               !st.current_line->has_text) {
      st.in_line_unicode = true;
      st.unicode_text.clear();
    }
  } catch (const ValidationError& e) {
    st.error = e.what();
    st.invalid = true;
    XML_StopParser(st.parser, XML_FALSE);
    return;
  }
  st.stack.emplace_back(name);
}

void on_end(void* data, const XML_Char* qname) {
  auto& st = *static_cast<ParseState*>(data);
  if (st.invalid) return;
  const auto name = local_name(qname);
  if (name == "Unicode" && st.in_line_unicode) {
    st.in_line_unicode = false;
    st.current_line->has_text = true;
    st.current_line->line.transcription = utf8_decode(st.unicode_text);
  } else if (name == "TextLine") {
    st.current_line = nullptr;
  } else if (name == "TextRegion" && !st.region_stack.empty()) {
    st.region_stack.pop_back();
  }
  if (!st.stack.empty()) st.stack.pop_back();
}

void on_text(void* data, const XML_Char* s, int len) {
  auto& st = *static_cast<ParseState*>(data);
  if (st.in_line_unicode) st.unicode_text.append(s, static_cast<std::size_t>(len));
}

std::string xml_escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string format_points(const std::vector<Point>& points) {
  std::string out;
  for (const auto& p : points) {
    if (!out.empty()) out += ' ';
    out += std::to_string(p.x) + ',' + std::to_string(p.y);
  }
  return out;
}

}  // namespace

void validate_page(const Page& page) {
  if (page.width <= 0 || page.height <= 0) {
    throw ValidationError("page " + page.image_ref + ": width and height must be positive");
  }
  std::vector<int> orders;
  for (const auto& line : page.lines) {
    if (line.polygon.size() < 3) {
      throw ValidationError("line " + line.id + ": polygon needs at least 3 points");
    }
    for (const auto& p : line.polygon) {
      if (p.x < 0 || p.y < 0 || p.x >= page.width || p.y >= page.height) {
        throw ValidationError("line " + line.id + ": point " + std::to_string(p.x) + "," +
                              std::to_string(p.y) + " outside the page");
      }
    }
    orders.push_back(line.reading_order);
  }
  std::sort(orders.begin(), orders.end());
  if (std::adjacent_find(orders.begin(), orders.end()) != orders.end()) {
    throw ValidationError("page " + page.image_ref + ": duplicate reading order index");
  }
}

Page parse_page(std::string_view xml) {
  ParseState st;
  std::unique_ptr<std::remove_pointer_t<XML_Parser>, decltype(&XML_ParserFree)> parser(
      XML_ParserCreateNS("UTF-8", '|'), &XML_ParserFree);
  st.parser = parser.get();
  XML_SetUserData(st.parser, &st);
  XML_SetElementHandler(st.parser, on_start, on_end);
  XML_SetCharacterDataHandler(st.parser, on_text);
  const auto status = XML_Parse(st.parser, xml.data(), static_cast<int>(xml.size()), XML_TRUE);
  const auto offset = static_cast<std::size_t>(std::max<XML_Index>(0, XML_GetCurrentByteIndex(st.parser)));
  if (st.invalid) {
    if (st.error.rfind("line ", 0) == 0) throw ValidationError(st.error);
    throw ParseError(st.error, offset);
  }
  if (status != XML_STATUS_OK) {
    throw ParseError(std::string("malformed XML at byte ") + std::to_string(offset) + ": " +
                         XML_ErrorString(XML_GetErrorCode(st.parser)),
                     offset);
  }
  if (!st.saw_root) throw ParseError("empty document", 0);

  // Regions: explicit reading order first, then document order.
  std::vector<std::size_t> region_idx(st.regions.size());
  for (std::size_t i = 0; i < region_idx.size(); ++i) region_idx[i] = i;
  auto region_key = [&](std::size_t i) {
    const auto& r = st.regions[i];
    if (auto it = st.region_order.find(r.id); it != st.region_order.end()) return std::pair{0, it->second};
    if (r.custom_index) return std::pair{1, *r.custom_index};
    return std::pair{2, 0};
  };
  std::stable_sort(region_idx.begin(), region_idx.end(),
                   [&](std::size_t a, std::size_t b) { return region_key(a) < region_key(b); });

  Page page = std::move(st.page);
  for (auto ri : region_idx) {
    auto& lines = st.regions[ri].lines;
    const bool indexed = std::all_of(lines.begin(), lines.end(), [](const RawLine& l) { return l.custom_index.has_value(); });
    if (indexed) {
      std::stable_sort(lines.begin(), lines.end(),
                       [](const RawLine& a, const RawLine& b) { return *a.custom_index < *b.custom_index; });
    }
    for (auto& raw : lines) {
      raw.line.reading_order = static_cast<int>(page.lines.size());
      page.lines.push_back(std::move(raw.line));
    }
  }
  validate_page(page);
  return page;
}

std::string write_page(const Page& page) {
  validate_page(page);
  std::vector<const TextLine*> lines;
  for (const auto& l : page.lines) lines.push_back(&l);
  std::stable_sort(lines.begin(), lines.end(),
                   [](const TextLine* a, const TextLine* b) { return a->reading_order < b->reading_order; });

  std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<PcGts xmlns=\"" + std::string(kPageNamespace) + "\">\n";
  out += "  <Page imageFilename=\"" + xml_escape(page.image_ref) + "\" imageWidth=\"" +
         std::to_string(page.width) + "\" imageHeight=\"" + std::to_string(page.height) + "\">\n";
  if (!lines.empty()) {
    int x0 = page.width, y0 = page.height, x1 = 0, y1 = 0;
    for (const auto* l : lines) {
      for (const auto& p : l->polygon) {
        x0 = std::min(x0, p.x), y0 = std::min(y0, p.y);
        x1 = std::max(x1, p.x), y1 = std::max(y1, p.y);
      }
    }
    out += "    <ReadingOrder>\n      <OrderedGroup id=\"ro0\">\n";
    out += "        <RegionRefIndexed index=\"0\" regionRef=\"r0\"/>\n";
    out += "      </OrderedGroup>\n    </ReadingOrder>\n";
    out += "    <TextRegion id=\"r0\">\n";
    out += "      <Coords points=\"" +
           format_points({{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}) + "\"/>\n";
    for (const auto* l : lines) {
      out += "      <TextLine id=\"" + xml_escape(l->id) + "\" custom=\"readingOrder {index:" +
             std::to_string(l->reading_order) + ";}\">\n";
      out += "        <Coords points=\"" + format_points(l->polygon) + "\"/>\n";
      if (!l->transcription.empty()) {
        out += "        <TextEquiv>\n          <Unicode>" + xml_escape(utf8_encode(l->transcription)) +
               "</Unicode>\n        </TextEquiv>\n";
      }
      out += "      </TextLine>\n";
    }
    out += "    </TextRegion>\n";
  }
  out += "  </Page>\n</PcGts>\n";
  return out;
}

std::string page_id(const Page& page) {
  return std::filesystem::path(page.image_ref).stem().string();
}

bool polygon_contains(const std::vector<Point>& polygon, int x, int y) {
  const std::size_t n = polygon.size();
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const auto& a = polygon[j];
    const auto& b = polygon[i];
    // On-edge test with integer arithmetic.
    const long cross = static_cast<long>(b.x - a.x) * (y - a.y) - static_cast<long>(b.y - a.y) * (x - a.x);
    if (cross == 0 && x >= std::min(a.x, b.x) && x <= std::max(a.x, b.x) && y >= std::min(a.y, b.y) &&
        y <= std::max(a.y, b.y)) {
      return true;
    }
    if ((a.y > y) != (b.y > y)) {
      const double xs = a.x + static_cast<double>(y - a.y) * (b.x - a.x) / static_cast<double>(b.y - a.y);
      if (x < xs) inside = !inside;
    }
  }
  return inside;
}

LineImage extract_line_image(const GrayImage& raster, const TextLine& line) {
  if (line.polygon.size() < 3) throw ValidationError("line " + line.id + ": polygon needs at least 3 points");
  int x0 = raster.width, y0 = raster.height, x1 = -1, y1 = -1;
  for (const auto& p : line.polygon) {
    if (p.x < 0 || p.y < 0 || p.x >= raster.width || p.y >= raster.height) {
      throw BoundsError("line " + line.id + ": polygon point " + std::to_string(p.x) + "," +
                        std::to_string(p.y) + " outside the " + std::to_string(raster.width) + "x" +
                        std::to_string(raster.height) + " raster");
    }
    x0 = std::min(x0, p.x), y0 = std::min(y0, p.y);
    x1 = std::max(x1, p.x), y1 = std::max(y1, p.y);
  }
  LineImage out;
  out.source.line = line.id;
  out.pixels = GrayImage(y1 - y0 + 1, x1 - x0 + 1, 1.0f);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      if (polygon_contains(line.polygon, x, y)) out.pixels.at(y - y0, x - x0) = raster.at(y, x);
    }
  }
  return out;
}

CorpusStats corpus_stats(const Corpus& corpus) {
  CorpusStats stats;
  for (const auto& [id, ms] : corpus.manuscripts) {
    CorpusCounts row;
    row.pages = static_cast<int>(ms.pages.size());
    for (const auto& page : ms.pages) {
      row.lines += static_cast<int>(page.lines.size());
      for (const auto& line : page.lines) row.transcribed += line.transcription.empty() ? 0 : 1;
    }
    stats.per_manuscript[id] = row;
    stats.total.pages += row.pages;
    stats.total.lines += row.lines;
    stats.total.transcribed += row.transcribed;
  }
  return stats;
}

std::string style_name(Style style) {
  switch (style) {
    case Style::kGothic: return "gothic";
    case Style::kBastarda: return "bastarda";
    default: return "mixed";
  }
}

Style parse_style(std::string_view name) {
  if (name == "gothic" || name == "A" || name == "a") return Style::kGothic;
  if (name == "bastarda" || name == "B" || name == "b") return Style::kBastarda;
  if (name == "mixed") return Style::kMixed;
  throw InputError("unknown style '" + std::string(name) + "'");
}

}  // namespace scriptine
