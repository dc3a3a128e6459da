// include/scriptine/pagexml.h
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

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "scriptine/image.h"

namespace scriptine {

struct Point {
  int x = 0;
  int y = 0;
  bool operator==(const Point&) const = default;
};

struct TextLine {
  std::string id;
  std::vector<Point> polygon;
  std::u32string transcription;  // empty = untranscribed
  int reading_order = 0;

  bool operator==(const TextLine&) const = default;
};

struct Page {
  std::string image_ref;
  int width = 0;
  int height = 0;
  std::vector<TextLine> lines;

  bool operator==(const Page&) const = default;
};

enum class Style { kGothic, kBastarda, kMixed };

struct Manuscript {
  Style style = Style::kMixed;
  std::vector<Page> pages;
};

struct Corpus {
  std::map<std::string, Manuscript> manuscripts;
};

inline constexpr std::string_view kPageNamespace =
    "http://schema.primaresearch.org/PAGE/gts/pagecontent/2019-07-15";

// Reads the Page / TextRegion / TextLine / Coords / TextEquiv / Unicode /
// ReadingOrder subset of a PAGE document; every other element is skipped.
// Lines come back in reading order: regions by the ReadingOrder block (falling
// back to document order), lines by their `readingOrder {index:N;}` custom
// attribute (falling back to document order). reading_order is renumbered to
// the line's position.
//
// Throws ParseError (byte offset) for malformed XML and ValidationError for
// geometry that breaks the Page invariants.
Page parse_page(std::string_view xml);

// Emits a 2019-07-15 document with one text region. Lines are written sorted
// by reading_order. Throws ValidationError for invalid pages.
std::string write_page(const Page& page);

void validate_page(const Page& page);

// Stem of image_ref, used as the page id in line keys.
std::string page_id(const Page& page);

// Bounding-box crop of the polygon; pixels outside the polygon become
// background. Pixel centers on the polygon boundary count as inside.
LineImage extract_line_image(const GrayImage& raster, const TextLine& line);

// Even-odd containment with the boundary counted as inside.
bool polygon_contains(const std::vector<Point>& polygon, int x, int y);

struct CorpusCounts {
  int pages = 0;
  int lines = 0;
  int transcribed = 0;
  bool operator==(const CorpusCounts&) const = default;
};

struct CorpusStats {
  std::map<std::string, CorpusCounts> per_manuscript;
  CorpusCounts total;
};

CorpusStats corpus_stats(const Corpus& corpus);

std::string style_name(Style style);
Style parse_style(std::string_view name);

}  // namespace scriptine
