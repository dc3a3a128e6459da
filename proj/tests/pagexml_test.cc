// tests/pagexml_test.cc
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

#include "oracles.h"
#include "scriptine/error.h"
#include "scriptine/pagexml.h"
#include "scriptine/rng.h"

using namespace scriptine;

namespace {

std::string document(const std::string& body, const std::string& reading_order = "") {
  return "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
         "<PcGts xmlns=\"http://schema.primaresearch.org/PAGE/gts/pagecontent/2019-07-15\">\n"
         "<Metadata><Creator>t</Creator></Metadata>\n"
         "<Page imageFilename=\"scans/p001.png\" imageWidth=\"20\" imageHeight=\"10\">\n" +
         reading_order + body + "</Page></PcGts>\n";
}

std::string line_xml(const std::string& id, const std::string& points, const std::string& text,
                     const std::string& custom = "") {
  std::string s = "<TextLine id=\"" + id + "\"" + (custom.empty() ? "" : " custom=\"" + custom + "\"") + ">";
  s += "<Coords points=\"" + points + "\"/>";
  if (!text.empty()) s += "<TextEquiv><Unicode>" + text + "</Unicode></TextEquiv>";
  return s + "</TextLine>";
}

}  // namespace

TEST_CASE("minimal document") {
  const auto page =
      parse_page(document("<TextRegion id=\"r\">" + line_xml("l1", "0,0 10,0 10,5", "ab") + "</TextRegion>"));
  CHECK(page.image_ref == "scans/p001.png");
  CHECK(page.width == 20);
  CHECK(page.height == 10);
  REQUIRE(page.lines.size() == 1);
  CHECK(page.lines[0].id == "l1");
  CHECK(page.lines[0].transcription == U"ab");
  CHECK(page.lines[0].polygon == std::vector<Point>{{0, 0}, {10, 0}, {10, 5}});
  CHECK(page_id(page) == "p001");
}

TEST_CASE("absent Unicode gives an empty transcription") {
  const auto page =
      parse_page(document("<TextRegion id=\"r\">" + line_xml("l1", "0,0 10,0 10,5", "") + "</TextRegion>"));
  CHECK(page.lines.at(0).transcription.empty());
}

TEST_CASE("line reading order indices override document order") {
  const auto body = "<TextRegion id=\"r\">" + line_xml("second", "0,5 10,5 10,9", "b", "readingOrder {index:1;}") +
                    line_xml("first", "0,0 10,0 10,4", "a", "readingOrder {index:0;}") + "</TextRegion>";
  const auto page = parse_page(document(body));
  REQUIRE(page.lines.size() == 2);
  CHECK(page.lines[0].id == "first");
  CHECK(page.lines[1].id == "second");
  CHECK(page.lines[0].reading_order == 0);
  CHECK(page.lines[1].reading_order == 1);
}

TEST_CASE("region ReadingOrder block orders regions") {
  const auto order =
      "<ReadingOrder><OrderedGroup id=\"g\"><RegionRefIndexed index=\"0\" regionRef=\"top\"/>"
      "<RegionRefIndexed index=\"1\" regionRef=\"bottom\"/></OrderedGroup></ReadingOrder>";
  const auto body = "<TextRegion id=\"bottom\">" + line_xml("b", "0,5 10,5 10,9", "b") + "</TextRegion>" +
                    "<TextRegion id=\"top\">" + line_xml("a", "0,0 10,0 10,4", "a") + "</TextRegion>";
  const auto page = parse_page(document(body, order));
  REQUIRE(page.lines.size() == 2);
  CHECK(page.lines[0].id == "a");
  CHECK(page.lines[1].id == "b");
}

TEST_CASE("old-style Point children") {
  const auto body =
      "<TextRegion id=\"r\"><TextLine id=\"l\"><Coords><Point x=\"0\" y=\"0\"/><Point x=\"3\" y=\"0\"/>"
      "<Point x=\"3\" y=\"3\"/></Coords></TextLine></TextRegion>";
  CHECK(parse_page(document(body)).lines.at(0).polygon.size() == 3);
}

TEST_CASE("malformed XML reports a byte offset") {
  const auto good = document("<TextRegion id=\"r\">" + line_xml("l1", "0,0 10,0 10,5", "ab") + "</TextRegion>");
  const auto cut = good.find("</TextRegion>");
  const auto bad = good.substr(0, cut) + "</TextRegon>" + good.substr(cut + 13);
  try {
    parse_page(bad);
    FAIL("accepted malformed XML");
  } catch (const ParseError& e) {
    CHECK(e.position() > 0);
    CHECK(e.position() <= bad.size());
    CHECK(e.position() >= cut);
  }
  CHECK_THROWS_AS(parse_page("<notpage/>"), ParseError);
  CHECK_THROWS_AS(parse_page(""), ParseError);
}

TEST_CASE("short polygon names the line") {
  try {
    parse_page(document("<TextRegion id=\"r\">" + line_xml("bad-line", "0,0 10,0", "ab") + "</TextRegion>"));
    FAIL("accepted a two-point polygon");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("bad-line") != std::string::npos);
  }
  CHECK_THROWS_AS(
      parse_page(document("<TextRegion id=\"r\">" + line_xml("x", "0,0 30,0 30,5", "ab") + "</TextRegion>")),
      ValidationError);
}

TEST_CASE("write and parse round-trip") {
  Page page{"p.png", 40, 30, {}};
  CHECK(parse_page(write_page(page)) == page);
  page.lines.push_back({"a", {{0, 0}, {39, 0}, {39, 9}}, U"ſæ & <x>", 0});
  page.lines.push_back({"b", {{0, 10}, {39, 10}, {39, 19}, {0, 19}}, U"", 1});
  page.lines.push_back({"c", {{1, 20}, {38, 20}, {38, 29}}, U"vnᷓ \"q\"", 2});
  const auto xml = write_page(page);
  CHECK(xml.find("ſ") != std::string::npos);
  CHECK(parse_page(xml) == page);
  CHECK(write_page(parse_page(xml)) == xml);
}

TEST_CASE("round-trip over generated pages") {
  RngStream rng(31);
  const std::u32string alphabet = U"abſæ .ᷓ<&";
  for (int n = 0; n < 100; ++n) {
    Page page{"img" + std::to_string(n) + ".png", 10 + static_cast<int>(rng.index(100)),
              10 + static_cast<int>(rng.index(100)), {}};
    const auto lines = rng.index(6);
    for (std::size_t l = 0; l < lines; ++l) {
      TextLine line{"l" + std::to_string(l), {}, {}, static_cast<int>(l)};
      const auto pts = 3 + rng.index(4);
      for (std::size_t p = 0; p < pts; ++p) {
        line.polygon.push_back({static_cast<int>(rng.index(page.width)), static_cast<int>(rng.index(page.height))});
      }
      const auto len = rng.index(8);
      for (std::size_t c = 0; c < len; ++c) line.transcription.push_back(alphabet[rng.index(alphabet.size())]);
      page.lines.push_back(line);
    }
    REQUIRE(parse_page(write_page(page)) == page);
  }
}

TEST_CASE("write rejects invalid pages") {
  CHECK_THROWS_AS(write_page(Page{"p.png", 0, 10, {}}), ValidationError);
  Page dup{"p.png", 10, 10, {{"a", {{0, 0}, {1, 0}, {1, 1}}, U"", 0}, {"b", {{0, 0}, {1, 0}, {1, 1}}, U"", 0}}};
  CHECK_THROWS_AS(write_page(dup), ValidationError);
}

TEST_CASE("line extraction") {
  GrayImage raster(10, 20);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 20; ++x) raster.at(y, x) = static_cast<float>((x + y) % 7) / 7.0f;

  SUBCASE("full-page rectangle is the identity") {
    const auto img = extract_line_image(raster, {"l", {{0, 0}, {19, 0}, {19, 9}, {0, 9}}, U"", 0});
    CHECK(img.pixels == raster);
  }
  SUBCASE("one pixel tall") {
    const auto img = extract_line_image(raster, {"l", {{2, 4}, {12, 4}, {7, 4}}, U"", 0});
    CHECK(img.height() == 1);
    CHECK(img.width() == 11);
  }
  SUBCASE("out of bounds") {
    CHECK_THROWS_AS(extract_line_image(raster, {"l", {{0, 0}, {20, 0}, {0, 5}}, U"", 0}), BoundsError);
  }
}

TEST_CASE("triangle mask matches the cross-product oracle") {
  GrayImage black(40, 40, 0.0f);
  RngStream rng(32);
  for (int n = 0; n < 50; ++n) {
    std::vector<Point> tri;
    for (int k = 0; k < 3; ++k) tri.push_back({static_cast<int>(rng.index(40)), static_cast<int>(rng.index(40))});
    const auto img = extract_line_image(black, {"t", tri, U"", 0});
    int x0 = 40, y0 = 40, x1 = 0, y1 = 0;
    for (const auto& p : tri) {
      x0 = std::min(x0, p.x);
      y0 = std::min(y0, p.y);
      x1 = std::max(x1, p.x);
      y1 = std::max(y1, p.y);
    }
    REQUIRE(img.width() == x1 - x0 + 1);
    REQUIRE(img.height() == y1 - y0 + 1);
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) {
        const float expected = oracle::in_triangle(tri, x + x0, y + y0) ? 0.0f : 1.0f;
        REQUIRE(img.pixels.at(y, x) == expected);
      }
    }
  }
}

TEST_CASE("corpus stats") {
  CHECK(corpus_stats(Corpus{}).per_manuscript.empty());
  Corpus corpus;
  for (const char* name : {"m1", "m2"}) {
    Manuscript ms;
    for (int p = 0; p < 3; ++p) {
      Page page{"p.png", 10, 10, {}};
      for (int l = 0; l < 10; ++l) page.lines.push_back({"l", {{0, 0}, {1, 0}, {1, 1}}, U"x", l});
      ms.pages.push_back(page);
    }
    corpus.manuscripts[name] = ms;
  }
  auto stats = corpus_stats(corpus);
  CHECK(stats.per_manuscript.at("m1") == CorpusCounts{3, 30, 30});
  CHECK(stats.total == CorpusCounts{6, 60, 60});
  corpus.manuscripts["m2"].pages[0].lines[0].transcription.clear();
  stats = corpus_stats(corpus);
  CHECK(stats.total.transcribed == 59);
  CHECK(stats.per_manuscript.at("m2").transcribed == 29);
}

TEST_CASE("style names") {
  CHECK(parse_style("gothic") == Style::kGothic);
  CHECK(style_name(Style::kBastarda) == "bastarda");
  CHECK_THROWS(parse_style("uncial"));
}
