// include/scriptine/image.h
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
#include <vector>

namespace scriptine {

// Grayscale raster with values in [0, 1]; 0 is ink, 1 is background.
struct GrayImage {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;  // row-major

  GrayImage() = default;
  GrayImage(int h, int w, float fill = 1.0f) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, fill) {}

  float at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  float& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool empty() const { return pixels.empty(); }

  bool operator==(const GrayImage&) const = default;
};

struct SourceId {
  std::string manuscript;
  std::string page;
  std::string line;

  std::string key() const { return manuscript + "/" + page + "/" + line; }
  bool operator==(const SourceId&) const = default;
};

struct LineImage {
  GrayImage pixels;
  SourceId source;

  int height() const { return pixels.height; }
  int width() const { return pixels.width; }
};

// 8-bit gray, gray+alpha, RGB or RGBA PNG; color is reduced to luma with
// BT.601 weights. Throws InputError on unreadable files.
GrayImage read_png(const std::string& path);
// 8-bit grayscale output.
void write_png(const std::string& path, const GrayImage& image);

}  // namespace scriptine
