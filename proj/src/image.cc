// src/image.cc
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

#include "scriptine/image.h"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "scriptine/error.h"

namespace scriptine {

GrayImage read_png(const std::string& path) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw InputError("cannot read PNG " + path + ": " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<png_byte> rgb(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, rgb.data(), 0, nullptr)) {
    png_image_free(&png);
    throw InputError("cannot decode PNG " + path + ": " + png.message);
  }
  GrayImage out(static_cast<int>(png.height), static_cast<int>(png.width));
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    const double luma = 0.299 * rgb[3 * i] + 0.587 * rgb[3 * i + 1] + 0.114 * rgb[3 * i + 2];
    out.pixels[i] = static_cast<float>(luma / 255.0);
  }
  return out;
}

void write_png(const std::string& path, const GrayImage& image) {
  std::vector<png_byte> gray(image.pixels.size());
  std::transform(image.pixels.begin(), image.pixels.end(), gray.begin(), [](float v) {
    return static_cast<png_byte>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
  });
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&png, path.c_str(), 0, gray.data(), 0, nullptr)) {
    throw InputError("cannot write PNG " + path + ": " + png.message);
  }
}

}  // namespace scriptine
