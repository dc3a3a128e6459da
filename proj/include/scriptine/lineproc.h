// include/scriptine/lineproc.h
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

#include <string_view>

#include "scriptine/image.h"
#include "scriptine/rng.h"

namespace scriptine {

enum class BinarizeKind { kOtsu, kSauvola, kWolf, kGrayNorm };

struct BinarizeMethod {
  BinarizeKind kind = BinarizeKind::kSauvola;
  int window = 15;  // Sauvola / Wolf, odd and >= 3
  double k = 0.2;

  static BinarizeMethod otsu() { return {BinarizeKind::kOtsu, 0, 0.0}; }
  static BinarizeMethod sauvola(int window = 15, double k = 0.2) { return {BinarizeKind::kSauvola, window, k}; }
  static BinarizeMethod wolf(int window = 15, double k = 0.5) { return {BinarizeKind::kWolf, window, k}; }
  static BinarizeMethod gray_norm() { return {BinarizeKind::kGrayNorm, 0, 0.0}; }
};

// Accepts otsu | sauvola | wolf | graynorm.
BinarizeMethod parse_binarize(std::string_view name);

// Sauvola uses R = 0.5 for the [0, 1] value range. Pixels strictly above the
// local threshold become background (1), all others ink (0). An image with no
// contrast comes back all background.
LineImage binarize(const LineImage& img, const BinarizeMethod& method);

// Histogram bin (0..255) chosen by Otsu's criterion; pixels whose bin is <= the
// returned value are ink. Returns -1 for single-valued images.
int otsu_threshold(const GrayImage& img);

// Bilinear resize to target_h rows, width scaled by the same factor.
LineImage normalize_height(const LineImage& img, int target_h);

// Maximum magnitudes of the augmentation transforms.
struct DegradeConfig {
  double noise_sigma = 0.05;
  double blur_sigma = 1.0;
  double rotation_deg = 2.0;
  double scale_jitter = 0.10;
  double intensity_jitter = 0.10;

  static DegradeConfig none() { return {0.0, 0.0, 0.0, 0.0, 0.0}; }
};

// Random composition of horizontal scale jitter, rotation, Gaussian blur,
// ink-intensity jitter and Gaussian noise, re-clamped to [0, 1]. A pure
// function of (img, rng state).
LineImage degrade(const LineImage& img, RngStream& rng, const DegradeConfig& config = {});

}  // namespace scriptine
