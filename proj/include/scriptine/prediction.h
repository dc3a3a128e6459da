// include/scriptine/prediction.h
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

// Decoded line: one confidence and one frame index per emitted character.
struct Prediction {
  std::u32string chars;
  std::vector<double> confidences;
  std::vector<int> positions;
  std::string line_ref;

  bool operator==(const Prediction&) const = default;
};

}  // namespace scriptine
