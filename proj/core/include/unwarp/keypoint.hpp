#pragma once

namespace unwarp {

struct Keypoint {
  double x = 0;            // px
  double y = 0;            // px
  double scale = 1;        // px
  double orientation = 0;  // radians
  double score = 0;

  bool operator==(const Keypoint&) const = default;
};

}  // namespace unwarp
