#pragma once

#include <vector>

namespace points::tensorops {

/// Dense (rows, cols, channels) feature grid, row-major.
struct FeatureMap {
  int rows = 0;
  int cols = 0;
  int channels = 0;
  std::vector<double> data;

  FeatureMap() = default;
  FeatureMap(int r, int c, int ch)
      : rows(r), cols(c), channels(ch),
        data(static_cast<std::size_t>(r) * c * ch, 0.0) {}

  double& at(int r, int c, int ch) {
    return data[(static_cast<std::size_t>(r) * cols + c) * channels + ch];
  }
  double at(int r, int c, int ch) const {
    return data[(static_cast<std::size_t>(r) * cols + c) * channels + ch];
  }

  /// Throws std::invalid_argument on a size mismatch or non-finite entries.
  void validate() const;
};

/// Space-to-depth rearrangement. factor must be 1/b^2 for integer b and the
/// grid must divide evenly by b. Token count scales by factor, channel
/// width by 1/factor; each output token concatenates its b x b input block
/// in row-major block order.
FeatureMap pixel_shuffle(const FeatureMap& fm, double factor);

/// Inverse of pixel_shuffle with block size b.
FeatureMap pixel_unshuffle(const FeatureMap& fm, int block);

/// Elementwise alpha * general + (1 - alpha) * ocr. Shapes must match.
FeatureMap fuse_features(const FeatureMap& general, const FeatureMap& ocr,
                         double alpha);

}  // namespace points::tensorops
