#include "points/tensorops.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace points::tensorops {

void FeatureMap::validate() const {
  if (rows < 1 || cols < 1 || channels < 1)
    throw std::invalid_argument("feature map dimensions must be >= 1");
  if (data.size() != static_cast<std::size_t>(rows) * cols * channels)
    throw std::invalid_argument("feature map data length does not match shape");
  for (double v : data)
    if (!std::isfinite(v))
      throw std::invalid_argument("feature map contains non-finite values");
}

FeatureMap pixel_shuffle(const FeatureMap& fm, double factor) {
  fm.validate();
  if (!(factor > 0.0 && factor <= 1.0))
    throw std::invalid_argument("down-sampling factor must be in (0, 1]");
  const int block = static_cast<int>(std::lround(1.0 / std::sqrt(factor)));
  if (block < 1 || std::abs(1.0 / (static_cast<double>(block) * block) - factor) > 1e-9)
    throw std::invalid_argument("factor must equal 1/b^2 for an integer b");
  if (fm.rows % block != 0 || fm.cols % block != 0)
    throw std::invalid_argument("grid " + std::to_string(fm.rows) + "x" +
                                std::to_string(fm.cols) +
                                " is not divisible by block " +
                                std::to_string(block));

  FeatureMap out(fm.rows / block, fm.cols / block,
                 fm.channels * block * block);
  for (int r = 0; r < out.rows; ++r) {
    for (int c = 0; c < out.cols; ++c) {
      int oc = 0;
      for (int br = 0; br < block; ++br)
        for (int bc = 0; bc < block; ++bc)
          for (int ch = 0; ch < fm.channels; ++ch)
            out.at(r, c, oc++) = fm.at(r * block + br, c * block + bc, ch);
    }
  }
  return out;
}

FeatureMap pixel_unshuffle(const FeatureMap& fm, int block) {
  fm.validate();
  if (block < 1) throw std::invalid_argument("block must be >= 1");
  if (fm.channels % (block * block) != 0)
    throw std::invalid_argument("channels not divisible by block^2");

  FeatureMap out(fm.rows * block, fm.cols * block,
                 fm.channels / (block * block));
  for (int r = 0; r < fm.rows; ++r) {
    for (int c = 0; c < fm.cols; ++c) {
      int ic = 0;
      for (int br = 0; br < block; ++br)
        for (int bc = 0; bc < block; ++bc)
          for (int ch = 0; ch < out.channels; ++ch)
            out.at(r * block + br, c * block + bc, ch) = fm.at(r, c, ic++);
    }
  }
  return out;
}

FeatureMap fuse_features(const FeatureMap& general, const FeatureMap& ocr,
                         double alpha) {
  general.validate();
  ocr.validate();
  if (general.rows != ocr.rows || general.cols != ocr.cols ||
      general.channels != ocr.channels)
    throw std::invalid_argument("feature map shape mismatch between encoders");
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw std::invalid_argument("fusion weight must be in [0, 1]");

  FeatureMap out(general.rows, general.cols, general.channels);
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = alpha * general.data[i] + (1.0 - alpha) * ocr.data[i];
  return out;
}

}  // namespace points::tensorops
