#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace points::geometry {

/// Tiling configuration. Defaults follow the common 336x336 vision-encoder
/// input with at most 8 tiles and a 1:8 aspect-ratio clamp.
struct TileConfig {
  int max_tiles = 8;
  int tile_h = 336;
  int tile_w = 336;
  bool include_thumbnail = true;
  double max_aspect_ratio = 8.0;

  /// Throws std::invalid_argument if any invariant is violated.
  void validate() const;
};

/// One row of the precomputed aspect-ratio table: a grid shape and the
/// reference resolution it maps to.
struct RatioEntry {
  int cols = 1;
  int rows = 1;
  int ref_w = 0;  // cols * tile_w
  int ref_h = 0;  // rows * tile_h
  double ratio = 1.0;  // ref_w / ref_h

  int total_tiles() const { return cols * rows; }
};

struct TargetSize {
  int target_h = 0;
  int target_w = 0;
};

/// Sliding-window strides in pixels; fractional before origin rounding.
struct Strides {
  double stride_h = 0.0;
  double stride_w = 0.0;
};

enum class TileMode { kCatty, kBaseline };

const char* to_string(TileMode mode);

/// Full geometric plan for splitting one image.
struct TilePlan {
  TileMode mode = TileMode::kCatty;
  RatioEntry entry;
  TargetSize target;
  std::vector<std::pair<int, int>> origins;  // (y, x), row-major grid order
  bool has_thumbnail = false;
  int source_h = 0;
  int source_w = 0;
};

/// All (cols, rows) grids with cols*rows <= max_tiles, sorted by ratio
/// ascending, ties by total tile count ascending.
std::vector<RatioEntry> build_ratio_table(const TileConfig& config);

/// Shrinks the longer side so that the aspect ratio does not exceed
/// config.max_aspect_ratio. Returns (h', w').
std::pair<int, int> clamp_aspect(int h, int w, const TileConfig& config);

/// Entry minimizing |w/h - ratio|. On a distance tie the finer grid wins,
/// but only when the image area exceeds half the candidate's reference
/// area, so small images are not inflated into many tiles.
RatioEntry select_entry(const std::vector<RatioEntry>& table, int h, int w,
                        const TileConfig& config);

/// Aspect-preserving resize target: the short side is scaled to match the
/// reference short side, each dimension floored at the tile dimension.
TargetSize compute_resize(int h, int w, const RatioEntry& entry,
                          const TileConfig& config);

/// stride = (target - tile) / (n - 1) per axis; 0 when the grid has a
/// single tile along that axis.
Strides compute_strides(const TargetSize& target, const RatioEntry& entry,
                        const TileConfig& config);

/// Computes a complete tiling plan for an h x w image.
TilePlan plan_tiles(int h, int w, const TileConfig& config, TileMode mode);

/// Dense 8-bit RGB image, row-major, 3 channels.
struct ImageBuffer {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> data;

  ImageBuffer() = default;
  ImageBuffer(int height, int width)
      : h(height), w(width),
        data(static_cast<std::size_t>(height) * width * 3, 0) {}

  std::uint8_t& at(int y, int x, int c) {
    return data[(static_cast<std::size_t>(y) * w + x) * 3 + c];
  }
  std::uint8_t at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * w + x) * 3 + c];
  }
};

/// Bilinear resize with half-pixel-centered sampling. Resizing to the
/// source size is an exact copy.
ImageBuffer resize_bilinear(const ImageBuffer& src, int out_h, int out_w);

struct TileSet {
  std::vector<ImageBuffer> tiles;  // row-major grid order
  std::optional<ImageBuffer> thumbnail;
};

/// Resizes to the plan target, crops one tile per origin and, when the plan
/// asks for it, appends a thumbnail of the whole image.
/// Throws std::invalid_argument if the image does not match the plan source.
TileSet extract_tiles(const ImageBuffer& image, const TilePlan& plan,
                      const TileConfig& config);

nlohmann::json plan_to_json(const TilePlan& plan);

}  // namespace points::geometry
