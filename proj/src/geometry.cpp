#include "points/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace points::geometry {

namespace {
constexpr double kTieEps = 1e-12;
}  // namespace

void TileConfig::validate() const {
  if (max_tiles < 1) throw std::invalid_argument("max_tiles must be >= 1");
  if (tile_h < 1 || tile_w < 1)
    throw std::invalid_argument("tile dimensions must be >= 1");
  if (max_aspect_ratio < 1.0)
    throw std::invalid_argument("max_aspect_ratio must be >= 1");
}

const char* to_string(TileMode mode) {
  return mode == TileMode::kCatty ? "catty" : "baseline";
}

std::vector<RatioEntry> build_ratio_table(const TileConfig& config) {
  config.validate();
  std::vector<RatioEntry> table;
  for (int rows = 1; rows <= config.max_tiles; ++rows) {
    for (int cols = 1; cols <= config.max_tiles; ++cols) {
      if (cols * rows > config.max_tiles) continue;
      RatioEntry e;
      e.cols = cols;
      e.rows = rows;
      e.ref_w = cols * config.tile_w;
      e.ref_h = rows * config.tile_h;
      e.ratio = static_cast<double>(e.ref_w) / e.ref_h;
      table.push_back(e);
    }
  }
  std::sort(table.begin(), table.end(),
            [](const RatioEntry& a, const RatioEntry& b) {
              if (a.ratio != b.ratio) return a.ratio < b.ratio;
              if (a.total_tiles() != b.total_tiles())
                return a.total_tiles() < b.total_tiles();
              return a.cols < b.cols;
            });
  return table;
}

std::pair<int, int> clamp_aspect(int h, int w, const TileConfig& config) {
  config.validate();
  if (h < 1 || w < 1) throw std::invalid_argument("image dimensions must be >= 1");
  const double mar = config.max_aspect_ratio;
  if (w >= h) {
    if (static_cast<double>(w) / h > mar) {
      w = std::max(1, static_cast<int>(std::lround(h * mar)));
    }
  } else {
    if (static_cast<double>(h) / w > mar) {
      h = std::max(1, static_cast<int>(std::lround(w * mar)));
    }
  }
  return {h, w};
}

RatioEntry select_entry(const std::vector<RatioEntry>& table, int h, int w,
                        const TileConfig& config) {
  if (table.empty()) throw std::invalid_argument("ratio table is empty");
  if (h < 1 || w < 1) throw std::invalid_argument("image dimensions must be >= 1");
  const double image_ratio = static_cast<double>(w) / h;
  const double area = static_cast<double>(h) * w;
  const double tile_area =
      static_cast<double>(config.tile_h) * config.tile_w;

  // Candidates in coarse-to-fine order so tied finer grids can displace
  // coarser ones when the area guard allows it.
  std::vector<const RatioEntry*> order;
  order.reserve(table.size());
  for (const RatioEntry& e : table) order.push_back(&e);
  std::sort(order.begin(), order.end(),
            [](const RatioEntry* a, const RatioEntry* b) {
              if (a->total_tiles() != b->total_tiles())
                return a->total_tiles() < b->total_tiles();
              if (a->ratio != b->ratio) return a->ratio < b->ratio;
              return a->cols < b->cols;
            });

  const RatioEntry* best = order.front();
  double best_dist = std::abs(image_ratio - best->ratio);
  for (const RatioEntry* e : order) {
    const double dist = std::abs(image_ratio - e->ratio);
    if (dist < best_dist - kTieEps) {
      best = e;
      best_dist = dist;
    } else if (std::abs(dist - best_dist) <= kTieEps &&
               area > 0.5 * tile_area * e->total_tiles()) {
      best = e;
      best_dist = dist;
    }
  }
  return *best;
}

TargetSize compute_resize(int h, int w, const RatioEntry& entry,
                          const TileConfig& config) {
  const double scale =
      static_cast<double>(std::min(entry.ref_h, entry.ref_w)) / std::min(h, w);
  TargetSize t;
  t.target_h = static_cast<int>(std::lround(scale * h));
  t.target_w = static_cast<int>(std::lround(scale * w));
  t.target_h = std::max(t.target_h, config.tile_h);
  t.target_w = std::max(t.target_w, config.tile_w);
  return t;
}

Strides compute_strides(const TargetSize& target, const RatioEntry& entry,
                        const TileConfig& config) {
  Strides s;
  s.stride_h = entry.rows > 1 ? static_cast<double>(target.target_h - config.tile_h) /
                                    (entry.rows - 1)
                              : 0.0;
  s.stride_w = entry.cols > 1 ? static_cast<double>(target.target_w - config.tile_w) /
                                    (entry.cols - 1)
                              : 0.0;
  return s;
}

TilePlan plan_tiles(int h, int w, const TileConfig& config, TileMode mode) {
  config.validate();
  if (h < 1 || w < 1) throw std::invalid_argument("image dimensions must be >= 1");

  auto [ch, cw] = clamp_aspect(h, w, config);
  const auto table = build_ratio_table(config);
  const RatioEntry entry = select_entry(table, ch, cw, config);

  TilePlan plan;
  plan.mode = mode;
  plan.entry = entry;
  plan.has_thumbnail = config.include_thumbnail;
  plan.source_h = h;
  plan.source_w = w;

  std::vector<int> ys(entry.rows), xs(entry.cols);
  if (mode == TileMode::kCatty) {
    plan.target = compute_resize(ch, cw, entry, config);
    const Strides s = compute_strides(plan.target, entry, config);
    // The last window is clamped flush with the target edge; with a single
    // window the stride is 0, the origin stays at 0 and any sub-tile overhang
    // left by the aspect-preserving resize is cropped away.
    for (int r = 0; r < entry.rows; ++r) {
      ys[r] = entry.rows > 1 && r == entry.rows - 1
                  ? plan.target.target_h - config.tile_h
                  : static_cast<int>(std::lround(r * s.stride_h));
    }
    for (int c = 0; c < entry.cols; ++c) {
      xs[c] = entry.cols > 1 && c == entry.cols - 1
                  ? plan.target.target_w - config.tile_w
                  : static_cast<int>(std::lround(c * s.stride_w));
    }
  } else {
    plan.target = {entry.ref_h, entry.ref_w};
    for (int r = 0; r < entry.rows; ++r) ys[r] = r * config.tile_h;
    for (int c = 0; c < entry.cols; ++c) xs[c] = c * config.tile_w;
  }
  plan.origins.reserve(static_cast<std::size_t>(entry.rows) * entry.cols);
  for (int r = 0; r < entry.rows; ++r)
    for (int c = 0; c < entry.cols; ++c) plan.origins.emplace_back(ys[r], xs[c]);
  return plan;
}

ImageBuffer resize_bilinear(const ImageBuffer& src, int out_h, int out_w) {
  if (src.h < 1 || src.w < 1) throw std::invalid_argument("empty source image");
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("empty resize target");
  if (out_h == src.h && out_w == src.w) return src;

  ImageBuffer out(out_h, out_w);
  const double sy = static_cast<double>(src.h) / out_h;
  const double sx = static_cast<double>(src.w) / out_w;
  for (int y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(src.h - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.h - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(src.w - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.w - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = src.at(y0, x0, c) * (1.0 - wx) + src.at(y0, x1, c) * wx;
        const double bot = src.at(y1, x0, c) * (1.0 - wx) + src.at(y1, x1, c) * wx;
        const double v = top * (1.0 - wy) + bot * wy;
        out.at(y, x, c) =
            static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
      }
    }
  }
  return out;
}

TileSet extract_tiles(const ImageBuffer& image, const TilePlan& plan,
                      const TileConfig& config) {
  if (image.h != plan.source_h || image.w != plan.source_w) {
    throw std::invalid_argument(
        "image dimensions " + std::to_string(image.h) + "x" +
        std::to_string(image.w) + " do not match plan source " +
        std::to_string(plan.source_h) + "x" + std::to_string(plan.source_w));
  }
  const ImageBuffer resized =
      resize_bilinear(image, plan.target.target_h, plan.target.target_w);

  TileSet set;
  set.tiles.reserve(plan.origins.size());
  for (const auto& [oy, ox] : plan.origins) {
    ImageBuffer tile(config.tile_h, config.tile_w);
    for (int y = 0; y < config.tile_h; ++y)
      for (int x = 0; x < config.tile_w; ++x)
        for (int c = 0; c < 3; ++c)
          tile.at(y, x, c) = resized.at(oy + y, ox + x, c);
    set.tiles.push_back(std::move(tile));
  }
  if (plan.has_thumbnail)
    set.thumbnail = resize_bilinear(image, config.tile_h, config.tile_w);
  return set;
}

nlohmann::json plan_to_json(const TilePlan& plan) {
  nlohmann::json j;
  j["mode"] = to_string(plan.mode);
  j["source"] = {{"h", plan.source_h}, {"w", plan.source_w}};
  j["target"] = {{"h", plan.target.target_h}, {"w", plan.target.target_w}};
  j["grid"] = {{"rows", plan.entry.rows}, {"cols", plan.entry.cols}};
  auto origins = nlohmann::json::array();
  for (const auto& [y, x] : plan.origins) origins.push_back({y, x});
  j["origins"] = std::move(origins);
  j["thumbnail"] = plan.has_thumbnail;
  return j;
}

}  // namespace points::geometry
