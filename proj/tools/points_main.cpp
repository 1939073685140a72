// points: deterministic data-pipeline and checkpoint toolkit.
//
// Subcommands: tile, filter, soup, fuse, shuffle, balance.
// Exit codes: 0 success, 1 usage error, 2 data error, 3 eval-hook failure.

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "points/corpus.hpp"
#include "points/geometry.hpp"
#include "points/ppl.hpp"
#include "points/soup.hpp"
#include "points/tensorio.hpp"
#include "points/tensorops.hpp"

#ifdef POINTS_HAVE_OPENCV
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#endif

namespace fs = std::filesystem;

namespace {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_text_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw DataError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

int resolve_workers(int flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("POINTS_WORKERS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

#ifdef POINTS_HAVE_OPENCV
points::geometry::ImageBuffer load_image(const fs::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw DataError("cannot decode image: " + path.string());
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  points::geometry::ImageBuffer img(rgb.rows, rgb.cols);
  for (int y = 0; y < rgb.rows; ++y) {
    const auto* row = rgb.ptr<std::uint8_t>(y);
    std::copy(row, row + static_cast<std::size_t>(rgb.cols) * 3,
              img.data.begin() + static_cast<std::size_t>(y) * rgb.cols * 3);
  }
  return img;
}

void save_png(const points::geometry::ImageBuffer& img, const fs::path& path) {
  cv::Mat rgb(img.h, img.w, CV_8UC3,
              const_cast<std::uint8_t*>(img.data.data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  if (!cv::imwrite(path.string(), bgr))
    throw DataError("cannot write image: " + path.string());
}
#endif

// ---- tile ----------------------------------------------------------------

struct TileArgs {
  int height = 0, width = 0;
  std::string image;
  points::geometry::TileConfig config;
  std::string mode = "catty";
  std::string plan_out;
  std::string tiles_out;
};

int run_tile(const TileArgs& a) {
  using namespace points::geometry;
  int h = a.height, w = a.width;

#ifdef POINTS_HAVE_OPENCV
  ImageBuffer img;
  if (!a.image.empty()) {
    img = load_image(a.image);
    h = img.h;
    w = img.w;
  }
#else
  if (!a.image.empty())
    throw DataError("this build has no image codec support; pass --height/--width");
#endif
  if (h < 1 || w < 1)
    throw DataError("pass --height and --width (or --image)");

  const TileMode mode =
      a.mode == "baseline" ? TileMode::kBaseline : TileMode::kCatty;
  const TilePlan plan = plan_tiles(h, w, a.config, mode);

  if (!a.plan_out.empty())
    write_text_atomic(a.plan_out, plan_to_json(plan).dump(2) + "\n");
  else
    std::cout << plan_to_json(plan).dump(2) << "\n";

#ifdef POINTS_HAVE_OPENCV
  if (!a.tiles_out.empty()) {
    if (a.image.empty()) throw DataError("--tiles-out requires --image");
    fs::create_directories(a.tiles_out);
    const TileSet set = extract_tiles(img, plan, a.config);
    for (std::size_t i = 0; i < set.tiles.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "tile_%03zu.png", i);
      save_png(set.tiles[i], fs::path(a.tiles_out) / name);
    }
    if (set.thumbnail)
      save_png(*set.thumbnail, fs::path(a.tiles_out) / "thumbnail.png");
  }
#endif
  return 0;
}

// ---- filter --------------------------------------------------------------

struct FilterArgs {
  std::string in, out, scored_out;
  double keep = 0.2;
  std::string scorer = "ngram";
  int order = 2;
  double alpha = 1.0;
  bool char_tokens = false;
  int workers = 0;
  bool strict = false;
};

int run_filter(const FilterArgs& a) {
  using namespace points;

  corpus::ReadSummary summary;
  const auto records = corpus::read_manifest(a.in, a.strict, &summary);
  for (const std::string& p : summary.problems)
    std::cerr << "warning: " << a.in << ": " << p << "\n";
  if (records.empty()) throw DataError("no records in " + a.in);

  ppl::TextScorer scorer;
  if (a.scorer == "ngram") {
    // Train on every scorable caption in the input corpus.
    std::vector<std::vector<std::string>> sequences;
    for (const auto& r : records) {
      if (r.logprobs || r.caption.empty()) continue;
      auto tokens = ppl::tokenize(r.caption, a.char_tokens);
      if (!tokens.empty()) sequences.push_back(std::move(tokens));
    }
    if (!sequences.empty()) {
      const auto model =
          std::make_shared<ppl::NGramModel>(ppl::train_ngram(sequences, a.order, a.alpha));
      const bool char_tokens = a.char_tokens;
      scorer = [model, char_tokens](const std::string& text) {
        return ppl::score_ngram(*model, ppl::tokenize(text, char_tokens));
      };
    }
  } else if (a.scorer != "attached") {
    throw DataError("unknown scorer: " + a.scorer);
  }

  const auto outcome =
      ppl::score_corpus(records, scorer, resolve_workers(a.workers));
  for (const auto& p : outcome.problems)
    std::cerr << "record \"" << p.record_id << "\" (line "
              << p.source_index + 1 << "): " << p.message << "\n";
  if (a.strict && !outcome.problems.empty())
    throw DataError("unscorable records in strict mode");
  if (outcome.scored.empty()) throw DataError("no scorable records");

  const auto kept_ids = ppl::filter_corpus(outcome.scored, a.keep);

  // Emit kept records in ascending-perplexity order, perplexity attached.
  std::map<std::string, std::pair<std::size_t, double>> by_id;
  for (const auto& s : outcome.scored)
    by_id[s.record_id] = {s.source_index, s.perplexity};
  std::vector<corpus::CorpusRecord> kept;
  kept.reserve(kept_ids.size());
  for (const std::string& id : kept_ids) {
    const auto [idx, pplx] = by_id.at(id);
    corpus::CorpusRecord r = records[idx];
    r.perplexity = pplx;
    kept.push_back(std::move(r));
  }
  corpus::write_manifest(kept, a.out);

  if (!a.scored_out.empty()) {
    std::vector<corpus::CorpusRecord> scored_records;
    scored_records.reserve(outcome.scored.size());
    for (const auto& s : outcome.scored) {
      corpus::CorpusRecord r = records[s.source_index];
      r.perplexity = s.perplexity;
      scored_records.push_back(std::move(r));
    }
    corpus::write_manifest(scored_records, a.scored_out);
  }
  std::cerr << "kept " << kept.size() << " of " << outcome.scored.size()
            << " scored records\n";
  return 0;
}

// ---- soup ----------------------------------------------------------------

struct SoupArgs {
  std::string strategy = "greedy";
  std::vector<std::string> checkpoints;
  std::string eval_cmd;
  int top_p = 0;
  std::string out, trace_out, scratch;
};

int run_soup(const SoupArgs& a) {
  using namespace points;
  if (a.checkpoints.empty()) throw DataError("no checkpoint files given");

  std::vector<soup::Checkpoint> ckpts;
  std::vector<std::string> ids;
  for (const std::string& path : a.checkpoints) {
    soup::Checkpoint c;
    c.tensors = tensorio::read_container(path);
    c.meta["id"] = fs::path(path).filename().string();
    ids.push_back(c.meta["id"]);
    ckpts.push_back(std::move(c));
  }

  fs::path scratch = a.scratch.empty()
                         ? fs::temp_directory_path() /
                               ("points-soup-" + std::to_string(::getpid()))
                         : fs::path(a.scratch);

  auto make_eval = [&]() {
    if (a.eval_cmd.empty())
      throw DataError("--eval-cmd is required for strategy " + a.strategy);
    return soup::make_command_evaluator(a.eval_cmd, scratch);
  };

  soup::Checkpoint result;
  if (a.strategy == "average") {
    result = soup::average_soup(ckpts);
  } else if (a.strategy == "maximum") {
    if (a.top_p < 1) throw DataError("--top-p is required for maximum soup");
    auto evaluate = make_eval();
    std::vector<double> scores;
    scores.reserve(ckpts.size());
    for (const auto& c : ckpts) scores.push_back(evaluate(c));
    result = soup::maximum_soup(ckpts, scores, a.top_p);
  } else if (a.strategy == "greedy") {
    auto evaluate = make_eval();
    soup::GreedyResult greedy = soup::greedy_soup(ckpts, ids, evaluate);
    result = std::move(greedy.checkpoint);
    if (!a.trace_out.empty())
      write_text_atomic(
          a.trace_out,
          soup::trace_to_json(greedy.trace, greedy.final_score).dump(2) + "\n");
  } else {
    throw DataError("unknown strategy: " + a.strategy);
  }

  tensorio::write_container(result.tensors, a.out);
  std::cerr << "wrote " << a.out << " (" << result.tensors.size()
            << " tensors)\n";
  return 0;
}

// ---- fuse / shuffle ------------------------------------------------------

points::tensorops::FeatureMap to_feature_map(const points::tensorio::Tensor& t,
                                             const std::string& name) {
  if (t.shape.size() != 3)
    throw DataError("tensor \"" + name + "\" is not rank-3 (rows, cols, channels)");
  points::tensorops::FeatureMap fm(static_cast<int>(t.shape[0]),
                                   static_cast<int>(t.shape[1]),
                                   static_cast<int>(t.shape[2]));
  fm.data = t.data;
  return fm;
}

points::tensorio::Tensor to_tensor(const points::tensorops::FeatureMap& fm) {
  points::tensorio::Tensor t;
  t.shape = {fm.rows, fm.cols, fm.channels};
  t.data = fm.data;
  return t;
}

const points::tensorio::Tensor& named_or_sole(
    const points::tensorio::TensorMap& tensors, const std::string& name,
    const std::string& file) {
  if (auto it = tensors.find(name); it != tensors.end()) return it->second;
  if (tensors.size() == 1) return tensors.begin()->second;
  throw DataError("container " + file + " has no tensor \"" + name + "\"");
}

struct FuseArgs {
  std::string general, ocr, out;
  double alpha = 0.5;
};

int run_fuse(const FuseArgs& a) {
  using namespace points;
  const auto g = tensorio::read_container(a.general);
  const auto o = tensorio::read_container(a.ocr);
  const auto fused = tensorops::fuse_features(
      to_feature_map(named_or_sole(g, "general", a.general), "general"),
      to_feature_map(named_or_sole(o, "ocr", a.ocr), "ocr"), a.alpha);
  tensorio::write_container({{"fused", to_tensor(fused)}}, a.out);
  return 0;
}

struct ShuffleArgs {
  std::string in, out;
  double factor = 0.25;
};

int run_shuffle(const ShuffleArgs& a) {
  using namespace points;
  const auto tensors = tensorio::read_container(a.in);
  if (tensors.empty()) throw DataError("container " + a.in + " is empty");
  tensorio::TensorMap out;
  for (const auto& [name, t] : tensors)
    out.emplace(name,
                to_tensor(tensorops::pixel_shuffle(to_feature_map(t, name),
                                                   a.factor)));
  tensorio::write_container(out, a.out);
  return 0;
}

// ---- balance -------------------------------------------------------------

struct BalanceArgs {
  std::string in, out, summary_out;
  int top_k = 6;
  double down_to = 0.6;
  std::uint64_t seed = 0;
  bool strict = false;
};

int run_balance(const BalanceArgs& a) {
  using namespace points;
  corpus::ReadSummary read_summary;
  const auto records = corpus::read_manifest(a.in, a.strict, &read_summary);
  for (const std::string& p : read_summary.problems)
    std::cerr << "warning: " << a.in << ": " << p << "\n";

  corpus::BalanceSummary summary;
  const auto balanced =
      corpus::balance_manifest(records, a.top_k, a.down_to, a.seed, &summary);
  corpus::write_manifest(balanced, a.out);

  nlohmann::json j = nlohmann::json::object();
  for (const auto& [label, counts] : summary.labels)
    j[label] = {{"before", counts.first}, {"after", counts.second}};
  if (!a.summary_out.empty())
    write_text_atomic(a.summary_out, j.dump(2) + "\n");
  else
    std::cerr << j.dump(2) << "\n";
  std::cerr << "kept " << balanced.size() << " of " << records.size()
            << " records\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"POINTS data-pipeline and checkpoint toolkit"};
  app.require_subcommand(1);

  TileArgs tile;
  auto* tile_cmd = app.add_subcommand("tile", "Compute a tiling plan for an image");
  tile_cmd->add_option("--height", tile.height, "Image height in pixels");
  tile_cmd->add_option("--width", tile.width, "Image width in pixels");
  tile_cmd->add_option("--image", tile.image, "PNG/JPEG image to plan (and split)");
  tile_cmd->add_option("--max-tiles", tile.config.max_tiles, "Maximum tile count")
      ->capture_default_str();
  tile_cmd->add_option("--tile-h", tile.config.tile_h, "Tile height")
      ->capture_default_str();
  tile_cmd->add_option("--tile-w", tile.config.tile_w, "Tile width")
      ->capture_default_str();
  tile_cmd->add_option("--max-aspect", tile.config.max_aspect_ratio,
                       "Aspect-ratio clamp")->capture_default_str();
  tile_cmd->add_flag("--thumbnail,!--no-thumbnail", tile.config.include_thumbnail,
                     "Append a global-view thumbnail tile");
  tile_cmd->add_option("--mode", tile.mode, "catty or baseline")
      ->check(CLI::IsMember({"catty", "baseline"}))->capture_default_str();
  tile_cmd->add_option("--plan-out", tile.plan_out, "Write the plan JSON here");
  tile_cmd->add_option("--tiles-out", tile.tiles_out, "Directory for tile PNGs");

  FilterArgs filter;
  auto* filter_cmd =
      app.add_subcommand("filter", "Keep the lowest-perplexity corpus fraction");
  filter_cmd->add_option("--in", filter.in, "Input JSONL manifest")->required();
  filter_cmd->add_option("--out", filter.out, "Output JSONL manifest")->required();
  filter_cmd->add_option("--keep", filter.keep, "Fraction to keep, in (0, 1]")
      ->capture_default_str();
  filter_cmd->add_option("--scorer", filter.scorer, "ngram or attached")
      ->check(CLI::IsMember({"ngram", "attached"}))->capture_default_str();
  filter_cmd->add_option("--order", filter.order, "n-gram order")
      ->capture_default_str();
  filter_cmd->add_option("--alpha", filter.alpha, "Add-alpha smoothing constant")
      ->capture_default_str();
  filter_cmd->add_flag("--char-tokens", filter.char_tokens,
                       "Character tokenization instead of whitespace");
  filter_cmd->add_option("--workers", filter.workers,
                         "Worker threads (default: POINTS_WORKERS or all cores)");
  filter_cmd->add_flag("--strict", filter.strict, "Abort on any bad record");
  filter_cmd->add_option("--scored-out", filter.scored_out,
                         "Also write every scored record here");

  SoupArgs soup_args;
  auto* soup_cmd = app.add_subcommand("soup", "Merge checkpoints by model soup");
  soup_cmd->add_option("--strategy", soup_args.strategy,
                       "greedy, average or maximum")
      ->check(CLI::IsMember({"greedy", "average", "maximum"}))
      ->capture_default_str();
  soup_cmd->add_option("--checkpoints", soup_args.checkpoints,
                       "Checkpoint container files")->required();
  soup_cmd->add_option("--eval-cmd", soup_args.eval_cmd,
                       "Scoring command; gets a container path, prints a score");
  soup_cmd->add_option("--top-p", soup_args.top_p, "p for maximum soup");
  soup_cmd->add_option("--out", soup_args.out, "Output container")->required();
  soup_cmd->add_option("--trace", soup_args.trace_out, "Greedy trace JSON");
  soup_cmd->add_option("--scratch", soup_args.scratch,
                       "Scratch directory for trial checkpoints");

  FuseArgs fuse;
  auto* fuse_cmd = app.add_subcommand("fuse", "Fuse dual-encoder feature maps");
  fuse_cmd->add_option("--general", fuse.general, "General-encoder container")
      ->required();
  fuse_cmd->add_option("--ocr", fuse.ocr, "OCR-encoder container")->required();
  fuse_cmd->add_option("--alpha", fuse.alpha, "Weight of the general encoder")
      ->capture_default_str();
  fuse_cmd->add_option("--out", fuse.out, "Output container")->required();

  ShuffleArgs shuffle;
  auto* shuffle_cmd =
      app.add_subcommand("shuffle", "Pixel-shuffle feature maps");
  shuffle_cmd->add_option("--in", shuffle.in, "Input container")->required();
  shuffle_cmd->add_option("--factor", shuffle.factor, "Down-sampling factor")
      ->capture_default_str();
  shuffle_cmd->add_option("--out", shuffle.out, "Output container")->required();

  BalanceArgs balance;
  auto* balance_cmd =
      app.add_subcommand("balance", "Down-sample over-represented labels");
  balance_cmd->add_option("--in", balance.in, "Input JSONL manifest")->required();
  balance_cmd->add_option("--out", balance.out, "Output JSONL manifest")
      ->required();
  balance_cmd->add_option("--top-k", balance.top_k, "Labels considered")
      ->capture_default_str();
  balance_cmd->add_option("--down-to", balance.down_to,
                          "Kept fraction for over-represented labels")
      ->capture_default_str();
  balance_cmd->add_option("--seed", balance.seed, "Sampling seed")
      ->capture_default_str();
  balance_cmd->add_flag("--strict", balance.strict, "Abort on any bad record");
  balance_cmd->add_option("--summary", balance.summary_out,
                          "Write the per-label before/after JSON here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (tile_cmd->parsed()) return run_tile(tile);
    if (filter_cmd->parsed()) return run_filter(filter);
    if (soup_cmd->parsed()) return run_soup(soup_args);
    if (fuse_cmd->parsed()) return run_fuse(fuse);
    if (shuffle_cmd->parsed()) return run_shuffle(shuffle);
    if (balance_cmd->parsed()) return run_balance(balance);
  } catch (const points::soup::HookError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
