#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "points/tensorio.hpp"

namespace points::soup {

/// Named dense tensors plus free-form metadata; the unit of soup merging.
struct Checkpoint {
  tensorio::TensorMap tensors;
  std::map<std::string, std::string> meta;
};

struct SoupStep {
  std::string candidate_id;
  double trial_score = 0.0;
  bool accepted = false;
  std::vector<std::string> pool_after;
};

/// Ordered accept/reject log of one greedy-soup run.
struct SoupTrace {
  std::vector<SoupStep> steps;
};

class HookError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Elementwise weighted average. All checkpoints must share tensor names
/// and shapes; weights are non-negative and sum to 1. Uses compensated
/// summation so candidate reorderings agree to ~1e-12 relative.
Checkpoint weighted_average(const std::vector<Checkpoint>& checkpoints,
                            const std::vector<double>& weights);

/// Uniform average of all checkpoints.
Checkpoint average_soup(const std::vector<Checkpoint>& checkpoints);

/// Uniform average of the p highest-scoring checkpoints; score ties keep
/// input order.
Checkpoint maximum_soup(const std::vector<Checkpoint>& checkpoints,
                        const std::vector<double>& scores, int p);

struct GreedyResult {
  Checkpoint checkpoint;
  SoupTrace trace;
  double final_score = 0.0;
};

/// Greedy soup: candidates sorted by individual score descending, each
/// admitted to the pool iff the pooled average's score does not decrease.
/// The evaluator must be deterministic; a throwing evaluator aborts the run
/// with a HookError naming the candidate.
GreedyResult greedy_soup(
    const std::vector<Checkpoint>& checkpoints,
    const std::vector<std::string>& ids,
    const std::function<double(const Checkpoint&)>& evaluate);

/// Evaluation-hook protocol: writes the trial checkpoint to a container
/// file under scratch_dir, runs `command <path>`, and parses the last line
/// of standard output as a decimal score. Nonzero exit is a HookError.
std::function<double(const Checkpoint&)> make_command_evaluator(
    const std::string& command, const std::filesystem::path& scratch_dir);

nlohmann::json trace_to_json(const SoupTrace& trace, double final_score);

}  // namespace points::soup
