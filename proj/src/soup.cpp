#include "points/soup.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <sys/wait.h>

namespace points::soup {

namespace {

void check_compatible(const Checkpoint& ref, const Checkpoint& other,
                      std::size_t index) {
  if (ref.tensors.size() != other.tensors.size())
    throw std::invalid_argument("checkpoint " + std::to_string(index) +
                                " has a different tensor count");
  auto it = ref.tensors.begin();
  auto jt = other.tensors.begin();
  for (; it != ref.tensors.end(); ++it, ++jt) {
    if (it->first != jt->first)
      throw std::invalid_argument("checkpoint " + std::to_string(index) +
                                  " tensor name mismatch: \"" + it->first +
                                  "\" vs \"" + jt->first + "\"");
    if (it->second.shape != jt->second.shape)
      throw std::invalid_argument("checkpoint " + std::to_string(index) +
                                  " shape mismatch on tensor \"" + it->first +
                                  "\"");
  }
}

std::string contributor_id(const Checkpoint& ckpt, std::size_t index) {
  if (auto it = ckpt.meta.find("id"); it != ckpt.meta.end()) return it->second;
  return "ckpt" + std::to_string(index);
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  out += "'";
  return out;
}

}  // namespace

Checkpoint weighted_average(const std::vector<Checkpoint>& checkpoints,
                            const std::vector<double>& weights) {
  if (checkpoints.empty())
    throw std::invalid_argument("no checkpoints to average");
  if (weights.size() != checkpoints.size())
    throw std::invalid_argument("need one weight per checkpoint");
  double wsum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("weights must be non-negative");
    wsum += w;
  }
  if (std::abs(wsum - 1.0) > 1e-9)
    throw std::invalid_argument("weights must sum to 1");
  for (std::size_t i = 1; i < checkpoints.size(); ++i)
    check_compatible(checkpoints.front(), checkpoints[i], i);

  Checkpoint out;
  for (const auto& [name, ref] : checkpoints.front().tensors) {
    tensorio::Tensor t;
    t.shape = ref.shape;
    t.data.assign(ref.data.size(), 0.0);
    // Kahan summation per element, accumulated across checkpoints.
    std::vector<double> comp(ref.data.size(), 0.0);
    for (std::size_t k = 0; k < checkpoints.size(); ++k) {
      const auto& src = checkpoints[k].tensors.at(name).data;
      const double w = weights[k];
      for (std::size_t e = 0; e < src.size(); ++e) {
        const double y = w * src[e] - comp[e];
        const double s = t.data[e] + y;
        comp[e] = (s - t.data[e]) - y;
        t.data[e] = s;
      }
    }
    out.tensors.emplace(name, std::move(t));
  }

  nlohmann::json contributors = nlohmann::json::array();
  for (std::size_t i = 0; i < checkpoints.size(); ++i)
    contributors.push_back(
        {{"id", contributor_id(checkpoints[i], i)}, {"weight", weights[i]}});
  out.meta["contributors"] = contributors.dump();
  return out;
}

Checkpoint average_soup(const std::vector<Checkpoint>& checkpoints) {
  if (checkpoints.empty())
    throw std::invalid_argument("no checkpoints to average");
  const std::vector<double> weights(checkpoints.size(),
                                    1.0 / static_cast<double>(checkpoints.size()));
  return weighted_average(checkpoints, weights);
}

Checkpoint maximum_soup(const std::vector<Checkpoint>& checkpoints,
                        const std::vector<double>& scores, int p) {
  if (checkpoints.empty())
    throw std::invalid_argument("no checkpoints to merge");
  if (scores.size() != checkpoints.size())
    throw std::invalid_argument("need one score per checkpoint");
  if (p < 1 || static_cast<std::size_t>(p) > checkpoints.size())
    throw std::invalid_argument("p must be in [1, k]");

  std::vector<std::size_t> order(checkpoints.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return scores[a] > scores[b];
                   });
  std::vector<Checkpoint> top;
  top.reserve(static_cast<std::size_t>(p));
  for (int i = 0; i < p; ++i) top.push_back(checkpoints[order[static_cast<std::size_t>(i)]]);
  return average_soup(top);
}

GreedyResult greedy_soup(
    const std::vector<Checkpoint>& checkpoints,
    const std::vector<std::string>& ids,
    const std::function<double(const Checkpoint&)>& evaluate) {
  if (checkpoints.empty())
    throw std::invalid_argument("no checkpoints to merge");
  if (ids.size() != checkpoints.size())
    throw std::invalid_argument("need one id per checkpoint");
  if (!evaluate) throw std::invalid_argument("no evaluator configured");

  auto eval_or_abort = [&](const Checkpoint& ckpt, const std::string& id) {
    try {
      const double score = evaluate(ckpt);
      if (!std::isfinite(score))
        throw HookError("evaluator returned a non-finite score");
      return score;
    } catch (const std::exception& e) {
      throw HookError("evaluating candidate \"" + id + "\": " + e.what());
    }
  };

  std::vector<double> scores(checkpoints.size());
  for (std::size_t i = 0; i < checkpoints.size(); ++i)
    scores[i] = eval_or_abort(checkpoints[i], ids[i]);

  std::vector<std::size_t> order(checkpoints.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return scores[a] > scores[b];
                   });

  GreedyResult result;
  std::vector<std::size_t> pool;
  double pool_score = -std::numeric_limits<double>::infinity();

  for (std::size_t idx : order) {
    std::vector<Checkpoint> trial_members;
    trial_members.reserve(pool.size() + 1);
    for (std::size_t m : pool) trial_members.push_back(checkpoints[m]);
    trial_members.push_back(checkpoints[idx]);
    const Checkpoint trial = average_soup(trial_members);
    const double trial_score = eval_or_abort(trial, ids[idx]);

    SoupStep step;
    step.candidate_id = ids[idx];
    step.trial_score = trial_score;
    step.accepted = trial_score >= pool_score;
    if (step.accepted) {
      pool.push_back(idx);
      pool_score = trial_score;
    }
    for (std::size_t m : pool) step.pool_after.push_back(ids[m]);
    result.trace.steps.push_back(std::move(step));
  }

  std::vector<Checkpoint> members;
  members.reserve(pool.size());
  for (std::size_t m : pool) members.push_back(checkpoints[m]);
  result.checkpoint = average_soup(members);
  result.final_score = pool_score;
  return result;
}

std::function<double(const Checkpoint&)> make_command_evaluator(
    const std::string& command, const std::filesystem::path& scratch_dir) {
  std::filesystem::create_directories(scratch_dir);
  auto counter = std::make_shared<std::atomic<std::uint64_t>>(0);
  return [command, scratch_dir, counter](const Checkpoint& ckpt) -> double {
    const std::filesystem::path path =
        scratch_dir / ("trial_" + std::to_string(counter->fetch_add(1)) + ".bin");
    tensorio::write_container(ckpt.tensors, path);

    const std::string cmd = command + " " + shell_quote(path.string());
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) throw HookError("failed to launch hook command: " + cmd);
    std::string output;
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) output.append(buf, n);
    const int status = ::pclose(pipe);
    if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0)
      throw HookError("hook command failed (status " + std::to_string(status) +
                      "): " + cmd + "\noutput:\n" + output);

    // Last non-empty line of stdout is the score.
    std::string last;
    std::size_t pos = 0;
    while (pos < output.size()) {
      std::size_t nl = output.find('\n', pos);
      if (nl == std::string::npos) nl = output.size();
      if (nl > pos) last = output.substr(pos, nl - pos);
      pos = nl + 1;
    }
    if (last.empty())
      throw HookError("hook command produced no output: " + cmd);
    try {
      std::size_t consumed = 0;
      const double score = std::stod(last, &consumed);
      while (consumed < last.size() &&
             std::isspace(static_cast<unsigned char>(last[consumed])))
        ++consumed;
      if (consumed != last.size())
        throw std::invalid_argument("trailing characters");
      return score;
    } catch (const std::exception&) {
      throw HookError("cannot parse score from hook output line: \"" + last +
                      "\"");
    }
  };
}

nlohmann::json trace_to_json(const SoupTrace& trace, double final_score) {
  nlohmann::json steps = nlohmann::json::array();
  for (const SoupStep& s : trace.steps) {
    steps.push_back({{"candidate", s.candidate_id},
                     {"score", s.trial_score},
                     {"accepted", s.accepted},
                     {"pool", s.pool_after}});
  }
  return {{"steps", std::move(steps)}, {"final_score", final_score}};
}

}  // namespace points::soup
