#include "points/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <unordered_map>
#include <unordered_set>

namespace points::corpus {

namespace {

const char* kKnownKeys[] = {"id", "image", "caption", "logprobs", "label",
                            "perplexity"};

bool is_known_key(const std::string& k) {
  for (const char* key : kKnownKeys)
    if (k == key) return true;
  return false;
}

}  // namespace

nlohmann::json record_to_json(const CorpusRecord& record) {
  nlohmann::json j;
  j["id"] = record.id;
  j["image"] = record.image;
  j["caption"] = record.caption;
  if (record.logprobs) j["logprobs"] = *record.logprobs;
  if (record.label) j["label"] = *record.label;
  if (record.perplexity) j["perplexity"] = *record.perplexity;
  if (record.extra.is_object())
    for (const auto& [k, v] : record.extra.items()) j[k] = v;
  return j;
}

CorpusRecord record_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ManifestError("record is not a JSON object");
  CorpusRecord r;
  if (!j.contains("id") || !j["id"].is_string() ||
      j["id"].get<std::string>().empty())
    throw ManifestError("record is missing a non-empty string \"id\"");
  r.id = j["id"].get<std::string>();
  if (j.contains("image")) r.image = j["image"].get<std::string>();
  if (j.contains("caption")) r.caption = j["caption"].get<std::string>();
  if (j.contains("logprobs")) {
    if (!j["logprobs"].is_array())
      throw ManifestError("\"logprobs\" must be an array of numbers");
    r.logprobs = j["logprobs"].get<std::vector<double>>();
  }
  if (j.contains("label")) r.label = j["label"].get<std::string>();
  if (j.contains("perplexity")) r.perplexity = j["perplexity"].get<double>();
  for (const auto& [k, v] : j.items())
    if (!is_known_key(k)) r.extra[k] = v;
  return r;
}

std::vector<CorpusRecord> read_manifest(const std::filesystem::path& path,
                                        bool strict, ReadSummary* summary) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ManifestError("cannot open manifest: " + path.string());

  std::vector<CorpusRecord> records;
  std::unordered_map<std::string, std::size_t> seen_ids;  // id -> line
  ReadSummary local;
  ReadSummary& sum = summary ? *summary : local;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    ++sum.lines;
    if (line.empty()) continue;
    try {
      CorpusRecord r = record_from_json(nlohmann::json::parse(line));
      auto [it, inserted] = seen_ids.emplace(r.id, line_no);
      if (!inserted) {
        const std::string msg = "duplicate id \"" + r.id + "\" at lines " +
                                std::to_string(it->second) + " and " +
                                std::to_string(line_no);
        if (strict) throw ManifestError(msg);
        sum.problems.push_back(msg);
      }
      records.push_back(std::move(r));
      ++sum.parsed;
    } catch (const nlohmann::json::exception& e) {
      const std::string msg =
          "line " + std::to_string(line_no) + ": " + e.what();
      if (strict) throw ManifestError(msg);
      sum.problems.push_back(msg);
      ++sum.skipped;
    } catch (const ManifestError& e) {
      if (strict) throw;
      sum.problems.push_back("line " + std::to_string(line_no) + ": " + e.what());
      ++sum.skipped;
    }
  }
  return records;
}

void write_manifest(const std::vector<CorpusRecord>& records,
                    const std::filesystem::path& path) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ManifestError("cannot open for writing: " + tmp.string());
    for (const CorpusRecord& r : records) out << record_to_json(r).dump() << '\n';
    out.flush();
    if (!out) throw ManifestError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<CorpusRecord> balance_manifest(
    const std::vector<CorpusRecord>& records, int top_k, double down_to,
    std::uint64_t seed, BalanceSummary* summary) {
  if (top_k < 1) throw std::invalid_argument("top_k must be >= 1");
  if (!(down_to > 0.0 && down_to <= 1.0))
    throw std::invalid_argument("down_to must be in (0, 1]");

  std::map<std::string, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].label) by_label[*records[i].label].push_back(i);

  // Top-k labels by count descending, name ascending for determinism.
  std::vector<std::pair<std::string, std::size_t>> ranked;
  ranked.reserve(by_label.size());
  for (const auto& [label, idx] : by_label) ranked.emplace_back(label, idx.size());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (ranked.size() > static_cast<std::size_t>(top_k))
    ranked.resize(static_cast<std::size_t>(top_k));

  double mean = 0.0;
  for (const auto& [label, count] : ranked) mean += static_cast<double>(count);
  if (!ranked.empty()) mean /= static_cast<double>(ranked.size());

  std::vector<bool> dropped(records.size(), false);
  std::mt19937_64 rng(seed);
  for (const auto& [label, count] : ranked) {
    if (summary) summary->labels[label] = {count, count};
    if (static_cast<double>(count) <= mean) continue;
    const auto keep =
        static_cast<std::size_t>(std::lround(down_to * static_cast<double>(count)));
    std::vector<std::size_t> indices = by_label[label];
    std::shuffle(indices.begin(), indices.end(), rng);
    for (std::size_t i = keep; i < indices.size(); ++i) dropped[indices[i]] = true;
    if (summary) summary->labels[label].second = keep;
  }

  std::vector<CorpusRecord> kept;
  kept.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i)
    if (!dropped[i]) kept.push_back(records[i]);
  return kept;
}

}  // namespace points::corpus
