#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace points::corpus {

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One image-caption sample. Unknown manifest keys survive in `extra`.
struct CorpusRecord {
  std::string id;
  std::string image;
  std::string caption;
  std::optional<std::vector<double>> logprobs;
  std::optional<std::string> label;
  std::optional<double> perplexity;
  nlohmann::json extra = nlohmann::json::object();
};

nlohmann::json record_to_json(const CorpusRecord& record);
CorpusRecord record_from_json(const nlohmann::json& j);

struct ReadSummary {
  std::size_t lines = 0;
  std::size_t parsed = 0;
  std::size_t skipped = 0;
  std::vector<std::string> problems;
};

/// Reads a JSONL manifest. In strict mode any malformed line or duplicate
/// id aborts with a ManifestError naming the line; in lenient mode bad
/// lines are skipped and reported through the summary.
std::vector<CorpusRecord> read_manifest(const std::filesystem::path& path,
                                        bool strict,
                                        ReadSummary* summary = nullptr);

/// Writes a JSONL manifest via a temp file and atomic rename.
void write_manifest(const std::vector<CorpusRecord>& records,
                    const std::filesystem::path& path);

struct BalanceSummary {
  // label -> (count before, count after) for the top_k labels
  std::map<std::string, std::pair<std::size_t, std::size_t>> labels;
};

/// Down-samples over-represented labels: among the top_k most frequent
/// labels, any label whose count exceeds their mean count is reduced to
/// round(down_to * count) by seeded uniform sampling without replacement.
/// Unlabeled records pass through untouched; input order is preserved.
std::vector<CorpusRecord> balance_manifest(
    const std::vector<CorpusRecord>& records, int top_k, double down_to,
    std::uint64_t seed, BalanceSummary* summary = nullptr);

}  // namespace points::corpus
