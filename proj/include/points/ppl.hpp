#pragma once

#include <functional>
#include <map>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "points/corpus.hpp"

namespace points::ppl {

/// exp(-(1/N) * sum(log-probs)). Log-probs are natural-log, one per token,
/// each finite and <= 0. Throws std::invalid_argument otherwise.
double perplexity(const std::vector<double>& logprobs);

struct ScoredRecord {
  std::string record_id;
  double perplexity = 0.0;
  std::size_t source_index = 0;
};

/// Add-alpha smoothed n-gram model over string tokens. Immutable after
/// training; safe to share across scoring workers.
struct NGramModel {
  int order = 2;
  double alpha = 1.0;
  std::unordered_set<std::string> vocabulary;
  // context key (tokens joined with '\x1f') -> token -> count
  std::unordered_map<std::string, std::unordered_map<std::string, int>> counts;
  std::unordered_map<std::string, int> context_totals;
};

/// Whitespace tokenization by default; UTF-8 code points in char mode.
std::vector<std::string> tokenize(const std::string& text, bool char_mode);

NGramModel train_ngram(const std::vector<std::vector<std::string>>& corpus,
                       int order, double alpha);

/// Per-token log P(w_i | context) with add-alpha smoothing:
/// P = (count + alpha) / (context_total + alpha * |V|).
std::vector<double> score_ngram(const NGramModel& model,
                                const std::vector<std::string>& tokens);

struct ScoreProblem {
  std::size_t source_index = 0;
  std::string record_id;
  std::string message;
};

struct ScoreOutcome {
  std::vector<ScoredRecord> scored;  // in input order
  std::vector<ScoreProblem> problems;
};

/// Scorer maps caption text to per-token log-probs. Must be thread-safe.
using TextScorer = std::function<std::vector<double>(const std::string&)>;

/// Scores every record: attached log-probs bypass the scorer, otherwise the
/// caption is scored. Runs on `workers` threads; output order equals input
/// order regardless of the worker count.
ScoreOutcome score_corpus(const std::vector<corpus::CorpusRecord>& records,
                          const TextScorer& scorer, int workers);

/// Sorts by (perplexity ascending, source_index ascending) and keeps the
/// first max(1, floor(keep_fraction * N)) record ids.
std::vector<std::string> filter_corpus(const std::vector<ScoredRecord>& scored,
                                       double keep_fraction);

}  // namespace points::ppl
