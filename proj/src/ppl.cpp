#include "points/ppl.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace points::ppl {

namespace {

constexpr char kContextSep = '\x1f';
const std::string kBos = "\x02<s>";

std::string context_key(const std::vector<std::string>& window,
                        std::size_t begin, std::size_t end) {
  std::string key;
  for (std::size_t i = begin; i < end; ++i) {
    if (i > begin) key += kContextSep;
    key += window[i];
  }
  return key;
}

}  // namespace

double perplexity(const std::vector<double>& logprobs) {
  if (logprobs.empty())
    throw std::invalid_argument("cannot compute perplexity of an empty sequence");
  double sum = 0.0;
  for (double lp : logprobs) {
    if (!std::isfinite(lp))
      throw std::invalid_argument("log-probabilities must be finite");
    if (lp > 0.0)
      throw std::invalid_argument("log-probabilities must be <= 0");
    sum += lp;
  }
  return std::exp(-sum / static_cast<double>(logprobs.size()));
}

std::vector<std::string> tokenize(const std::string& text, bool char_mode) {
  std::vector<std::string> tokens;
  if (char_mode) {
    for (std::size_t i = 0; i < text.size();) {
      const auto lead = static_cast<unsigned char>(text[i]);
      std::size_t len = 1;
      if (lead >= 0xF0) len = 4;
      else if (lead >= 0xE0) len = 3;
      else if (lead >= 0xC0) len = 2;
      len = std::min(len, text.size() - i);
      tokens.push_back(text.substr(i, len));
      i += len;
    }
  } else {
    std::string cur;
    for (char ch : text) {
      if (std::isspace(static_cast<unsigned char>(ch))) {
        if (!cur.empty()) tokens.push_back(std::move(cur)), cur.clear();
      } else {
        cur += ch;
      }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
  }
  return tokens;
}

NGramModel train_ngram(const std::vector<std::vector<std::string>>& corpus,
                       int order, double alpha) {
  if (corpus.empty()) throw std::invalid_argument("training corpus is empty");
  if (order < 1) throw std::invalid_argument("n-gram order must be >= 1");
  if (!(alpha > 0.0)) throw std::invalid_argument("smoothing alpha must be > 0");

  NGramModel model;
  model.order = order;
  model.alpha = alpha;
  for (const auto& sequence : corpus) {
    std::vector<std::string> padded(static_cast<std::size_t>(order - 1), kBos);
    padded.insert(padded.end(), sequence.begin(), sequence.end());
    for (std::size_t i = static_cast<std::size_t>(order - 1); i < padded.size();
         ++i) {
      const std::string ctx =
          context_key(padded, i - static_cast<std::size_t>(order - 1), i);
      ++model.counts[ctx][padded[i]];
      ++model.context_totals[ctx];
      model.vocabulary.insert(padded[i]);
    }
  }
  if (model.vocabulary.empty())
    throw std::invalid_argument("training corpus contains no tokens");
  return model;
}

std::vector<double> score_ngram(const NGramModel& model,
                                const std::vector<std::string>& tokens) {
  if (tokens.empty())
    throw std::invalid_argument("cannot score an empty token sequence");
  const double vocab = static_cast<double>(model.vocabulary.size());

  std::vector<std::string> padded(static_cast<std::size_t>(model.order - 1),
                                  kBos);
  padded.insert(padded.end(), tokens.begin(), tokens.end());

  std::vector<double> logprobs;
  logprobs.reserve(tokens.size());
  for (std::size_t i = static_cast<std::size_t>(model.order - 1);
       i < padded.size(); ++i) {
    const std::string ctx =
        context_key(padded, i - static_cast<std::size_t>(model.order - 1), i);
    int count = 0;
    int total = 0;
    if (auto it = model.counts.find(ctx); it != model.counts.end()) {
      total = model.context_totals.at(ctx);
      if (auto jt = it->second.find(padded[i]); jt != it->second.end())
        count = jt->second;
    }
    const double p = (count + model.alpha) / (total + model.alpha * vocab);
    logprobs.push_back(std::log(p));
  }
  return logprobs;
}

ScoreOutcome score_corpus(const std::vector<corpus::CorpusRecord>& records,
                          const TextScorer& scorer, int workers) {
  if (workers < 1) workers = 1;

  struct Slot {
    bool ok = false;
    double perplexity = 0.0;
    std::string error;
  };
  std::vector<Slot> slots(records.size());

  auto score_one = [&](std::size_t i) {
    const corpus::CorpusRecord& r = records[i];
    try {
      if (r.logprobs) {
        slots[i].perplexity = perplexity(*r.logprobs);
      } else if (!r.caption.empty()) {
        if (!scorer) throw std::invalid_argument("no scorer configured");
        slots[i].perplexity = perplexity(scorer(r.caption));
      } else {
        throw std::invalid_argument(
            "record has neither log-probs nor scorable text");
      }
      slots[i].ok = true;
    } catch (const std::exception& e) {
      slots[i].error = e.what();
    }
  };

  if (workers == 1 || records.size() < 2) {
    for (std::size_t i = 0; i < records.size(); ++i) score_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    const int n = std::min<std::size_t>(static_cast<std::size_t>(workers),
                                        records.size());
    pool.reserve(static_cast<std::size_t>(n));
    for (int t = 0; t < n; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < records.size();
             i = next.fetch_add(1))
          score_one(i);
      });
    }
    for (auto& th : pool) th.join();
  }

  ScoreOutcome out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (slots[i].ok)
      out.scored.push_back({records[i].id, slots[i].perplexity, i});
    else
      out.problems.push_back({i, records[i].id, slots[i].error});
  }
  return out;
}

std::vector<std::string> filter_corpus(const std::vector<ScoredRecord>& scored,
                                       double keep_fraction) {
  if (scored.empty()) throw std::invalid_argument("no scored records to filter");
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0))
    throw std::invalid_argument("keep fraction must be in (0, 1]");

  std::vector<const ScoredRecord*> order;
  order.reserve(scored.size());
  for (const ScoredRecord& s : scored) order.push_back(&s);
  std::sort(order.begin(), order.end(),
            [](const ScoredRecord* a, const ScoredRecord* b) {
              if (a->perplexity != b->perplexity)
                return a->perplexity < b->perplexity;
              return a->source_index < b->source_index;
            });

  const auto keep = std::max<std::size_t>(
      1, static_cast<std::size_t>(
             std::floor(keep_fraction * static_cast<double>(scored.size()))));
  std::vector<std::string> ids;
  ids.reserve(keep);
  for (std::size_t i = 0; i < keep && i < order.size(); ++i)
    ids.push_back(order[i]->record_id);
  return ids;
}

}  // namespace points::ppl
