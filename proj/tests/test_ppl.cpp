#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "points/ppl.hpp"

using namespace points;
using namespace points::ppl;

namespace {

// Independent route: perplexity as the product of per-token factors
// exp(-lp / N), evaluated token by token.
double perplexity_oracle(const std::vector<double>& logprobs) {
  const double n = static_cast<double>(logprobs.size());
  double product = 1.0;
  for (double lp : logprobs) product *= std::exp(-lp / n);
  return product;
}

corpus::CorpusRecord record(std::string id, std::string caption,
                            std::optional<std::vector<double>> lps = {}) {
  corpus::CorpusRecord r;
  r.id = std::move(id);
  r.caption = std::move(caption);
  r.logprobs = std::move(lps);
  return r;
}

}  // namespace

TEST_CASE("perplexity hand cases") {
  const double ln_quarter = std::log(0.25);
  CHECK(perplexity({ln_quarter, ln_quarter, ln_quarter}) ==
        doctest::Approx(4.0).epsilon(1e-12));
  CHECK(perplexity({0.0, 0.0, 0.0, 0.0}) == doctest::Approx(1.0));
  // [ln 0.5, ln 0.25] -> 2 * sqrt(2)
  CHECK(perplexity({std::log(0.5), std::log(0.25)}) ==
        doctest::Approx(2.0 * std::sqrt(2.0)).epsilon(1e-9));
}

TEST_CASE("perplexity input validation") {
  CHECK_THROWS_AS(perplexity({}), std::invalid_argument);
  CHECK_THROWS_AS(perplexity({0.1}), std::invalid_argument);
  CHECK_THROWS_AS(perplexity({-std::numeric_limits<double>::infinity()}),
                  std::invalid_argument);
}

TEST_CASE("perplexity matches the independent oracle on random inputs") {
  std::mt19937 rng(101);
  std::uniform_real_distribution<double> lp(-9.0, 0.0);
  std::uniform_int_distribution<int> len(1, 60);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> lps(static_cast<std::size_t>(len(rng)));
    for (auto& v : lps) v = lp(rng);
    const double got = perplexity(lps);
    const double want = perplexity_oracle(lps);
    CHECK(std::abs(got - want) / want <= 1e-9);
  }
}

TEST_CASE("perplexity monotonicity in the appended token") {
  std::mt19937 rng(103);
  std::uniform_real_distribution<double> lp(-6.0, -0.01);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> lps(10);
    for (auto& v : lps) v = lp(rng);
    const double base = perplexity(lps);
    double mean = 0.0;
    for (double v : lps) mean += v / 10.0;

    auto below = lps;
    below.push_back(mean - 1.0);
    CHECK(perplexity(below) > base);

    auto above = lps;
    above.push_back(std::min(mean + 0.5, 0.0));
    CHECK(perplexity(above) < base);
  }
}

TEST_CASE("train_ngram counts by hand") {
  const std::vector<std::vector<std::string>> corpus{{"a", "b", "a", "b"}};
  const auto model = train_ngram(corpus, 2, 1.0);
  CHECK(model.vocabulary == std::unordered_set<std::string>{"a", "b"});
  CHECK(model.counts.at("a").at("b") == 2);
  CHECK(model.counts.at("b").at("a") == 1);
  CHECK(model.context_totals.at("a") == 2);
  CHECK(model.context_totals.at("b") == 1);
}

TEST_CASE("single-token unigram is certain") {
  const auto model = train_ngram({{"a"}}, 1, 0.5);
  const auto lps = score_ngram(model, {"a"});
  REQUIRE(lps.size() == 1);
  CHECK(std::exp(lps[0]) == doctest::Approx(1.0));
}

TEST_CASE("order-1 model ignores context") {
  const auto model = train_ngram({{"x", "y", "x"}}, 1, 1.0);
  const auto a = score_ngram(model, {"x"});
  const auto b = score_ngram(model, {"y", "x"});
  CHECK(a[0] == doctest::Approx(b[1]));
}

TEST_CASE("score_ngram smoothing formula") {
  const auto model = train_ngram({{"a", "b", "a", "b"}}, 2, 1.0);
  // P(b|a) = (2+1)/(2+2), P(a|a) = (0+1)/(2+2)
  const auto lps = score_ngram(model, {"a", "b"});
  REQUIRE(lps.size() == 2);
  CHECK(std::exp(lps[1]) == doctest::Approx(0.75));
  const auto lps2 = score_ngram(model, {"a", "a"});
  CHECK(std::exp(lps2[1]) == doctest::Approx(0.25));
}

TEST_CASE("per-context probabilities sum to 1") {
  const std::vector<std::vector<std::string>> corpus{
      {"the", "cat", "sat"}, {"the", "dog", "sat"}, {"cat", "and", "dog"}};
  const auto model = train_ngram(corpus, 2, 0.7);
  std::vector<std::string> contexts{"the", "cat", "unseen-context"};
  for (const auto& ctx : contexts) {
    double total = 0.0;
    for (const auto& tok : model.vocabulary) {
      const auto lps = score_ngram(model, {ctx, tok});
      total += std::exp(lps[1]);
    }
    // The first position consumes the BOS context; position 1 is P(tok|ctx).
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }
}

TEST_CASE("train/score input validation") {
  CHECK_THROWS_AS(train_ngram({}, 2, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(train_ngram({{"a"}}, 0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(train_ngram({{"a"}}, 2, 0.0), std::invalid_argument);
  const auto model = train_ngram({{"a"}}, 1, 1.0);
  CHECK_THROWS_AS(score_ngram(model, {}), std::invalid_argument);
}

TEST_CASE("tokenize modes") {
  CHECK(tokenize("the  cat\tsat\n", false) ==
        std::vector<std::string>{"the", "cat", "sat"});
  CHECK(tokenize("ab", true) == std::vector<std::string>{"a", "b"});
  const auto utf8 = tokenize("a\xC3\xA9z", true);  // 'a', U+00E9, 'z'
  REQUIRE(utf8.size() == 3);
  CHECK(utf8[1] == "\xC3\xA9");
}

TEST_CASE("score_corpus with attached log-probs") {
  std::vector<corpus::CorpusRecord> records;
  records.push_back(record("r0", "", std::vector<double>{std::log(0.5)}));
  records.push_back(record("r1", "", std::vector<double>{std::log(0.25), std::log(0.25)}));
  records.push_back(record("r2", "", std::vector<double>{0.0}));

  const auto out = score_corpus(records, nullptr, 1);
  REQUIRE(out.scored.size() == 3);
  CHECK(out.problems.empty());
  CHECK(out.scored[0].perplexity == doctest::Approx(2.0));
  CHECK(out.scored[1].perplexity == doctest::Approx(4.0));
  CHECK(out.scored[2].perplexity == doctest::Approx(1.0));
  CHECK(out.scored[1].record_id == "r1");
  CHECK(out.scored[1].source_index == 1);
}

TEST_CASE("score_corpus empty stream and bad records") {
  CHECK(score_corpus({}, nullptr, 4).scored.empty());

  std::vector<corpus::CorpusRecord> records;
  records.push_back(record("ok", "", std::vector<double>{-1.0}));
  records.push_back(record("bad", ""));  // neither text nor log-probs
  const auto out = score_corpus(records, nullptr, 2);
  REQUIRE(out.scored.size() == 1);
  REQUIRE(out.problems.size() == 1);
  CHECK(out.problems[0].record_id == "bad");
}

TEST_CASE("score_corpus is deterministic across worker counts") {
  std::mt19937 rng(107);
  std::uniform_real_distribution<double> lp(-8.0, 0.0);
  std::uniform_int_distribution<int> len(1, 30);
  std::vector<corpus::CorpusRecord> records;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> lps(static_cast<std::size_t>(len(rng)));
    for (auto& v : lps) v = lp(rng);
    records.push_back(record("rec" + std::to_string(i), "", std::move(lps)));
  }
  const auto one = score_corpus(records, nullptr, 1);
  const auto eight = score_corpus(records, nullptr, 8);
  REQUIRE(one.scored.size() == eight.scored.size());
  for (std::size_t i = 0; i < one.scored.size(); ++i) {
    CHECK(one.scored[i].record_id == eight.scored[i].record_id);
    // Bit-identical, not merely close.
    CHECK(one.scored[i].perplexity == eight.scored[i].perplexity);
  }
}

TEST_CASE("filter_corpus examples") {
  auto make = [](double pplx, std::size_t idx) {
    return ScoredRecord{"id" + std::to_string(idx), pplx, idx};
  };

  SUBCASE("exact keep count") {
    std::vector<ScoredRecord> scored;
    for (std::size_t i = 0; i < 10; ++i)
      scored.push_back(make(10.0 - static_cast<double>(i), i));
    const auto kept = filter_corpus(scored, 0.2);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0] == "id9");
    CHECK(kept[1] == "id8");
  }
  SUBCASE("stable tie-break by source index") {
    std::vector<ScoredRecord> scored;
    for (std::size_t i = 0; i < 5; ++i) scored.push_back(make(2.0, i));
    const auto kept = filter_corpus(scored, 0.4);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0] == "id0");
    CHECK(kept[1] == "id1");
  }
  SUBCASE("hand-sorted example") {
    const std::vector<double> ppls{3.1, 1.2, 2.7, 9.9, 1.1};
    std::vector<ScoredRecord> scored;
    for (std::size_t i = 0; i < ppls.size(); ++i) scored.push_back(make(ppls[i], i));
    const auto kept = filter_corpus(scored, 0.4);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0] == "id4");
    CHECK(kept[1] == "id1");
  }
  SUBCASE("minimum of one record") {
    std::vector<ScoredRecord> scored{make(5.0, 0), make(1.0, 1)};
    const auto kept = filter_corpus(scored, 0.1);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0] == "id1");
  }
  SUBCASE("fraction 1.0 keeps everything") {
    std::vector<ScoredRecord> scored{make(5.0, 0), make(1.0, 1), make(3.0, 2)};
    const auto kept = filter_corpus(scored, 1.0);
    CHECK(kept.size() == 3);
  }
  SUBCASE("validation") {
    std::vector<ScoredRecord> scored{make(1.0, 0)};
    CHECK_THROWS_AS(filter_corpus({}, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(filter_corpus(scored, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(filter_corpus(scored, 1.5), std::invalid_argument);
  }
}
