#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "seqsel/lm.hpp"

using namespace seqsel;

namespace {

struct RecordingOracle : LanguageModel {
  std::string last_context;
  int calls = 0;

  std::vector<double> loglikelihood(const std::string& context, const std::string&) override {
    last_context = context;
    ++calls;
    return {-1.0};
  }
  std::string generate(const std::string& context, int, const std::string&) override {
    last_context = context;
    ++calls;
    return "out";
  }
  std::string backend_id() const override { return "test:recording"; }
};

double sum(const std::vector<double>& xs) { return std::accumulate(xs.begin(), xs.end(), 0.0); }

}  // namespace

TEST_CASE("truncate_context keeps the requested side") {
  CHECK(truncate_context("abcdef", 4, Truncation::keep_tail) == "cdef");
  CHECK(truncate_context("abcdef", 4, Truncation::keep_head) == "abcd");
  CHECK(truncate_context("abc", 10, Truncation::keep_tail) == "abc");
  CHECK(truncate_context("abc", 0, Truncation::keep_tail) == "");
}

TEST_CASE("handle truncates before the backend sees the context") {
  auto rec = std::make_shared<RecordingOracle>();
  LanguageModelHandle lm = LanguageModelHandle::make_oracle(rec);
  lm.max_context_chars = 5;

  loglikelihood(lm, "0123456789", "x");
  CHECK(rec->last_context == "56789");  // tail nearest the test input survives

  lm.truncation = Truncation::keep_head;
  generate(lm, "0123456789", 4, "");
  CHECK(rec->last_context == "01234");
}

TEST_CASE("handle-level argument contracts") {
  auto rec = std::make_shared<RecordingOracle>();
  LanguageModelHandle lm = LanguageModelHandle::make_oracle(rec);
  CHECK_THROWS_AS(loglikelihood(lm, "ctx", ""), Error);
  CHECK(generate(lm, "ctx", 0, "") == "");
  CHECK(rec->calls == 0);  // neither invalid call reached the backend
  CHECK_THROWS_AS(LanguageModelHandle::make_oracle(nullptr), Error);
}

TEST_CASE("uniform oracle scores every token at -ln(v)") {
  UniformOracle oracle(32);
  const auto lps = oracle.loglikelihood("anything", "a b c");
  REQUIRE(lps.size() == 3);
  for (double lp : lps) CHECK(lp == doctest::Approx(-std::log(32.0)));
  CHECK(oracle.generate("x", 16, "") == "");
  CHECK(oracle.backend_id() == "synthetic-oracle:uniform(v=32)");
  CHECK_THROWS_AS(UniformOracle(0), Error);
}

TEST_CASE("echo oracle generation honors stop and max_tokens") {
  EchoOracle oracle("alpha beta\ngamma");
  CHECK(oracle.generate("ctx", 64, "\n") == "alpha beta");
  CHECK(oracle.generate("ctx", 1, "\n") == "alpha");
  CHECK(oracle.generate("ctx", 64, "") == "alpha beta\ngamma");
  CHECK(oracle.generate("ctx", 0, "") == "");

  const auto hit = oracle.loglikelihood("ctx", " alpha beta\ngamma ");
  CHECK(std::exp(sum(hit) / static_cast<double>(hit.size())) == doctest::Approx(0.5));
  const auto miss = oracle.loglikelihood("ctx", "other");
  CHECK(miss.size() == 1);
  CHECK(miss[0] == doctest::Approx(std::log(1e-8)));
}

TEST_CASE("attribute oracle matches a hand-computed softmax") {
  AttributeOracleParams p;
  p.attribute_count = 4;
  AttributeOracle oracle(p);

  // two @a1 demonstrations, one @a3, query @a1
  const std::string context =
      "foo @a1 bar label1\n"
      "baz @a1 qux label1\n"
      "zip @a3 zap label3\n"
      "question about @a1";
  const auto probs = oracle.label_probabilities(context);
  REQUIRE(probs.size() == 4);
  CHECK(sum(probs) == doctest::Approx(1.0).epsilon(1e-12));

  // counts: n1 = 2, n3 = 1; q = 1
  std::vector<double> logits = {0.0, 0.25 * 2 + 2.0 * 2, 0.0, 0.25 * 1};
  double denom = 0.0;
  for (double l : logits) denom += std::exp(l);
  for (int j = 0; j < 4; ++j) CHECK(probs[j] == doctest::Approx(std::exp(logits[j]) / denom));
}

TEST_CASE("the query is the last tag in the context") {
  AttributeOracleParams p;
  p.attribute_count = 4;
  AttributeOracle oracle(p);
  // same demonstrations, different trailing query -> different winner
  const std::string demos = "x @a2 y label2\nx @a1 y label1\n";
  CHECK(oracle.generate(demos + "what about @a2", 8, "") == "label2");
  CHECK(oracle.generate(demos + "what about @a1", 8, "") == "label1");
}

TEST_CASE("position decay weights the nearest demonstration highest") {
  AttributeOracleParams p;
  p.attribute_count = 4;
  p.position_decay = 0.5;
  AttributeOracle oracle(p);

  // order: @a1 (far), @a3 (near), query @a1 -> weights 0.5 and 1.0
  const auto probs = oracle.label_probabilities("a @a1 b\nc @a3 d\nquery @a1");
  std::vector<double> logits = {0.0, 0.25 * 0.5 + 2.0 * 0.5, 0.0, 0.25 * 1.0};
  double denom = 0.0;
  for (double l : logits) denom += std::exp(l);
  for (int j = 0; j < 4; ++j) CHECK(probs[j] == doctest::Approx(std::exp(logits[j]) / denom));
}

TEST_CASE("tag scanning ignores malformed and out-of-range tags") {
  AttributeOracleParams p;
  p.attribute_count = 4;
  AttributeOracle oracle(p);
  // "@a" with no digits and "@a42" out of range are not tags: a context with
  // them mixed in scores exactly like one without, and a lone query tag with
  // no demonstrations stays uniform.
  const auto noisy = oracle.label_probabilities("email @a host @a42 x @a2 y @a2");
  const auto clean = oracle.label_probabilities("email host x @a2 y @a2");
  for (int j = 0; j < 4; ++j) CHECK(noisy[j] == clean[j]);
  CHECK(noisy[2] > noisy[0]);

  const auto uniform = oracle.label_probabilities("query @a2 alone");
  for (int j = 0; j < 4; ++j) CHECK(uniform[j] == doctest::Approx(0.25));
}

TEST_CASE("loglikelihood spreads the label log-prob across tokens") {
  AttributeOracleParams p;
  p.attribute_count = 4;
  AttributeOracle oracle(p);
  const std::string context = "x @a1 y label1\nquery @a1";
  const double p1 = oracle.label_probabilities(context)[1];

  const auto one = oracle.loglikelihood(context, "label1");
  REQUIRE(one.size() == 1);
  CHECK(one[0] == doctest::Approx(std::log(p1)));

  AttributeOracleParams pg = p;
  pg.kind = TaskKind::NLG;
  AttributeOracle gen_oracle(pg);
  const double g1 = gen_oracle.label_probabilities(context)[1];
  const auto four = gen_oracle.loglikelihood(context, AttributeOracle::target_text(1));
  REQUIRE(four.size() == 4);
  CHECK(sum(four) == doctest::Approx(std::log(g1)));

  const auto unknown = oracle.loglikelihood(context, "gibberish tokens");
  for (double lp : unknown) CHECK(lp == doctest::Approx(std::log(1e-8)));
}

TEST_CASE("nlg generation emits the target text under truncation") {
  AttributeOracleParams p;
  p.attribute_count = 4;
  p.kind = TaskKind::NLG;
  AttributeOracle oracle(p);
  const std::string context = "x @a3 y found tag a3 here\nquery @a3";
  CHECK(oracle.generate(context, 64, "\n") == "found tag a3 here");
  CHECK(oracle.generate(context, 2, "\n") == "found tag");
}

TEST_CASE("noise is deterministic in seed and context") {
  AttributeOracleParams p;
  p.attribute_count = 4;
  p.noise = 0.5;
  p.seed = 7;
  AttributeOracle a(p), b(p);
  const std::string context = "x @a1 y label1\nquery @a2";
  CHECK(a.label_probabilities(context) == b.label_probabilities(context));

  AttributeOracleParams p2 = p;
  p2.seed = 8;
  AttributeOracle c(p2);
  CHECK(a.label_probabilities(context) != c.label_probabilities(context));

  AttributeOracleParams clean = p;
  clean.noise = 0.0;
  AttributeOracle d(clean);
  CHECK(a.label_probabilities(context) != d.label_probabilities(context));
}

TEST_CASE("attribute oracle parameter validation") {
  AttributeOracleParams p;
  p.attribute_count = 1;
  CHECK_THROWS_AS(AttributeOracle{p}, Error);
  p.attribute_count = 4;
  p.noise = 1.0;
  CHECK_THROWS_AS(AttributeOracle{p}, Error);
}

TEST_CASE("backend ids identify configuration") {
  AttributeOracleParams p;
  p.seed = 3;
  AttributeOracle oracle(p);
  CHECK(oracle.backend_id().find("seed=3") != std::string::npos);
  CHECK(oracle.backend_id().find("attribute") != std::string::npos);
}
