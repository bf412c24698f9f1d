#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <utility>

#include "seqsel/construction.hpp"
#include "seqsel/prompt.hpp"

using namespace seqsel;

namespace {

// Scores are steered through the candidate text: the last "p=<x>" marker in
// the context sets the gold-label likelihood. "poison" aborts scoring.
struct MarkerBackend : LanguageModel {
  std::vector<std::string> contexts;  // every context seen, in call order

  std::vector<double> loglikelihood(const std::string& ctx, const std::string& cont) override {
    contexts.push_back(ctx);
    if (ctx.find("poison") != std::string::npos) {
      throw Error(ErrorKind::scoring, "marker backend: poisoned context");
    }
    double p = 0.5;
    const size_t pos = ctx.rfind("p=");
    if (pos != std::string::npos) p = std::stod(ctx.substr(pos + 2));
    return {cont == " yes" ? std::log(p) : std::log(1.0 - p)};
  }
  std::string generate(const std::string&, int, const std::string&) override { return ""; }
  std::string backend_id() const override { return "test:marker"; }
};

DataInstance yes_no_instance(std::string id) {
  DataInstance inst;
  inst.id = std::move(id);
  inst.input_text = "the question";
  inst.label_space = {"yes", "no"};
  inst.reference = "yes";
  inst.task_kind = TaskKind::NLU;
  return inst;
}

ExamplePool marker_pool(const std::vector<std::pair<std::string, double>>& entries) {
  ExamplePool pool;
  for (const auto& [id, p] : entries) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "p=%.3f", p);
    pool.add({id, buf, "out", "t"});
  }
  return pool;
}

bool records_equal(const TrainingRecord& a, const TrainingRecord& b) {
  if (a.instance_id != b.instance_id || a.step != b.step || a.chosen_id != b.chosen_id ||
      a.selected_so_far != b.selected_so_far || a.candidates.size() != b.candidates.size()) {
    return false;
  }
  for (size_t i = 0; i < a.candidates.size(); ++i) {
    if (a.candidates[i].example_id != b.candidates[i].example_id ||
        a.candidates[i].score != b.candidates[i].score ||
        a.candidates[i].rank != b.candidates[i].rank) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("rank probabilities match the closed form") {
  const auto dist = rank_probabilities(3);
  REQUIRE(dist.probabilities.size() == 3);
  // hand-computed: e^-1 / (e^-1 + e^-2 + e^-3), etc.
  CHECK(dist.probabilities[0] == doctest::Approx(0.665241).epsilon(1e-6));
  CHECK(dist.probabilities[1] == doctest::Approx(0.244728).epsilon(1e-6));
  CHECK(dist.probabilities[2] == doctest::Approx(0.090031).epsilon(1e-6));

  for (int l : {1, 2, 5, 50}) {
    const auto d = rank_probabilities(l);
    double sum = 0.0;
    for (size_t r = 0; r + 1 < d.probabilities.size(); ++r) {
      CHECK(d.probabilities[r] > d.probabilities[r + 1]);
      // successive ranks differ by a factor of e
      CHECK(d.probabilities[r] / d.probabilities[r + 1] == doctest::Approx(std::exp(1.0)));
    }
    for (double p : d.probabilities) sum += p;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(rank_probabilities(0), Error);
}

TEST_CASE("rank base offset does not change the distribution") {
  for (int l : {1, 3, 50}) {
    const auto one_based = rank_probabilities(l, 1);
    const auto zero_based = rank_probabilities(l, 0);
    REQUIRE(one_based.probabilities.size() == zero_based.probabilities.size());
    for (size_t r = 0; r < one_based.probabilities.size(); ++r) {
      CHECK(one_based.probabilities[r] == zero_based.probabilities[r]);  // bit-exact
    }
  }
}

TEST_CASE("draw_rank follows the distribution") {
  const auto dist = rank_probabilities(5);
  Rng rng(derive_seed(7, "draw-rank-test"));
  std::map<int, int> counts;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const int r = draw_rank(dist, rng);
    REQUIRE(r >= 1);
    REQUIRE(r <= 5);
    counts[r]++;
  }
  double tv = 0.0;
  for (int r = 1; r <= 5; ++r) {
    tv += std::abs(double(counts[r]) / n - dist.probabilities[size_t(r - 1)]);
  }
  CHECK(tv / 2.0 < 0.01);
}

TEST_CASE("sample_candidates is exclusion-aware and duplicate-free") {
  ExamplePool pool;
  for (int i = 0; i < 10; ++i) pool.add({"e" + std::to_string(i), "text", "out", "t"});
  Rng rng(42);

  auto picked = sample_candidates(pool, 6, rng, {"e0", "e1"});
  CHECK(picked.size() == 6);
  std::set<std::string> ids;
  for (const auto& e : picked) {
    ids.insert(e.id);
    CHECK(e.id != "e0");
    CHECK(e.id != "e1");
  }
  CHECK(ids.size() == 6);  // no duplicates

  // exact exhaustion: 8 eligible, ask for 8
  auto all = sample_candidates(pool, 8, rng, {"e0", "e1"});
  CHECK(all.size() == 8);

  // one short
  try {
    sample_candidates(pool, 9, rng, {"e0", "e1"});
    FAIL("expected pool_exhausted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::pool_exhausted);
  }
}

TEST_CASE("score_and_rank sorts by score then id") {
  auto backend = std::make_shared<MarkerBackend>();
  const auto lm = LanguageModelHandle::make_oracle(backend);
  const TaskTemplate tmpl;
  const auto inst = yes_no_instance("q1");

  std::vector<Example> candidates = {
      {"bbb", "p=0.600", "out", "t"},
      {"aaa", "p=0.900", "out", "t"},
      {"ccc", "p=0.600", "out", "t"},  // ties with bbb, loses on id
      {"ddd", "p=0.100", "out", "t"},
  };
  const auto scored = score_and_rank(lm, inst, "base", candidates, tmpl);
  REQUIRE(scored.size() == 4);
  CHECK(scored[0].example_id == "aaa");
  CHECK(scored[1].example_id == "bbb");
  CHECK(scored[2].example_id == "ccc");
  CHECK(scored[3].example_id == "ddd");
  for (int i = 0; i < 4; ++i) CHECK(scored[size_t(i)].rank == i + 1);
  CHECK(scored[0].score == doctest::Approx(0.9));
  CHECK(scored[1].score == doctest::Approx(0.6));
  CHECK(scored[3].score == doctest::Approx(0.1));

  candidates.push_back({"aaa", "p=0.5", "out", "t"});
  CHECK_THROWS_AS(score_and_rank(lm, inst, "base", candidates, tmpl), Error);
}

TEST_CASE("score_and_rank names the failing candidate") {
  auto backend = std::make_shared<MarkerBackend>();
  const auto lm = LanguageModelHandle::make_oracle(backend);
  const TaskTemplate tmpl;
  const auto inst = yes_no_instance("q1");

  std::vector<Example> candidates = {{"ok1", "p=0.600", "out", "t"},
                                     {"bad", "poison", "out", "t"}};
  try {
    score_and_rank(lm, inst, "base", candidates, tmpl);
    FAIL("expected scoring error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::scoring);
    CHECK(std::string(e.what()).find("candidate bad") != std::string::npos);
  }
}

TEST_CASE("construct_records chains context and never repeats a choice") {
  auto backend = std::make_shared<MarkerBackend>();
  const auto lm = LanguageModelHandle::make_oracle(backend);
  const TaskTemplate tmpl;
  auto pool = marker_pool({{"e0", 0.1},
                           {"e1", 0.2},
                           {"e2", 0.3},
                           {"e3", 0.4},
                           {"e4", 0.5},
                           {"e5", 0.6}});
  const auto inst = yes_no_instance("q1");

  ConstructionParams params;
  params.k = 3;
  params.l = 3;
  Rng rng(derive_seed(5, "construct-test"));
  const auto records = construct_records(lm, inst, pool, params, rng, tmpl);

  REQUIRE(records.size() == 3);
  std::vector<std::string> chosen;
  for (int step = 0; step < 3; ++step) {
    const auto& rec = records[size_t(step)];
    CHECK(rec.instance_id == "q1");
    CHECK(rec.step == step + 1);
    CHECK(rec.selected_so_far == chosen);
    REQUIRE(rec.candidates.size() == 3);
    // ranks are 1..L with non-increasing scores
    for (int i = 0; i < 3; ++i) CHECK(rec.candidates[size_t(i)].rank == i + 1);
    for (int i = 0; i + 1 < 3; ++i) {
      CHECK(rec.candidates[size_t(i)].score >= rec.candidates[size_t(i + 1)].score);
    }
    // the chosen id is one of this step's candidates
    bool found = false;
    for (const auto& c : rec.candidates) found = found || c.example_id == rec.chosen_id;
    CHECK(found);
    // earlier choices are excluded from later candidate draws
    for (const auto& c : rec.candidates) {
      CHECK(std::find(chosen.begin(), chosen.end(), c.example_id) == chosen.end());
    }
    chosen.push_back(rec.chosen_id);
  }
  std::set<std::string> unique(chosen.begin(), chosen.end());
  CHECK(unique.size() == 3);

  // each step scored candidates against the exact prompt of the partial
  // selection: replaying extend_context from the base must reproduce a
  // context the backend saw, byte for byte
  std::string context = render_input_pattern(tmpl, inst.input_text);
  for (const auto& rec : records) {
    if (rec.step > 1) {
      context = extend_context(pool.get(records[size_t(rec.step - 2)].chosen_id), tmpl, context);
    }
    const std::string probe = extend_context(pool.get(rec.candidates[0].example_id), tmpl, context);
    CHECK(std::count(backend->contexts.begin(), backend->contexts.end(), probe) > 0);
  }
}

TEST_CASE("construct_records excludes the instance itself when it is pooled") {
  auto backend = std::make_shared<MarkerBackend>();
  const auto lm = LanguageModelHandle::make_oracle(backend);
  const TaskTemplate tmpl;
  auto pool = marker_pool({{"q1", 0.9}, {"e1", 0.2}, {"e2", 0.3}, {"e3", 0.4}, {"e4", 0.5}});
  const auto inst = yes_no_instance("q1");

  ConstructionParams params;
  params.k = 2;
  params.l = 3;
  Rng rng(11);
  const auto records = construct_records(lm, inst, pool, params, rng, tmpl);
  for (const auto& rec : records) {
    for (const auto& c : rec.candidates) CHECK(c.example_id != "q1");
  }
}

TEST_CASE("construct_records is deterministic in the rng seed") {
  const TaskTemplate tmpl;
  auto pool = marker_pool({{"e0", 0.15}, {"e1", 0.25}, {"e2", 0.35}, {"e3", 0.45}, {"e4", 0.55}});
  const auto inst = yes_no_instance("q1");
  ConstructionParams params;
  params.k = 2;
  params.l = 3;

  auto run = [&](uint64_t seed) {
    auto backend = std::make_shared<MarkerBackend>();
    const auto lm = LanguageModelHandle::make_oracle(backend);
    Rng rng(seed);
    return construct_records(lm, inst, pool, params, rng, tmpl);
  };
  const auto a = run(99);
  const auto b = run(99);
  const auto c = run(100);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(records_equal(a[i], b[i]));
  bool all_equal = a.size() == c.size();
  for (size_t i = 0; all_equal && i < a.size(); ++i) all_equal = records_equal(a[i], c[i]);
  CHECK_FALSE(all_equal);  // a different seed draws different candidates
}

TEST_CASE("construct_corpus is independent of the job count") {
  const TaskTemplate tmpl;
  auto pool = marker_pool({{"e0", 0.1}, {"e1", 0.2}, {"e2", 0.3}, {"e3", 0.4},
                           {"e4", 0.5}, {"e5", 0.6}, {"e6", 0.7}});
  std::vector<DataInstance> instances;
  for (int i = 0; i < 8; ++i) instances.push_back(yes_no_instance("q" + std::to_string(i)));
  ConstructionParams params;
  params.k = 2;
  params.l = 4;

  auto run = [&](int jobs) {
    auto backend = std::make_shared<MarkerBackend>();
    const auto lm = LanguageModelHandle::make_oracle(backend);
    return construct_corpus(lm, instances, pool, params, 1234, tmpl, jobs);
  };
  const auto serial = run(1);
  const auto parallel = run(4);
  CHECK(serial.skipped.empty());
  REQUIRE(serial.records.size() == instances.size() * 2);
  REQUIRE(parallel.records.size() == serial.records.size());
  for (size_t i = 0; i < serial.records.size(); ++i) {
    CHECK(records_equal(serial.records[i], parallel.records[i]));
  }
  // records arrive grouped by instance, in input order
  for (size_t i = 0; i < instances.size(); ++i) {
    CHECK(serial.records[2 * i].instance_id == instances[i].id);
    CHECK(serial.records[2 * i].step == 1);
    CHECK(serial.records[2 * i + 1].instance_id == instances[i].id);
    CHECK(serial.records[2 * i + 1].step == 2);
  }
}

TEST_CASE("construct_corpus skips scoring failures but propagates structural errors") {
  const TaskTemplate tmpl;
  // q_poison's own input text poisons every context it anchors
  auto pool = marker_pool({{"e0", 0.1}, {"e1", 0.2}, {"e2", 0.3}});
  std::vector<DataInstance> instances = {yes_no_instance("q0"), yes_no_instance("q_poison"),
                                         yes_no_instance("q2")};
  instances[1].input_text = "poison question";

  ConstructionParams params;
  params.k = 1;
  params.l = 2;
  auto backend = std::make_shared<MarkerBackend>();
  const auto lm = LanguageModelHandle::make_oracle(backend);
  const auto result = construct_corpus(lm, instances, pool, params, 7, tmpl, 2);

  REQUIRE(result.skipped.size() == 1);
  CHECK(result.skipped[0].instance_id == "q_poison");
  CHECK(result.skipped[0].reason.find("poison") != std::string::npos);
  REQUIRE(result.records.size() == 2);
  CHECK(result.records[0].instance_id == "q0");
  CHECK(result.records[1].instance_id == "q2");

  // asking for more candidates than the pool holds is not skippable
  params.l = 5;
  CHECK_THROWS_AS(construct_corpus(lm, instances, pool, params, 7, tmpl, 2), Error);
}
