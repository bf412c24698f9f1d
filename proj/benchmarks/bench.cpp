// Microbenchmarks for the hot paths: hashing featurizer, Rouge-L, exact
// top-k scan, one InfoNCE step, and full beam search.
#include <benchmark/benchmark.h>

#include <map>
#include <string>
#include <vector>

#include "seqsel/construction.hpp"
#include "seqsel/encoder.hpp"
#include "seqsel/evaluation.hpp"
#include "seqsel/featurize.hpp"
#include "seqsel/retrieval.hpp"
#include "seqsel/rng.hpp"
#include "seqsel/rouge.hpp"

using namespace seqsel;

namespace {

std::string make_text(size_t words, uint64_t seed) {
  static const char* vocab[] = {"alpha", "bravo", "charlie", "delta", "echo", "foxtrot",
                                "golf",  "hotel", "india",   "juliet"};
  Rng rng(seed);
  std::string out;
  for (size_t i = 0; i < words; ++i) {
    if (i) out += ' ';
    out += vocab[rng.next_below(std::size(vocab))];
  }
  return out;
}

struct PipelineFixtures {
  SyntheticTask task;
  EncoderModel model;
  DenseIndex index;
};

const PipelineFixtures& fixtures(int pool_size) {
  static std::map<int, PipelineFixtures> cache;
  auto it = cache.find(pool_size);
  if (it == cache.end()) {
    SyntheticTaskSpec spec;
    spec.seed = 40 + pool_size;
    spec.pool_size = pool_size;
    spec.instance_count = 4;
    PipelineFixtures f;
    f.task = generate_synthetic_task(spec);
    FeatConfig fc;
    fc.dim = 1u << 16;
    f.model = init_model(fc, 32, 7);
    f.model.version = model_content_version(f.model);
    f.index = build_index(f.model, f.task.pool);
    it = cache.emplace(pool_size, std::move(f)).first;
  }
  return it->second;
}

void BM_featurize(benchmark::State& state) {
  FeatConfig fc;
  fc.dim = 1u << 18;
  const std::string text = make_text(state.range(0), 3);
  for (auto _ : state) benchmark::DoNotOptimize(featurize(text, fc));
  state.SetBytesProcessed(state.iterations() * text.size());
}
BENCHMARK(BM_featurize)->Arg(16)->Arg(128)->Arg(1024);

void BM_rouge_l(benchmark::State& state) {
  const std::string ref = make_text(state.range(0), 11);
  const std::string cand = make_text(state.range(0), 12);
  for (auto _ : state) benchmark::DoNotOptimize(rouge_l_f1(ref, cand));
}
BENCHMARK(BM_rouge_l)->Arg(16)->Arg(64)->Arg(256);

void BM_top_k(benchmark::State& state) {
  const PipelineFixtures& f = fixtures(state.range(0));
  const std::vector<double> query = encode_input(f.model, make_text(24, 21));
  for (auto _ : state) benchmark::DoNotOptimize(top_k(f.index, query, 10, {}));
  state.SetItemsProcessed(state.iterations() * f.index.size());
}
BENCHMARK(BM_top_k)->Arg(64)->Arg(512)->Arg(4096);

void BM_infonce_step(benchmark::State& state) {
  FeatConfig fc;
  fc.dim = 1u << 16;
  const EncoderModel model = init_model(fc, 32, 9);
  ContrastiveBatch batch;
  batch.anchor = featurize(make_text(48, 31), fc);
  batch.positive = featurize(make_text(24, 32), fc);
  batch.positive_id = "pos";
  for (int i = 0; i < 20; ++i) {
    batch.negatives.push_back(featurize(make_text(24, 40 + i), fc));
    batch.negative_ids.push_back("n" + std::to_string(i));
  }
  for (auto _ : state) benchmark::DoNotOptimize(infonce_loss_and_grad(model, batch));
}
BENCHMARK(BM_infonce_step);

void BM_beam_search(benchmark::State& state) {
  const PipelineFixtures& f = fixtures(512);
  const std::string& input = f.task.instances[0].input_text;
  const int w = state.range(0);
  for (auto _ : state)
    benchmark::DoNotOptimize(beam_search(input, 3, w, f.index, f.model, f.task.pool, f.task.tmpl));
}
BENCHMARK(BM_beam_search)->Arg(1)->Arg(3)->Arg(8);

}  // namespace

BENCHMARK_MAIN();
