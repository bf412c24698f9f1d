#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>
#include <unordered_set>

#include "seqsel/construction.hpp"
#include "seqsel/prompt.hpp"

namespace seqsel {

RankDistribution rank_probabilities(int l, int first_rank) {
  require(l >= 1, ErrorKind::invalid_argument, "rank_probabilities: L must be >= 1");
  // exponents are -first_rank, -(first_rank+1), ...; subtracting the max
  // exponent first makes the result independent of first_rank, bit for bit.
  std::vector<double> exponents(static_cast<size_t>(l));
  for (int r = 0; r < l; ++r) exponents[static_cast<size_t>(r)] = -double(first_rank + r);
  const double max_exp = *std::max_element(exponents.begin(), exponents.end());
  RankDistribution dist;
  dist.l = l;
  dist.probabilities.resize(static_cast<size_t>(l));
  double denom = 0.0;
  for (size_t r = 0; r < exponents.size(); ++r) {
    dist.probabilities[r] = std::exp(exponents[r] - max_exp);
    denom += dist.probabilities[r];
  }
  for (double& p : dist.probabilities) p /= denom;
  return dist;
}

int draw_rank(const RankDistribution& dist, Rng& rng) {
  const double u = rng.next_unit();
  double cum = 0.0;
  for (size_t r = 0; r < dist.probabilities.size(); ++r) {
    cum += dist.probabilities[r];
    if (u < cum) return static_cast<int>(r) + 1;
  }
  return dist.l;  // guards against u landing on accumulated round-off
}

std::vector<Example> sample_candidates(const ExamplePool& pool, int l, Rng& rng,
                                       const std::vector<std::string>& exclude) {
  require(l >= 1, ErrorKind::invalid_argument, "sample_candidates: L must be >= 1");
  const std::unordered_set<std::string> excluded(exclude.begin(), exclude.end());
  std::vector<const Example*> eligible;
  eligible.reserve(pool.size());
  for (const Example& e : pool.items()) {
    if (!excluded.count(e.id)) eligible.push_back(&e);
  }
  if (eligible.size() < static_cast<size_t>(l)) {
    throw Error(ErrorKind::pool_exhausted,
                "sample_candidates: need " + std::to_string(l) + " examples, only " +
                    std::to_string(eligible.size()) + " eligible");
  }
  // partial Fisher-Yates over the eligible slice
  std::vector<Example> out;
  out.reserve(static_cast<size_t>(l));
  for (int i = 0; i < l; ++i) {
    const size_t j = static_cast<size_t>(i) + rng.next_below(eligible.size() - i);
    std::swap(eligible[static_cast<size_t>(i)], eligible[j]);
    out.push_back(*eligible[static_cast<size_t>(i)]);
  }
  return out;
}

std::vector<CandidateScore> score_and_rank(const LanguageModelHandle& lm,
                                           const DataInstance& instance,
                                           const std::string& current_context_prefix,
                                           const std::vector<Example>& candidates,
                                           const TaskTemplate& tmpl, const GenSettings& gen) {
  require(!candidates.empty(), ErrorKind::invalid_argument, "score_and_rank: no candidates");
  {
    std::unordered_set<std::string> seen;
    for (const Example& e : candidates) {
      require(seen.insert(e.id).second, ErrorKind::invalid_argument,
              "score_and_rank: duplicate candidate id " + e.id);
    }
  }
  std::vector<CandidateScore> scored;
  scored.reserve(candidates.size());
  for (const Example& e : candidates) {
    CandidateScore cs;
    cs.example_id = e.id;
    try {
      cs.score = score_candidate(lm, instance, current_context_prefix, e, tmpl, gen);
    } catch (const Error& err) {
      throw Error(err.kind(), std::string(err.what()) + " (candidate " + e.id + ")",
                  err.retryable());
    }
    scored.push_back(std::move(cs));
  }
  std::sort(scored.begin(), scored.end(), [](const CandidateScore& a, const CandidateScore& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.example_id < b.example_id;
  });
  for (size_t i = 0; i < scored.size(); ++i) scored[i].rank = static_cast<int>(i) + 1;
  return scored;
}

std::vector<TrainingRecord> construct_records(const LanguageModelHandle& lm,
                                              const DataInstance& instance,
                                              const ExamplePool& pool,
                                              const ConstructionParams& params, Rng& rng,
                                              const TaskTemplate& tmpl) {
  require(params.k >= 1, ErrorKind::invalid_argument, "construct_records: K must be >= 1");
  validate_instance(instance);
  const RankDistribution dist = rank_probabilities(params.l);

  std::vector<std::string> exclude;
  if (pool.contains(instance.id)) exclude.push_back(instance.id);

  std::vector<TrainingRecord> records;
  records.reserve(static_cast<size_t>(params.k));
  std::vector<std::string> selected;
  std::string context = render_input_pattern(tmpl, instance.input_text);

  for (int step = 1; step <= params.k; ++step) {
    const auto candidates = sample_candidates(pool, params.l, rng, exclude);
    TrainingRecord record;
    record.instance_id = instance.id;
    record.step = step;
    record.selected_so_far = selected;
    record.candidates = score_and_rank(lm, instance, context, candidates, tmpl, params.gen);
    const int rank = draw_rank(dist, rng);
    record.chosen_id = record.candidates[static_cast<size_t>(rank - 1)].example_id;

    selected.push_back(record.chosen_id);
    exclude.push_back(record.chosen_id);
    context = extend_context(pool.get(record.chosen_id), tmpl, context);
    records.push_back(std::move(record));
  }
  return records;
}

CorpusResult construct_corpus(const LanguageModelHandle& lm,
                              const std::vector<DataInstance>& instances, const ExamplePool& pool,
                              const ConstructionParams& params, uint64_t seed,
                              const TaskTemplate& tmpl, int jobs,
                              const ProgressFn& progress) {
  require(jobs >= 1, ErrorKind::invalid_argument, "construct_corpus: jobs must be >= 1");

  struct Slot {
    std::vector<TrainingRecord> records;
    std::string error;  // empty = ok
  };
  std::vector<Slot> slots(instances.size());
  std::atomic<size_t> next{0};
  std::atomic<size_t> done{0};
  std::mutex progress_mu;
  std::exception_ptr fatal;
  std::mutex fatal_mu;

  auto worker = [&] {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= instances.size()) return;
      {
        std::lock_guard<std::mutex> lock(fatal_mu);
        if (fatal) return;
      }
      const DataInstance& instance = instances[i];
      Rng rng(derive_seed(seed, "construct/" + instance.id));
      try {
        slots[i].records = construct_records(lm, instance, pool, params, rng, tmpl);
      } catch (const Error& err) {
        if (err.kind() == ErrorKind::backend || err.kind() == ErrorKind::scoring) {
          slots[i].error = err.what();
        } else {
          std::lock_guard<std::mutex> lock(fatal_mu);
          if (!fatal) fatal = std::current_exception();
          return;
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(fatal_mu);
        if (!fatal) fatal = std::current_exception();
        return;
      }
      const size_t finished = done.fetch_add(1) + 1;
      if (progress) {
        std::lock_guard<std::mutex> lock(progress_mu);
        progress(instance.id, finished, instances.size());
      }
    }
  };

  if (jobs == 1 || instances.size() <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    const size_t n = std::min<size_t>(static_cast<size_t>(jobs), instances.size());
    threads.reserve(n);
    for (size_t t = 0; t < n; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (fatal) std::rethrow_exception(fatal);

  CorpusResult result;
  for (size_t i = 0; i < instances.size(); ++i) {
    if (!slots[i].error.empty()) {
      result.skipped.push_back({instances[i].id, slots[i].error});
      continue;
    }
    for (auto& record : slots[i].records) result.records.push_back(std::move(record));
  }
  return result;
}

}  // namespace seqsel
