#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

#include "seqsel/evaluation.hpp"
#include "seqsel/io.hpp"
#include "seqsel/prompt.hpp"

namespace seqsel {

using json = nlohmann::json;

namespace {

// A wide filler vocabulary keeps incidental word overlap between unrelated
// texts rare, so the attribute tag stays the dominant lexical signal.
const std::vector<std::string>& filler_vocab() {
  static const std::vector<std::string> words = {
      "amber",   "anvil",   "arbor",   "ashen",   "aspen",   "atoll",   "auburn",  "badger",
      "basalt",  "beacon",  "birch",   "bison",   "bluff",   "bramble", "brook",   "butte",
      "cairn",   "canyon",  "cedar",   "cinder",  "cliff",   "cobalt",  "comet",   "coral",
      "cove",    "crag",    "creek",   "crest",   "delta",   "drift",   "dune",    "eddy",
      "elm",     "ember",   "ermine",  "falcon",  "fern",    "finch",   "fjord",   "flint",
      "fog",     "forge",   "garnet",  "geyser",  "glacier", "glade",   "gorge",   "granite",
      "grove",   "gull",    "harbor",  "heath",   "hollow",  "ibis",    "inlet",   "iris",
      "jade",    "jasper",  "juniper", "kelp",    "kestrel", "knoll",   "lagoon",  "larch",
      "lark",    "lichen",  "loam",    "lynx",    "maple",   "marble",  "marsh",   "meadow",
      "mesa",    "mica",    "moor",    "moss",    "nectar",  "newt",    "oak",     "ochre",
      "onyx",    "opal",    "osprey",  "otter",   "pebble",  "pine",    "plume",   "pond",
      "prairie", "quartz",  "raven",   "reed",    "reef",    "ridge",   "rill",    "rowan",
      "rust",    "sable",   "sage",    "sandbar", "sedge",   "shale",   "shoal",   "sleet",
      "slate",   "sorrel",  "spruce",  "summit",  "swale",   "talon",   "tarn",    "teal",
      "thicket", "tide",    "topaz",   "trout",   "tundra",  "umber",   "vale",    "wharf",
      "willow",  "wren",    "yarrow",  "zephyr"};
  return words;
}

std::string padded(int value, int width) {
  std::ostringstream out;
  out << std::setw(width) << std::setfill('0') << value;
  return out.str();
}

// "<fillers> @a<attr> <fillers>" with the tag at a random slot.
std::string attribute_text(int attribute, Rng& rng, size_t min_fill, size_t fill_spread) {
  const auto& vocab = filler_vocab();
  const size_t n_fill = min_fill + rng.next_below(fill_spread);
  std::vector<std::string> words;
  words.reserve(n_fill + 1);
  for (size_t i = 0; i < n_fill; ++i) words.push_back(vocab[rng.next_below(vocab.size())]);
  words.insert(words.begin() + static_cast<long>(rng.next_below(words.size() + 1)),
               AttributeOracle::tag(attribute));
  std::string out;
  for (size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

// Test inputs are phrased as questions with the tag in a fixed marked slot.
// The marker words never occur in pool texts, so "for @a<i>" n-grams are
// unique to the query portion of a rendered context.
std::string instance_text(int attribute, Rng& rng) {
  const auto& vocab = filler_vocab();
  std::string out = "which label for " + AttributeOracle::tag(attribute) + " :";
  const size_t n_fill = 1 + rng.next_below(3);  // 1..3 trailing fillers
  for (size_t i = 0; i < n_fill; ++i) {
    out += ' ';
    out += vocab[rng.next_below(vocab.size())];
  }
  return out;
}

double mean(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

double sample_stddev(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

}  // namespace

SyntheticTask generate_synthetic_task(const SyntheticTaskSpec& spec) {
  require(spec.attribute_count >= 2, ErrorKind::invalid_argument,
          "synthetic task: attribute_count must be >= 2");
  require(spec.pool_size >= spec.attribute_count, ErrorKind::invalid_argument,
          "synthetic task: pool must cover every attribute");
  require(spec.instance_count >= 1, ErrorKind::invalid_argument,
          "synthetic task: instance_count must be >= 1");
  require(spec.noise >= 0.0 && spec.noise < 1.0, ErrorKind::invalid_argument,
          "synthetic task: noise must be in [0,1)");

  SyntheticTask task;
  task.spec = spec;
  {
    std::ostringstream id;
    id << "attr-" << (spec.kind == TaskKind::NLU ? "nlu" : "nlg") << "-s" << spec.seed;
    task.task_id = id.str();
  }
  task.tmpl.task_id = task.task_id;

  std::vector<std::string> label_space;
  for (int a = 0; a < spec.attribute_count; ++a)
    label_space.push_back(AttributeOracle::label_text(a));

  Rng rng(derive_seed(spec.seed, "task"));
  const int pool_width = static_cast<int>(std::to_string(spec.pool_size - 1).size());
  for (int i = 0; i < spec.pool_size; ++i) {
    // first A examples cover every attribute, the rest draw uniformly
    const int attr = i < spec.attribute_count
                         ? i
                         : static_cast<int>(rng.next_below(spec.attribute_count));
    Example e;
    e.id = "ex" + padded(i, pool_width);
    e.task_id = task.task_id;
    e.input_text = attribute_text(attr, rng, 3, 4);  // 3..6 fillers
    e.output_text = spec.kind == TaskKind::NLU ? AttributeOracle::label_text(attr)
                                               : AttributeOracle::target_text(attr);
    task.pool.add(std::move(e));
  }

  const int inst_width = static_cast<int>(std::to_string(spec.instance_count - 1).size());
  for (int j = 0; j < spec.instance_count; ++j) {
    const int attr = static_cast<int>(rng.next_below(spec.attribute_count));
    DataInstance inst;
    inst.id = "q" + padded(j, inst_width);
    inst.task_id = task.task_id;
    inst.task_kind = spec.kind;
    inst.input_text = instance_text(attr, rng);
    if (spec.kind == TaskKind::NLU) {
      inst.label_space = label_space;
      inst.reference = AttributeOracle::label_text(attr);
    } else {
      inst.reference = AttributeOracle::target_text(attr);
    }
    task.instances.push_back(std::move(inst));
  }

  AttributeOracleParams params;
  params.seed = derive_seed(spec.seed, "oracle");
  params.attribute_count = spec.attribute_count;
  params.noise = spec.noise;
  params.position_decay = spec.position_decay;
  params.kind = spec.kind;
  task.oracle = LanguageModelHandle::make_oracle(std::make_shared<AttributeOracle>(params));
  return task;
}

std::string to_string(EvalMethod method) {
  switch (method) {
    case EvalMethod::zero_shot: return "zero_shot";
    case EvalMethod::random: return "random";
    case EvalMethod::best_of_n: return "best_of_n";
    case EvalMethod::similarity: return "similarity";
    case EvalMethod::greedy: return "greedy";
    case EvalMethod::beam_top1: return "beam_top1";
    case EvalMethod::beam_avg: return "beam_avg";
  }
  throw Error(ErrorKind::invalid_argument, "unknown eval method");
}

EvalMethod eval_method_from_string(std::string_view name) {
  for (EvalMethod m : {EvalMethod::zero_shot, EvalMethod::random, EvalMethod::best_of_n,
                       EvalMethod::similarity, EvalMethod::greedy, EvalMethod::beam_top1,
                       EvalMethod::beam_avg}) {
    if (to_string(m) == name) return m;
  }
  throw Error(ErrorKind::data, "unknown eval method '" + std::string(name) + "'");
}

double evaluate_selection(const SyntheticTask& task, const DataInstance& instance,
                          const std::vector<std::string>& selected, const GenSettings& gen) {
  const PromptSequence seq{selected, render_input_pattern(task.tmpl, instance.input_text)};
  const std::string full = render_prompt(seq, task.tmpl, task.pool);
  if (instance.task_kind == TaskKind::NLU) {
    const auto lh = label_likelihoods_for_context(task.oracle, instance, full, task.tmpl);
    const size_t pred =
        static_cast<size_t>(std::max_element(lh.begin(), lh.end()) - lh.begin());
    return instance.label_space[pred] == instance.reference ? 1.0 : 0.0;
  }
  return score_nlg_for_context(task.oracle, instance, full, gen);
}

namespace {

std::string metric_name_for(const SyntheticTask& task) {
  return task.spec.kind == TaskKind::NLU ? "accuracy" : "rouge_l_f1";
}

EvalReport make_report(const SyntheticTask& task, EvalMethod method, double value, int n_seeds,
                       double stddev) {
  EvalReport r;
  r.task_id = task.task_id;
  r.method = method;
  r.metric_name = metric_name_for(task);
  r.value = value;
  r.n_seeds = n_seeds;
  r.stddev = stddev;
  return r;
}

}  // namespace

EvalReport run_zero_shot(const SyntheticTask& task, const GenSettings& gen) {
  std::vector<double> metrics;
  metrics.reserve(task.instances.size());
  for (const DataInstance& inst : task.instances)
    metrics.push_back(evaluate_selection(task, inst, {}, gen));
  return make_report(task, EvalMethod::zero_shot, mean(metrics), 1, 0.0);
}

std::pair<EvalReport, EvalReport> run_baseline_random(const SyntheticTask& task, int k,
                                                      int repeats, uint64_t seed,
                                                      const GenSettings& gen) {
  require(repeats >= 1, ErrorKind::invalid_argument, "random baseline: repeats must be >= 1");
  std::vector<double> repeat_means;
  repeat_means.reserve(static_cast<size_t>(repeats));
  for (int r = 0; r < repeats; ++r) {
    std::vector<double> metrics;
    metrics.reserve(task.instances.size());
    for (const DataInstance& inst : task.instances) {
      Rng rng(derive_seed(seed, "random/" + std::to_string(r) + "/" + inst.id));
      const auto draw = sample_candidates(task.pool, k, rng, {inst.id});
      std::vector<std::string> selected;
      selected.reserve(draw.size());
      for (const Example& e : draw) selected.push_back(e.id);
      metrics.push_back(evaluate_selection(task, inst, selected, gen));
    }
    repeat_means.push_back(mean(metrics));
  }
  const EvalReport random = make_report(task, EvalMethod::random, mean(repeat_means), repeats,
                                        sample_stddev(repeat_means));
  const EvalReport best =
      make_report(task, EvalMethod::best_of_n,
                  *std::max_element(repeat_means.begin(), repeat_means.end()), repeats, 0.0);
  return {random, best};
}

EvalReport run_similarity_baseline(const SyntheticTask& task, int k,
                                   const FeatConfig& feat_config, const GenSettings& gen) {
  require(k >= 1, ErrorKind::invalid_argument, "similarity baseline: K must be >= 1");
  require(task.pool.size() >= static_cast<size_t>(k), ErrorKind::invalid_argument,
          "similarity baseline: pool smaller than K");
  std::vector<std::pair<std::string, SparseVec>> pool_features;
  pool_features.reserve(task.pool.size());
  for (const Example& e : task.pool.items())
    pool_features.emplace_back(e.id, featurize(example_text(e), feat_config));

  std::vector<double> metrics;
  metrics.reserve(task.instances.size());
  for (const DataInstance& inst : task.instances) {
    const SparseVec q = featurize(render_input_pattern(task.tmpl, inst.input_text), feat_config);
    std::vector<std::pair<std::string, double>> scored;
    scored.reserve(pool_features.size());
    for (const auto& [id, feat] : pool_features) {
      if (id == inst.id) continue;
      scored.emplace_back(id, dot(q, feat));  // inputs are L2-normalized: dot = cosine
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    std::vector<std::string> selected;
    for (int i = 0; i < k; ++i) selected.push_back(scored[static_cast<size_t>(i)].first);
    metrics.push_back(evaluate_selection(task, inst, selected, gen));
  }
  return make_report(task, EvalMethod::similarity, mean(metrics), 1, 0.0);
}

std::vector<EvalReport> run_pipeline_eval(const SyntheticTask& task, const EncoderModel& model,
                                          int k, int w, const GenSettings& gen) {
  const DenseIndex index = build_index(model, task.pool);
  std::vector<double> top1, avg, greedy;
  top1.reserve(task.instances.size());
  for (const DataInstance& inst : task.instances) {
    const auto beams = beam_search(inst.input_text, k, w, index, model, task.pool, task.tmpl);
    top1.push_back(evaluate_selection(task, inst, beams.front().selected, gen));
    std::vector<double> per_beam;
    per_beam.reserve(beams.size());
    for (const BeamState& b : beams)
      per_beam.push_back(evaluate_selection(task, inst, b.selected, gen));
    avg.push_back(mean(per_beam));
    if (w == 1) {
      greedy.push_back(top1.back());
    } else {
      const auto g = beam_search(inst.input_text, k, 1, index, model, task.pool, task.tmpl);
      greedy.push_back(evaluate_selection(task, inst, g.front().selected, gen));
    }
  }
  return {make_report(task, EvalMethod::beam_top1, mean(top1), 1, 0.0),
          make_report(task, EvalMethod::beam_avg, mean(avg), 1, 0.0),
          make_report(task, EvalMethod::greedy, mean(greedy), 1, 0.0)};
}

PermutationReport permutation_study(
    const SyntheticTask& task,
    const std::vector<std::pair<std::string, std::vector<std::string>>>& sequences,
    const GenSettings& gen) {
  require(!sequences.empty(), ErrorKind::invalid_argument, "permutation study: no sequences");
  std::map<std::string, const DataInstance*> by_id;
  for (const DataInstance& inst : task.instances) by_id[inst.id] = &inst;

  PermutationReport report;
  std::vector<double> originals;
  std::vector<double> all_orderings;
  for (const auto& [instance_id, selected] : sequences) {
    const auto it = by_id.find(instance_id);
    require(it != by_id.end(), ErrorKind::data,
            "permutation study: unknown instance " + instance_id);
    originals.push_back(evaluate_selection(task, *it->second, selected, gen));

    std::vector<std::string> perm = selected;
    std::sort(perm.begin(), perm.end());
    double best = -std::numeric_limits<double>::infinity();
    double worst = std::numeric_limits<double>::infinity();
    do {
      const double m = evaluate_selection(task, *it->second, perm, gen);
      all_orderings.push_back(m);
      best = std::max(best, m);
      worst = std::min(worst, m);
      ++report.orderings;
    } while (std::next_permutation(perm.begin(), perm.end()));
    report.max_spread = std::max(report.max_spread, best - worst);
  }
  report.sequences = sequences.size();
  report.original_mean = mean(originals);
  report.permutation_mean = mean(all_orderings);
  return report;
}

InstanceSplit split_instances(const std::vector<DataInstance>& all, double eval_fraction) {
  require(eval_fraction > 0.0 && eval_fraction < 1.0, ErrorKind::invalid_argument,
          "split: eval_fraction must be in (0,1)");
  require(all.size() >= 2, ErrorKind::invalid_argument, "split: need at least 2 instances");
  size_t n_eval = static_cast<size_t>(std::lround(static_cast<double>(all.size()) * eval_fraction));
  n_eval = std::clamp<size_t>(n_eval, 1, all.size() - 1);
  InstanceSplit split;
  split.train.assign(all.begin(), all.end() - static_cast<long>(n_eval));
  split.eval.assign(all.end() - static_cast<long>(n_eval), all.end());
  return split;
}

std::string report_to_json(const EvalReport& report) {
  json j = {
      {"task_id", report.task_id},  {"method", to_string(report.method)},
      {"metric_name", report.metric_name}, {"value", report.value},
      {"n_seeds", report.n_seeds},  {"stddev", report.stddev},
  };
  return j.dump();
}

EvalReport report_from_json(std::string_view line) {
  json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
  require(!j.is_discarded() && j.is_object(), ErrorKind::data, "report: malformed JSON line");
  EvalReport r;
  try {
    r.task_id = j.at("task_id").get<std::string>();
    r.method = eval_method_from_string(j.at("method").get<std::string>());
    r.metric_name = j.at("metric_name").get<std::string>();
    r.value = j.at("value").get<double>();
    r.n_seeds = j.at("n_seeds").get<int>();
    r.stddev = j.at("stddev").get<double>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::data, std::string("report: ") + e.what());
  }
  return r;
}

void save_reports(const std::vector<EvalReport>& reports, const std::string& path) {
  std::string out;
  for (const EvalReport& r : reports) {
    out += report_to_json(r);
    out += '\n';
  }
  atomic_write_file(path, out);
}

std::vector<EvalReport> load_reports(const std::string& path) {
  const std::string text = read_file(path);
  std::vector<EvalReport> reports;
  size_t start = 0;
  while (start < text.size()) {
    size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    if (end > start) reports.push_back(report_from_json(std::string_view(text).substr(start, end - start)));
    start = end + 1;
  }
  return reports;
}

std::string format_report_table(const std::vector<EvalReport>& reports) {
  const std::vector<std::string> header = {"task", "method", "metric", "value", "n", "stddev"};
  std::vector<std::vector<std::string>> rows = {header};
  for (const EvalReport& r : reports) {
    std::ostringstream value, stddev;
    value << std::fixed << std::setprecision(4) << r.value;
    stddev << std::fixed << std::setprecision(4) << r.stddev;
    rows.push_back({r.task_id, to_string(r.method), r.metric_name, value.str(),
                    std::to_string(r.n_seeds), stddev.str()});
  }
  std::vector<size_t> widths(header.size(), 0);
  for (const auto& row : rows)
    for (size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());
  std::ostringstream out;
  for (const auto& row : rows) {
    for (size_t c = 0; c < row.size(); ++c) {
      out << std::left << std::setw(static_cast<int>(widths[c]) + 2) << row[c];
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace seqsel
