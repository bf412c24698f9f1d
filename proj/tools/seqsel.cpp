#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <CLI11.hpp>

#include "seqsel/config.hpp"
#include "seqsel/construction.hpp"
#include "seqsel/encoder.hpp"
#include "seqsel/evaluation.hpp"
#include "seqsel/io.hpp"
#include "seqsel/prompt.hpp"
#include "seqsel/retrieval.hpp"

namespace fs = std::filesystem;
using namespace seqsel;

namespace {

// 0 ok, 2 config error, 3 backend error, 4 data error
int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::config:
    case ErrorKind::invalid_argument:
      return 2;
    case ErrorKind::backend:
      return 3;
    default:
      return 4;
  }
}

struct Overrides {
  std::optional<uint64_t> seed;
  std::optional<int> k, l, b, w, epochs, jobs;
  std::optional<std::string> endpoint, backend;
};

void add_common_options(CLI::App* cmd, std::string& config_path, Overrides& o) {
  cmd->add_option("-c,--config", config_path, "run config (JSON)")->required();
  cmd->add_option("--seed", o.seed, "root seed override");
  cmd->add_option("--k", o.k, "shots override");
  cmd->add_option("--l", o.l, "candidates-per-step override");
  cmd->add_option("--b", o.b, "hard-negative count override");
  cmd->add_option("--w", o.w, "beam width override");
  cmd->add_option("--epochs", o.epochs, "training epochs override");
  cmd->add_option("--endpoint", o.endpoint, "remote LM endpoint override");
  cmd->add_option("--backend", o.backend, "lm backend override (synthetic-oracle|remote)");
  cmd->add_option("-j,--jobs", o.jobs, "worker threads")->check(CLI::PositiveNumber);
}

RunConfig finalize_config(const std::string& config_path, const Overrides& o) {
  RunConfig config = load_config(config_path);
  apply_env_overrides(config);
  if (o.seed) config.seed = *o.seed;
  if (o.k) config.hp.k = *o.k;
  if (o.l) config.hp.l = *o.l;
  if (o.b) config.hp.b = *o.b;
  if (o.w) config.hp.w = *o.w;
  if (o.epochs) config.hp.epochs = *o.epochs;
  if (o.endpoint) config.lm.remote.endpoint = *o.endpoint;
  if (o.backend) config.lm.backend = *o.backend;
  validate(config);
  return config;
}

GenSettings gen_settings(const RunConfig& config) {
  return GenSettings{config.hp.max_gen_tokens, config.hp.stop};
}

std::string format_score(double value) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(6) << value;
  return out.str();
}

TrainConfig train_config_from(const RunConfig& config) {
  TrainConfig tc;
  tc.feat_config = config.features;
  tc.d = config.hp.d;
  tc.b = config.hp.b;
  tc.random_negative_count = config.hp.random_negatives;
  tc.learning_rate = config.hp.lr;
  tc.epochs = config.hp.epochs;
  tc.batch_size = config.hp.batch_size;
  tc.seed = derive_seed(config.seed, "train");
  tc.positive_threshold = config.hp.tau;
  return tc;
}

int cmd_construct(const RunConfig& config, int jobs, bool synthetic) {
  if (synthetic) {
    const SyntheticTask task = generate_synthetic_task(synthetic_spec_from(config));
    const InstanceSplit split = split_instances(task.instances, config.hp.eval_fraction);
    save_pool(task.pool, config.paths.pool);
    save_instances(split.train, config.paths.instances);
    std::cerr << "construct: materialized synthetic task " << task.task_id << " ("
              << task.pool.size() << " pool examples, " << split.train.size()
              << " train instances)\n";
  }
  const ExamplePool pool = load_pool(config.paths.pool);
  const auto instances = load_instances(config.paths.instances);
  const LanguageModelHandle lm = make_backend(config);

  ConstructionParams params;
  params.k = config.hp.k;
  params.l = config.hp.l;
  params.gen = gen_settings(config);

  // Resume: keep groups from a previous (possibly interrupted) run that
  // already have all K steps; everything else is rebuilt.
  std::unordered_map<std::string, std::vector<TrainingRecord>> finished;
  if (fs::exists(config.paths.records)) {
    std::unordered_map<std::string, std::vector<TrainingRecord>> groups;
    for (TrainingRecord& r : load_records(config.paths.records, /*lenient_tail=*/true)) {
      groups[r.instance_id].push_back(std::move(r));
    }
    for (auto& [id, group] : groups) {
      if (group.size() != static_cast<size_t>(params.k)) continue;
      bool ordered = true;
      for (size_t i = 0; i < group.size(); ++i) ordered &= group[i].step == static_cast<int>(i) + 1;
      if (ordered) finished.emplace(id, std::move(group));
    }
  }

  std::vector<DataInstance> remaining;
  for (const DataInstance& inst : instances) {
    if (!finished.count(inst.id)) remaining.push_back(inst);
  }
  const size_t resumed = instances.size() - remaining.size();

  auto progress = [](const std::string&, size_t done, size_t total) {
    if (done % 50 == 0 || done == total)
      std::cerr << "construct: " << done << "/" << total << " instances\n";
  };
  CorpusResult result =
      construct_corpus(lm, remaining, pool, params, config.seed, config.tmpl, jobs, progress);

  for (TrainingRecord& r : result.records) finished[r.instance_id].push_back(std::move(r));

  std::vector<TrainingRecord> ordered;
  ordered.reserve(instances.size() * static_cast<size_t>(params.k));
  for (const DataInstance& inst : instances) {
    const auto it = finished.find(inst.id);
    if (it == finished.end()) continue;
    for (TrainingRecord& r : it->second) ordered.push_back(std::move(r));
  }
  save_records(ordered, config.paths.records);

  Manifest manifest;
  manifest.seed = config.seed;
  manifest.k = params.k;
  manifest.l = params.l;
  manifest.pool_hash = pool_content_hash(pool);
  manifest.lm_backend_id = lm.impl->backend_id();
  manifest.config_hash = config_hash(config);
  manifest.created_at = now_rfc3339();
  save_manifest(manifest, config.paths.records + ".manifest.json");

  for (const SkippedInstance& s : result.skipped)
    std::cerr << "skipped " << s.instance_id << ": " << s.reason << "\n";
  std::cout << "constructed " << ordered.size() << " records over "
            << instances.size() - result.skipped.size() << " instances (" << resumed
            << " resumed, " << result.skipped.size() << " skipped) -> " << config.paths.records
            << "\n";
  return 0;
}

int cmd_train(const RunConfig& config) {
  const auto records = load_records(config.paths.records);
  const auto instances = load_instances(config.paths.instances);
  const ExamplePool pool = load_pool(config.paths.pool);

  TrainResult result = train(records, instances, pool, config.tmpl, train_config_from(config));
  result.model.config_hash = config_hash(config);
  save_checkpoint(result.model, config.paths.checkpoint);
  save_loss_history(result.epoch_mean_loss, config.paths.checkpoint + ".loss.jsonl");

  std::cout << "trained " << config.hp.epochs << " epochs on " << result.mined << " batches ("
            << result.filtered << " filtered), loss "
            << format_score(result.epoch_mean_loss.front()) << " -> "
            << format_score(result.epoch_mean_loss.back()) << ", model version "
            << result.model.version << " -> " << config.paths.checkpoint << "\n";
  return 0;
}

int cmd_index(const RunConfig& config) {
  const EncoderModel model = load_checkpoint(config.paths.checkpoint);
  require(model.config_hash == config_hash(config), ErrorKind::config,
          "checkpoint " + config.paths.checkpoint + " was produced by a different config");
  const ExamplePool pool = load_pool(config.paths.pool);
  const DenseIndex index = build_index(model, pool);
  save_index(index, config.paths.index);
  std::cout << "indexed " << index.size() << " examples (d=" << index.d << ", model version "
            << index.model_version << ") -> " << config.paths.index << "\n";
  return 0;
}

int cmd_infer(const RunConfig& config, const std::string& input, bool predict, bool show_prompt) {
  const EncoderModel model = load_checkpoint(config.paths.checkpoint);
  require(model.config_hash == config_hash(config), ErrorKind::config,
          "checkpoint " + config.paths.checkpoint + " was produced by a different config");
  const DenseIndex index = load_index(config.paths.index);
  require(index.model_version == model.version, ErrorKind::config,
          "index " + config.paths.index + " was built by a different model version");
  const ExamplePool pool = load_pool(config.paths.pool);

  const auto beams =
      beam_search(input, config.hp.k, config.hp.w, index, model, pool, config.tmpl);
  for (size_t i = 0; i < beams.size(); ++i) {
    std::cout << "beam " << i + 1 << " score=" << format_score(beams[i].cumulative_score)
              << " selected=[";
    for (size_t j = 0; j < beams[i].selected.size(); ++j) {
      if (j) std::cout << ", ";
      std::cout << beams[i].selected[j];
    }
    std::cout << "]\n";
  }

  const PromptSequence seq =
      select_prompt(beams, render_input_pattern(config.tmpl, input));
  if (show_prompt || predict) {
    const std::string prompt = render_prompt(seq, config.tmpl, pool);
    if (show_prompt) std::cout << "prompt:\n" << prompt << "\n";
    if (predict) {
      const LanguageModelHandle lm = make_backend(config);
      std::cout << "prediction: "
                << generate(lm, prompt, config.hp.max_gen_tokens, config.hp.stop) << "\n";
    }
  }
  return 0;
}

int cmd_eval(const RunConfig& config, int jobs) {
  const SyntheticTask task = generate_synthetic_task(synthetic_spec_from(config));
  const InstanceSplit split = split_instances(task.instances, config.hp.eval_fraction);
  const GenSettings gen = gen_settings(config);

  EncoderModel model;
  if (fs::exists(config.paths.checkpoint)) {
    model = load_checkpoint(config.paths.checkpoint);
    require(model.config_hash == config_hash(config), ErrorKind::config,
            "checkpoint " + config.paths.checkpoint + " was produced by a different config");
    std::cerr << "eval: using checkpoint " << config.paths.checkpoint << "\n";
  } else {
    std::cerr << "eval: no checkpoint at " << config.paths.checkpoint
              << ", constructing and training in-process\n";
    ConstructionParams params;
    params.k = config.hp.k;
    params.l = config.hp.l;
    params.gen = gen;
    const CorpusResult corpus = construct_corpus(task.oracle, split.train, task.pool, params,
                                                 config.seed, task.tmpl, jobs);
    for (const SkippedInstance& s : corpus.skipped)
      std::cerr << "skipped " << s.instance_id << ": " << s.reason << "\n";
    TrainResult trained =
        train(corpus.records, split.train, task.pool, task.tmpl, train_config_from(config));
    model = std::move(trained.model);
    model.config_hash = config_hash(config);
  }

  SyntheticTask eval_task = task;
  eval_task.instances = split.eval;

  std::vector<EvalReport> reports;
  reports.push_back(run_zero_shot(eval_task, gen));
  const auto [random, best] = run_baseline_random(eval_task, config.hp.k, config.hp.repeats,
                                                  derive_seed(config.seed, "eval"), gen);
  reports.push_back(random);
  reports.push_back(best);
  reports.push_back(run_similarity_baseline(eval_task, config.hp.k, config.features, gen));
  for (const EvalReport& r : run_pipeline_eval(eval_task, model, config.hp.k, config.hp.w, gen))
    reports.push_back(r);

  save_reports(reports, config.paths.reports);
  std::cout << format_report_table(reports);
  return 0;
}

int cmd_gradcheck(const RunConfig& config, int trials) {
  const GradCheckResult result = gradient_check(derive_seed(config.seed, "gradcheck"), trials);
  std::cout << "gradcheck: max relative error " << std::scientific << std::setprecision(3)
            << result.max_rel_error << " over " << result.coordinates << " coordinates: "
            << (result.max_rel_error < 1e-4 ? "PASS" : "FAIL") << "\n";
  return result.max_rel_error < 1e-4 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sequential in-context example selection pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides overrides;

  CLI::App* construct = app.add_subcommand("construct", "build the LLM-feedback training corpus");
  add_common_options(construct, config_path, overrides);
  bool synthetic = false;
  construct->add_flag("--synthetic", synthetic,
                      "materialize the configured synthetic task's pool and train instances "
                      "to the configured paths before constructing");

  CLI::App* train_cmd = app.add_subcommand("train", "train the dual encoder on a record file");
  add_common_options(train_cmd, config_path, overrides);

  CLI::App* index_cmd = app.add_subcommand("index", "encode and index the example pool");
  add_common_options(index_cmd, config_path, overrides);

  CLI::App* infer = app.add_subcommand("infer", "beam-search a K-shot prompt for an input");
  add_common_options(infer, config_path, overrides);
  std::string input;
  bool predict = false, show_prompt = false;
  infer->add_option("-i,--input", input, "test input text")->required();
  infer->add_flag("--predict", predict, "run the LM on the selected prompt");
  infer->add_flag("--show-prompt", show_prompt, "print the rendered prompt");

  CLI::App* eval = app.add_subcommand("eval", "synthetic end-to-end benchmark with baselines");
  add_common_options(eval, config_path, overrides);

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
  add_common_options(gradcheck, config_path, overrides);
  int trials = 20;
  gradcheck->add_option("--trials", trials, "random trials")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const RunConfig config = finalize_config(config_path, overrides);
    const int jobs = overrides.jobs.value_or(1);
    if (app.got_subcommand(construct)) return cmd_construct(config, jobs, synthetic);
    if (app.got_subcommand(train_cmd)) return cmd_train(config);
    if (app.got_subcommand(index_cmd)) return cmd_index(config);
    if (app.got_subcommand(infer)) return cmd_infer(config, input, predict, show_prompt);
    if (app.got_subcommand(eval)) return cmd_eval(config, jobs);
    if (app.got_subcommand(gradcheck)) return cmd_gradcheck(config, trials);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
