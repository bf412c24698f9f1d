#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "seqsel/binio.hpp"
#include "seqsel/encoder.hpp"
#include "seqsel/hash.hpp"
#include "seqsel/io.hpp"
#include "seqsel/prompt.hpp"

using namespace seqsel;

namespace {

FeatConfig small_feats(uint32_t dim = 256) {
  FeatConfig f;
  f.dim = dim;
  return f;
}

ContrastiveBatch text_batch(const FeatConfig& feats, size_t negatives) {
  ContrastiveBatch batch;
  batch.instance_id = "q";
  batch.step = 1;
  batch.anchor = featurize("the anchor context text", feats);
  batch.positive = featurize("a positive example body", feats);
  batch.positive_id = "pos";
  for (size_t n = 0; n < negatives; ++n) {
    batch.negative_ids.push_back("neg" + std::to_string(n));
    batch.negatives.push_back(
        featurize("negative body number " + std::to_string(n) + " extra words", feats));
  }
  return batch;
}

// naive dense replay of the two towers, kept separate from encode_features
std::vector<double> embed_oracle(const std::vector<double>& w, uint32_t dim, int d,
                                 const SparseVec& v) {
  std::vector<double> out(static_cast<size_t>(d), 0.0);
  for (size_t i = 0; i < v.nnz(); ++i) {
    for (int j = 0; j < d; ++j) {
      out[size_t(j)] += v.val[i] * w[size_t(v.idx[i]) * size_t(d) + size_t(j)];
    }
  }
  (void)dim;
  return out;
}

double loss_oracle(const EncoderModel& model, const ContrastiveBatch& batch) {
  const auto vx = embed_oracle(model.w_x, model.feat_config.dim, model.d, batch.anchor);
  std::vector<double> logits;
  auto logit_of = [&](const SparseVec& e) {
    const auto ve = embed_oracle(model.w_e, model.feat_config.dim, model.d, e);
    double s = 0.0;
    for (int j = 0; j < model.d; ++j) s += vx[size_t(j)] * ve[size_t(j)];
    return s;
  };
  logits.push_back(logit_of(batch.positive));
  for (const auto& n : batch.negatives) logits.push_back(logit_of(n));
  double denom = 0.0;
  for (double s : logits) denom += std::exp(s);
  return std::log(denom) - logits[0];
}

std::filesystem::path temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "seqsel-encoder-tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

TrainingRecord make_record(const std::string& instance_id, int step,
                           std::vector<std::string> selected,
                           const std::vector<std::pair<std::string, double>>& ranked) {
  TrainingRecord rec;
  rec.instance_id = instance_id;
  rec.step = step;
  rec.selected_so_far = std::move(selected);
  for (size_t i = 0; i < ranked.size(); ++i) {
    rec.candidates.push_back({ranked[i].first, ranked[i].second, int(i) + 1});
  }
  rec.chosen_id = rec.candidates.front().example_id;
  return rec;
}

DataInstance labeled_instance(const std::string& id, const std::string& input) {
  DataInstance inst;
  inst.id = id;
  inst.input_text = input;
  inst.label_space = {"yes", "no"};
  inst.reference = "yes";
  inst.task_kind = TaskKind::NLU;
  return inst;
}

}  // namespace

TEST_CASE("uniform logits give the ln(N+1) starting loss") {
  const auto feats = small_feats();
  EncoderModel model = init_model(feats, 8, 1);
  std::fill(model.w_x.begin(), model.w_x.end(), 0.0);  // anchor embeds to zero

  auto batch = text_batch(feats, 20);
  const auto [loss20, grad20] = infonce_loss_and_grad(model, batch);
  CHECK(loss20 == doctest::Approx(std::log(21.0)).epsilon(1e-12));
  // zero anchor embedding also zeroes the example-tower gradient
  for (double g : grad20.w_e) CHECK(g == 0.0);

  auto pair_batch = text_batch(feats, 1);
  CHECK(infonce_loss_and_grad(model, pair_batch).first ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("loss agrees with a dense softmax replay") {
  const auto feats = small_feats(64);
  const EncoderModel model = init_model(feats, 4, 7);
  const auto batch = text_batch(feats, 6);
  const auto [loss, grad] = infonce_loss_and_grad(model, batch);
  CHECK(loss == doctest::Approx(loss_oracle(model, batch)).epsilon(1e-12));
}

TEST_CASE("analytic gradient matches central finite differences") {
  const auto feats = small_feats(64);
  EncoderModel model = init_model(feats, 4, 21);
  const auto batch = text_batch(feats, 8);
  const auto [loss, grad] = infonce_loss_and_grad(model, batch);
  (void)loss;

  const double h = 1e-5;
  Rng rng(derive_seed(5, "encoder-fd"));
  auto probe = [&](std::vector<double>& w, const std::vector<double>& g, size_t flat) {
    const double saved = w[flat];
    w[flat] = saved + h;
    const double up = loss_oracle(model, batch);
    w[flat] = saved - h;
    const double down = loss_oracle(model, batch);
    w[flat] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double rel =
        std::abs(g[flat] - numeric) / std::max(std::abs(g[flat]) + std::abs(numeric), 1e-8);
    return rel;
  };

  // every coordinate the batch touches, both towers, sampled
  std::vector<size_t> x_coords, e_coords;
  for (uint32_t f : batch.anchor.idx)
    for (int j = 0; j < model.d; ++j) x_coords.push_back(size_t(f) * 4 + size_t(j));
  auto collect = [&](const SparseVec& v) {
    for (uint32_t f : v.idx)
      for (int j = 0; j < model.d; ++j) e_coords.push_back(size_t(f) * 4 + size_t(j));
  };
  collect(batch.positive);
  for (const auto& n : batch.negatives) collect(n);

  double worst = 0.0;
  for (int probe_i = 0; probe_i < 150; ++probe_i) {
    worst = std::max(worst, probe(model.w_x, grad.w_x,
                                  x_coords[rng.next_below(x_coords.size())]));
    worst = std::max(worst, probe(model.w_e, grad.w_e,
                                  e_coords[rng.next_below(e_coords.size())]));
  }
  CHECK(worst < 1e-4);

  // untouched rows have exactly zero gradient
  std::set<uint32_t> touched_x(batch.anchor.idx.begin(), batch.anchor.idx.end());
  for (uint32_t f = 0; f < feats.dim; ++f) {
    if (touched_x.count(f)) continue;
    for (int j = 0; j < model.d; ++j) CHECK(grad.w_x[size_t(f) * 4 + size_t(j)] == 0.0);
  }
}

TEST_CASE("bundled gradient check meets its tolerance") {
  const auto result = gradient_check(123, 5);
  CHECK(result.coordinates == 500);
  CHECK(result.max_rel_error < 1e-4);
}

TEST_CASE("mining takes the rank-1 positive and bottom-B negatives") {
  ExamplePool pool;
  for (const char* id : {"c1", "c2", "c3", "c4", "c5", "c6", "r1", "r2", "r3", "r4"}) {
    pool.add({id, std::string("body of ") + id, "out", "t"});
  }
  const auto inst = labeled_instance("q1", "query text");
  const auto rec = make_record("q1", 1, {},
                               {{"c1", 0.9}, {"c2", 0.5}, {"c3", 0.4},
                                {"c4", 0.3}, {"c5", 0.2}, {"c6", 0.1}});
  const TaskTemplate tmpl;
  TrainConfig config;
  config.feat_config = small_feats();
  config.b = 3;
  config.random_negative_count = 2;

  Rng rng(3);
  const auto mined = mine_positive_negatives(rec, inst, pool, tmpl, config, rng);
  REQUIRE(mined.has_value());
  CHECK(mined->positive_id == "c1");
  REQUIRE(mined->negative_ids.size() == 5);
  CHECK(mined->negative_ids[0] == "c4");
  CHECK(mined->negative_ids[1] == "c5");
  CHECK(mined->negative_ids[2] == "c6");
  std::set<std::string> all(mined->negative_ids.begin(), mined->negative_ids.end());
  CHECK(all.size() == 5);  // duplicate-free
  CHECK_FALSE(all.count("c1"));
  CHECK_FALSE(all.count("q1"));

  // anchor and positive features replay from the library's own rendering
  const PromptSequence seq{{}, render_input_pattern(tmpl, inst.input_text)};
  const auto want_anchor = featurize(render_prompt(seq, tmpl, pool), config.feat_config);
  CHECK(mined->anchor.idx == want_anchor.idx);
  CHECK(mined->anchor.val == want_anchor.val);
  const auto want_pos = featurize(example_text(pool.get("c1")), config.feat_config);
  CHECK(mined->positive.idx == want_pos.idx);
  CHECK(mined->positive.val == want_pos.val);
}

TEST_CASE("mining anchors on the partial selection context") {
  ExamplePool pool;
  for (const char* id : {"c1", "c2", "c3", "s1", "s2"}) {
    pool.add({id, std::string("body of ") + id, "out", "t"});
  }
  const auto inst = labeled_instance("q1", "query text");
  const auto rec = make_record("q1", 3, {"s1", "s2"}, {{"c1", 0.9}, {"c2", 0.4}, {"c3", 0.2}});
  const TaskTemplate tmpl;
  TrainConfig config;
  config.feat_config = small_feats();
  config.b = 2;
  config.random_negative_count = 0;

  Rng rng(3);
  const auto mined = mine_positive_negatives(rec, inst, pool, tmpl, config, rng);
  REQUIRE(mined.has_value());
  const PromptSequence seq{{"s1", "s2"}, render_input_pattern(tmpl, inst.input_text)};
  const auto want = featurize(render_prompt(seq, tmpl, pool), config.feat_config);
  CHECK(mined->anchor.idx == want.idx);
  CHECK(mined->anchor.val == want.val);
}

TEST_CASE("mining filters records whose best candidate is at chance") {
  ExamplePool pool;
  for (const char* id : {"c1", "c2", "c3"}) pool.add({id, "body", "out", "t"});
  const auto inst = labeled_instance("q1", "query");  // two labels -> chance 0.5
  const TaskTemplate tmpl;
  TrainConfig config;
  config.feat_config = small_feats();
  config.b = 2;
  config.random_negative_count = 0;
  Rng rng(3);

  const auto at_chance = make_record("q1", 1, {}, {{"c1", 0.5}, {"c2", 0.3}, {"c3", 0.1}});
  CHECK_FALSE(mine_positive_negatives(at_chance, inst, pool, tmpl, config, rng).has_value());

  const auto above = make_record("q1", 1, {}, {{"c1", 0.51}, {"c2", 0.3}, {"c3", 0.1}});
  CHECK(mine_positive_negatives(above, inst, pool, tmpl, config, rng).has_value());

  config.positive_threshold = 0.8;  // explicit threshold wins over auto
  CHECK_FALSE(mine_positive_negatives(above, inst, pool, tmpl, config, rng).has_value());

  // generation instances: any positive rouge is usable
  DataInstance gen_inst;
  gen_inst.id = "q1";
  gen_inst.input_text = "query";
  gen_inst.task_kind = TaskKind::NLG;
  gen_inst.reference = "ref";
  config.positive_threshold = -1.0;
  const auto zero_rouge = make_record("q1", 1, {}, {{"c1", 0.0}, {"c2", 0.0}, {"c3", 0.0}});
  CHECK_FALSE(mine_positive_negatives(zero_rouge, gen_inst, pool, tmpl, config, rng).has_value());
  const auto thin_rouge = make_record("q1", 1, {}, {{"c1", 0.05}, {"c2", 0.0}, {"c3", 0.0}});
  CHECK(mine_positive_negatives(thin_rouge, gen_inst, pool, tmpl, config, rng).has_value());
}

TEST_CASE("mining with oversized B never includes the positive") {
  ExamplePool pool;
  for (const char* id : {"c1", "c2", "c3", "c4"}) pool.add({id, "body", "out", "t"});
  const auto inst = labeled_instance("q1", "query");
  const auto rec = make_record("q1", 1, {},
                               {{"c1", 0.9}, {"c2", 0.4}, {"c3", 0.3}, {"c4", 0.2}});
  const TaskTemplate tmpl;
  TrainConfig config;
  config.feat_config = small_feats();
  config.b = 20;  // larger than L
  config.random_negative_count = 0;
  Rng rng(3);
  const auto mined = mine_positive_negatives(rec, inst, pool, tmpl, config, rng);
  REQUIRE(mined.has_value());
  CHECK(mined->negative_ids == std::vector<std::string>{"c2", "c3", "c4"});
}

TEST_CASE("training overfits a small synthetic preference set") {
  ExamplePool pool;
  pool.add({"good1", "alpha beta gamma", "yes", "t"});
  pool.add({"good2", "alpha beta delta", "yes", "t"});
  pool.add({"bad1", "omega psi chi", "no", "t"});
  pool.add({"bad2", "omega psi phi", "no", "t"});
  pool.add({"bad3", "omega chi phi", "no", "t"});

  std::vector<DataInstance> instances = {labeled_instance("q1", "alpha beta question"),
                                         labeled_instance("q2", "alpha delta question")};
  std::vector<TrainingRecord> records = {
      make_record("q1", 1, {}, {{"good1", 0.9}, {"bad1", 0.3}, {"bad2", 0.2}}),
      make_record("q1", 2, {"good1"}, {{"good2", 0.9}, {"bad2", 0.3}, {"bad3", 0.2}}),
      make_record("q2", 1, {}, {{"good2", 0.9}, {"bad1", 0.3}, {"bad3", 0.2}}),
      make_record("q2", 2, {"good2"}, {{"good1", 0.9}, {"bad3", 0.3}, {"bad1", 0.2}}),
  };

  const TaskTemplate tmpl;
  TrainConfig config;
  config.feat_config = small_feats(512);
  config.d = 8;
  config.b = 2;
  config.random_negative_count = 1;
  config.learning_rate = 0.02;
  config.epochs = 40;
  config.batch_size = 2;
  config.seed = 9;

  const auto result = train(records, instances, pool, tmpl, config);
  CHECK(result.mined == 4);
  CHECK(result.filtered == 0);
  REQUIRE(result.epoch_mean_loss.size() == 40);
  CHECK(result.epoch_mean_loss.front() > result.epoch_mean_loss.back());
  CHECK(result.epoch_mean_loss.back() < 0.2);
  CHECK(result.model.version == model_content_version(result.model));

  // the trained scorer prefers the designated positives for a fresh query
  const auto vx = encode_input(result.model, "alpha beta question");
  const double s_good = inner(vx, encode_example(result.model, pool.get("good1")));
  const double s_bad = inner(vx, encode_example(result.model, pool.get("bad1")));
  CHECK(s_good > s_bad);
}

TEST_CASE("training is invariant to record and instance order") {
  ExamplePool pool;
  for (const char* id : {"a", "b", "c", "d", "e", "f"}) {
    pool.add({id, std::string("text of ") + id, "out", "t"});
  }
  std::vector<DataInstance> instances = {labeled_instance("q1", "first query"),
                                         labeled_instance("q2", "second query")};
  std::vector<TrainingRecord> records = {
      make_record("q1", 1, {}, {{"a", 0.9}, {"b", 0.3}, {"c", 0.2}}),
      make_record("q1", 2, {"a"}, {{"d", 0.8}, {"e", 0.3}, {"f", 0.2}}),
      make_record("q2", 1, {}, {{"b", 0.7}, {"c", 0.3}, {"d", 0.2}}),
  };

  TrainConfig config;
  config.feat_config = small_feats();
  config.d = 4;
  config.b = 2;
  config.random_negative_count = 2;
  config.epochs = 3;
  config.seed = 31;
  const TaskTemplate tmpl;

  const auto forward = train(records, instances, pool, tmpl, config);

  std::reverse(records.begin(), records.end());
  std::reverse(instances.begin(), instances.end());
  const auto reversed = train(records, instances, pool, tmpl, config);

  CHECK(forward.model.w_x == reversed.model.w_x);  // bitwise
  CHECK(forward.model.w_e == reversed.model.w_e);
  CHECK(forward.model.version == reversed.model.version);
  CHECK(forward.epoch_mean_loss == reversed.epoch_mean_loss);
}

TEST_CASE("training with no usable positives reports an empty training set") {
  ExamplePool pool;
  for (const char* id : {"a", "b", "c"}) pool.add({id, "text", "out", "t"});
  std::vector<DataInstance> instances = {labeled_instance("q1", "query")};
  // both records top out at chance level for two labels
  std::vector<TrainingRecord> records = {
      make_record("q1", 1, {}, {{"a", 0.5}, {"b", 0.2}, {"c", 0.1}}),
      make_record("q1", 2, {"a"}, {{"b", 0.4}, {"c", 0.2}, {"a", 0.1}}),
  };
  TrainConfig config;
  config.feat_config = small_feats();
  config.random_negative_count = 0;
  try {
    train(records, instances, pool, TaskTemplate{}, config);
    FAIL("expected empty_training_set");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::empty_training_set);
  }
}

TEST_CASE("checkpoints round-trip bit for bit") {
  EncoderModel model = init_model(small_feats(128), 6, 77);
  model.config_hash = 0xdeadbeefcafe1234ULL;
  model.version = model_content_version(model);

  const auto path = temp_path("roundtrip.bin");
  save_checkpoint(model, path.string());
  const auto loaded = load_checkpoint(path.string());

  CHECK(loaded.feat_config == model.feat_config);
  CHECK(loaded.d == model.d);
  CHECK(loaded.version == model.version);
  CHECK(loaded.config_hash == model.config_hash);
  CHECK(loaded.w_x == model.w_x);
  CHECK(loaded.w_e == model.w_e);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint loading rejects damage") {
  EncoderModel model = init_model(small_feats(64), 4, 78);
  model.version = model_content_version(model);
  const auto path = temp_path("damaged.bin");
  save_checkpoint(model, path.string());
  const std::string original = read_file(path.string());

  auto write_back = [&](const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), std::streamsize(bytes.size()));
  };

  SUBCASE("flipped byte breaks the checksum") {
    std::string bytes = original;
    bytes[bytes.size() / 2] = char(bytes[bytes.size() / 2] ^ 0x40);
    write_back(bytes);
    try {
      load_checkpoint(path.string());
      FAIL("expected checksum failure");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::model);
      CHECK(std::string(e.what()).find("checksum") != std::string::npos);
    }
  }

  SUBCASE("truncation is caught") {
    write_back(original.substr(0, original.size() - 16));
    CHECK_THROWS_AS(load_checkpoint(path.string()), Error);
  }

  SUBCASE("tampered weights no longer match the stored version") {
    // flip a mantissa bit inside the weight block and re-sign the checksum,
    // so only the content/version cross-check can catch it
    std::string bytes = original;
    const size_t weight_zone = bytes.size() - 16;  // before trailing checksum
    bytes[weight_zone] = char(bytes[weight_zone] ^ 0x01);
    std::string body = bytes.substr(0, bytes.size() - 8);
    std::string fixed = body;
    binio::put_u64(fixed, fnv1a64(body));
    write_back(fixed);
    try {
      load_checkpoint(path.string());
      FAIL("expected version mismatch");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::model);
      CHECK(std::string(e.what()).find("version") != std::string::npos);
    }
  }
  std::filesystem::remove(path);
}

TEST_CASE("model init and validation") {
  const auto a = init_model(small_feats(64), 4, 5);
  const auto b = init_model(small_feats(64), 4, 5);
  const auto c = init_model(small_feats(64), 4, 6);
  CHECK(a.w_x == b.w_x);
  CHECK(a.w_e == b.w_e);
  CHECK(a.w_x != c.w_x);

  EncoderModel broken = a;
  broken.w_x.pop_back();
  CHECK_THROWS_AS(validate_model(broken), Error);
  EncoderModel nan_model = a;
  nan_model.w_e[3] = std::nan("");
  CHECK_THROWS_AS(validate_model(nan_model), Error);
  CHECK_THROWS_AS(init_model(small_feats(64), 0, 5), Error);

  CHECK(example_text({"id", "in", "out", "t"}) == "in\nout");

  // feature index beyond the model's dimension is a hard error
  SparseVec oversized;
  oversized.idx = {64};
  oversized.val = {1.0};
  CHECK_THROWS_AS(encode_features(a, oversized, true), Error);
  CHECK_THROWS_AS(inner(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}), Error);
}
