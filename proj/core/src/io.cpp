#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "seqsel/hash.hpp"
#include "seqsel/io.hpp"
#include "seqsel/prompt.hpp"

namespace seqsel {

using json = nlohmann::json;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::data, "cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  require(!in.bad(), ErrorKind::data, "read failed on " + path);
  return bytes;
}

void atomic_write_file(const std::string& path, std::string_view bytes) {
  const std::filesystem::path target(path);
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  const std::filesystem::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(out.good(), ErrorKind::data, "cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    require(out.good(), ErrorKind::data, "write failed on " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  require(!ec, ErrorKind::data, "rename " + tmp.string() + " -> " + path + ": " + ec.message());
}

namespace {

json parse_line(std::string_view line, const std::string& what) {
  json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
  require(!j.is_discarded() && j.is_object(), ErrorKind::data, what + ": malformed JSON");
  return j;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  size_t start = 0;
  while (start < text.size()) {
    size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    if (end > start) lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  return lines;
}

template <typename T, typename Parse>
std::vector<T> load_lines(const std::string& path, Parse parse, bool lenient_tail) {
  const std::string text = read_file(path);
  const auto lines = split_lines(text);
  std::vector<T> out;
  out.reserve(lines.size());
  for (size_t i = 0; i < lines.size(); ++i) {
    try {
      out.push_back(parse(lines[i]));
    } catch (const Error& e) {
      if (lenient_tail && i + 1 == lines.size()) break;  // truncated final line
      throw Error(e.kind(), path + " line " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

std::string example_to_json(const Example& e) {
  json j = {{"id", e.id},
            {"input_text", e.input_text},
            {"output_text", e.output_text},
            {"task_id", e.task_id}};
  return j.dump();
}

Example example_from_json(std::string_view line) {
  const json j = parse_line(line, "example");
  Example e;
  try {
    e.id = j.at("id").get<std::string>();
    e.input_text = j.at("input_text").get<std::string>();
    e.output_text = j.at("output_text").get<std::string>();
    e.task_id = j.value("task_id", std::string());
  } catch (const json::exception& err) {
    throw Error(ErrorKind::data, std::string("example: ") + err.what());
  }
  return e;
}

ExamplePool load_pool(const std::string& path) {
  ExamplePool pool;
  for (Example& e : load_lines<Example>(
           path, [](std::string_view line) { return example_from_json(line); }, false)) {
    pool.add(std::move(e));
  }
  return pool;
}

void save_pool(const ExamplePool& pool, const std::string& path) {
  std::string out;
  for (const Example& e : pool.items()) {
    out += example_to_json(e);
    out += '\n';
  }
  atomic_write_file(path, out);
}

std::string instance_to_json(const DataInstance& instance) {
  json j = {{"id", instance.id},
            {"input_text", instance.input_text},
            {"reference", instance.reference},
            {"label_space", instance.label_space},
            {"task_kind", instance.task_kind == TaskKind::NLU ? "nlu" : "nlg"},
            {"task_id", instance.task_id}};
  return j.dump();
}

DataInstance instance_from_json(std::string_view line) {
  const json j = parse_line(line, "instance");
  DataInstance inst;
  try {
    inst.id = j.at("id").get<std::string>();
    inst.input_text = j.at("input_text").get<std::string>();
    inst.reference = j.at("reference").get<std::string>();
    inst.label_space = j.value("label_space", std::vector<std::string>{});
    const std::string kind = j.at("task_kind").get<std::string>();
    require(kind == "nlu" || kind == "nlg", ErrorKind::data,
            "instance: task_kind must be 'nlu' or 'nlg'");
    inst.task_kind = kind == "nlu" ? TaskKind::NLU : TaskKind::NLG;
    inst.task_id = j.value("task_id", std::string());
  } catch (const json::exception& err) {
    throw Error(ErrorKind::data, std::string("instance: ") + err.what());
  }
  validate_instance(inst);
  return inst;
}

std::vector<DataInstance> load_instances(const std::string& path) {
  return load_lines<DataInstance>(
      path, [](std::string_view line) { return instance_from_json(line); }, false);
}

void save_instances(const std::vector<DataInstance>& instances, const std::string& path) {
  std::string out;
  for (const DataInstance& inst : instances) {
    out += instance_to_json(inst);
    out += '\n';
  }
  atomic_write_file(path, out);
}

std::string record_to_json(const TrainingRecord& record) {
  json candidates = json::array();
  for (const CandidateScore& c : record.candidates) {
    candidates.push_back({{"id", c.example_id}, {"score", c.score}, {"rank", c.rank}});
  }
  json j = {{"instance_id", record.instance_id},
            {"step", record.step},
            {"selected_so_far", record.selected_so_far},
            {"candidates", std::move(candidates)},
            {"chosen_id", record.chosen_id}};
  return j.dump();
}

TrainingRecord record_from_json(std::string_view line) {
  const json j = parse_line(line, "record");
  TrainingRecord r;
  try {
    r.instance_id = j.at("instance_id").get<std::string>();
    r.step = j.at("step").get<int>();
    r.selected_so_far = j.at("selected_so_far").get<std::vector<std::string>>();
    r.chosen_id = j.at("chosen_id").get<std::string>();
    for (const json& c : j.at("candidates")) {
      CandidateScore cs;
      cs.example_id = c.at("id").get<std::string>();
      cs.score = c.at("score").get<double>();
      cs.rank = c.at("rank").get<int>();
      r.candidates.push_back(std::move(cs));
    }
  } catch (const json::exception& err) {
    throw Error(ErrorKind::data, std::string("record: ") + err.what());
  }
  require(r.step >= 1, ErrorKind::data, "record: step must be >= 1");
  require(static_cast<size_t>(r.step) == r.selected_so_far.size() + 1, ErrorKind::data,
          "record: selected_so_far length must be step-1");
  require(!r.candidates.empty(), ErrorKind::data, "record: empty candidate list");
  for (size_t i = 0; i < r.candidates.size(); ++i) {
    require(r.candidates[i].rank == static_cast<int>(i) + 1, ErrorKind::data,
            "record: candidates must be sorted by rank");
  }
  bool chosen_found = false;
  for (const CandidateScore& c : r.candidates) chosen_found |= (c.example_id == r.chosen_id);
  require(chosen_found, ErrorKind::data, "record: chosen_id not among candidates");
  return r;
}

std::vector<TrainingRecord> load_records(const std::string& path, bool lenient_tail) {
  return load_lines<TrainingRecord>(
      path, [](std::string_view line) { return record_from_json(line); }, lenient_tail);
}

void save_records(const std::vector<TrainingRecord>& records, const std::string& path) {
  std::string out;
  for (const TrainingRecord& r : records) {
    out += record_to_json(r);
    out += '\n';
  }
  atomic_write_file(path, out);
}

uint64_t pool_content_hash(const ExamplePool& pool) {
  uint64_t acc = 0;
  for (const Example& e : pool.items()) {
    uint64_t h = fnv1a64(e.id);
    h = fnv1a64(std::string_view("\0", 1), h);
    h = fnv1a64(e.input_text, h);
    h = fnv1a64(std::string_view("\0", 1), h);
    h = fnv1a64(e.output_text, h);
    h = fnv1a64(std::string_view("\0", 1), h);
    h = fnv1a64(e.task_id, h);
    acc ^= mix64(h);  // XOR combine: order-independent
  }
  return mix64(acc ^ fnv1a64_u64(pool.size()));
}

std::string manifest_to_json(const Manifest& m) {
  json j = {{"seed", m.seed},
            {"k", m.k},
            {"l", m.l},
            {"pool_hash", m.pool_hash},
            {"lm_backend_id", m.lm_backend_id},
            {"config_hash", m.config_hash},
            {"created_at", m.created_at}};
  return j.dump(2) + "\n";
}

Manifest manifest_from_json(std::string_view text) {
  json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
  require(!j.is_discarded() && j.is_object(), ErrorKind::data, "manifest: malformed JSON");
  Manifest m;
  try {
    m.seed = j.at("seed").get<uint64_t>();
    m.k = j.at("k").get<int>();
    m.l = j.at("l").get<int>();
    m.pool_hash = j.at("pool_hash").get<uint64_t>();
    m.lm_backend_id = j.at("lm_backend_id").get<std::string>();
    m.config_hash = j.at("config_hash").get<uint64_t>();
    m.created_at = j.value("created_at", std::string());
  } catch (const json::exception& err) {
    throw Error(ErrorKind::data, std::string("manifest: ") + err.what());
  }
  return m;
}

void save_manifest(const Manifest& m, const std::string& path) {
  atomic_write_file(path, manifest_to_json(m));
}

Manifest load_manifest(const std::string& path) { return manifest_from_json(read_file(path)); }

bool manifests_equivalent(const Manifest& a, const Manifest& b) {
  return a.seed == b.seed && a.k == b.k && a.l == b.l && a.pool_hash == b.pool_hash &&
         a.lm_backend_id == b.lm_backend_id && a.config_hash == b.config_hash;
}

std::string now_rfc3339() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void save_loss_history(const std::vector<double>& epoch_mean_loss, const std::string& path) {
  std::string out;
  for (size_t i = 0; i < epoch_mean_loss.size(); ++i) {
    json j = {{"epoch", i + 1}, {"mean_loss", epoch_mean_loss[i]}};
    out += j.dump();
    out += '\n';
  }
  atomic_write_file(path, out);
}

}  // namespace seqsel
