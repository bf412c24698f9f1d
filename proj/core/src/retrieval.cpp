#include <algorithm>
#include <unordered_set>

#include "seqsel/binio.hpp"
#include "seqsel/hash.hpp"
#include "seqsel/io.hpp"
#include "seqsel/prompt.hpp"
#include "seqsel/retrieval.hpp"

namespace seqsel {

DenseIndex build_index(const EncoderModel& model, const ExamplePool& pool) {
  validate_model(model);
  require(pool.size() > 0, ErrorKind::invalid_argument, "build_index: empty pool");
  DenseIndex index;
  index.d = model.d;
  index.model_version = model.version;
  index.config_hash = model.config_hash;
  index.example_ids.reserve(pool.size());
  index.matrix.reserve(pool.size() * static_cast<size_t>(model.d));
  for (const Example& e : pool.items()) {
    index.example_ids.push_back(e.id);
    const auto v = encode_example(model, e);
    index.matrix.insert(index.matrix.end(), v.begin(), v.end());
  }
  return index;
}

std::vector<std::pair<std::string, double>> top_k(const DenseIndex& index,
                                                  const std::vector<double>& query, int k,
                                                  const std::vector<std::string>& exclude) {
  require(k >= 1, ErrorKind::invalid_argument, "top_k: k must be >= 1");
  require(query.size() == static_cast<size_t>(index.d), ErrorKind::model,
          "top_k: query dimension does not match index");
  const std::unordered_set<std::string> excluded(exclude.begin(), exclude.end());

  std::vector<std::pair<std::string, double>> scored;
  scored.reserve(index.size());
  const size_t d = static_cast<size_t>(index.d);
  for (size_t i = 0; i < index.size(); ++i) {
    if (excluded.count(index.example_ids[i])) continue;
    const double* row = index.matrix.data() + i * d;
    double s = 0.0;
    for (size_t j = 0; j < d; ++j) s += row[j] * query[j];
    scored.emplace_back(index.example_ids[i], s);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (scored.size() > static_cast<size_t>(k)) scored.resize(static_cast<size_t>(k));
  return scored;
}

std::vector<BeamState> beam_search(const std::string& input_text, int k, int w,
                                   const DenseIndex& index, const EncoderModel& model,
                                   const ExamplePool& pool, const TaskTemplate& tmpl) {
  require(k >= 1, ErrorKind::invalid_argument, "beam_search: K must be >= 1");
  require(w >= 1, ErrorKind::invalid_argument, "beam_search: w must be >= 1");
  require(index.size() >= static_cast<size_t>(k), ErrorKind::search,
          "beam_search: pool smaller than K");
  require(index.model_version == model.version, ErrorKind::model,
          "beam_search: index was built by a different model version");

  std::vector<BeamState> beams(1);
  beams[0].context_text = render_input_pattern(tmpl, input_text);

  for (int step = 0; step < k; ++step) {
    std::vector<BeamState> children;
    children.reserve(beams.size() * static_cast<size_t>(w));
    for (const BeamState& beam : beams) {
      const auto query = encode_input(model, beam.context_text);
      const auto expansions = top_k(index, query, w, beam.selected);
      if (expansions.empty()) {
        throw Error(ErrorKind::search,
                    "beam_search: pool exhausted at step " + std::to_string(step + 1));
      }
      for (const auto& [id, score] : expansions) {
        BeamState child;
        child.selected = beam.selected;
        child.selected.push_back(id);
        child.cumulative_score = beam.cumulative_score + score;
        child.context_text = extend_context(pool.get(id), tmpl, beam.context_text);
        children.push_back(std::move(child));
      }
    }
    std::sort(children.begin(), children.end(), [](const BeamState& a, const BeamState& b) {
      if (a.cumulative_score != b.cumulative_score) return a.cumulative_score > b.cumulative_score;
      return a.selected < b.selected;
    });
    if (children.size() > static_cast<size_t>(w)) children.resize(static_cast<size_t>(w));
    beams = std::move(children);
  }
  return beams;
}

PromptSequence select_prompt(const std::vector<BeamState>& beams, std::string base_input) {
  require(!beams.empty(), ErrorKind::search, "select_prompt: no beams");
  const auto best = std::max_element(
      beams.begin(), beams.end(), [](const BeamState& a, const BeamState& b) {
        if (a.cumulative_score != b.cumulative_score) return a.cumulative_score < b.cumulative_score;
        return a.selected > b.selected;
      });
  return PromptSequence{best->selected, std::move(base_input)};
}

namespace {

constexpr std::string_view kIndexMagic = "SQIX";
constexpr uint32_t kIndexVersion = 1;

}  // namespace

void save_index(const DenseIndex& index, const std::string& path) {
  require(index.size() * static_cast<size_t>(index.d) == index.matrix.size(), ErrorKind::model,
          "save_index: matrix shape mismatch");
  std::string out;
  out.reserve(32 + index.matrix.size() * 8);
  out.append(kIndexMagic);
  binio::put_u32(out, kIndexVersion);
  binio::put_u32(out, index.model_version);
  binio::put_u64(out, index.config_hash);
  binio::put_u64(out, index.size());
  binio::put_u32(out, static_cast<uint32_t>(index.d));
  for (const auto& id : index.example_ids) binio::put_str(out, id);
  for (double v : index.matrix) binio::put_f64(out, v);
  binio::put_u64(out, fnv1a64(out));
  atomic_write_file(path, out);
}

DenseIndex load_index(const std::string& path) {
  const std::string bytes = read_file(path);
  require(bytes.size() > 8, ErrorKind::model, "index " + path + ": truncated container");
  const uint64_t want = fnv1a64(std::string_view(bytes).substr(0, bytes.size() - 8));
  binio::Reader tail(std::string_view(bytes).substr(bytes.size() - 8), "index " + path);
  require(tail.u64() == want, ErrorKind::model, "index " + path + ": checksum mismatch");

  binio::Reader in(std::string_view(bytes).substr(0, bytes.size() - 8), "index " + path);
  in.expect_magic(kIndexMagic);
  require(in.u32() == kIndexVersion, ErrorKind::model,
          "index " + path + ": unsupported container version");
  DenseIndex index;
  index.model_version = in.u32();
  index.config_hash = in.u64();
  const uint64_t n = in.u64();
  index.d = static_cast<int>(in.u32());
  index.example_ids.reserve(n);
  for (uint64_t i = 0; i < n; ++i) index.example_ids.push_back(in.str());
  index.matrix.resize(n * static_cast<size_t>(index.d));
  for (double& v : index.matrix) v = in.f64();
  require(in.done(), ErrorKind::model, "index " + path + ": trailing bytes");
  return index;
}

}  // namespace seqsel
