#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "seqsel/errors.hpp"

namespace seqsel {

// One entry of the example pool: an input/output demonstration pair.
struct Example {
  std::string id;
  std::string input_text;
  std::string output_text;
  std::string task_id;
};

enum class TaskKind { NLU, NLG };

// A training/evaluation item. For NLU tasks the reference is one of the
// entries of label_space; for NLG it is free text.
struct DataInstance {
  std::string id;
  std::string input_text;
  std::string reference;
  std::vector<std::string> label_space;  // non-empty iff task_kind == NLU
  TaskKind task_kind = TaskKind::NLU;
  std::string task_id;
};

// Ordered example selection for one test input. `selected` is in selection
// order (first-selected first); `base_input` is the already-rendered test
// input that closes the prompt.
struct PromptSequence {
  std::vector<std::string> selected;
  std::string base_input;
};

// Per-task rendering patterns with {placeholder} substitution.
struct TaskTemplate {
  std::string task_id;
  std::string input_pattern = "{input}";
  std::string output_pattern = " {output}";
  std::string separator = "\n";
};

// Id-indexed example storage. Ids are unique; inputs are non-empty.
class ExamplePool {
 public:
  ExamplePool() = default;

  void add(Example example) {
    require(!example.id.empty(), ErrorKind::data, "pool: example id must be non-empty");
    require(!example.input_text.empty(), ErrorKind::data,
            "pool: example input_text must be non-empty (id=" + example.id + ")");
    require(by_id_.find(example.id) == by_id_.end(), ErrorKind::data,
            "pool: duplicate example id " + example.id);
    by_id_.emplace(example.id, items_.size());
    items_.push_back(std::move(example));
  }

  size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  const Example& at(size_t i) const { return items_.at(i); }
  const std::vector<Example>& items() const { return items_; }

  bool contains(const std::string& id) const { return by_id_.count(id) > 0; }

  const Example& get(const std::string& id) const {
    auto it = by_id_.find(id);
    require(it != by_id_.end(), ErrorKind::missing_example, "pool: unknown example id " + id);
    return items_[it->second];
  }

 private:
  std::vector<Example> items_;
  std::unordered_map<std::string, size_t> by_id_;
};

void validate_instance(const DataInstance& instance);

}  // namespace seqsel
