#include "seqsel/prompt.hpp"

#include <functional>

namespace seqsel {
namespace {

std::string substitute(std::string_view pattern,
                       const std::function<bool(std::string_view, std::string&)>& lookup) {
  std::string out;
  out.reserve(pattern.size());
  for (size_t i = 0; i < pattern.size(); ++i) {
    char c = pattern[i];
    if (c == '{') {
      if (i + 1 < pattern.size() && pattern[i + 1] == '{') {
        out.push_back('{');
        ++i;
        continue;
      }
      size_t close = pattern.find('}', i + 1);
      require(close != std::string_view::npos, ErrorKind::template_error,
              "template: unterminated placeholder in pattern '" + std::string(pattern) + "'");
      std::string_view name = pattern.substr(i + 1, close - i - 1);
      std::string value;
      require(lookup(name, value), ErrorKind::template_error,
              "template: unknown placeholder {" + std::string(name) + "}");
      out += value;
      i = close;
    } else if (c == '}') {
      if (i + 1 < pattern.size() && pattern[i + 1] == '}') ++i;
      out.push_back('}');
    } else {
      out.push_back(c);
    }
  }
  return out;
}

}  // namespace

void validate_instance(const DataInstance& instance) {
  require(!instance.id.empty(), ErrorKind::data, "instance: id must be non-empty");
  if (instance.task_kind == TaskKind::NLU) {
    require(instance.label_space.size() >= 2, ErrorKind::data,
            "instance " + instance.id + ": NLU label_space needs at least 2 entries");
    for (size_t i = 0; i < instance.label_space.size(); ++i)
      for (size_t j = i + 1; j < instance.label_space.size(); ++j)
        require(instance.label_space[i] != instance.label_space[j], ErrorKind::data,
                "instance " + instance.id + ": duplicate label '" + instance.label_space[i] + "'");
    bool found = false;
    for (const auto& label : instance.label_space) found |= (label == instance.reference);
    require(found, ErrorKind::data,
            "instance " + instance.id + ": reference not in label_space");
  } else {
    require(instance.label_space.empty(), ErrorKind::data,
            "instance " + instance.id + ": NLG instances carry no label_space");
  }
}

std::string render_pattern(std::string_view pattern, const Example& example) {
  return substitute(pattern, [&](std::string_view name, std::string& value) {
    if (name == "input") value = example.input_text;
    else if (name == "output") value = example.output_text;
    else if (name == "id") value = example.id;
    else if (name == "task_id") value = example.task_id;
    else return false;
    return true;
  });
}

std::string render_input_pattern(const TaskTemplate& tmpl, std::string_view input_text) {
  return substitute(tmpl.input_pattern, [&](std::string_view name, std::string& value) {
    if (name == "input") value = std::string(input_text);
    else if (name == "task_id") value = tmpl.task_id;
    else return false;
    return true;
  });
}

std::string render_output_pattern(const TaskTemplate& tmpl, std::string_view output_text) {
  return substitute(tmpl.output_pattern, [&](std::string_view name, std::string& value) {
    if (name == "output") value = std::string(output_text);
    else if (name == "task_id") value = tmpl.task_id;
    else return false;
    return true;
  });
}

std::string render_example_block(const TaskTemplate& tmpl, const Example& example) {
  return render_pattern(tmpl.input_pattern, example) + render_pattern(tmpl.output_pattern, example);
}

std::string render_prompt(const PromptSequence& seq, const TaskTemplate& tmpl,
                          const ExamplePool& pool) {
  for (size_t i = 0; i < seq.selected.size(); ++i)
    for (size_t j = i + 1; j < seq.selected.size(); ++j)
      require(seq.selected[i] != seq.selected[j], ErrorKind::invalid_argument,
              "render_prompt: duplicate example id " + seq.selected[i]);

  std::string out;
  for (auto it = seq.selected.rbegin(); it != seq.selected.rend(); ++it) {
    out += render_example_block(tmpl, pool.get(*it));
    out += tmpl.separator;
  }
  out += seq.base_input;
  return out;
}

std::string extend_context(const Example& example, const TaskTemplate& tmpl,
                           const std::string& current_context) {
  return render_example_block(tmpl, example) + tmpl.separator + current_context;
}

}  // namespace seqsel
