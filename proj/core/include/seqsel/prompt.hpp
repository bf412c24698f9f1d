#pragma once

#include <string>
#include <string_view>

#include "seqsel/types.hpp"

namespace seqsel {

// {placeholder} substitution against a fixed field set. Unknown placeholders
// raise template_error; unmatched '{' is treated literally only when escaped
// as '{{' (and '}}' for a literal '}').
std::string render_pattern(std::string_view pattern, const Example& example);
std::string render_input_pattern(const TaskTemplate& tmpl, std::string_view input_text);
std::string render_output_pattern(const TaskTemplate& tmpl, std::string_view output_text);

// One demonstration block: input pattern immediately followed by the output
// pattern, both resolved against the example.
std::string render_example_block(const TaskTemplate& tmpl, const Example& example);

// Full prompt for a selection sequence. Selection order maps first-selected
// nearest the test input, so rendering walks the sequence in reverse:
//   block(e_n) sep ... sep block(e_1) sep base_input
// With an empty sequence this is the identity on base_input.
std::string render_prompt(const PromptSequence& seq, const TaskTemplate& tmpl,
                          const ExamplePool& pool);

// The literal context update of the construction loop: x <- e (+) x.
// Folding this over a selection produces byte-identical text to
// render_prompt for the same sequence.
std::string extend_context(const Example& example, const TaskTemplate& tmpl,
                           const std::string& current_context);

}  // namespace seqsel
