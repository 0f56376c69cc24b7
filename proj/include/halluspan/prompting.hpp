#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "halluspan/spans.hpp"

namespace halluspan::prompting {

struct PromptSection {
    std::string heading;  // empty: body rendered without a heading line
    std::string body;
};

/// Ordered instruction blocks with `{name}` placeholders.
///
/// Bound names are `lang`, `question`, `answer` and, for adjudication,
/// `span`. Any other `{identifier}` is a configuration error at render time.
/// Braces that do not enclose an identifier (JSON examples) are literal.
struct PromptTemplate {
    std::vector<PromptSection> sections;
    std::string version;
    /// Rendered as an extra section after the instruction blocks when non-empty.
    std::vector<std::string> few_shot;
};

/// Extraction prompt: the annotator instructions plus an output-format block
/// asking for a JSON array of {"text", "probability"} objects.
PromptTemplate default_extraction_template();

/// Adjudication prompt: question, answer and one candidate span; asks for a
/// single probability.
PromptTemplate default_adjudication_template();

/// Reads a template from a plain-text file. A line `# version: <id>` sets the
/// version, lines starting with `## ` open a new section, and text before the
/// first heading forms an unheaded section.
PromptTemplate load_template(const std::filesystem::path& path);
PromptTemplate parse_template(std::string_view text);

using Bindings = std::map<std::string, std::string, std::less<>>;

/// Single-pass substitution; values are inserted verbatim and never rescanned.
std::string render(const PromptTemplate& tmpl, const Bindings& bindings);

/// Throws ConfigError if lang, question or answer is empty.
std::string render_prompt(const PromptTemplate& tmpl, const Sample& sample);
std::string render_adjudication(const PromptTemplate& tmpl, const Sample& sample,
                                std::string_view span_text);

struct RawCandidate {
    std::string text;
    double probability;
    bool clamped = false;  // the model reported a value outside [0, 1]

    bool operator==(const RawCandidate&) const = default;
};

/// Parses an extractor reply. Accepts a JSON array (optionally inside a
/// ``` fence or surrounded by prose) of objects with "text" and "probability".
/// Duplicate texts collapse to the first position with the max probability.
/// Throws ParseError carrying the raw output.
std::vector<RawCandidate> parse_extraction(std::string_view raw_model_output);

/// Inverse of parse_extraction for well-formed candidate lists.
std::string serialize_extraction(const std::vector<RawCandidate>& candidates);

/// First number in [0, 1] found in a JSON payload or in bare text.
/// Throws ParseError when none is present.
double parse_adjudication(std::string_view raw_model_output);

}  // namespace halluspan::prompting
