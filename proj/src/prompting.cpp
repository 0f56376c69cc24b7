#include "halluspan/prompting.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <regex>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "halluspan/error.hpp"

namespace halluspan::prompting {

using json = nlohmann::json;

namespace {

constexpr const char* kQaPair =
    "i) Question:\n"
    "{question}\n"
    "\n"
    "ii) Answer:\n"
    "{answer}";

constexpr const char* kHallucinationDefinition =
    "Any phrase, entity, number, or fact that is not supported by the question. Any exaggeration "
    "or overly specific detail absent in the question. Incorrect names, locations, numbers, dates, "
    "or causes. In yes/no questions, unsupported answers (e.g., \"Yes\", \"No\") and speculative "
    "details.";

}  // namespace

PromptTemplate default_extraction_template() {
    PromptTemplate tmpl;
    tmpl.version = "extract-v1";
    tmpl.sections = {
        {"Question & Answer Pair", kQaPair},
        {"Task Description",
         "You are a professional annotator and {lang} linguistic expert. Your job is to detect and "
         "extract hallucination spans from the provided answer compared to the question."},
        {"Exact Span Matching",
         "Extract spans word-for-word and character-for-character exactly as they appear in the "
         "answer. Ensure perfect alignment, including punctuation, capitalization, and spacing. If "
         "a span is partially supported, only extract the unsupported portion. Preserve original "
         "numeral formats: Persian/Arabic numerals must remain in their native script."},
        {"Minimal Spans",
         "Select the smallest possible spans that, when removed, completely eliminate the "
         "hallucination. Prioritize precision: Avoid extracting entire sentences if a shorter "
         "phrase accurately captures the hallucination. Ensure the extracted span exclusively "
         "contains hallucinated content without removing valid information."},
        {"Hallucination Definition", kHallucinationDefinition},
        {"Soft and Hard Labels",
         "Assign probabilities [0.0 - 1.0] for soft labels based on hallucination confidence. "
         "Include spans with ≥ 0.7 probability in hard labels."},
        {"Output Format",
         "Reply with a JSON array and nothing else. Each element is an object with two fields: "
         "\"text\", the hallucinated span copied exactly from the answer, and \"probability\", "
         "your confidence between 0.0 and 1.0 that the span is hallucinated. Reply with [] when "
         "the answer contains no hallucination.\n"
         "Example: [{\"text\": \"in 1999\", \"probability\": 0.95}]"},
    };
    return tmpl;
}

PromptTemplate default_adjudication_template() {
    PromptTemplate tmpl;
    tmpl.version = "adjudicate-v1";
    tmpl.sections = {
        {"Question & Answer Pair", kQaPair},
        {"Task Description",
         "You are a professional annotator and {lang} linguistic expert. Another annotator marked "
         "the candidate span below as a hallucination in the answer. Judge how likely it is that "
         "the span is hallucinated with respect to the question."},
        {"Candidate Span", "{span}"},
        {"Hallucination Definition", kHallucinationDefinition},
        {"Output Format",
         "Reply with a JSON object and nothing else: {\"probability\": p}, where p is between 0.0 "
         "(fully supported) and 1.0 (certainly hallucinated)."},
    };
    return tmpl;
}

PromptTemplate parse_template(std::string_view text) {
    PromptTemplate tmpl;
    std::istringstream in{std::string(text)};
    std::string line;
    std::optional<PromptSection> current;
    std::vector<std::string> body_lines;

    const auto flush = [&] {
        if (!current) return;
        while (!body_lines.empty() && body_lines.back().empty()) body_lines.pop_back();
        auto first = std::find_if(body_lines.begin(), body_lines.end(),
                                  [](const std::string& l) { return !l.empty(); });
        std::string body;
        for (auto it = first; it != body_lines.end(); ++it) {
            if (it != first) body += '\n';
            body += *it;
        }
        current->body = std::move(body);
        if (!current->heading.empty() || !current->body.empty()) {
            tmpl.sections.push_back(std::move(*current));
        }
        body_lines.clear();
    };

    bool first_line = true;
    current = PromptSection{};
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (first_line && line.rfind("# version:", 0) == 0) {
            auto v = line.substr(10);
            v.erase(0, v.find_first_not_of(' '));
            tmpl.version = v;
            first_line = false;
            continue;
        }
        first_line = false;
        if (line.rfind("## ", 0) == 0) {
            flush();
            current = PromptSection{line.substr(3), {}};
            continue;
        }
        body_lines.push_back(line);
    }
    flush();
    return tmpl;
}

PromptTemplate load_template(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot read template {}", path.string()));
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_template(buf.str());
}

namespace {

bool is_identifier(std::string_view s) {
    if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
    return std::all_of(s.begin(), s.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
    });
}

void substitute(std::string_view text, const Bindings& bindings, std::string& out) {
    std::size_t i = 0;
    while (i < text.size()) {
        const auto open = text.find('{', i);
        if (open == std::string_view::npos) {
            out.append(text.substr(i));
            return;
        }
        out.append(text.substr(i, open - i));
        const auto close = text.find('}', open + 1);
        if (close == std::string_view::npos) {
            out.append(text.substr(open));
            return;
        }
        const auto name = text.substr(open + 1, close - open - 1);
        if (!is_identifier(name)) {
            out.push_back('{');
            i = open + 1;
            continue;
        }
        const auto it = bindings.find(name);
        if (it == bindings.end()) {
            throw ConfigError(fmt::format("unbound template placeholder {{{}}}", name));
        }
        out.append(it->second);
        i = close + 1;
    }
}

}  // namespace

std::string render(const PromptTemplate& tmpl, const Bindings& bindings) {
    std::vector<PromptSection> sections = tmpl.sections;
    if (!tmpl.few_shot.empty()) {
        std::string examples;
        for (std::size_t i = 0; i < tmpl.few_shot.size(); ++i) {
            if (i > 0) examples += "\n\n";
            examples += tmpl.few_shot[i];
        }
        // Examples go before the output format block when there is one.
        auto pos = std::find_if(sections.begin(), sections.end(),
                                [](const PromptSection& s) { return s.heading == "Output Format"; });
        sections.insert(pos, PromptSection{"Examples", std::move(examples)});
    }

    std::string out;
    for (std::size_t i = 0; i < sections.size(); ++i) {
        if (i > 0) out += "\n\n";
        if (!sections[i].heading.empty()) {
            out += "## ";
            substitute(sections[i].heading, bindings, out);
            out += '\n';
        }
        substitute(sections[i].body, bindings, out);
    }
    return out;
}

namespace {

Bindings sample_bindings(const Sample& sample) {
    if (sample.lang.empty() || sample.question.empty() || sample.answer.empty()) {
        throw ConfigError(fmt::format("sample '{}' needs lang, question and answer to render a prompt",
                                      sample.id));
    }
    return {{"lang", sample.lang}, {"question", sample.question}, {"answer", sample.answer}};
}

}  // namespace

std::string render_prompt(const PromptTemplate& tmpl, const Sample& sample) {
    return render(tmpl, sample_bindings(sample));
}

std::string render_adjudication(const PromptTemplate& tmpl, const Sample& sample,
                                std::string_view span_text) {
    auto bindings = sample_bindings(sample);
    bindings.emplace("span", std::string(span_text));
    return render(tmpl, bindings);
}

namespace {

/// Contents of the first ``` fence, or the whole text when there is none.
std::string_view unfence(std::string_view text) {
    const auto open = text.find("```");
    if (open == std::string_view::npos) return text;
    auto body_start = text.find('\n', open);
    if (body_start == std::string_view::npos) return text.substr(open + 3);
    ++body_start;
    const auto close = text.find("```", body_start);
    return text.substr(body_start, close == std::string_view::npos ? std::string_view::npos
                                                                     : close - body_start);
}

std::optional<json> try_parse(std::string_view text) {
    auto parsed = json::parse(text, nullptr, false);
    if (parsed.is_discarded()) return std::nullopt;
    return parsed;
}

std::optional<double> as_number(const json& value) {
    if (value.is_number()) return value.get<double>();
    if (value.is_string()) {
        const auto& s = value.get_ref<const std::string&>();
        try {
            std::size_t used = 0;
            const double d = std::stod(s, &used);
            if (used == s.size()) return d;
        } catch (const std::exception&) {
        }
    }
    return std::nullopt;
}

const json* find_member(const json& obj, std::initializer_list<const char*> keys) {
    for (const char* key : keys) {
        if (auto it = obj.find(key); it != obj.end()) return &*it;
    }
    return nullptr;
}

std::optional<json> extraction_array(std::string_view raw) {
    const auto payload = unfence(raw);
    if (auto parsed = try_parse(payload)) {
        if (parsed->is_array()) return parsed;
        if (parsed->is_object()) {
            if (const auto* arr = find_member(*parsed, {"spans", "candidates", "hallucinations"});
                arr && arr->is_array()) {
                return std::optional<json>(std::in_place, *arr);
            }
        }
    }
    const auto open = payload.find('[');
    const auto close = payload.rfind(']');
    if (open != std::string_view::npos && close != std::string_view::npos && close > open) {
        if (auto parsed = try_parse(payload.substr(open, close - open + 1)); parsed && parsed->is_array()) {
            return parsed;
        }
    }
    return std::nullopt;
}

}  // namespace

std::vector<RawCandidate> parse_extraction(std::string_view raw_model_output) {
    const std::string raw(raw_model_output);
    const auto array = extraction_array(raw_model_output);
    if (!array) throw ParseError("extraction reply holds no JSON array", raw);

    std::vector<RawCandidate> out;
    for (const auto& item : *array) {
        if (!item.is_object()) throw ParseError("extraction element is not an object", raw);
        const auto* text = find_member(item, {"text", "span"});
        const auto* prob = find_member(item, {"probability", "prob"});
        if (!text || !text->is_string()) throw ParseError("extraction element lacks \"text\"", raw);
        if (!prob) throw ParseError("extraction element lacks \"probability\"", raw);
        auto p = as_number(*prob);
        if (!p || std::isnan(*p)) throw ParseError("extraction probability is not a number", raw);

        RawCandidate candidate{text->get<std::string>(), *p};
        if (candidate.text.empty()) continue;
        if (candidate.probability < 0.0 || candidate.probability > 1.0) {
            candidate.probability = std::clamp(candidate.probability, 0.0, 1.0);
            candidate.clamped = true;
        }

        auto dup = std::find_if(out.begin(), out.end(),
                                [&](const RawCandidate& c) { return c.text == candidate.text; });
        if (dup == out.end()) {
            out.push_back(std::move(candidate));
        } else if (candidate.probability > dup->probability) {
            dup->probability = candidate.probability;
            dup->clamped = candidate.clamped;
        }
    }
    return out;
}

std::string serialize_extraction(const std::vector<RawCandidate>& candidates) {
    json array = json::array();
    for (const auto& c : candidates) {
        array.push_back({{"text", c.text}, {"probability", c.probability}});
    }
    return array.dump();
}

namespace {

std::optional<double> first_probability(const json& value) {
    if (auto n = as_number(value); n && *n >= 0.0 && *n <= 1.0) return n;
    if (value.is_object()) {
        if (const auto* named = find_member(value, {"probability", "prob", "p", "score"})) {
            if (auto n = first_probability(*named)) return n;
        }
    }
    if (value.is_object() || value.is_array()) {
        for (const auto& child : value) {
            if (auto n = first_probability(child)) return n;
        }
    }
    return std::nullopt;
}

}  // namespace

double parse_adjudication(std::string_view raw_model_output) {
    const auto payload = unfence(raw_model_output);
    if (auto parsed = try_parse(payload)) {
        if (auto p = first_probability(*parsed)) return *p;
    }

    static const std::regex kNumber(R"([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)");
    const std::string text(payload);
    for (auto it = std::sregex_iterator(text.begin(), text.end(), kNumber); it != std::sregex_iterator();
         ++it) {
        const double d = std::stod(it->str());
        if (d >= 0.0 && d <= 1.0) return d;
    }
    throw ParseError("adjudication reply holds no probability in [0, 1]", std::string(raw_model_output));
}

}  // namespace halluspan::prompting
