#include "halluspan/spans.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "halluspan/error.hpp"
#include "halluspan/utf8.hpp"

namespace halluspan {

CharSpan::CharSpan(std::size_t start, std::size_t end) : start_(start), end_(end) {
    if (start >= end) {
        throw ValidationError(fmt::format("empty or inverted span [{}, {})", start, end));
    }
}

SoftLabel::SoftLabel(CharSpan span_, double probability_) : span(span_), probability(probability_) {
    if (!(probability >= 0.0 && probability <= 1.0)) {
        throw ValidationError(fmt::format("probability {} outside [0, 1]", probability));
    }
}

std::size_t Sample::answer_length() const { return utf8::length(answer); }

std::string Sample::span_text(const CharSpan& span) const {
    return utf8::substr(answer, span.start(), span.end());
}

std::vector<HardLabel> normalize_spans(std::span<const HardLabel> labels) {
    std::vector<HardLabel> sorted(labels.begin(), labels.end());
    std::sort(sorted.begin(), sorted.end(),
              [](const HardLabel& a, const HardLabel& b) { return a.span < b.span; });

    std::vector<HardLabel> merged;
    for (const auto& label : sorted) {
        if (!merged.empty() && label.span.start() <= merged.back().span.end()) {
            auto& last = merged.back();
            last.span = CharSpan(last.span.start(), std::max(last.span.end(), label.span.end()));
        } else {
            merged.push_back(label);
        }
    }
    return merged;
}

std::set<std::size_t> char_set(std::span<const HardLabel> labels) {
    std::set<std::size_t> chars;
    for (const auto& label : labels) {
        for (auto c = label.span.start(); c < label.span.end(); ++c) chars.insert(c);
    }
    return chars;
}

bool reaches(double probability, double threshold) noexcept { return probability >= threshold - 1e-12; }

std::vector<HardLabel> harden(std::span<const SoftLabel> labels, double threshold) {
    std::vector<HardLabel> hard;
    for (const auto& label : labels) {
        if (reaches(label.probability, threshold)) hard.push_back(HardLabel{label.span});
    }
    return normalize_spans(hard);
}

namespace {

void check_span(const CharSpan& span, std::size_t text_length) {
    if (!span.fits(text_length)) {
        throw ValidationError(fmt::format("span [{}, {}) exceeds text length {}", span.start(),
                                          span.end(), text_length));
    }
}

}  // namespace

void check_bounds(std::span<const HardLabel> labels, std::size_t text_length) {
    for (const auto& label : labels) check_span(label.span, text_length);
}

void check_bounds(std::span<const SoftLabel> labels, std::size_t text_length) {
    for (const auto& label : labels) check_span(label.span, text_length);
}

}  // namespace halluspan
