#pragma once

#include <compare>
#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace halluspan {

/// Half-open interval [start, end) of code-point offsets into an answer.
/// Empty spans cannot be constructed.
class CharSpan {
public:
    /// Throws ValidationError unless start < end.
    CharSpan(std::size_t start, std::size_t end);

    std::size_t start() const noexcept { return start_; }
    std::size_t end() const noexcept { return end_; }
    std::size_t length() const noexcept { return end_ - start_; }

    bool fits(std::size_t text_length) const noexcept { return end_ <= text_length; }

    auto operator<=>(const CharSpan&) const = default;

private:
    std::size_t start_;
    std::size_t end_;
};

struct SoftLabel {
    /// Throws ValidationError when probability is outside [0, 1] or NaN.
    SoftLabel(CharSpan span, double probability);

    CharSpan span;
    double probability;

    bool operator==(const SoftLabel&) const = default;
};

struct HardLabel {
    CharSpan span;

    bool operator==(const HardLabel&) const = default;
};

struct Sample {
    std::string id;
    std::string lang;
    std::string question;
    std::string answer;
    std::optional<std::vector<SoftLabel>> gold_soft;
    std::optional<std::vector<HardLabel>> gold_hard;

    /// Code-point length of the answer.
    std::size_t answer_length() const;

    /// Text covered by `span` within the answer.
    std::string span_text(const CharSpan& span) const;
};

/// Sorts by start and merges overlapping or touching spans. The covered
/// character set is unchanged.
std::vector<HardLabel> normalize_spans(std::span<const HardLabel> labels);

std::set<std::size_t> char_set(std::span<const HardLabel> labels);

/// probability >= threshold, allowing 1e-12 of rounding noise so averaged
/// decimal scores such as mean(0.7, 0.7, 0.7) land on the boundary.
bool reaches(double probability, double threshold) noexcept;

/// Hard labels for every soft label that reaches the threshold, normalized.
std::vector<HardLabel> harden(std::span<const SoftLabel> labels, double threshold);

/// Throws ValidationError if any span ends beyond `text_length`.
void check_bounds(std::span<const HardLabel> labels, std::size_t text_length);
void check_bounds(std::span<const SoftLabel> labels, std::size_t text_length);

}  // namespace halluspan
