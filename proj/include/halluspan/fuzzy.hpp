#pragma once

#include <cstddef>
#include <optional>
#include <string_view>

#include "halluspan/spans.hpp"

namespace halluspan::fuzzy {

inline constexpr double kDefaultAlignmentThreshold = 0.9;

/// Where an extracted span text landed in the answer.
struct Alignment {
    CharSpan span;
    double similarity;
    bool exact;

    bool operator==(const Alignment&) const = default;
};

// The UTF-8 overloads decode and forward to the code-point versions. Matching
// is case- and whitespace-sensitive.

std::size_t levenshtein(std::u32string_view a, std::u32string_view b);
std::size_t levenshtein(std::string_view a, std::string_view b);

/// 1 - Lev(a, b) / max(|a|, |b|). Two empty strings are identical (1.0).
double similarity(std::u32string_view a, std::u32string_view b);
double similarity(std::string_view a, std::string_view b);

/// Best similarity of `needle` against every equal-length window of
/// `haystack`. Arguments are swapped when the needle is the longer one.
/// Throws std::invalid_argument for an empty needle; an empty haystack scores 0.
double partial_ratio(std::u32string_view needle, std::u32string_view haystack);
double partial_ratio(std::string_view needle, std::string_view haystack);

/// Maps extracted span text back onto code-point offsets in `answer`.
///
/// The leftmost verbatim occurrence wins outright. Otherwise every window with
/// length in [ceil(0.8|t|), floor(1.25|t|)] is scored and the best one is
/// returned if it reaches `threshold`. Ties go to the leftmost start, then the
/// shorter window.
std::optional<Alignment> locate_span(std::u32string_view span_text, std::u32string_view answer,
                                     double threshold = kDefaultAlignmentThreshold);
std::optional<Alignment> locate_span(std::string_view span_text, std::string_view answer,
                                     double threshold = kDefaultAlignmentThreshold);

}  // namespace halluspan::fuzzy
