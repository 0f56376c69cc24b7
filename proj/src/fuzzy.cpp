#include "halluspan/fuzzy.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "halluspan/utf8.hpp"

namespace halluspan::fuzzy {

std::size_t levenshtein(std::u32string_view a, std::u32string_view b) {
    if (a.size() < b.size()) std::swap(a, b);
    std::vector<std::size_t> row(b.size() + 1);
    std::iota(row.begin(), row.end(), std::size_t{0});
    for (std::size_t i = 1; i <= a.size(); ++i) {
        std::size_t diag = row[0];
        row[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t up = row[j];
            row[j] = std::min({up + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
            diag = up;
        }
    }
    return row[b.size()];
}

std::size_t levenshtein(std::string_view a, std::string_view b) {
    return levenshtein(utf8::decode(a), utf8::decode(b));
}

namespace {

// Evaluated literally as 1 - d / max so results match the formula bit for bit.
double ratio(std::size_t distance, std::size_t longest) {
    return 1.0 - static_cast<double>(distance) / static_cast<double>(longest);
}

}  // namespace

double similarity(std::u32string_view a, std::u32string_view b) {
    const auto longest = std::max(a.size(), b.size());
    if (longest == 0) return 1.0;
    return ratio(levenshtein(a, b), longest);
}

double similarity(std::string_view a, std::string_view b) {
    return similarity(utf8::decode(a), utf8::decode(b));
}

double partial_ratio(std::u32string_view needle, std::u32string_view haystack) {
    if (needle.empty()) throw std::invalid_argument("partial_ratio: empty needle");
    if (haystack.empty()) return 0.0;
    if (needle.size() > haystack.size()) std::swap(needle, haystack);

    std::size_t best = needle.size();
    for (std::size_t s = 0; s + needle.size() <= haystack.size() && best > 0; ++s) {
        best = std::min(best, levenshtein(needle, haystack.substr(s, needle.size())));
    }
    return ratio(best, needle.size());
}

double partial_ratio(std::string_view needle, std::string_view haystack) {
    return partial_ratio(utf8::decode(needle), utf8::decode(haystack));
}

std::optional<Alignment> locate_span(std::u32string_view span_text, std::u32string_view answer,
                                     double threshold) {
    if (span_text.empty()) throw std::invalid_argument("locate_span: empty span text");
    if (!(threshold > 0.0 && threshold <= 1.0)) {
        throw std::invalid_argument("locate_span: threshold must be in (0, 1]");
    }

    const std::size_t m = span_text.size();
    if (const auto pos = answer.find(span_text); pos != std::u32string_view::npos) {
        return Alignment{CharSpan(pos, pos + m), 1.0, true};
    }

    const std::size_t n = answer.size();
    const std::size_t min_len = (4 * m + 4) / 5;  // ceil(0.8 m)
    const std::size_t max_len = std::min(5 * m / 4, n);
    if (min_len == 0 || min_len > max_len) return std::nullopt;

    struct Best {
        std::size_t start = 0, length = 0, distance = 0, longest = 0;
        bool found = false;
    } best;
    // (longest - distance) / longest compared exactly by cross-multiplication.
    const auto better = [&best](std::size_t distance, std::size_t longest) {
        if (!best.found) return true;
        return (longest - distance) * best.longest > (best.longest - best.distance) * longest;
    };

    // For a fixed start, one DP pass over the window gives the distance from the
    // span text to every window length at once: row L holds Lev(t[0..i), a[s..s+L)).
    std::vector<std::size_t> prev(m + 1), cur(m + 1);
    for (std::size_t s = 0; s + min_len <= n; ++s) {
        std::iota(prev.begin(), prev.end(), std::size_t{0});
        const std::size_t limit = std::min(max_len, n - s);
        for (std::size_t len = 1; len <= limit; ++len) {
            const char32_t c = answer[s + len - 1];
            cur[0] = len;
            for (std::size_t i = 1; i <= m; ++i) {
                cur[i] = std::min({prev[i] + 1, cur[i - 1] + 1, prev[i - 1] + (span_text[i - 1] == c ? 0 : 1)});
            }
            std::swap(prev, cur);
            if (len < min_len) continue;
            const std::size_t distance = prev[m];
            const std::size_t longest = std::max(m, len);
            if (better(distance, longest)) best = {s, len, distance, longest, true};
        }
    }

    if (!best.found) return std::nullopt;
    const double score = ratio(best.distance, best.longest);
    if (score < threshold) return std::nullopt;
    return Alignment{CharSpan(best.start, best.start + best.length), score, false};
}

std::optional<Alignment> locate_span(std::string_view span_text, std::string_view answer,
                                     double threshold) {
    return locate_span(utf8::decode(span_text), utf8::decode(answer), threshold);
}

}  // namespace halluspan::fuzzy
