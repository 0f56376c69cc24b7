#include "halluspan/spans.hpp"

#include <random>

#include <gtest/gtest.h>

#include "halluspan/error.hpp"
#include "halluspan/utf8.hpp"

using namespace halluspan;

namespace {

std::vector<HardLabel> hard(std::initializer_list<std::pair<std::size_t, std::size_t>> spans) {
    std::vector<HardLabel> out;
    for (auto [s, e] : spans) out.push_back(HardLabel{CharSpan(s, e)});
    return out;
}

}  // namespace

TEST(Spans, EmptyAndInvertedSpansAreRejected) {
    EXPECT_THROW(CharSpan(3, 3), ValidationError);
    EXPECT_THROW(CharSpan(4, 2), ValidationError);
    EXPECT_NO_THROW(CharSpan(0, 1));
}

TEST(Spans, SoftLabelProbabilityRange) {
    EXPECT_THROW(SoftLabel(CharSpan(0, 1), 1.0001), ValidationError);
    EXPECT_THROW(SoftLabel(CharSpan(0, 1), -0.1), ValidationError);
    EXPECT_THROW(SoftLabel(CharSpan(0, 1), std::nan("")), ValidationError);
    EXPECT_NO_THROW(SoftLabel(CharSpan(0, 1), 0.0));
    EXPECT_NO_THROW(SoftLabel(CharSpan(0, 1), 1.0));
}

TEST(Spans, NormalizeMergesOverlap) {
    EXPECT_EQ(normalize_spans(hard({{0, 5}, {3, 8}})), hard({{0, 8}}));
}

TEST(Spans, NormalizeMergesAdjacent) {
    EXPECT_EQ(normalize_spans(hard({{0, 2}, {2, 4}})), hard({{0, 4}}));
}

TEST(Spans, NormalizeSortsDisjoint) {
    EXPECT_EQ(normalize_spans(hard({{5, 7}, {0, 2}})), hard({{0, 2}, {5, 7}}));
    EXPECT_TRUE(normalize_spans({}).empty());
}

TEST(Spans, CharSetExamples) {
    EXPECT_EQ(char_set(hard({{0, 3}})), (std::set<std::size_t>{0, 1, 2}));
    EXPECT_TRUE(char_set({}).empty());
    EXPECT_EQ(char_set(hard({{0, 2}, {1, 4}})), (std::set<std::size_t>{0, 1, 2, 3}));
}

TEST(Spans, NormalizePreservesCharSetAndIsIdempotent) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<HardLabel> labels;
        const auto count = rng() % 8;
        for (std::size_t i = 0; i < count; ++i) {
            const auto s = rng() % 40;
            labels.push_back(HardLabel{CharSpan(s, s + 1 + rng() % 10)});
        }
        const auto once = normalize_spans(labels);
        EXPECT_EQ(char_set(once), char_set(labels));
        EXPECT_EQ(normalize_spans(once), once);
        for (std::size_t i = 1; i < once.size(); ++i) {
            EXPECT_LT(once[i - 1].span.end(), once[i].span.start());
        }
    }
}

TEST(Spans, HardenUsesInclusiveThreshold) {
    std::vector<SoftLabel> soft{{CharSpan(0, 2), 0.7}, {CharSpan(4, 6), 0.69}, {CharSpan(1, 3), 0.9}};
    EXPECT_EQ(harden(soft, 0.7), hard({{0, 3}}));
}

TEST(Spans, CheckBounds) {
    EXPECT_NO_THROW(check_bounds(hard({{0, 5}}), 5));
    EXPECT_THROW(check_bounds(hard({{0, 6}}), 5), ValidationError);
}

TEST(Spans, CodePointIndexingRoundTrips) {
    // Latin, Arabic, Devanagari (with combining marks) and an astral emoji.
    const std::vector<std::string> texts{
        "The Eiffel Tower is 330 meters tall",
        "تم بناء برج إيفل في عام ١٨٨٧",
        "एफिल टॉवर 330 मीटर ऊँचा है",
        "mixed 😀 ناص text",
    };
    std::mt19937_64 rng(3);
    for (const auto& text : texts) {
        Sample sample{"s", "xx", "q", text, std::nullopt, std::nullopt};
        const auto n = sample.answer_length();
        EXPECT_EQ(n, utf8::decode(text).size());
        for (int i = 0; i < 50; ++i) {
            const auto a = rng() % n;
            const auto b = a + 1 + rng() % (n - a);
            EXPECT_EQ(utf8::length(sample.span_text(CharSpan(a, b))), b - a);
        }
        EXPECT_EQ(sample.span_text(CharSpan(0, n)), text);
    }
}

TEST(Utf8, RejectsMalformedInput) {
    EXPECT_THROW(utf8::decode("\xC3"), ValidationError);          // truncated
    EXPECT_THROW(utf8::decode("\xC0\xAF"), ValidationError);      // overlong
    EXPECT_THROW(utf8::decode("\xED\xA0\x80"), ValidationError);  // surrogate
    EXPECT_THROW(utf8::decode("\xFF"), ValidationError);
    EXPECT_EQ(utf8::encode(utf8::decode("ok ١٨٨٧ 😀")), "ok ١٨٨٧ 😀");
}
