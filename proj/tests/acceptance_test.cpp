// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "halluspan/cli.hpp"
#include "halluspan/ensemble.hpp"
#include "halluspan/fuzzy.hpp"
#include "halluspan/ingest.hpp"
#include "halluspan/metrics.hpp"
#include "halluspan/utf8.hpp"
#include "oracles.hpp"

using namespace halluspan;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass;
    std::string detail;
};

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("halluspan_acceptance_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// ---------------------------------------------------------------------------
// 1. Levenshtein vs the recursive definition, every pair up to length 8 over {a,b,c}.
//
// The recursion lev(a,b) = min(lev(a',b)+1, lev(a,b')+1, lev(a',b')+[a0!=b0]) is
// evaluated once per pair into a table indexed by (length, base-3 value), so the
// exponential call tree collapses to ~97M table entries.

Outcome levenshtein_exhaustive() {
    const auto started = Clock::now();
    constexpr std::size_t kMaxLen = 8;
    std::vector<std::size_t> pow3(kMaxLen + 1, 1), offset(kMaxLen + 2, 0);
    for (std::size_t i = 1; i <= kMaxLen; ++i) pow3[i] = pow3[i - 1] * 3;
    for (std::size_t l = 0; l <= kMaxLen; ++l) offset[l + 1] = offset[l] + pow3[l];
    const std::size_t n = offset[kMaxLen + 1];

    std::vector<std::u32string> strings(n);
    std::vector<std::uint8_t> len_of(n);
    std::vector<std::uint32_t> tail_of(n), head_of(n);
    for (std::size_t l = 0; l <= kMaxLen; ++l) {
        for (std::size_t v = 0; v < pow3[l]; ++v) {
            const auto idx = offset[l] + v;
            std::u32string s;
            for (std::size_t i = 0; i < l; ++i) s.push_back(U'a' + static_cast<char32_t>((v / pow3[l - 1 - i]) % 3));
            strings[idx] = s;
            len_of[idx] = static_cast<std::uint8_t>(l);
            if (l > 0) {
                head_of[idx] = static_cast<std::uint32_t>(v / pow3[l - 1]);
                tail_of[idx] = static_cast<std::uint32_t>(offset[l - 1] + v % pow3[l - 1]);
            }
        }
    }

    std::vector<std::uint8_t> table(n * n);
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = 0; b < n; ++b) {
            std::uint8_t d;
            if (len_of[a] == 0) {
                d = len_of[b];
            } else if (len_of[b] == 0) {
                d = len_of[a];
            } else {
                const auto ta = tail_of[a], tb = tail_of[b];
                d = std::min({static_cast<std::uint8_t>(table[ta * n + b] + 1),
                              static_cast<std::uint8_t>(table[a * n + tb] + 1),
                              static_cast<std::uint8_t>(table[ta * n + tb] + (head_of[a] != head_of[b]))});
            }
            table[a * n + b] = d;
        }
    }

    // The table must agree with the literal exponential recursion where that is affordable.
    std::mt19937_64 rng(1);
    const auto short_end = offset[6];
    for (int i = 0; i < 3000; ++i) {
        const auto a = rng() % short_end, b = rng() % short_end;
        if (table[a * n + b] != oracle::levenshtein_recursive(strings[a], strings[b])) {
            return {false, "memo table disagrees with the recursive oracle"};
        }
    }

    std::atomic<std::size_t> mismatches{0}, next_row{0};
    std::atomic<std::uint64_t> pairs{0};
    const auto worker = [&] {
        std::uint64_t local = 0;
        for (auto a = next_row.fetch_add(1); a < n; a = next_row.fetch_add(1)) {
            for (std::size_t b = 0; b < n; ++b) {
                if (fuzzy::levenshtein(strings[a], strings[b]) != table[a * n + b]) ++mismatches;
            }
            local += n;
        }
        pairs += local;
    };
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < std::max(1u, std::thread::hardware_concurrency()); ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    const double elapsed = seconds_since(started);
    return {mismatches == 0 && elapsed < 60.0,
            fmt::format("{} pairs, {} mismatches, {:.1f} s (limit 60 s)", pairs.load(), mismatches.load(), elapsed)};
}

// 2. similarity("kitten", "sitting") = 1 - 3/7.
Outcome kitten_sitting() {
    const auto d = oracle::levenshtein_recursive(U"kitten", U"sitting");
    const double got = fuzzy::similarity("kitten", "sitting");
    const double want = 1.0 - 3.0 / 7.0;
    return {d == 3 && std::abs(got - want) <= 1e-12, fmt::format("oracle distance {}, similarity {:.17g}", d, got)};
}

// 3. partial_ratio vs window enumeration.
Outcome partial_ratio_oracle() {
    std::mt19937_64 rng(3);
    std::size_t mismatches = 0;
    for (int i = 0; i < 1000; ++i) {
        const std::u32string_view alphabet = (i % 2 == 0) ? U"abc" : U"abcdefgh";
        auto needle = oracle::random_string(rng, 12, alphabet);
        if (needle.empty()) needle = U"a";
        const auto haystack = oracle::random_string(rng, 64, alphabet);
        if (fuzzy::partial_ratio(needle, haystack) != oracle::partial_ratio(needle, haystack)) ++mismatches;
    }
    return {mismatches == 0, fmt::format("1000 pairs, {} mismatches", mismatches)};
}

// 4. IoU vs explicit character sets.
Outcome iou_oracle() {
    std::mt19937_64 rng(4);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const std::size_t len = 1 + rng() % 200;
        std::vector<HardLabel> a, b;
        std::vector<std::pair<std::size_t, std::size_t>> pa, pb;
        for (auto* side : {&a, &b}) {
            auto& raw = side == &a ? pa : pb;
            for (int k = 0, m = static_cast<int>(rng() % 6); k < m; ++k) {
                const auto s = rng() % len;
                const auto e = std::min(len, s + 1 + rng() % 40);
                side->push_back(HardLabel{CharSpan(s, e)});
                raw.emplace_back(s, e);
            }
        }
        worst = std::max(worst, std::abs(metrics::iou(a, b, len) - oracle::iou(pa, pb, len)));
    }
    const double both_empty = metrics::iou({}, {}, 17);
    return {worst <= 1e-12 && both_empty == 1.0,
            fmt::format("1000 pairs, max |diff| {:.3g}, both-empty {}", worst, both_empty)};
}

// 5. Spearman invariance under strictly monotone transforms.
Outcome correlation_properties() {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::vector<std::function<double(double)>> transforms{
        [](double x) { return std::exp(4.0 * x); },
        [](double x) { return x * x * x - 2.0; },
        [](double x) { return std::log1p(x) * 100.0; },
        [](double x) { return -1.0 / (x + 1.0); },
    };
    double worst = 0.0;
    bool defined = true;
    for (int i = 0; i < 500; ++i) {
        const std::size_t n = 2 + rng() % 60;
        std::vector<double> a(n), b(n);
        // Coarse values force ties; fine values give strict rankings.
        const bool coarse = i % 2 == 0;
        for (auto& x : a) x = coarse ? std::round(u(rng) * 5) / 5 : u(rng);
        for (auto& x : b) x = coarse ? std::round(u(rng) * 5) / 5 : u(rng);
        const auto& fa = transforms[rng() % transforms.size()];
        const auto& fb = transforms[rng() % transforms.size()];
        std::vector<double> ta(n), tb(n);
        std::transform(a.begin(), a.end(), ta.begin(), fa);
        std::transform(b.begin(), b.end(), tb.begin(), fb);
        const auto base = metrics::prob_correlation(a, b);
        const auto moved = metrics::prob_correlation(ta, tb);
        if (!base || !moved) {
            defined = false;
            continue;
        }
        worst = std::max(worst, std::abs(*base - *moved));
    }

    std::vector<double> inc(50), dec(50);
    for (std::size_t i = 0; i < inc.size(); ++i) {
        inc[i] = u(rng) + static_cast<double>(i);
        dec[inc.size() - 1 - i] = inc[i];
    }
    const auto same = metrics::prob_correlation(inc, inc);
    const auto reversed = metrics::prob_correlation(inc, dec);
    const bool pass = defined && worst <= 1e-9 && same && std::abs(*same - 1.0) <= 1e-12 && reversed &&
                      std::abs(*reversed + 1.0) <= 1e-12;
    return {pass, fmt::format("500 pairs, max |diff| {:.3g}; identical {:.17g}; reversed {:.17g}", worst,
                              same.value_or(NAN), reversed.value_or(NAN))};
}

// 6. Rotation: every model extracts once and never judges its own extraction.
Outcome rotation_exhaustive() {
    const std::vector<std::string> pool{"m1", "m2", "m3", "m4", "m5"};
    std::size_t lists = 0;
    for (std::size_t k = 2; k <= pool.size(); ++k) {
        // Every ordered selection of k distinct names.
        std::vector<std::size_t> idx(pool.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::vector<std::vector<std::size_t>> seen;
        do {
            std::vector<std::size_t> pick(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
            if (std::find(seen.begin(), seen.end(), pick) != seen.end()) continue;
            seen.push_back(pick);
            std::vector<ensemble::ModelId> models;
            for (auto i : pick) models.emplace_back(pool[i]);
            const auto schedule = ensemble::rotation_schedule(models);
            ++lists;
            if (schedule.size() != k) return {false, "wrong schedule length"};
            for (std::size_t i = 0; i < k; ++i) {
                const auto as_extractor = std::count_if(schedule.begin(), schedule.end(),
                                                        [&](const auto& e) { return e.extractor == models[i]; });
                if (as_extractor != 1) return {false, fmt::format("{} extracts {} times", pool[pick[i]], as_extractor)};
            }
            for (const auto& e : schedule) {
                if (e.adjudicators.size() != k - 1) return {false, "wrong adjudicator count"};
                if (std::find(e.adjudicators.begin(), e.adjudicators.end(), e.extractor) != e.adjudicators.end()) {
                    return {false, fmt::format("{} judges its own extraction", e.extractor.name())};
                }
            }
        } while (std::next_permutation(idx.begin(), idx.end()));
    }
    return {true, fmt::format("{} ordered model lists of size 2-5", lists)};
}

// 7. Consensus arithmetic and threshold monotonicity.
Outcome consensus_arithmetic() {
    const double tau = ensemble::kDefaultHardThreshold;
    const auto flagged = [&](std::vector<double> scores, double t) {
        const double p = ensemble::consensus_probability(scores);
        return std::pair{p, !harden(std::vector{SoftLabel(CharSpan(0, 1), p)}, t).empty()};
    };
    const auto [p1, h1] = flagged({0.8, 0.9, 0.7}, tau);
    const auto [p2, h2] = flagged({0.7, 0.7, 0.7}, tau);
    const auto [p3, h3] = flagged({0.6, 0.6, 0.6}, tau);
    bool pass = std::abs(p1 - 0.8) <= 1e-12 && h1 && std::abs(p2 - 0.7) <= 1e-12 && h2 &&
                std::abs(p3 - 0.6) <= 1e-12 && !h3;

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::size_t violations = 0;
    for (int i = 0; i < 200; ++i) {
        std::vector<SoftLabel> soft;
        for (std::size_t s = 0, k = 1 + rng() % 8; s < k; ++s) {
            std::vector<double> judges(1 + rng() % 4);
            for (auto& j : judges) j = u(rng);
            const auto start = rng() % 80;
            soft.emplace_back(CharSpan(start, start + 1 + rng() % 10), ensemble::consensus_probability(judges));
        }
        double lo = 0.05 + 0.9 * u(rng), hi = 0.05 + 0.9 * u(rng);
        if (lo > hi) std::swap(lo, hi);
        const auto loose = char_set(harden(soft, lo));
        for (auto c : char_set(harden(soft, hi))) violations += loose.count(c) == 0;
    }
    pass = pass && violations == 0;
    return {pass, fmt::format("means {:.17g} / {:.17g} / {:.17g}, hard {} / {} / {}; 200 sets, {} monotonicity violations",
                              p1, p2, p3, h1, h2, h3, violations)};
}

// 8. End to end on a planted corpus with mock backends.
Outcome end_to_end() {
    const auto started = Clock::now();
    const auto dir = scratch("e2e");
    std::ostringstream out, err;
    const auto corpus = dir / "planted.jsonl";
    if (cli::cmd_mockgen({corpus, 200, {"en", "ar", "hi"}, 42, 0.2}, out, err) != cli::kOk) {
        return {false, "mockgen failed: " + err.str()};
    }
    cli::RunOptions run;
    run.input = corpus;
    run.output_dir = dir / "out";
    run.mock = true;
    run.seed = 42;
    run.mode = cli::OutputMode::consensus;
    if (cli::cmd_run(run, out, err) != cli::kOk) return {false, "run failed: " + err.str()};

    std::vector<fs::path> files;
    for (const auto& m : ensemble::default_models()) files.push_back(run.output_dir / cli::run_file_name(m.name()));
    files.push_back(run.output_dir / cli::kConsensusFile);
    const auto report_path = dir / "report.json";
    cli::ScoreOptions score{files, corpus, report_path, true};
    std::ostringstream table;
    if (cli::cmd_score(score, table, err) != cli::kOk) return {false, "score failed: " + err.str()};
    const double elapsed = seconds_since(started);

    const auto report = nlohmann::json::parse(slurp(report_path));
    double min_iou = 1.0, min_corr = 1.0;
    for (const auto& [stem, by_lang] : report.items()) {
        for (const auto& [lang, s] : by_lang.items()) {
            min_iou = std::min(min_iou, s.at("iou").get<double>());
            min_corr = std::min(min_corr, s.at("corr").is_null() ? -1.0 : s.at("corr").get<double>());
        }
    }
    bool langs_ok = report.size() == files.size();
    for (const auto& [stem, by_lang] : report.items()) {
        for (const char* lang : {"en", "ar", "hi"}) langs_ok = langs_ok && by_lang.contains(lang);
    }
    return {langs_ok && min_iou >= 0.999 && min_corr >= 0.999 && elapsed < 30.0,
            fmt::format("{} prediction files x 3 languages, min mean IoU {:.6f}, min mean corr {:.6f}, {:.2f} s (limit 30 s)",
                        files.size(), min_iou, min_corr, elapsed)};
}

// 9. Same seed, warm cache: bit-identical prediction files.
Outcome determinism() {
    const auto dir = scratch("determinism");
    std::ostringstream out, err;
    const auto corpus = dir / "planted.jsonl";
    if (cli::cmd_mockgen({corpus, 60, {"en", "ar", "hi"}, 9, 0.2}, out, err) != cli::kOk) return {false, "mockgen failed"};

    const auto run_once = [&](const std::string& name) {
        cli::RunOptions run;
        run.input = corpus;
        run.output_dir = dir / name;
        run.mock = true;
        run.seed = 9;
        run.mode = cli::OutputMode::consensus;
        run.cache_dir = dir / "cache";
        run.max_concurrency = 8;
        return cli::cmd_run(run, out, err);
    };
    if (run_once("first") != cli::kOk || run_once("second") != cli::kOk) return {false, "run failed: " + err.str()};

    std::size_t compared = 0, differing = 0;
    for (const auto& entry : fs::directory_iterator(dir / "first")) {
        if (entry.path().filename() == cli::kRunLogFile) continue;
        ++compared;
        if (slurp(entry.path()) != slurp(dir / "second" / entry.path().filename())) ++differing;
    }
    std::size_t calls = 0, hits = 0;
    std::istringstream log(slurp(dir / "second" / cli::kRunLogFile));
    for (std::string line; std::getline(log, line);) {
        ++calls;
        hits += nlohmann::json::parse(line).at("cache_hit").get<bool>();
    }
    return {compared == 5 && differing == 0 && calls > 0 && hits == calls,
            fmt::format("{} files compared, {} differ; second run served {}/{} calls from cache", compared, differing,
                        hits, calls)};
}

// 10. read_dataset(write_predictions(x)) keeps every label bit for bit.
Outcome round_trip() {
    const auto dir = scratch("roundtrip");
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::u32string alphabet = U"abc XYZ.١٢٣ برج मीटर 😀";
    std::size_t labels = 0, mismatches = 0;
    for (int d = 0; d < 100; ++d) {
        std::vector<Sample> samples;
        std::vector<ingest::Prediction> preds;
        for (std::size_t i = 0, n = 1 + rng() % 20; i < n; ++i) {
            std::u32string answer;
            for (std::size_t k = 0, m = 1 + rng() % 120; k < m; ++k) answer += alphabet[rng() % alphabet.size()];
            samples.push_back({fmt::format("d{}-{}", d, i), "xx", "question?", utf8::encode(answer), std::nullopt, std::nullopt});
            std::vector<SoftLabel> soft;
            for (std::size_t k = 0, m = rng() % 5; k < m; ++k) {
                const auto s = rng() % answer.size();
                const double p = (k == 0 && i % 3 == 0) ? 0.7 : u(rng);
                soft.emplace_back(CharSpan(s, std::min(answer.size(), s + 1 + rng() % 15)), p);
            }
            preds.push_back(ingest::make_prediction(samples.back().id, soft, 0.7));
        }
        const auto path = dir / fmt::format("d{}.jsonl", d);
        ingest::write_predictions(preds, samples, path);
        const auto back = ingest::read_dataset(path);
        if (!back.errors.empty() || back.samples.size() != preds.size()) return {false, "records lost on read"};
        for (std::size_t i = 0; i < preds.size(); ++i) {
            const auto& s = back.samples[i];
            labels += preds[i].soft.size() + preds[i].hard.size();
            const bool same = s.id == preds[i].id && s.answer == samples[i].answer && s.gold_soft &&
                              *s.gold_soft == preds[i].soft && s.gold_hard && *s.gold_hard == preds[i].hard;
            mismatches += !same;
        }
    }
    return {mismatches == 0, fmt::format("100 datasets, {} labels, {} mismatching records", labels, mismatches)};
}

// 11. Arabic and Devanagari: recovered offsets equal planted code-point offsets.
std::size_t code_points_in(std::string_view bytes) {
    // Independent count: every byte that is not a UTF-8 continuation byte starts a code point.
    return static_cast<std::size_t>(std::count_if(bytes.begin(), bytes.end(), [](char c) {
        return (static_cast<unsigned char>(c) & 0xC0) != 0x80;
    }));
}

Outcome unicode_offsets() {
    const auto corpus = ingest::generate_planted_corpus({.n = 120, .langs = {"ar", "hi"}, .seed = 11, .zero_fraction = 0.2});
    ensemble::PipelineConfig config;
    ensemble::BackendMap map;
    for (const auto& m : config.models) map.emplace(m, std::make_shared<backends::MockBackend>(m, 11));
    const ensemble::Pipeline pipeline(config, map);

    std::size_t spans = 0, drifted_bytes = 0, wrong = 0;
    for (const auto& sample : corpus) {
        // Planted offsets from byte search plus an independent code-point count.
        std::vector<HardLabel> planted;
        for (const auto& p : ingest::find_planted(sample)) {
            const auto byte_pos = sample.answer.find(p.text);
            if (byte_pos == std::string::npos) return {false, "planted phrase missing from answer"};
            const auto start = code_points_in(std::string_view(sample.answer).substr(0, byte_pos));
            planted.push_back(HardLabel{CharSpan(start, start + code_points_in(p.text))});
            drifted_bytes += byte_pos != start;
        }
        if (planted != *sample.gold_hard) ++wrong;

        const auto result = pipeline.run_all(sample);
        for (const auto& run : result.runs) {
            if (run.hard != planted) ++wrong;
            std::vector<HardLabel> soft_spans;
            for (const auto& s : run.soft) soft_spans.push_back(HardLabel{s.span});
            if (soft_spans != planted) ++wrong;
        }
        if (result.merged_hard != planted) ++wrong;
        spans += planted.size();
    }
    return {wrong == 0 && spans > 0 && drifted_bytes > 0,
            fmt::format("{} samples, {} planted spans ({} where byte and code-point offsets differ), {} mismatches",
                        corpus.size(), spans, drifted_bytes, wrong)};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"levenshtein matches recursive oracle, exhaustive to length 8", levenshtein_exhaustive},
        {"similarity(kitten, sitting) = 1 - 3/7", kitten_sitting},
        {"partial_ratio matches window enumeration", partial_ratio_oracle},
        {"iou matches character-set oracle", iou_oracle},
        {"correlation is rank based", correlation_properties},
        {"rotation schedule", rotation_exhaustive},
        {"consensus arithmetic and threshold monotonicity", consensus_arithmetic},
        {"end-to-end mock pipeline on planted corpus", end_to_end},
        {"warm-cache reruns are bit identical", determinism},
        {"prediction files round-trip through the dataset reader", round_trip},
        {"Arabic and Devanagari offsets are code points", unicode_offsets},
    };

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome outcome;
        try {
            outcome = criteria[i].second();
        } catch (const std::exception& e) {
            outcome = {false, fmt::format("exception: {}", e.what())};
        }
        failures += !outcome.pass;
        std::cout << fmt::format("{} {:>2}. {}: {}", outcome.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                                 outcome.detail)
                  << std::endl;
    }
    std::cout << fmt::format("{} of {} criteria passed", criteria.size() - static_cast<std::size_t>(failures),
                             criteria.size())
              << std::endl;
    return failures == 0 ? 0 : 1;
}
