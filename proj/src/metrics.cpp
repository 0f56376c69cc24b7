#include "halluspan/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <nlohmann/json.hpp>

#include "halluspan/error.hpp"

namespace halluspan::metrics {

double iou(std::span<const HardLabel> pred, std::span<const HardLabel> gold, std::size_t answer_len) {
    check_bounds(pred, answer_len);
    check_bounds(gold, answer_len);
    const auto p = char_set(pred);
    const auto g = char_set(gold);
    if (p.empty() && g.empty()) return 1.0;
    std::size_t inter = 0;
    for (auto c : p) inter += g.count(c);
    const auto uni = p.size() + g.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<double> soft_vector(std::span<const SoftLabel> labels, std::size_t answer_len) {
    check_bounds(labels, answer_len);
    std::vector<double> out(answer_len, 0.0);
    for (const auto& l : labels) {
        for (auto c = l.span.start(); c < l.span.end(); ++c) out[c] = std::max(out[c], l.probability);
    }
    return out;
}

std::vector<double> average_ranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });

    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i + 1;
        while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
        // Positions i..j-1 share the mean of ranks i+1..j.
        const double rank = static_cast<double>(i + 1 + j) / 2.0;
        for (auto k = i; k < j; ++k) ranks[order[k]] = rank;
        i = j;
    }
    return ranks;
}

namespace {

bool constant(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

}  // namespace

std::optional<double> prob_correlation(std::span<const double> pred, std::span<const double> gold) {
    if (pred.size() != gold.size()) {
        throw ValidationError(fmt::format("correlation over vectors of length {} and {}", pred.size(), gold.size()));
    }
    if (pred.empty()) return std::nullopt;
    const bool pred_const = constant(pred);
    const bool gold_const = constant(gold);
    if (pred_const && gold_const) return 1.0;
    if (pred_const || gold_const) return 0.0;

    const auto rp = average_ranks(pred);
    const auto rg = average_ranks(gold);
    const double n = static_cast<double>(rp.size());
    const double mp = std::accumulate(rp.begin(), rp.end(), 0.0) / n;
    const double mg = std::accumulate(rg.begin(), rg.end(), 0.0) / n;
    double cov = 0.0, vp = 0.0, vg = 0.0;
    for (std::size_t i = 0; i < rp.size(); ++i) {
        cov += (rp[i] - mp) * (rg[i] - mg);
        vp += (rp[i] - mp) * (rp[i] - mp);
        vg += (rg[i] - mg) * (rg[i] - mg);
    }
    return std::clamp(cov / std::sqrt(vp * vg), -1.0, 1.0);
}

namespace {

std::vector<SoftLabel> as_certain(std::span<const HardLabel> hard) {
    std::vector<SoftLabel> soft;
    for (const auto& h : hard) soft.emplace_back(h.span, 1.0);
    return soft;
}

}  // namespace

SampleScore score_sample(const ingest::Prediction* prediction, const Sample& gold) {
    const auto length = gold.answer_length();

    std::vector<HardLabel> gold_hard;
    std::vector<SoftLabel> gold_soft;
    if (gold.gold_hard) gold_hard = *gold.gold_hard;
    else if (gold.gold_soft) gold_hard = harden(*gold.gold_soft, 0.5);
    if (gold.gold_soft) gold_soft = *gold.gold_soft;
    else gold_soft = as_certain(gold_hard);

    std::vector<HardLabel> pred_hard;
    std::vector<SoftLabel> pred_soft;
    if (prediction) {
        pred_hard = prediction->hard;
        pred_soft = prediction->soft.empty() ? as_certain(prediction->hard) : prediction->soft;
    }

    try {
        SampleScore score{gold.id, gold.lang, iou(pred_hard, gold_hard, length), std::nullopt};
        score.corr = prob_correlation(soft_vector(pred_soft, length), soft_vector(gold_soft, length));
        return score;
    } catch (const ValidationError& e) {
        throw ValidationError(fmt::format("sample '{}': {}", gold.id, e.what()));
    }
}

DatasetScore score_dataset(std::span<const ingest::Prediction> predictions, std::span<const Sample> gold,
                           bool group_by_lang) {
    std::unordered_map<std::string_view, const Sample*> gold_ids;
    for (const auto& g : gold) gold_ids.emplace(g.id, &g);

    std::unordered_map<std::string_view, const ingest::Prediction*> by_id;
    std::vector<std::string> unknown;
    for (const auto& p : predictions) {
        if (!gold_ids.contains(p.id)) {
            unknown.push_back(p.id);
            continue;
        }
        by_id.emplace(p.id, &p);
    }
    if (!unknown.empty()) {
        throw ValidationError(fmt::format("predictions for ids not in gold: {}", fmt::join(unknown, ", ")));
    }

    DatasetScore result;
    struct Totals {
        double iou = 0.0, corr = 0.0;
        std::size_t n = 0, n_corr = 0;
    };
    std::map<std::string, Totals> totals;
    for (const auto& g : gold) {
        const auto it = by_id.find(g.id);
        auto score = score_sample(it == by_id.end() ? nullptr : it->second, g);
        auto& t = totals[group_by_lang ? g.lang : "all"];
        t.iou += score.iou;
        ++t.n;
        if (score.corr) {
            t.corr += *score.corr;
            ++t.n_corr;
        }
        result.samples.push_back(std::move(score));
    }
    for (const auto& [lang, t] : totals) {
        LanguageScore ls;
        ls.n_samples = t.n;
        ls.iou = t.iou / static_cast<double>(t.n);
        ls.n_corr_undefined = t.n - t.n_corr;
        if (t.n_corr > 0) ls.corr = t.corr / static_cast<double>(t.n_corr);
        result.by_lang.emplace(lang, ls);
    }
    return result;
}

std::string format_table(const DatasetScore& score, std::string_view title) {
    std::string out = fmt::format("{}\n{:<6} {:>9} {:>16} {:>6}\n", title, "Lang", "IoU Score", "Probability Corr", "N");
    for (const auto& [lang, s] : score.by_lang) {
        std::string upper = lang;
        std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
        const auto corr = s.corr ? fmt::format("{:.3f}", *s.corr) : std::string("n/a");
        out += fmt::format("{:<6} {:>9.3f} {:>16} {:>6}\n", upper, s.iou, corr, s.n_samples);
        if (s.n_corr_undefined > 0) {
            out += fmt::format("       ({} samples without a defined correlation)\n", s.n_corr_undefined);
        }
    }
    return out;
}

std::string report_json(const DatasetScore& score) {
    nlohmann::json report = nlohmann::json::object();
    for (const auto& [lang, s] : score.by_lang) {
        report[lang] = {
            {"iou", s.iou},
            {"corr", s.corr ? nlohmann::json(*s.corr) : nlohmann::json(nullptr)},
            {"n_samples", s.n_samples},
            {"n_corr_undefined", s.n_corr_undefined},
        };
    }
    return report.dump(2);
}

}  // namespace halluspan::metrics
