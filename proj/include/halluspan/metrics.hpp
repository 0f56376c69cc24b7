#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "halluspan/ingest.hpp"
#include "halluspan/spans.hpp"

namespace halluspan::metrics {

/// Character-level intersection over union. Two empty sets score 1.0.
/// Throws ValidationError if a span ends beyond answer_len.
double iou(std::span<const HardLabel> pred, std::span<const HardLabel> gold,
           std::size_t answer_len);

/// Per-character probability: the max over labels covering the position, else 0.
std::vector<double> soft_vector(std::span<const SoftLabel> labels, std::size_t answer_len);

/// 1-based ranks with ties sharing their average rank.
std::vector<double> average_ranks(std::span<const double> values);

/// Spearman rank correlation (Pearson over average ranks).
///
/// Both vectors constant: 1.0. Exactly one constant: 0.0. Empty vectors have
/// no defined correlation (nullopt). Throws ValidationError on length mismatch.
std::optional<double> prob_correlation(std::span<const double> pred, std::span<const double> gold);

struct SampleScore {
    std::string id;
    std::string lang;
    double iou;
    std::optional<double> corr;  // nullopt: undefined
};

struct LanguageScore {
    double iou = 0.0;
    std::optional<double> corr;  // nullopt when no sample had a defined value
    std::size_t n_samples = 0;
    std::size_t n_corr_undefined = 0;
};

struct DatasetScore {
    std::vector<SampleScore> samples;  // gold order
    std::map<std::string, LanguageScore> by_lang;
};

/// Gold soft labels fall back to the hard labels at probability 1.0; gold hard
/// labels fall back to the soft labels at 0.5. A prediction with hard labels
/// but no soft labels is treated the same way.
SampleScore score_sample(const ingest::Prediction* prediction, const Sample& gold);

/// Missing predictions score as empty label sets. Throws ValidationError
/// listing every prediction id absent from gold. With group_by_lang off,
/// everything is reported under "all".
DatasetScore score_dataset(std::span<const ingest::Prediction> predictions,
                           std::span<const Sample> gold, bool group_by_lang = true);

/// Plain-text table: Lang | IoU Score | Probability Corr | N.
std::string format_table(const DatasetScore& score, std::string_view title);

/// {lang: {iou, corr, n_samples, n_corr_undefined}}; corr is null when undefined.
std::string report_json(const DatasetScore& score);

}  // namespace halluspan::metrics
