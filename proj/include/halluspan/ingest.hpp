#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <span>
#include <string>
#include <vector>

#include "halluspan/spans.hpp"

namespace halluspan::ingest {

// JSON-lines records, one per sample:
//   {"id", "lang", "model_input", "model_output_text",
//    "soft_labels": [{"start", "end", "prob"}], "hard_labels": [[start, end]]}
// Offsets are code points into model_output_text. Accepted aliases on read:
//   question -> model_input, answer / output -> model_output_text,
//   probability -> prob.

struct RecordIssue {
    std::size_t line;  // 1-based
    std::string message;
};

struct Dataset {
    std::vector<Sample> samples;
    std::vector<std::size_t> lines;     // source line of each sample
    std::vector<RecordIssue> errors;    // skipped records
    std::vector<RecordIssue> notes;     // merged gold spans and similar repairs
    std::vector<std::string> warnings;  // file-level (empty file)
};

/// Strict reader: every record needs id, lang and a non-empty answer, and all
/// labels must fit the answer. Bad records are skipped and listed in errors.
/// Throws IoError if the file cannot be opened.
Dataset read_dataset(const std::filesystem::path& path);
Dataset parse_dataset(std::istream& in);

struct Prediction {
    std::string id;
    std::vector<SoftLabel> soft;
    std::vector<HardLabel> hard;

    bool operator==(const Prediction&) const = default;
};

/// Hard labels derived from `soft` at `threshold`.
Prediction make_prediction(std::string id, std::vector<SoftLabel> soft, double threshold);

struct PredictionFile {
    std::vector<Prediction> predictions;
    std::vector<RecordIssue> errors;
};

/// Lenient reader for prediction files: only id and labels are required.
/// Bounds are checked later against the gold answers.
PredictionFile read_predictions(const std::filesystem::path& path);
PredictionFile parse_predictions(std::istream& in);

/// One line per prediction in the given order. Each line carries the sample's
/// lang and text next to the labels, so the file is itself a dataset.
/// Throws ValidationError for an unknown id and IoError on write failure.
void write_predictions(std::span<const Prediction> predictions, std::span<const Sample> samples,
                       const std::filesystem::path& path);
std::string format_prediction(const Prediction& prediction, const Sample& sample);

/// Writes samples with whatever gold labels they carry.
void write_dataset(std::span<const Sample> samples, const std::filesystem::path& path);
std::string format_sample(const Sample& sample);

struct PlantedCorpusOptions {
    std::size_t n = 100;
    std::vector<std::string> langs{"en", "ar", "hi"};
    std::uint64_t seed = 0;
    double zero_fraction = 0.2;
};

/// Languages the planted generator has phrase banks for.
std::vector<std::string> planted_languages();

/// Synthetic samples whose gold labels are the planted fabricated phrases.
/// Languages are assigned round-robin; exactly round(zero_fraction * n)
/// samples carry no planted span. Every planted phrase occurs exactly once in
/// its answer and no other phrase from the bank occurs at all.
/// Throws ConfigError for n == 0, unknown languages or a fraction outside [0, 1].
std::vector<Sample> generate_planted_corpus(const PlantedCorpusOptions& options);

struct PlantedSpan {
    CharSpan span;
    std::string text;
};

/// Planted phrases found in a generated answer, in answer order.
std::vector<PlantedSpan> find_planted(const Sample& sample);

}  // namespace halluspan::ingest
