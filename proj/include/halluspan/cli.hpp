#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "halluspan/backends.hpp"
#include "halluspan/ensemble.hpp"

namespace halluspan::cli {

enum ExitCode : int {
    kOk = 0,
    kConfigError = 1,
    kIoError = 2,
};

enum class OutputMode { per_run, consensus };

/// Contents of the JSON config file passed with --config.
///
///   {"models": [{"name", "endpoint", "api_key_env", "auth", "timeout_s",
///                "max_retries", "temperature", "max_in_flight"}],
///    "hard_threshold", "alignment_threshold", "abstention", "parse_retries",
///    "max_concurrency", "cache_dir", "extraction_template",
///    "adjudication_template"}
///
/// Every key is optional. Without models, the four default model names are
/// used, which only works with mock backends.
struct FileConfig {
    std::vector<backends::BackendConfig> models;
    ensemble::PipelineConfig pipeline;
    int max_concurrency = 4;
    std::optional<std::filesystem::path> cache_dir;
    std::optional<std::filesystem::path> extraction_template;
    std::optional<std::filesystem::path> adjudication_template;
};

/// Throws ConfigError on malformed content and IoError when unreadable.
FileConfig load_config(const std::filesystem::path& path);
FileConfig parse_config(const std::string& text);

struct RunOptions {
    std::filesystem::path input;
    std::filesystem::path output_dir;
    std::optional<std::filesystem::path> config_file;
    bool mock = false;
    std::uint64_t seed = 0;
    std::optional<double> threshold;
    std::optional<double> alignment_threshold;
    OutputMode mode = OutputMode::per_run;
    std::optional<std::string> extractor;  // per-run mode: only this rotation
    std::optional<std::filesystem::path> cache_dir;
    std::optional<int> max_concurrency;
};

/// File name used for a model's per-run predictions.
std::string run_file_name(const std::string& model);
inline constexpr const char* kConsensusFile = "consensus.jsonl";
inline constexpr const char* kRunLogFile = "run_log.jsonl";

/// Runs the ensemble over a dataset. Writes one prediction file per extractor,
/// consensus.jsonl in consensus mode, and run_log.jsonl.
int cmd_run(const RunOptions& options, std::ostream& out, std::ostream& err);

struct ScoreOptions {
    std::vector<std::filesystem::path> predictions;
    std::filesystem::path gold;
    std::optional<std::filesystem::path> report;  // machine-readable output
    bool group_by_lang = true;
};

/// One table per predictions file. Exit code 1 on id mismatch.
int cmd_score(const ScoreOptions& options, std::ostream& out, std::ostream& err);

struct ValidateOptions {
    std::filesystem::path input;
};

/// Lists every skipped record with its line number, then merged gold spans.
int cmd_validate(const ValidateOptions& options, std::ostream& out, std::ostream& err);

struct MockgenOptions {
    std::filesystem::path output;
    std::size_t n = 100;
    std::vector<std::string> langs{"en", "ar", "hi"};
    std::uint64_t seed = 0;
    double zero_fraction = 0.2;
};

int cmd_mockgen(const MockgenOptions& options, std::ostream& out, std::ostream& err);

/// Parses argv and dispatches to the cmd_* functions.
int main(int argc, char** argv);

}  // namespace halluspan::cli
