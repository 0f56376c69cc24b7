#include "halluspan/cli.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <nlohmann/json.hpp>

#include "halluspan/error.hpp"
#include "halluspan/ingest.hpp"
#include "halluspan/metrics.hpp"

namespace halluspan::cli {

using json = nlohmann::json;
using backends::BackendConfig;
using backends::ModelId;

// ---------------------------------------------------------------------------
// Config file

namespace {

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
    const auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return fallback;
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw ConfigError(fmt::format("config key \"{}\" has the wrong type", key));
    }
}

backends::AuthStyle parse_auth(const std::string& name) {
    if (name == "bearer") return backends::AuthStyle::bearer;
    if (name == "x-api-key") return backends::AuthStyle::api_key;
    if (name == "x-goog-api-key") return backends::AuthStyle::goog_key;
    throw ConfigError(fmt::format("unknown auth style '{}'", name));
}

ensemble::AbstentionPolicy parse_abstention(const std::string& name) {
    if (name == "drop_vote") return ensemble::AbstentionPolicy::drop_vote;
    if (name == "zero_vote") return ensemble::AbstentionPolicy::zero_vote;
    throw ConfigError(fmt::format("unknown abstention policy '{}'", name));
}

}  // namespace

FileConfig parse_config(const std::string& text) {
    const auto doc = json::parse(text, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) throw ConfigError("config file is not a JSON object");

    FileConfig config;
    if (const auto it = doc.find("models"); it != doc.end()) {
        if (!it->is_array()) throw ConfigError("\"models\" must be an array");
        config.pipeline.models.clear();
        for (const auto& m : *it) {
            if (!m.is_object()) throw ConfigError("each model entry must be an object");
            BackendConfig b;
            b.model = ModelId(get_or<std::string>(m, "name", ""));
            b.endpoint = get_or<std::string>(m, "endpoint", "");
            b.api_key_env = get_or<std::string>(m, "api_key_env", "");
            b.auth = parse_auth(get_or<std::string>(m, "auth", "bearer"));
            b.timeout = std::chrono::milliseconds(
                static_cast<long long>(get_or<double>(m, "timeout_s", 60.0) * 1000.0));
            b.max_retries = get_or<int>(m, "max_retries", 3);
            b.backoff_base = std::chrono::milliseconds(get_or<long long>(m, "backoff_ms", 500));
            b.temperature = get_or<double>(m, "temperature", 0.0);
            b.max_in_flight = get_or<int>(m, "max_in_flight", 4);
            backends::validate(b);
            config.pipeline.models.push_back(b.model);
            config.models.push_back(std::move(b));
        }
    }
    config.pipeline.hard_threshold = get_or<double>(doc, "hard_threshold", config.pipeline.hard_threshold);
    config.pipeline.alignment_threshold =
        get_or<double>(doc, "alignment_threshold", config.pipeline.alignment_threshold);
    config.pipeline.abstention = parse_abstention(get_or<std::string>(doc, "abstention", "drop_vote"));
    config.pipeline.parse_retries = get_or<int>(doc, "parse_retries", config.pipeline.parse_retries);
    config.max_concurrency = get_or<int>(doc, "max_concurrency", config.max_concurrency);
    if (doc.contains("cache_dir")) config.cache_dir = get_or<std::string>(doc, "cache_dir", "");
    if (doc.contains("extraction_template")) {
        config.extraction_template = get_or<std::string>(doc, "extraction_template", "");
    }
    if (doc.contains("adjudication_template")) {
        config.adjudication_template = get_or<std::string>(doc, "adjudication_template", "");
    }
    config.pipeline.validate();
    return config;
}

FileConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot read config {}", path.string()));
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string run_file_name(const std::string& model) {
    std::string name = model;
    for (auto& c : name) {
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '_')) c = '_';
    }
    return name + ".jsonl";
}

// ---------------------------------------------------------------------------
// run

namespace {

ensemble::BackendMap make_backends(const FileConfig& config, const RunOptions& options) {
    std::shared_ptr<backends::DiskCache> cache;
    const auto cache_dir = options.cache_dir ? options.cache_dir : config.cache_dir;
    if (cache_dir) cache = std::make_shared<backends::DiskCache>(*cache_dir);

    ensemble::BackendMap map;
    for (const auto& model : config.pipeline.models) {
        std::shared_ptr<backends::Backend> backend;
        if (options.mock) {
            backend = std::make_shared<backends::MockBackend>(model, options.seed);
        } else {
            const auto it = std::find_if(config.models.begin(), config.models.end(),
                                         [&](const BackendConfig& b) { return b.model == model; });
            if (it == config.models.end() || it->endpoint.empty()) {
                throw ConfigError(fmt::format("model '{}' has no endpoint; pass --config or --mock", model.name()));
            }
            backend = std::make_shared<backends::HttpBackend>(*it);
        }
        if (cache) backend = std::make_shared<backends::CachedBackend>(std::move(backend), cache);
        map.emplace(model, std::move(backend));
    }
    return map;
}

json call_json(const ensemble::CallRecord& call) {
    return {
        {"sample_id", call.sample_id},
        {"role", backends::to_string(call.role)},
        {"model", call.model},
        {"extractor", call.extractor},
        {"attempt", call.attempt},
        {"latency_ms", call.latency_ms},
        {"cache_hit", call.cache_hit},
        {"parse_status", call.parse_status},
    };
}

struct SampleOutcome {
    std::vector<ensemble::RunResult> runs;
    std::optional<ensemble::ConsensusResult> consensus;
    std::vector<ensemble::CallRecord> calls;
    std::string error;
};

}  // namespace

int cmd_run(const RunOptions& options, std::ostream& out, std::ostream& err) {
    FileConfig config;
    try {
        if (options.config_file) config = load_config(*options.config_file);
        if (options.threshold) config.pipeline.hard_threshold = *options.threshold;
        if (options.alignment_threshold) config.pipeline.alignment_threshold = *options.alignment_threshold;
        if (options.max_concurrency) config.max_concurrency = *options.max_concurrency;
        if (config.max_concurrency < 1) throw ConfigError("max concurrency must be >= 1");
        config.pipeline.validate();
    } catch (const ConfigError& e) {
        fmt::print(err, "config error: {}\n", e.what());
        return kConfigError;
    } catch (const IoError& e) {
        fmt::print(err, "I/O error: {}\n", e.what());
        return kIoError;
    }

    auto schedule = ensemble::rotation_schedule(config.pipeline.models);
    if (options.extractor) {
        if (options.mode != OutputMode::per_run) {
            fmt::print(err, "config error: --extractor is only valid with --mode per-run\n");
            return kConfigError;
        }
        const auto it = std::find_if(schedule.begin(), schedule.end(),
                                     [&](const auto& e) { return e.extractor.name() == *options.extractor; });
        if (it == schedule.end()) {
            fmt::print(err, "config error: extractor '{}' is not one of the configured models\n", *options.extractor);
            return kConfigError;
        }
        schedule = {*it};
    }

    ingest::Dataset data;
    std::optional<ensemble::Pipeline> pipeline;
    try {
        data = ingest::read_dataset(options.input);
        auto extraction = config.extraction_template ? prompting::load_template(*config.extraction_template)
                                                     : prompting::default_extraction_template();
        auto adjudication = config.adjudication_template
                                ? prompting::load_template(*config.adjudication_template)
                                : prompting::default_adjudication_template();
        pipeline.emplace(config.pipeline, make_backends(config, options), std::move(extraction),
                         std::move(adjudication));
        std::filesystem::create_directories(options.output_dir);
    } catch (const ConfigError& e) {
        fmt::print(err, "config error: {}\n", e.what());
        return kConfigError;
    } catch (const IoError& e) {
        fmt::print(err, "I/O error: {}\n", e.what());
        return kIoError;
    } catch (const std::filesystem::filesystem_error& e) {
        fmt::print(err, "I/O error: {}\n", e.what());
        return kIoError;
    }
    for (const auto& issue : data.errors) fmt::print(err, "{}:{}: skipped: {}\n", options.input.string(), issue.line, issue.message);
    for (const auto& w : data.warnings) fmt::print(err, "warning: {}\n", w);

    // Samples fan out over a fixed pool; results land in input order.
    std::vector<SampleOutcome> outcomes(data.samples.size());
    std::atomic<std::size_t> next{0};
    const bool consensus = options.mode == OutputMode::consensus;
    const auto worker = [&] {
        for (auto i = next.fetch_add(1); i < data.samples.size(); i = next.fetch_add(1)) {
            const auto& sample = data.samples[i];
            auto& outcome = outcomes[i];
            try {
                for (const auto& entry : schedule) {
                    outcome.runs.push_back(
                        pipeline->run_single(sample, entry.extractor, entry.adjudicators, &outcome.calls));
                }
                if (consensus) outcome.consensus = ensemble::aggregate_runs(outcome.runs, sample, pipeline->config());
            } catch (const std::exception& e) {
                outcome.error = e.what();
            }
        }
    };
    const auto n_workers = std::min<std::size_t>(static_cast<std::size_t>(config.max_concurrency),
                                                 std::max<std::size_t>(data.samples.size(), 1));
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    std::size_t failed_samples = 0, failed_runs = 0;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        if (!outcomes[i].error.empty()) {
            ++failed_samples;
            fmt::print(err, "sample {}: {}\n", data.samples[i].id, outcomes[i].error);
        }
        for (const auto& run : outcomes[i].runs) {
            if (run.failed) {
                ++failed_runs;
                fmt::print(err, "sample {}: extractor {} failed: {}\n", data.samples[i].id, run.extractor.name(), run.error);
            }
        }
    }

    try {
        for (std::size_t r = 0; r < schedule.size(); ++r) {
            std::vector<ingest::Prediction> predictions;
            for (std::size_t i = 0; i < data.samples.size(); ++i) {
                ingest::Prediction p{data.samples[i].id, {}, {}};
                if (r < outcomes[i].runs.size()) {
                    p.soft = outcomes[i].runs[r].soft;
                    p.hard = outcomes[i].runs[r].hard;
                }
                predictions.push_back(std::move(p));
            }
            const auto path = options.output_dir / run_file_name(schedule[r].extractor.name());
            ingest::write_predictions(predictions, data.samples, path);
            fmt::print(out, "wrote {}\n", path.string());
        }
        if (consensus) {
            std::vector<ingest::Prediction> predictions;
            for (std::size_t i = 0; i < data.samples.size(); ++i) {
                ingest::Prediction p{data.samples[i].id, {}, {}};
                if (outcomes[i].consensus) {
                    p.soft = outcomes[i].consensus->merged_soft;
                    p.hard = outcomes[i].consensus->merged_hard;
                }
                predictions.push_back(std::move(p));
            }
            const auto path = options.output_dir / kConsensusFile;
            ingest::write_predictions(predictions, data.samples, path);
            fmt::print(out, "wrote {}\n", path.string());
        }

        const auto log_path = options.output_dir / kRunLogFile;
        std::ofstream log(log_path, std::ios::binary | std::ios::trunc);
        for (const auto& outcome : outcomes) {
            for (const auto& call : outcome.calls) log << call_json(call).dump() << '\n';
        }
        if (!log) throw IoError(fmt::format("write failed for {}", log_path.string()));
    } catch (const IoError& e) {
        fmt::print(err, "I/O error: {}\n", e.what());
        return kIoError;
    }

    fmt::print(out, "{} samples, {} rotations, {} failed samples, {} failed runs\n", data.samples.size(),
               schedule.size(), failed_samples, failed_runs);
    return kOk;
}

// ---------------------------------------------------------------------------
// score

int cmd_score(const ScoreOptions& options, std::ostream& out, std::ostream& err) {
    ingest::Dataset gold;
    try {
        gold = ingest::read_dataset(options.gold);
    } catch (const IoError& e) {
        fmt::print(err, "I/O error: {}\n", e.what());
        return kIoError;
    }
    for (const auto& issue : gold.errors) fmt::print(err, "{}:{}: skipped: {}\n", options.gold.string(), issue.line, issue.message);

    json reports = json::object();
    for (const auto& path : options.predictions) {
        ingest::PredictionFile file;
        try {
            file = ingest::read_predictions(path);
        } catch (const IoError& e) {
            fmt::print(err, "I/O error: {}\n", e.what());
            return kIoError;
        }
        for (const auto& issue : file.errors) fmt::print(err, "{}:{}: skipped: {}\n", path.string(), issue.line, issue.message);

        metrics::DatasetScore score;
        try {
            score = metrics::score_dataset(file.predictions, gold.samples, options.group_by_lang);
        } catch (const ValidationError& e) {
            fmt::print(err, "validation error in {}: {}\n", path.string(), e.what());
            return kConfigError;
        }
        const auto stem = path.stem().string();
        const auto title = stem == std::filesystem::path(kConsensusFile).stem().string()
                               ? std::string("Consensus labels")
                               : fmt::format("Performance when {} acts as the span extractor", stem);
        fmt::print(out, "{}\n", metrics::format_table(score, title));
        reports[stem] = json::parse(metrics::report_json(score));
    }

    if (options.report) {
        // A single predictions file reports {lang: ...}; several are keyed by file stem first.
        const auto& doc = options.predictions.size() == 1 ? reports.begin().value() : reports;
        std::ofstream report(*options.report, std::ios::binary | std::ios::trunc);
        report << doc.dump(2) << '\n';
        if (!report) {
            fmt::print(err, "I/O error: cannot write {}\n", options.report->string());
            return kIoError;
        }
    }
    return kOk;
}

// ---------------------------------------------------------------------------
// validate

int cmd_validate(const ValidateOptions& options, std::ostream& out, std::ostream& err) {
    ingest::Dataset data;
    try {
        data = ingest::read_dataset(options.input);
    } catch (const IoError& e) {
        fmt::print(err, "I/O error: {}\n", e.what());
        return kIoError;
    }
    for (const auto& issue : data.errors) fmt::print(out, "line {}: violation: {}\n", issue.line, issue.message);
    for (const auto& note : data.notes) fmt::print(out, "line {}: merged: {}\n", note.line, note.message);
    for (const auto& w : data.warnings) fmt::print(out, "warning: {}\n", w);
    fmt::print(out, "{} records, {} violations, {} merged\n", data.samples.size() + data.errors.size(),
               data.errors.size(), data.notes.size());
    return kOk;
}

// ---------------------------------------------------------------------------
// mockgen

int cmd_mockgen(const MockgenOptions& options, std::ostream& out, std::ostream& err) {
    std::vector<Sample> corpus;
    try {
        corpus = ingest::generate_planted_corpus({options.n, options.langs, options.seed, options.zero_fraction});
    } catch (const ConfigError& e) {
        fmt::print(err, "config error: {}\n", e.what());
        return kConfigError;
    }
    try {
        if (options.output.has_parent_path()) std::filesystem::create_directories(options.output.parent_path());
        ingest::write_dataset(corpus, options.output);
    } catch (const std::exception& e) {
        fmt::print(err, "I/O error: {}\n", e.what());
        return kIoError;
    }
    const auto empty = std::count_if(corpus.begin(), corpus.end(),
                                     [](const Sample& s) { return s.gold_hard->empty(); });
    fmt::print(out, "wrote {} samples ({} without planted spans) to {}\n", corpus.size(), empty,
               options.output.string());
    return kOk;
}

// ---------------------------------------------------------------------------
// argv

int main(int argc, char** argv) {
    CLI::App app{"Ensemble hallucination-span detection: run, score, validate, mockgen"};
    app.require_subcommand(1);

    RunOptions run;
    std::string mode = "per-run";
    auto* run_cmd = app.add_subcommand("run", "Run the rotating extractor/adjudicator ensemble over a dataset");
    run_cmd->add_option("-i,--input", run.input, "Input dataset (JSON lines)")->required();
    run_cmd->add_option("-o,--output", run.output_dir, "Output directory")->required();
    run_cmd->add_option("-c,--config", run.config_file, "JSON config file (models, endpoints, thresholds)");
    run_cmd->add_flag("--mock", run.mock, "Use deterministic mock backends");
    run_cmd->add_option("--seed", run.seed, "Seed for mock backends");
    run_cmd->add_option("--threshold", run.threshold, "Hard-label threshold tau");
    run_cmd->add_option("--alignment-threshold", run.alignment_threshold, "Fuzzy alignment threshold");
    run_cmd->add_option("--mode", mode, "per-run or consensus")->check(CLI::IsMember({"per-run", "consensus"}));
    run_cmd->add_option("--extractor", run.extractor, "Only the rotation where this model extracts (per-run mode)");
    run_cmd->add_option("--cache-dir", run.cache_dir, "Response cache directory");
    run_cmd->add_option("--max-concurrency", run.max_concurrency, "Samples processed in parallel");

    ScoreOptions score;
    auto* score_cmd = app.add_subcommand("score", "Score predictions against gold labels");
    score_cmd->add_option("-p,--predictions", score.predictions, "Prediction files")->required();
    score_cmd->add_option("-g,--gold", score.gold, "Gold dataset")->required();
    score_cmd->add_option("-r,--report", score.report, "Machine-readable JSON report");
    bool overall = false;
    score_cmd->add_flag("--overall", overall, "Report one row over all languages");

    ValidateOptions validate;
    auto* validate_cmd = app.add_subcommand("validate", "Check dataset records against the label invariants");
    validate_cmd->add_option("-i,--input", validate.input, "Dataset (JSON lines)")->required();

    MockgenOptions mockgen;
    auto* mockgen_cmd = app.add_subcommand("mockgen", "Generate a planted corpus with known hallucinated spans");
    mockgen_cmd->add_option("-o,--output", mockgen.output, "Output dataset")->required();
    mockgen_cmd->add_option("-n", mockgen.n, "Number of samples");
    mockgen_cmd->add_option("--langs", mockgen.langs, "Languages")->delimiter(',');
    mockgen_cmd->add_option("--seed", mockgen.seed, "Generator seed");
    mockgen_cmd->add_option("--zero-fraction", mockgen.zero_fraction, "Fraction of samples without planted spans");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    if (run_cmd->parsed()) {
        run.mode = mode == "consensus" ? OutputMode::consensus : OutputMode::per_run;
        return cmd_run(run, std::cout, std::cerr);
    }
    if (score_cmd->parsed()) {
        score.group_by_lang = !overall;
        return cmd_score(score, std::cout, std::cerr);
    }
    if (validate_cmd->parsed()) return cmd_validate(validate, std::cout, std::cerr);
    return cmd_mockgen(mockgen, std::cout, std::cerr);
}

}  // namespace halluspan::cli
