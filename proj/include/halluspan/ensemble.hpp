#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "halluspan/backends.hpp"
#include "halluspan/fuzzy.hpp"
#include "halluspan/prompting.hpp"
#include "halluspan/spans.hpp"

namespace halluspan::ensemble {

using backends::ModelId;

inline constexpr double kDefaultHardThreshold = 0.7;

enum class AbstentionPolicy {
    drop_vote,  // mean over the judges that answered
    zero_vote,  // a failed judge counts as 0
};

/// gemini-2.0-flash-exp, qwen-2.5-max, gpt-4o, deepseek-v3.
std::vector<ModelId> default_models();

struct PipelineConfig {
    std::vector<ModelId> models = default_models();
    double hard_threshold = kDefaultHardThreshold;
    double alignment_threshold = fuzzy::kDefaultAlignmentThreshold;
    AbstentionPolicy abstention = AbstentionPolicy::drop_vote;
    int parse_retries = 1;  // extra attempts after an unparseable reply

    /// Throws ConfigError on fewer than two models, duplicates, thresholds
    /// outside (0, 1] or negative retries.
    void validate() const;
};

struct RotationEntry {
    ModelId extractor;
    std::vector<ModelId> adjudicators;

    bool operator==(const RotationEntry&) const = default;
};

/// Each model extracts exactly once; the others adjudicate, in list order.
std::vector<RotationEntry> rotation_schedule(std::span<const ModelId> models);

/// One judge's score for one span; nullopt when the judge abstained.
struct Vote {
    ModelId judge;
    std::optional<double> p;
};

/// Mean of the judges' probabilities. nullopt when every judge abstained.
std::optional<double> consensus_probability(std::span<const Vote> votes, AbstentionPolicy policy);

/// Arithmetic mean. Throws std::invalid_argument on empty input.
double consensus_probability(std::span<const double> scores);

struct CandidateSpan {
    std::string text;  // as returned by the extractor
    fuzzy::Alignment alignment;
    ModelId extractor;
    double extractor_probability;  // logged only, never enters consensus
    std::vector<Vote> votes;
    std::optional<double> probability;  // nullopt: dropped, all judges abstained
};

struct RunResult {
    ModelId extractor;
    std::vector<SoftLabel> soft;
    std::vector<HardLabel> hard;  // normalized
    std::vector<CandidateSpan> candidates;
    std::size_t unaligned = 0;  // candidates dropped by locate_span
    bool failed = false;
    std::string error;
};

struct ConsensusResult {
    std::vector<RunResult> runs;
    std::vector<SoftLabel> merged_soft;
    std::vector<HardLabel> merged_hard;
};

/// Merges runs over one sample.
///
/// Spans from different runs join a cluster (transitively) when their IoU is
/// at least 0.5 or their answer texts reach the alignment threshold. A run's
/// probability for a cluster is the max over its members; the cluster's
/// probability is the mean over the runs that contributed. The cluster's span
/// is its highest-probability member, leftmost on ties. A cluster is hard when
/// a strict majority of all runs flagged it (probability >= tau) and its merged
/// probability is also >= tau.
ConsensusResult aggregate_runs(std::vector<RunResult> runs, const Sample& sample,
                               const PipelineConfig& config);

/// One model call, for the run log.
struct CallRecord {
    std::string sample_id;
    backends::Role role;
    std::string model;
    std::string extractor;  // rotation the call belongs to
    double latency_ms = 0.0;
    bool cache_hit = false;
    int attempt = 0;
    std::string parse_status;  // "ok", "parse_error", "transport_error", ...
};

using BackendMap = std::map<ModelId, std::shared_ptr<backends::Backend>>;

/// Extraction, localization, adjudication and consensus for a fixed set of
/// backends. Stateless between calls; run_* may be called concurrently.
class Pipeline {
public:
    /// Throws ConfigError when the config is invalid or a model has no backend.
    Pipeline(PipelineConfig config, BackendMap backends,
             prompting::PromptTemplate extraction = prompting::default_extraction_template(),
             prompting::PromptTemplate adjudication = prompting::default_adjudication_template());

    const PipelineConfig& config() const noexcept { return config_; }

    /// One rotation. Extractor transport failures mark the run failed instead of throwing.
    RunResult run_single(const Sample& sample, const ModelId& extractor,
                         std::span<const ModelId> adjudicators,
                         std::vector<CallRecord>* log = nullptr) const;

    /// Every rotation of the schedule followed by aggregate_runs.
    ConsensusResult run_all(const Sample& sample, std::vector<CallRecord>* log = nullptr) const;

private:
    backends::Backend& backend(const ModelId& model) const;
    Vote adjudicate(const Sample& sample, const ModelId& extractor, const ModelId& judge,
                    const std::string& span_text, std::vector<CallRecord>& calls) const;

    PipelineConfig config_;
    BackendMap backends_;
    prompting::PromptTemplate extraction_;
    prompting::PromptTemplate adjudication_;
};

}  // namespace halluspan::ensemble
