#include "halluspan/ensemble.hpp"

#include <algorithm>
#include <chrono>
#include <future>
#include <numeric>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "halluspan/error.hpp"
#include "halluspan/utf8.hpp"

namespace halluspan::ensemble {

std::vector<ModelId> default_models() {
    return {ModelId("gemini-2.0-flash-exp"), ModelId("qwen-2.5-max"), ModelId("gpt-4o"),
            ModelId("deepseek-v3")};
}

namespace {

void check_unique(std::span<const ModelId> models) {
    std::set<ModelId> seen;
    for (const auto& m : models) {
        if (!seen.insert(m).second) throw ConfigError(fmt::format("model '{}' listed twice", m.name()));
    }
}

void check_threshold(double value, const char* name) {
    if (!(value > 0.0 && value <= 1.0)) throw ConfigError(fmt::format("{} must be in (0, 1], got {}", name, value));
}

}  // namespace

void PipelineConfig::validate() const {
    if (models.size() < 2) throw ConfigError("the ensemble needs at least two models");
    check_unique(models);
    check_threshold(hard_threshold, "hard threshold");
    check_threshold(alignment_threshold, "alignment threshold");
    if (parse_retries < 0) throw ConfigError("parse_retries must be >= 0");
}

std::vector<RotationEntry> rotation_schedule(std::span<const ModelId> models) {
    if (models.size() < 2) throw ConfigError("rotation needs at least two models");
    check_unique(models);
    std::vector<RotationEntry> schedule;
    schedule.reserve(models.size());
    for (std::size_t i = 0; i < models.size(); ++i) {
        RotationEntry entry{models[i], {}};
        for (std::size_t j = 0; j < models.size(); ++j) {
            if (j != i) entry.adjudicators.push_back(models[j]);
        }
        schedule.push_back(std::move(entry));
    }
    return schedule;
}

namespace {

// Running mean, so that equal inputs come back unchanged.
class Mean {
public:
    void add(double x) { mean_ += (x - mean_) / static_cast<double>(++n_); }
    double value() const { return mean_; }

private:
    double mean_ = 0.0;
    std::size_t n_ = 0;
};

}  // namespace

std::optional<double> consensus_probability(std::span<const Vote> votes, AbstentionPolicy policy) {
    Mean mean;
    bool answered = false;
    for (const auto& vote : votes) {
        if (vote.p) {
            mean.add(*vote.p);
            answered = true;
        } else if (policy == AbstentionPolicy::zero_vote) {
            mean.add(0.0);
        }
    }
    if (!answered) return std::nullopt;
    return mean.value();
}

double consensus_probability(std::span<const double> scores) {
    if (scores.empty()) throw std::invalid_argument("consensus_probability: no scores");
    Mean mean;
    for (double s : scores) mean.add(s);
    return mean.value();
}

// ---------------------------------------------------------------------------
// Aggregation

namespace {

double span_iou(const CharSpan& a, const CharSpan& b) {
    const auto lo = std::max(a.start(), b.start());
    const auto hi = std::min(a.end(), b.end());
    const auto inter = hi > lo ? hi - lo : 0;
    const auto uni = a.length() + b.length() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

class DisjointSets {
public:
    explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }

    std::size_t find(std::size_t x) {
        while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
        return x;
    }

    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent_[std::max(a, b)] = std::min(a, b);
    }

private:
    std::vector<std::size_t> parent_;
};

}  // namespace

ConsensusResult aggregate_runs(std::vector<RunResult> runs, const Sample& sample,
                               const PipelineConfig& config) {
    struct Item {
        std::size_t run;
        SoftLabel label;
        std::u32string text;
    };

    const auto answer = utf8::decode(sample.answer);
    std::vector<Item> items;
    for (std::size_t r = 0; r < runs.size(); ++r) {
        for (const auto& label : runs[r].soft) {
            const auto& s = label.span;
            items.push_back({r, label, answer.substr(s.start(), s.length())});
        }
    }

    DisjointSets sets(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
        for (std::size_t j = i + 1; j < items.size(); ++j) {
            if (items[i].run == items[j].run) continue;
            if (span_iou(items[i].label.span, items[j].label.span) >= 0.5 ||
                fuzzy::similarity(items[i].text, items[j].text) >= config.alignment_threshold) {
                sets.unite(i, j);
            }
        }
    }

    std::map<std::size_t, std::vector<std::size_t>> clusters;
    for (std::size_t i = 0; i < items.size(); ++i) clusters[sets.find(i)].push_back(i);

    ConsensusResult result;
    std::vector<HardLabel> hard;
    const double tau = config.hard_threshold;
    for (const auto& [root, members] : clusters) {
        std::map<std::size_t, double> per_run;
        const Item* best = nullptr;
        for (auto m : members) {
            const auto& item = items[m];
            auto [it, inserted] = per_run.emplace(item.run, item.label.probability);
            if (!inserted) it->second = std::max(it->second, item.label.probability);
            if (best == nullptr || item.label.probability > best->label.probability ||
                (item.label.probability == best->label.probability && item.label.span < best->label.span)) {
                best = &item;
            }
        }
        Mean mean;
        std::size_t votes = 0;
        for (const auto& [run, p] : per_run) {
            mean.add(p);
            if (reaches(p, tau)) ++votes;
        }
        const double merged = mean.value();
        result.merged_soft.emplace_back(best->label.span, merged);
        if (2 * votes > runs.size() && reaches(merged, tau)) hard.push_back(HardLabel{best->label.span});
    }

    std::sort(result.merged_soft.begin(), result.merged_soft.end(),
              [](const SoftLabel& a, const SoftLabel& b) { return a.span < b.span; });
    result.merged_hard = normalize_spans(hard);
    result.runs = std::move(runs);
    return result;
}

// ---------------------------------------------------------------------------
// Pipeline

Pipeline::Pipeline(PipelineConfig config, BackendMap backends, prompting::PromptTemplate extraction,
                   prompting::PromptTemplate adjudication)
    : config_(std::move(config)),
      backends_(std::move(backends)),
      extraction_(std::move(extraction)),
      adjudication_(std::move(adjudication)) {
    config_.validate();
    for (const auto& model : config_.models) {
        const auto it = backends_.find(model);
        if (it == backends_.end() || !it->second) {
            throw ConfigError(fmt::format("no backend configured for model '{}'", model.name()));
        }
    }
}

backends::Backend& Pipeline::backend(const ModelId& model) const {
    const auto it = backends_.find(model);
    if (it == backends_.end()) throw ConfigError(fmt::format("no backend configured for model '{}'", model.name()));
    return *it->second;
}

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
    return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

}  // namespace

Vote Pipeline::adjudicate(const Sample& sample, const ModelId& extractor, const ModelId& judge,
                          const std::string& span_text, std::vector<CallRecord>& calls) const {
    backends::CompletionRequest request{render_adjudication(adjudication_, sample, span_text),
                                        backends::Role::adjudicate, &sample, span_text, 0};
    for (int attempt = 0; attempt <= config_.parse_retries; ++attempt) {
        request.attempt = attempt;
        CallRecord record{sample.id, backends::Role::adjudicate, judge.name(), extractor.name(), 0.0, false, attempt, "ok"};
        const auto started = Clock::now();
        try {
            auto reply = backend(judge).complete(request);
            record.latency_ms = elapsed_ms(started);
            record.cache_hit = reply.cache_hit;
            const double p = prompting::parse_adjudication(reply.text);
            calls.push_back(std::move(record));
            return Vote{judge, p};
        } catch (const ParseError&) {
            record.latency_ms = elapsed_ms(started);
            record.parse_status = "parse_error";
            calls.push_back(std::move(record));
        } catch (const TransportError& e) {
            record.latency_ms = elapsed_ms(started);
            record.parse_status = "transport_error";
            calls.push_back(std::move(record));
            spdlog::warn("sample {}: judge {} unavailable: {}", sample.id, judge.name(), e.what());
            break;
        }
    }
    return Vote{judge, std::nullopt};
}

RunResult Pipeline::run_single(const Sample& sample, const ModelId& extractor,
                               std::span<const ModelId> adjudicators, std::vector<CallRecord>* log) const {
    if (sample.answer.empty()) throw ValidationError(fmt::format("sample '{}' has an empty answer", sample.id));

    RunResult run{extractor, {}, {}, {}, 0, false, {}};
    std::vector<CallRecord> calls;
    const auto flush_log = [&] {
        if (log) log->insert(log->end(), calls.begin(), calls.end());
    };

    // Extraction, retried on unparseable replies; still unparseable means no candidates.
    std::vector<prompting::RawCandidate> raw;
    backends::CompletionRequest request{render_prompt(extraction_, sample), backends::Role::extract, &sample, {}, 0};
    for (int attempt = 0; attempt <= config_.parse_retries; ++attempt) {
        request.attempt = attempt;
        CallRecord record{sample.id, backends::Role::extract, extractor.name(), extractor.name(), 0.0, false, attempt, "ok"};
        const auto started = Clock::now();
        try {
            auto reply = backend(extractor).complete(request);
            record.latency_ms = elapsed_ms(started);
            record.cache_hit = reply.cache_hit;
            raw = prompting::parse_extraction(reply.text);
            calls.push_back(std::move(record));
            break;
        } catch (const ParseError&) {
            record.latency_ms = elapsed_ms(started);
            record.parse_status = "parse_error";
            calls.push_back(std::move(record));
        } catch (const TransportError& e) {
            record.latency_ms = elapsed_ms(started);
            record.parse_status = "transport_error";
            calls.push_back(std::move(record));
            run.failed = true;
            run.error = e.what();
            flush_log();
            return run;
        }
    }

    const auto answer = utf8::decode(sample.answer);
    for (const auto& candidate : raw) {
        auto alignment = fuzzy::locate_span(utf8::decode(candidate.text), answer, config_.alignment_threshold);
        if (!alignment) {
            ++run.unaligned;
            continue;
        }
        const auto& span = alignment->span;
        const auto located = utf8::encode(std::u32string_view(answer).substr(span.start(), span.length()));

        // Judges score the same span concurrently; votes keep adjudicator order.
        std::vector<std::future<std::pair<Vote, std::vector<CallRecord>>>> pending;
        for (const auto& judge : adjudicators) {
            pending.push_back(std::async(std::launch::async, [&, judge] {
                std::vector<CallRecord> judge_calls;
                auto vote = adjudicate(sample, extractor, judge, located, judge_calls);
                return std::make_pair(std::move(vote), std::move(judge_calls));
            }));
        }
        CandidateSpan scored{candidate.text, *alignment, extractor, candidate.probability, {}, std::nullopt};
        for (auto& f : pending) {
            auto [vote, judge_calls] = f.get();
            scored.votes.push_back(std::move(vote));
            calls.insert(calls.end(), judge_calls.begin(), judge_calls.end());
        }
        scored.probability = consensus_probability(scored.votes, config_.abstention);
        if (!scored.probability) {
            spdlog::warn("sample {}: span '{}' dropped, every adjudicator abstained", sample.id, candidate.text);
        }
        run.candidates.push_back(std::move(scored));
    }

    // Two candidates landing on the same offsets keep the higher probability.
    for (const auto& c : run.candidates) {
        if (!c.probability) continue;
        auto same = std::find_if(run.soft.begin(), run.soft.end(),
                                 [&](const SoftLabel& l) { return l.span == c.alignment.span; });
        if (same == run.soft.end()) {
            run.soft.emplace_back(c.alignment.span, *c.probability);
        } else {
            same->probability = std::max(same->probability, *c.probability);
        }
    }
    std::sort(run.soft.begin(), run.soft.end(),
              [](const SoftLabel& a, const SoftLabel& b) { return a.span < b.span; });
    run.hard = harden(run.soft, config_.hard_threshold);

    flush_log();
    return run;
}

ConsensusResult Pipeline::run_all(const Sample& sample, std::vector<CallRecord>* log) const {
    std::vector<RunResult> runs;
    for (const auto& entry : rotation_schedule(config_.models)) {
        runs.push_back(run_single(sample, entry.extractor, entry.adjudicators, log));
    }
    return aggregate_runs(std::move(runs), sample, config_);
}

}  // namespace halluspan::ensemble
