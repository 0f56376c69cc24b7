#pragma once

#include <array>
#include <chrono>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>

#include "halluspan/spans.hpp"

namespace halluspan::backends {

class ModelId {
public:
    /// Throws ConfigError for an empty name.
    explicit ModelId(std::string name);

    const std::string& name() const noexcept { return name_; }

    auto operator<=>(const ModelId&) const = default;

private:
    std::string name_;
};

enum class Role { extract, adjudicate };

std::string_view to_string(Role role);

/// One model call. Live backends only look at `prompt`; the mock reads the
/// structured fields instead of re-parsing its own prompt.
struct CompletionRequest {
    std::string prompt;
    Role role = Role::extract;
    const Sample* sample = nullptr;
    std::string span_text;  // adjudication only
    int attempt = 0;        // > 0 on parse retries, so a bad cached reply is not replayed
};

struct Completion {
    std::string text;
    bool cache_hit = false;
};

/// Implementations must tolerate concurrent complete() calls.
class Backend {
public:
    virtual ~Backend() = default;

    virtual const ModelId& model() const noexcept = 0;
    virtual double temperature() const noexcept { return 0.0; }
    virtual Completion complete(const CompletionRequest& request) = 0;
};

enum class AuthStyle {
    bearer,     // Authorization: Bearer <key>
    api_key,    // x-api-key: <key>
    goog_key,   // x-goog-api-key: <key>
};

struct BackendConfig {
    ModelId model{"unnamed"};
    std::string endpoint;     // full URL of the chat-completion route
    std::string api_key_env;  // empty: no auth header
    AuthStyle auth = AuthStyle::bearer;
    std::chrono::milliseconds timeout{60'000};
    int max_retries = 3;
    std::chrono::milliseconds backoff_base{500};
    double temperature = 0.0;
    int max_in_flight = 4;
};

/// Throws ConfigError on timeout <= 0, max_retries < 0 or max_in_flight < 1.
void validate(const BackendConfig& config);

/// Generic chat-completion client: one user message in, the first choice's
/// content out. Retries timeouts, 429 and 5xx with exponential backoff.
class HttpBackend final : public Backend {
public:
    /// Resolves the API key from the environment; throws ConfigError when the
    /// named variable is unset.
    explicit HttpBackend(BackendConfig config);
    ~HttpBackend() override;

    const ModelId& model() const noexcept override { return config_.model; }
    double temperature() const noexcept override { return config_.temperature; }
    Completion complete(const CompletionRequest& request) override;

private:
    std::string post_once(const std::string& body, bool& transient);

    BackendConfig config_;
    std::string api_key_;
    std::string scheme_host_;
    std::string path_;
    std::counting_semaphore<1024> in_flight_;
};

/// Request body sent by HttpBackend.
std::string chat_request_body(std::string_view model, std::string_view prompt, double temperature);

/// Pulls choices[0].message.content out of a chat-completion response.
/// Throws ParseError when the shape is unexpected.
std::string chat_response_text(std::string_view body);

/// Deterministic stand-in for a model, for planted corpora. Extraction returns
/// exactly the planted spans; adjudication scores planted spans high and
/// anything else low, with a per-judge constant derived from the seed.
class MockBackend final : public Backend {
public:
    MockBackend(ModelId model, std::uint64_t seed);

    const ModelId& model() const noexcept override { return model_; }
    Completion complete(const CompletionRequest& request) override;

private:
    ModelId model_;
    std::uint64_t seed_;
};

/// Extraction payload listing every planted span of `sample` in answer order,
/// each with probability 0.95.
std::string mock_extract(const Sample& sample, std::uint64_t seed);

/// Adjudication payload {"probability": p} for one span.
std::string mock_adjudicate(const Sample& sample, std::string_view span_text, const ModelId& judge,
                            std::uint64_t seed);

/// Content-addressed response cache: one file per key holding the verbatim
/// response. Writes go through a temp file and rename.
class DiskCache {
public:
    explicit DiskCache(std::filesystem::path dir);

    std::optional<std::string> get(const std::string& key) const;
    void put(const std::string& key, std::string_view value);

    const std::filesystem::path& dir() const noexcept { return dir_; }

    /// SHA-256 hex of (model, prompt, temperature[, attempt when > 0]).
    static std::string key(std::string_view model, std::string_view prompt, double temperature,
                           int attempt = 0);

private:
    std::filesystem::path path_for(const std::string& key) const;

    std::filesystem::path dir_;
    mutable std::array<std::mutex, 16> stripes_;
};

/// Serves repeated requests from a DiskCache and fills it on misses.
class CachedBackend final : public Backend {
public:
    CachedBackend(std::shared_ptr<Backend> inner, std::shared_ptr<DiskCache> cache);

    const ModelId& model() const noexcept override { return inner_->model(); }
    double temperature() const noexcept override { return inner_->temperature(); }
    Completion complete(const CompletionRequest& request) override;

private:
    std::shared_ptr<Backend> inner_;
    std::shared_ptr<DiskCache> cache_;
};

}  // namespace halluspan::backends
