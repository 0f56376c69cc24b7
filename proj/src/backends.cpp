#include "halluspan/backends.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include "halluspan/error.hpp"
#include "halluspan/ingest.hpp"
#include "halluspan/prompting.hpp"

namespace halluspan::backends {

using json = nlohmann::json;

ModelId::ModelId(std::string name) : name_(std::move(name)) {
    if (name_.empty()) throw ConfigError("model name must not be empty");
}

std::string_view to_string(Role role) {
    switch (role) {
        case Role::extract: return "extract";
        case Role::adjudicate: return "adjudicate";
    }
    return "unknown";
}

void validate(const BackendConfig& config) {
    if (config.timeout.count() <= 0) {
        throw ConfigError(fmt::format("{}: timeout must be positive", config.model.name()));
    }
    if (config.max_retries < 0) {
        throw ConfigError(fmt::format("{}: max_retries must be >= 0", config.model.name()));
    }
    if (config.max_in_flight < 1) {
        throw ConfigError(fmt::format("{}: max_in_flight must be >= 1", config.model.name()));
    }
}

// ---------------------------------------------------------------------------
// HTTP

std::string chat_request_body(std::string_view model, std::string_view prompt, double temperature) {
    json body = {
        {"model", model},
        {"messages", json::array({{{"role", "user"}, {"content", prompt}}})},
        {"temperature", temperature},
    };
    return body.dump();
}

std::string chat_response_text(std::string_view body) {
    const auto parsed = json::parse(body, nullptr, false);
    if (parsed.is_discarded()) throw ParseError("chat response is not JSON", std::string(body));
    try {
        const auto& content = parsed.at("choices").at(0).at("message").at("content");
        if (content.is_string()) return content.get<std::string>();
        // Some providers return content as a list of typed parts.
        if (content.is_array()) {
            std::string text;
            for (const auto& part : content) {
                if (part.is_object() && part.contains("text")) text += part["text"].get<std::string>();
            }
            return text;
        }
    } catch (const json::exception&) {
    }
    throw ParseError("chat response lacks choices[0].message.content", std::string(body));
}

HttpBackend::HttpBackend(BackendConfig config)
    : config_(std::move(config)), in_flight_(std::clamp(config_.max_in_flight, 1, 1024)) {
    validate(config_);
    static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)", std::regex::icase);
    std::smatch match;
    if (!std::regex_match(config_.endpoint, match, kUrl)) {
        throw ConfigError(fmt::format("{}: endpoint '{}' is not an http(s) URL", config_.model.name(),
                                      config_.endpoint));
    }
    scheme_host_ = match[1].str();
    path_ = match[2].matched ? match[2].str() : "/";
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (scheme_host_.rfind("https", 0) == 0) {
        throw ConfigError("this build has no TLS support; use an http:// endpoint");
    }
#endif
    if (!config_.api_key_env.empty()) {
        const char* key = std::getenv(config_.api_key_env.c_str());
        if (key == nullptr || *key == '\0') {
            throw ConfigError(fmt::format("{}: environment variable {} holding the API key is not set",
                                          config_.model.name(), config_.api_key_env));
        }
        api_key_ = key;
    }
}

HttpBackend::~HttpBackend() = default;

std::string HttpBackend::post_once(const std::string& body, bool& transient) {
    httplib::Client client(scheme_host_);
    const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
    const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - seconds);
    client.set_connection_timeout(seconds.count(), micros.count());
    client.set_read_timeout(seconds.count(), micros.count());
    client.set_write_timeout(seconds.count(), micros.count());

    httplib::Headers headers;
    if (!api_key_.empty()) {
        switch (config_.auth) {
            case AuthStyle::bearer: headers.emplace("Authorization", "Bearer " + api_key_); break;
            case AuthStyle::api_key: headers.emplace("x-api-key", api_key_); break;
            case AuthStyle::goog_key: headers.emplace("x-goog-api-key", api_key_); break;
        }
    }

    auto result = client.Post(path_, headers, body, "application/json");
    if (!result) {
        transient = true;
        throw TransportError(fmt::format("{}: {}", config_.model.name(), httplib::to_string(result.error())));
    }
    const int status = result->status;
    if (status == 200) return result->body;
    transient = status == 429 || status >= 500;
    throw TransportError(fmt::format("{}: HTTP {}", config_.model.name(), status));
}

Completion HttpBackend::complete(const CompletionRequest& request) {
    const auto body = chat_request_body(config_.model.name(), request.prompt, config_.temperature);
    for (int attempt = 0;; ++attempt) {
        bool transient = false;
        try {
            std::string response;
            {
                in_flight_.acquire();
                struct Release {
                    std::counting_semaphore<1024>& sem;
                    ~Release() { sem.release(); }
                } release{in_flight_};
                response = post_once(body, transient);
            }
            return Completion{chat_response_text(response), false};
        } catch (const TransportError& e) {
            if (!transient || attempt >= config_.max_retries) throw;
            const auto delay = config_.backoff_base * (1LL << std::min(attempt, 16));
            spdlog::warn("{} (attempt {}), retrying in {} ms", e.what(), attempt + 1, delay.count());
            std::this_thread::sleep_for(delay);
        }
    }
}

// ---------------------------------------------------------------------------
// Mock

namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

std::string mock_extract(const Sample& sample, std::uint64_t /*seed*/) {
    std::vector<prompting::RawCandidate> candidates;
    for (const auto& planted : ingest::find_planted(sample)) {
        candidates.push_back({planted.text, 0.95});
    }
    // Same phrase twice in one answer collapses, as parse_extraction would.
    std::vector<prompting::RawCandidate> unique;
    for (auto& c : candidates) {
        if (std::none_of(unique.begin(), unique.end(), [&](const auto& u) { return u.text == c.text; })) {
            unique.push_back(std::move(c));
        }
    }
    return prompting::serialize_extraction(unique);
}

std::string mock_adjudicate(const Sample& sample, std::string_view span_text, const ModelId& judge,
                            std::uint64_t seed) {
    const auto planted = ingest::find_planted(sample);
    const bool hit = std::any_of(planted.begin(), planted.end(),
                                 [&](const ingest::PlantedSpan& p) { return p.text == span_text; });
    // One constant per (judge, seed): every planted span of a run scores alike.
    const auto step = static_cast<double>(mix(seed ^ fnv1a(judge.name())) % 16) / 100.0;
    const double p = hit ? 0.80 + step : 0.05 + step;
    return json{{"probability", p}}.dump();
}

MockBackend::MockBackend(ModelId model, std::uint64_t seed) : model_(std::move(model)), seed_(seed) {}

Completion MockBackend::complete(const CompletionRequest& request) {
    if (request.sample == nullptr) throw std::invalid_argument("mock backend needs the request's sample");
    if (request.role == Role::extract) return {mock_extract(*request.sample, seed_), false};
    return {mock_adjudicate(*request.sample, request.span_text, model_, seed_), false};
}

// ---------------------------------------------------------------------------
// Cache

DiskCache::DiskCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw IoError(fmt::format("cannot create cache directory {}: {}", dir_.string(), ec.message()));
}

std::string DiskCache::key(std::string_view model, std::string_view prompt, double temperature,
                           int attempt) {
    std::string material;
    material.reserve(model.size() + prompt.size() + 48);
    material.append(model).push_back('\0');
    material.append(prompt).push_back('\0');
    material += fmt::format("{:.17g}", temperature);
    if (attempt > 0) material += fmt::format("\nattempt={}", attempt);

    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(material.data(), material.size(), digest, &len, EVP_sha256(), nullptr);
    std::string hex;
    hex.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
    return hex;
}

std::filesystem::path DiskCache::path_for(const std::string& key) const { return dir_ / key; }

namespace {

std::size_t stripe_of(const std::string& key, std::size_t stripes) {
    return key.empty() ? 0 : static_cast<std::size_t>(std::hash<std::string>{}(key) % stripes);
}

}  // namespace

std::optional<std::string> DiskCache::get(const std::string& key) const {
    std::lock_guard lock(stripes_[stripe_of(key, stripes_.size())]);
    std::ifstream in(path_for(key), std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void DiskCache::put(const std::string& key, std::string_view value) {
    std::lock_guard lock(stripes_[stripe_of(key, stripes_.size())]);
    const auto target = path_for(key);
    auto tmp = target;
    tmp += fmt::format(".tmp{}", std::hash<std::thread::id>{}(std::this_thread::get_id()));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out.write(value.data(), static_cast<std::streamsize>(value.size()));
        if (!out) throw IoError(fmt::format("cannot write cache entry {}", tmp.string()));
    }
    std::error_code ec;
    std::filesystem::rename(tmp, target, ec);
    if (ec) throw IoError(fmt::format("cannot commit cache entry {}: {}", target.string(), ec.message()));
}

CachedBackend::CachedBackend(std::shared_ptr<Backend> inner, std::shared_ptr<DiskCache> cache)
    : inner_(std::move(inner)), cache_(std::move(cache)) {}

Completion CachedBackend::complete(const CompletionRequest& request) {
    const auto key = DiskCache::key(inner_->model().name(), request.prompt, inner_->temperature(),
                                    request.attempt);
    if (auto hit = cache_->get(key)) return Completion{std::move(*hit), true};
    auto fresh = inner_->complete(request);
    cache_->put(key, fresh.text);
    fresh.cache_hit = false;
    return fresh;
}

}  // namespace halluspan::backends
