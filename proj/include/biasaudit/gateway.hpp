#pragma once

#include "biasaudit/error.hpp"
#include "biasaudit/parallel.hpp"

#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace biasaudit {

// ---------------------------------------------------------------------------
// Requests and results

struct ChatMessage {
    std::string role;  // system, user or assistant
    std::string content;
};

struct ChatRequest {
    std::string model_id;
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    int max_output_tokens = 1024;

    /// Single-user-turn request.
    static ChatRequest user(std::string model_id, std::string content, double temperature = 0.0,
                            int max_output_tokens = 1024);

    /// Throws DataError unless messages are non-empty, roles are valid, the
    /// last role is user, temperature >= 0 and max_output_tokens > 0.
    void validate() const;

    /// Canonical wire payload (sorted keys) used for cache keys and the
    /// chat-completions request body.
    std::string canonical_payload() const;
};

struct Usage {
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
};

struct Completion {
    std::string text;
    std::string finish_reason;
    Usage usage;
    bool from_cache = false;
};

struct EmbeddingVector {
    std::vector<double> values;
    std::string provider_id;

    std::size_t dimension() const noexcept { return values.size(); }
};

/// Cosine similarity; throws DataError on a zero-norm vector or mismatched
/// dimensions.
double cosine_similarity(std::span<const double> a, std::span<const double> b);
inline double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
    return cosine_similarity(a.values, b.values);
}

/// Deterministic unit-norm vector derived from sha256(text) and seed.
EmbeddingVector mock_embed(std::string_view text, std::size_t dimension, std::uint64_t seed);

struct CacheKey {
    std::string digest;  // hex sha256 of provider, model and canonical payload

    static CacheKey of(std::string_view provider_id, std::string_view model_id, std::string_view canonical_payload);
    friend bool operator==(const CacheKey&, const CacheKey&) = default;
};

// ---------------------------------------------------------------------------
// Errors

enum class ProviderErrorKind { Auth, RateLimit, Transient, Malformed, Rejected, Config };

class ProviderError : public Error {
public:
    ProviderError(ProviderErrorKind kind, const std::string& what)
        : Error(ErrorCategory::Provider, "llm_gateway", what), kind_(kind) {}

    ProviderErrorKind kind() const noexcept { return kind_; }
    bool retryable() const noexcept {
        return kind_ == ProviderErrorKind::RateLimit || kind_ == ProviderErrorKind::Transient;
    }

private:
    ProviderErrorKind kind_;
};

// ---------------------------------------------------------------------------
// Transport

struct MultipartField {
    std::string name;
    std::string content;
    std::string filename;
    std::string content_type;
};

struct HttpRequest {
    std::string method = "POST";
    std::string path;
    std::vector<std::pair<std::string, std::string>> headers;
    std::string body;
    std::string content_type = "application/json";
    std::vector<MultipartField> multipart;  // used instead of body when non-empty
};

struct HttpResponse {
    int status = 0;
    std::string body;
};

/// Sends one HTTP exchange. Connection-level failures throw ProviderError
/// (Transient); HTTP status codes are returned for the caller to classify.
class Transport {
public:
    virtual ~Transport() = default;
    virtual HttpResponse send(const HttpRequest& request) = 0;
};

class HttpTransport final : public Transport {
public:
    /// base_url like "https://api.example.com" (scheme + host[:port]).
    explicit HttpTransport(std::string base_url, std::chrono::seconds timeout = std::chrono::seconds(120));
    HttpResponse send(const HttpRequest& request) override;

private:
    std::string base_url_;
    std::chrono::seconds timeout_;
};

/// Maps an HTTP status to the error kind used by the retry policy.
ProviderErrorKind classify_status(int status);

/// Throws ProviderError (kind from classify_status) for a non-2xx response.
void raise_for_status(const HttpResponse& resp, const std::string& what);

// ---------------------------------------------------------------------------
// Providers

class ChatProvider {
public:
    virtual ~ChatProvider() = default;
    virtual std::string id() const = 0;
    virtual Completion complete(const ChatRequest& request) = 0;
};

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    /// Identity recorded in reports; distinct embedding models need distinct ids.
    virtual std::string id() const = 0;
    virtual std::string model() const = 0;
    virtual std::size_t max_batch() const { return 256; }
    virtual std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) = 0;
};

struct OpenAICompatibleConfig {
    std::string provider_id = "openai-compatible";
    std::string api_prefix = "/v1";        // joined with /chat/completions, /embeddings, ...
    std::string api_key;                   // sent as "Authorization: Bearer <key>"
    std::string auth_header = "Authorization";
    std::string embedding_model = "text-embedding-ada-002";
    std::size_t embedding_batch = 256;
};

/// Chat-completions / embeddings client for the common open HTTP schema.
class OpenAICompatibleProvider final : public ChatProvider, public EmbeddingProvider {
public:
    OpenAICompatibleProvider(std::shared_ptr<Transport> transport, OpenAICompatibleConfig config);

    std::string id() const override { return config_.provider_id; }
    std::string model() const override { return config_.embedding_model; }
    std::size_t max_batch() const override { return config_.embedding_batch; }
    Completion complete(const ChatRequest& request) override;
    std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override;

    Transport& transport() { return *transport_; }
    const OpenAICompatibleConfig& config() const { return config_; }
    std::vector<std::pair<std::string, std::string>> auth_headers() const;

private:
    std::shared_ptr<Transport> transport_;
    OpenAICompatibleConfig config_;
};

struct MockConfig {
    std::uint64_t seed = 1;
    double refusal_rate = 0.0;      // fraction of label prompts answered with a refusal
    std::size_t dimension = 16;     // embedding dimension
    std::size_t continuation_words = 80;
    std::string provider_id = "mock";
};

/// Offline provider. Every response is a pure function of (request, seed):
/// label prompts get an analysis line plus a label (or a refusal), the
/// continuation prompt gets seeded prose, indicator prompts get quoted
/// statements, topic prompts get a title. A custom responder overrides all
/// of that.
class MockProvider final : public ChatProvider, public EmbeddingProvider {
public:
    using Responder = std::function<std::string(const ChatRequest&)>;

    explicit MockProvider(MockConfig config = {});

    std::string id() const override { return config_.provider_id; }
    std::string model() const override { return "mock-embed-" + std::to_string(config_.dimension); }
    std::size_t max_batch() const override { return 64; }
    Completion complete(const ChatRequest& request) override;
    std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override;

    void set_responder(Responder responder) { responder_ = std::move(responder); }

    std::size_t chat_calls() const noexcept { return chat_calls_.load(); }
    std::size_t embed_calls() const noexcept { return embed_calls_.load(); }
    std::size_t calls() const noexcept { return chat_calls() + embed_calls(); }
    const MockConfig& config() const noexcept { return config_; }

private:
    std::string default_response(const ChatRequest& request) const;

    MockConfig config_;
    Responder responder_;
    std::atomic<std::size_t> chat_calls_{0};
    std::atomic<std::size_t> embed_calls_{0};
};

// ---------------------------------------------------------------------------
// Cache

/// Directory of content-addressed entries: <dir>/<k[0:2]>/<k>.request holds
/// the canonical request, <k>.payload the response bytes; index.tsv lists
/// every key with its kind, provider and model.
class ResponseCache {
public:
    explicit ResponseCache(std::filesystem::path dir);

    std::optional<std::string> get(const CacheKey& key) const;
    void put(const CacheKey& key, std::string_view kind, std::string_view provider_id, std::string_view model_id,
             std::string_view request, std::string_view payload);

    const std::filesystem::path& dir() const noexcept { return dir_; }

private:
    std::filesystem::path entry_path(const CacheKey& key, std::string_view ext) const;
    std::mutex& stripe(const CacheKey& key) const;

    std::filesystem::path dir_;
    mutable std::array<std::mutex, 64> stripes_;
    std::mutex index_mutex_;
};

// ---------------------------------------------------------------------------
// Gateway

struct RetryPolicy {
    int max_attempts = 5;
    std::chrono::milliseconds base_delay{500};
    double multiplier = 2.0;
    std::chrono::milliseconds max_delay{30000};
    /// Replaceable for tests; defaults to std::this_thread::sleep_for.
    std::function<void(std::chrono::milliseconds)> sleep;

    std::chrono::milliseconds delay_for(int attempt) const;  // attempt >= 1
};

struct GatewayConfig {
    std::size_t concurrency = 4;
    RetryPolicy retry;
    std::optional<std::filesystem::path> cache_dir;
};

struct GatewayStats {
    std::size_t provider_calls = 0;  // attempts that reached a provider
    std::size_t cache_hits = 0;
    std::size_t retries = 0;
};

/// Thread-safe front door to chat and embedding providers. In-flight
/// provider calls never exceed config.concurrency.
class Gateway {
public:
    Gateway(GatewayConfig config, std::shared_ptr<ChatProvider> chat,
            std::vector<std::shared_ptr<EmbeddingProvider>> embedders = {});

    Completion complete(const ChatRequest& request);

    /// One vector per text, in input order. An empty provider id selects the
    /// first registered embedding provider.
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts, std::string_view provider_id = {});

    CacheKey chat_key(const ChatRequest& request) const;
    std::string chat_provider_id() const;
    std::string embedding_provider_id(std::string_view provider_id = {}) const;

    std::size_t concurrency() const noexcept { return config_.concurrency; }
    GatewayStats stats() const;

    /// Bounded fan-out over [0, count) using the gateway's concurrency.
    template <typename Fn>
    void for_each(std::size_t count, Fn&& fn) {
        parallel_for(count, config_.concurrency, std::forward<Fn>(fn));
    }

private:
    EmbeddingProvider& embedder(std::string_view provider_id) const;

    template <typename Call>
    auto with_retry(Call&& call) -> decltype(call());

    GatewayConfig config_;
    std::shared_ptr<ChatProvider> chat_;
    std::vector<std::shared_ptr<EmbeddingProvider>> embedders_;
    std::optional<ResponseCache> cache_;
    std::counting_semaphore<4096> slots_;
    std::atomic<std::size_t> provider_calls_{0};
    std::atomic<std::size_t> cache_hits_{0};
    std::atomic<std::size_t> retries_{0};
};

}  // namespace biasaudit
