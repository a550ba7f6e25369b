#include "biasaudit/gateway.hpp"

#include "biasaudit/digest.hpp"
#include "biasaudit/tokenizer.hpp"

#include "httplib.h"
#include "json.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

namespace biasaudit {
namespace {

using json = nlohmann::json;
const char* kModule = "llm_gateway";

std::string read_all(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_atomic(const std::filesystem::path& p, std::string_view bytes) {
    auto tmp = p;
    tmp += ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError(kModule, "cannot write cache file '" + tmp.string() + "'");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    std::filesystem::rename(tmp, p);
}

json parse_provider_json(const std::string& body, const char* what) {
    try {
        return json::parse(body);
    } catch (const json::parse_error&) {
        throw ProviderError(ProviderErrorKind::Malformed, std::string("malformed ") + what + " response");
    }
}

// Words the mock draws continuations from.
constexpr const char* kMockWords[] = {
    "the",       "administration", "said",     "policy",     "congress",   "senate",    "voters",
    "reform",    "immigration",    "economy",  "tax",        "healthcare", "officials", "report",
    "democrats", "republicans",    "workers",  "security",   "justice",    "climate",   "rights",
    "markets",   "border",         "families", "investigation", "election", "budget",   "court",
    "and",       "to",             "of",       "in",         "a",          "on",        "with"};

constexpr const char* kMockIndicators[] = {
    "Provides figures and quotes from individuals involved in the issue",
    "The article cites multiple sources, including government documents and quotes from officials.",
    "Uses emotionally charged language to describe the opposing party",
    "Frames the policy as a reversal of the previous administration's approach",
    "Mentions specific incidents of terrorism and security measures in different cities",
    "Highlights criticism from advocacy groups while omitting the official response",
    "Describes the decision with sarcastic and mocking tone",
    "Presents economic statistics without historical context",
    "Quotes only lawmakers from one party",
    "Emphasizes the human cost of the policy through personal stories",
    "Labels the investigation a witch hunt without attribution",
    "Balances statements from both parties in the final paragraphs"};

}  // namespace

// ---------------------------------------------------------------------------

ChatRequest ChatRequest::user(std::string model_id, std::string content, double temperature, int max_output_tokens) {
    ChatRequest r;
    r.model_id = std::move(model_id);
    r.messages.push_back({"user", std::move(content)});
    r.temperature = temperature;
    r.max_output_tokens = max_output_tokens;
    return r;
}

void ChatRequest::validate() const {
    if (messages.empty()) throw DataError(kModule, "chat request has no messages");
    for (const auto& m : messages)
        if (m.role != "system" && m.role != "user" && m.role != "assistant")
            throw DataError(kModule, "invalid message role '" + m.role + "'");
    if (messages.back().role != "user") throw DataError(kModule, "last message must have role 'user'");
    if (!(temperature >= 0.0)) throw DataError(kModule, "temperature must be >= 0");
    if (max_output_tokens <= 0) throw DataError(kModule, "max_output_tokens must be positive");
}

std::string ChatRequest::canonical_payload() const {
    json j;
    j["model"] = model_id;
    j["temperature"] = temperature;
    j["max_tokens"] = max_output_tokens;
    j["messages"] = json::array();
    for (const auto& m : messages) j["messages"].push_back({{"role", m.role}, {"content", m.content}});
    return j.dump();
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DataError(kModule, "cosine: dimension mismatch");
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw DataError(kModule, "cosine: zero-norm vector");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

EmbeddingVector mock_embed(std::string_view text, std::size_t dimension, std::uint64_t seed) {
    if (dimension < 2) throw std::invalid_argument("mock_embed: dimension must be >= 2");
    SplitMix64 rng(seed_from(text, seed));
    EmbeddingVector v;
    v.provider_id = "mock";
    v.values.resize(dimension);
    double norm = 0;
    do {
        norm = 0;
        for (auto& x : v.values) {
            x = 2.0 * rng.uniform() - 1.0;
            norm += x * x;
        }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (auto& x : v.values) x /= norm;
    return v;
}

CacheKey CacheKey::of(std::string_view provider_id, std::string_view model_id, std::string_view canonical_payload) {
    std::string material;
    material.reserve(provider_id.size() + model_id.size() + canonical_payload.size() + 2);
    material.append(provider_id).append("\n").append(model_id).append("\n").append(canonical_payload);
    return CacheKey{sha256_hex(material)};
}

ProviderErrorKind classify_status(int status) {
    if (status == 401 || status == 403) return ProviderErrorKind::Auth;
    if (status == 429) return ProviderErrorKind::RateLimit;
    if (status == 408 || status >= 500) return ProviderErrorKind::Transient;
    return ProviderErrorKind::Rejected;
}

// ---------------------------------------------------------------------------
// HttpTransport

HttpTransport::HttpTransport(std::string base_url, std::chrono::seconds timeout)
    : base_url_(std::move(base_url)), timeout_(timeout) {
    while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

HttpResponse HttpTransport::send(const HttpRequest& request) {
    httplib::Client client(base_url_);
    if (!client.is_valid()) throw ProviderError(ProviderErrorKind::Config, "invalid base URL '" + base_url_ + "'");
    client.set_connection_timeout(std::chrono::seconds(10));
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    httplib::Headers headers;
    for (const auto& [k, v] : request.headers) headers.emplace(k, v);

    httplib::Result res;
    if (request.method == "GET") {
        res = client.Get(request.path, headers);
    } else if (!request.multipart.empty()) {
        httplib::MultipartFormDataItems items;
        for (const auto& f : request.multipart) items.push_back({f.name, f.content, f.filename, f.content_type});
        res = client.Post(request.path, headers, items);
    } else {
        res = client.Post(request.path, headers, request.body, request.content_type);
    }
    if (!res)
        throw ProviderError(ProviderErrorKind::Transient,
                            "request to " + base_url_ + request.path + " failed: " + httplib::to_string(res.error()));
    return {res->status, res->body};
}

// ---------------------------------------------------------------------------
// OpenAICompatibleProvider

OpenAICompatibleProvider::OpenAICompatibleProvider(std::shared_ptr<Transport> transport, OpenAICompatibleConfig config)
    : transport_(std::move(transport)), config_(std::move(config)) {}

std::vector<std::pair<std::string, std::string>> OpenAICompatibleProvider::auth_headers() const {
    if (config_.api_key.empty())
        throw ProviderError(ProviderErrorKind::Config, "no API credential configured for provider '" +
                                                           config_.provider_id + "'");
    if (config_.auth_header == "Authorization") return {{"Authorization", "Bearer " + config_.api_key}};
    return {{config_.auth_header, config_.api_key}};
}

namespace {

}  // namespace

void raise_for_status(const HttpResponse& resp, const std::string& what) {
    if (resp.status >= 200 && resp.status < 300) return;
    std::string detail = resp.body.substr(0, 300);
    throw ProviderError(classify_status(resp.status),
                        what + " returned HTTP " + std::to_string(resp.status) + ": " + detail);
}

Completion OpenAICompatibleProvider::complete(const ChatRequest& request) {
    HttpRequest http;
    http.path = config_.api_prefix + "/chat/completions";
    http.headers = auth_headers();
    http.body = request.canonical_payload();
    HttpResponse resp = transport_->send(http);
    raise_for_status(resp, "chat completion");
    json j = parse_provider_json(resp.body, "chat completion");
    try {
        const auto& choice = j.at("choices").at(0);
        Completion c;
        const auto& content = choice.at("message").at("content");
        c.text = content.is_null() ? std::string() : content.get<std::string>();
        if (choice.contains("finish_reason") && choice["finish_reason"].is_string())
            c.finish_reason = choice["finish_reason"].get<std::string>();
        if (j.contains("usage") && j["usage"].is_object()) {
            c.usage.prompt_tokens = j["usage"].value("prompt_tokens", 0);
            c.usage.completion_tokens = j["usage"].value("completion_tokens", 0);
        }
        return c;
    } catch (const json::exception&) {
        throw ProviderError(ProviderErrorKind::Malformed, "chat completion response lacks choices[0].message.content");
    }
}

std::vector<EmbeddingVector> OpenAICompatibleProvider::embed_batch(std::span<const std::string> texts) {
    HttpRequest http;
    http.path = config_.api_prefix + "/embeddings";
    http.headers = auth_headers();
    json body;
    body["model"] = config_.embedding_model;
    body["input"] = json::array();
    for (const auto& t : texts) body["input"].push_back(t);
    http.body = body.dump();
    HttpResponse resp = transport_->send(http);
    raise_for_status(resp, "embedding");
    json j = parse_provider_json(resp.body, "embedding");
    std::vector<EmbeddingVector> out(texts.size());
    try {
        const auto& data = j.at("data");
        if (data.size() != texts.size())
            throw ProviderError(ProviderErrorKind::Malformed, "embedding response has " + std::to_string(data.size()) +
                                                                  " vectors for " + std::to_string(texts.size()) +
                                                                  " inputs");
        for (std::size_t i = 0; i < data.size(); ++i) {
            const std::size_t idx = data[i].contains("index") ? data[i]["index"].get<std::size_t>() : i;
            if (idx >= out.size()) throw ProviderError(ProviderErrorKind::Malformed, "embedding index out of range");
            out[idx].values = data[i].at("embedding").get<std::vector<double>>();
            out[idx].provider_id = config_.provider_id;
        }
    } catch (const json::exception&) {
        throw ProviderError(ProviderErrorKind::Malformed, "embedding response lacks data[].embedding");
    }
    return out;
}

// ---------------------------------------------------------------------------
// MockProvider

MockProvider::MockProvider(MockConfig config) : config_(std::move(config)) {}

Completion MockProvider::complete(const ChatRequest& request) {
    request.validate();
    ++chat_calls_;
    Completion c;
    c.text = responder_ ? responder_(request) : default_response(request);
    c.finish_reason = "stop";
    c.usage.prompt_tokens = static_cast<std::int64_t>(tokenize(request.messages.back().content).size());
    c.usage.completion_tokens = static_cast<std::int64_t>(tokenize(c.text).size());
    return c;
}

std::string MockProvider::default_response(const ChatRequest& request) const {
    std::string all;
    for (const auto& m : request.messages) all += m.role + ":" + m.content + "\n";
    SplitMix64 rng(seed_from(all, config_.seed));
    const std::string& prompt = request.messages.back().content;

    auto label_answer = [&](bool allow_uncertain) {
        if (rng.uniform() < config_.refusal_rate)
            return std::string("I'm sorry, but as an AI language model I cannot determine the political leaning of "
                               "this text.");
        const double u = rng.uniform();
        std::string label = u < 0.3 ? "left" : u < 0.7 ? "center" : u < 0.9 ? "right" : "uncertain";
        if (!allow_uncertain && label == "uncertain") label = "center";
        return "Analysis: the text discusses the event with a mix of sourced claims and framing.\n" + label;
    };

    if (prompt.find("assign a label from {left, right, center, uncertain}") != std::string::npos)
        return label_answer(true);
    if (prompt.find("Left, Center, or Right") != std::string::npos) return label_answer(false);
    if (prompt.rfind("Continue the text provided below:", 0) == 0) {
        auto prompt_words = tokenize(prompt.substr(prompt.find(':') + 1));
        std::string out;
        for (std::size_t i = 0; i < config_.continuation_words; ++i) {
            std::string w;
            if (!prompt_words.empty() && rng.uniform() < 0.5) w = prompt_words[rng.below(prompt_words.size())];
            else w = kMockWords[rng.below(std::size(kMockWords))];
            if (!out.empty()) out.push_back(' ');
            out += w;
        }
        return out + ".";
    }
    if (prompt.find("may reflect media bias") != std::string::npos) {
        std::string out;
        const auto n = 2 + rng.below(3);
        for (std::uint64_t i = 0; i < n; ++i)
            out += std::string("\"") + kMockIndicators[rng.below(std::size(kMockIndicators))] + "\"\n";
        return out;
    }
    if (prompt.find("topic title") != std::string::npos) {
        // Title from the first listed indicator: "- <text>".
        auto pos = prompt.find("\n- ");
        std::string first = pos == std::string::npos ? std::string("indicators") : prompt.substr(pos + 3);
        first = first.substr(0, first.find('\n'));
        auto words = tokenize(first);
        std::string title = "Topic:";
        for (std::size_t i = 0; i < std::min<std::size_t>(5, words.size()); ++i) title += " " + words[i];
        return title;
    }
    return "mock response " + std::to_string(rng.next() % 100000);
}

std::vector<EmbeddingVector> MockProvider::embed_batch(std::span<const std::string> texts) {
    ++embed_calls_;
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
        auto v = mock_embed(t, config_.dimension, config_.seed);
        v.provider_id = config_.provider_id;
        out.push_back(std::move(v));
    }
    return out;
}

// ---------------------------------------------------------------------------
// ResponseCache

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

std::filesystem::path ResponseCache::entry_path(const CacheKey& key, std::string_view ext) const {
    return dir_ / key.digest.substr(0, 2) / (key.digest + std::string(ext));
}

std::mutex& ResponseCache::stripe(const CacheKey& key) const {
    return stripes_[std::stoul(key.digest.substr(0, 2), nullptr, 16) % stripes_.size()];
}

std::optional<std::string> ResponseCache::get(const CacheKey& key) const {
    std::lock_guard lock(stripe(key));
    auto payload = entry_path(key, ".payload");
    if (!std::filesystem::exists(payload)) return std::nullopt;
    return read_all(payload);
}

void ResponseCache::put(const CacheKey& key, std::string_view kind, std::string_view provider_id,
                        std::string_view model_id, std::string_view request, std::string_view payload) {
    {
        std::lock_guard lock(stripe(key));
        std::filesystem::create_directories(entry_path(key, "").parent_path());
        write_atomic(entry_path(key, ".request"), request);
        write_atomic(entry_path(key, ".payload"), payload);
    }
    std::lock_guard lock(index_mutex_);
    std::ofstream index(dir_ / "index.tsv", std::ios::app);
    index << key.digest << '\t' << kind << '\t' << provider_id << '\t' << model_id << '\n';
}

// ---------------------------------------------------------------------------
// Gateway

std::chrono::milliseconds RetryPolicy::delay_for(int attempt) const {
    const double ms = static_cast<double>(base_delay.count()) * std::pow(multiplier, attempt - 1);
    return std::chrono::milliseconds(
        static_cast<std::int64_t>(std::min(ms, static_cast<double>(max_delay.count()))));
}

Gateway::Gateway(GatewayConfig config, std::shared_ptr<ChatProvider> chat,
                 std::vector<std::shared_ptr<EmbeddingProvider>> embedders)
    : config_(std::move(config)),
      chat_(std::move(chat)),
      embedders_(std::move(embedders)),
      slots_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, config_.concurrency))) {
    if (config_.concurrency == 0) config_.concurrency = 1;
    if (config_.concurrency > 4096) throw UsageError(kModule, "concurrency must be <= 4096");
    if (config_.retry.max_attempts < 1) throw UsageError(kModule, "retry attempts must be >= 1");
    if (config_.cache_dir) cache_.emplace(*config_.cache_dir);
}

GatewayStats Gateway::stats() const { return {provider_calls_.load(), cache_hits_.load(), retries_.load()}; }

std::string Gateway::chat_provider_id() const { return chat_ ? chat_->id() : std::string(); }

EmbeddingProvider& Gateway::embedder(std::string_view provider_id) const {
    if (embedders_.empty()) throw ProviderError(ProviderErrorKind::Config, "no embedding provider configured");
    if (provider_id.empty()) return *embedders_.front();
    for (const auto& e : embedders_)
        if (e->id() == provider_id) return *e;
    throw ProviderError(ProviderErrorKind::Config, "unknown embedding provider '" + std::string(provider_id) + "'");
}

std::string Gateway::embedding_provider_id(std::string_view provider_id) const { return embedder(provider_id).id(); }

CacheKey Gateway::chat_key(const ChatRequest& request) const {
    return CacheKey::of(chat_provider_id(), request.model_id, request.canonical_payload());
}

template <typename Call>
auto Gateway::with_retry(Call&& call) -> decltype(call()) {
    for (int attempt = 1;; ++attempt) {
        try {
            slots_.acquire();
            struct Release {
                std::counting_semaphore<4096>& s;
                ~Release() { s.release(); }
            } release{slots_};
            ++provider_calls_;
            return call();
        } catch (const ProviderError& e) {
            if (!e.retryable()) throw;
            if (attempt >= config_.retry.max_attempts) {
                const char* what = e.kind() == ProviderErrorKind::RateLimit ? "rate limit exhausted" : "giving up";
                throw ProviderError(e.kind(), std::string(what) + " after " + std::to_string(attempt) +
                                                  " attempts: " + e.what());
            }
            ++retries_;
            auto delay = config_.retry.delay_for(attempt);
            if (config_.retry.sleep) config_.retry.sleep(delay);
            else std::this_thread::sleep_for(delay);
        }
    }
}

Completion Gateway::complete(const ChatRequest& request) {
    request.validate();
    if (!chat_) throw ProviderError(ProviderErrorKind::Config, "no chat provider configured");
    const CacheKey key = chat_key(request);
    if (cache_) {
        if (auto hit = cache_->get(key)) {
            ++cache_hits_;
            json j = json::parse(*hit);
            Completion c;
            c.text = j.at("text").get<std::string>();
            c.finish_reason = j.value("finish_reason", "");
            c.usage.prompt_tokens = j.value("prompt_tokens", 0);
            c.usage.completion_tokens = j.value("completion_tokens", 0);
            c.from_cache = true;
            return c;
        }
    }
    Completion c = with_retry([&] { return chat_->complete(request); });
    if (cache_) {
        json j{{"text", c.text},
               {"finish_reason", c.finish_reason},
               {"prompt_tokens", c.usage.prompt_tokens},
               {"completion_tokens", c.usage.completion_tokens}};
        cache_->put(key, "chat", chat_provider_id(), request.model_id, request.canonical_payload(), j.dump());
    }
    return c;
}

std::vector<EmbeddingVector> Gateway::embed(const std::vector<std::string>& texts, std::string_view provider_id) {
    if (texts.empty()) throw DataError(kModule, "embed: empty input list");
    for (const auto& t : texts)
        if (t.empty()) throw DataError(kModule, "embed: empty text");
    EmbeddingProvider& provider = embedder(provider_id);
    const std::string pid = provider.id();
    const std::string model = provider.model();

    std::vector<EmbeddingVector> out(texts.size());
    std::vector<std::size_t> missing;
    std::vector<CacheKey> keys;
    keys.reserve(texts.size());
    for (std::size_t i = 0; i < texts.size(); ++i) {
        keys.push_back(CacheKey::of(pid, model, json{{"input", texts[i]}}.dump()));
        std::optional<std::string> hit;
        if (cache_) hit = cache_->get(keys.back());
        if (hit) {
            ++cache_hits_;
            out[i].values = json::parse(*hit).get<std::vector<double>>();
            out[i].provider_id = pid;
        } else {
            missing.push_back(i);
        }
    }

    const std::size_t batch = std::max<std::size_t>(1, provider.max_batch());
    for (std::size_t start = 0; start < missing.size(); start += batch) {
        const std::size_t end = std::min(missing.size(), start + batch);
        std::vector<std::string> chunk;
        for (std::size_t k = start; k < end; ++k) chunk.push_back(texts[missing[k]]);
        auto vectors = with_retry([&] { return provider.embed_batch(chunk); });
        if (vectors.size() != chunk.size())
            throw ProviderError(ProviderErrorKind::Malformed, "embedding provider returned wrong vector count");
        for (std::size_t k = start; k < end; ++k) {
            auto& v = vectors[k - start];
            for (double x : v.values)
                if (!std::isfinite(x)) throw ProviderError(ProviderErrorKind::Malformed, "non-finite embedding value");
            v.provider_id = pid;
            if (cache_)
                cache_->put(keys[missing[k]], "embedding", pid, model, json{{"input", texts[missing[k]]}}.dump(),
                            json(v.values).dump());
            out[missing[k]] = std::move(v);
        }
    }
    const std::size_t dim = out.front().dimension();
    if (dim == 0) throw ProviderError(ProviderErrorKind::Malformed, "empty embedding vector");
    for (const auto& v : out)
        if (v.dimension() != dim)
            throw ProviderError(ProviderErrorKind::Malformed, "embedding dimension mismatch within one request (" +
                                                                  std::to_string(dim) + " vs " +
                                                                  std::to_string(v.dimension()) + ")");
    return out;
}

}  // namespace biasaudit
