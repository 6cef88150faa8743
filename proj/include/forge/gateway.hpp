#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <memory>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

namespace forge {

struct ChatMessage {
    std::string role;  // "system" | "user" | "assistant"
    std::string content;
};

struct ChatRequest {
    std::string backend_id;
    std::string model;
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    int n_samples = 1;
    int max_tokens = 512;
    // Cache discriminator so repeated sampling of the same prompt stays
    // replayable. Convention: "<query_id>/<doc_id>#<sample_ordinal>"; the
    // mock backend reads the trailing ordinal to advance its cycles.
    std::string seed_tag;
};

struct TokenUsage {
    long prompt_tokens = 0;
    long completion_tokens = 0;
};

struct ChatResponse {
    std::vector<std::string> completions;  // length == n_samples
    TokenUsage usage;
    bool cached = false;
};

/// Canonical JSON over the semantic request fields; key order is fixed by
/// construction, so two equivalent requests serialize identically.
std::string canonical_request_json(const ChatRequest& request);

/// Hex SHA-256 of the canonical request serialization.
std::string cache_key(const ChatRequest& request);

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual ChatResponse invoke(const ChatRequest& request) = 0;
    virtual std::string id() const = 0;
};

struct MockRule {
    std::string match;  // substring over the rendered prompt
    std::vector<std::string> responses;  // cycled
};

/// Deterministic scripted backend: first matching rule wins, responses cycle
/// by (seed ordinal * n_samples + completion index).
struct MockScript {
    std::vector<MockRule> rules;
    std::string default_response = "UNKNOWN";

    static MockScript load(const std::filesystem::path& path);
};

class MockBackend : public ChatBackend {
public:
    explicit MockBackend(MockScript script, std::string backend_id = "mock")
        : script_(std::move(script)), id_(std::move(backend_id)) {}

    ChatResponse invoke(const ChatRequest& request) override;
    std::string id() const override { return id_; }

    long calls() const { return calls_.load(); }

private:
    MockScript script_;
    std::string id_;
    std::atomic<long> calls_{0};
};

struct OpenAiBackendOptions {
    std::string base_url;  // e.g. "http://localhost:8000"
    std::string api_key_env = "LLM_API_KEY";
    int max_retries = 3;
    std::chrono::milliseconds base_backoff{200};
    std::chrono::milliseconds max_backoff{4000};
};

/// POST {base_url}/v1/chat/completions with bearer auth from the
/// environment. 429/5xx and transport failures retry with capped
/// exponential backoff.
class OpenAiBackend : public ChatBackend {
public:
    explicit OpenAiBackend(OpenAiBackendOptions options);

    ChatResponse invoke(const ChatRequest& request) override;
    std::string id() const override { return "openai:" + options_.base_url; }

private:
    OpenAiBackendOptions options_;
    std::string api_key_;
};

/// Chat-completion front door: validates requests, consults the
/// content-addressed cache, and forwards misses to the backend under a
/// bounded-concurrency limit. Safe to call from many threads.
class Gateway {
public:
    Gateway(std::shared_ptr<ChatBackend> backend, std::filesystem::path cache_dir,
            int max_inflight = 8);

    ChatResponse complete(const ChatRequest& request);

    long backend_calls() const { return backend_calls_.load(); }
    long cache_hits() const { return cache_hits_.load(); }
    int max_inflight() const { return max_inflight_; }
    const std::filesystem::path& cache_dir() const { return cache_dir_; }

private:
    std::shared_ptr<ChatBackend> backend_;
    std::filesystem::path cache_dir_;
    int max_inflight_;
    std::counting_semaphore<> inflight_;
    std::atomic<long> backend_calls_{0};
    std::atomic<long> cache_hits_{0};
};

}  // namespace forge
