#include "forge/gateway.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <thread>

#include "forge/util.hpp"

namespace forge {

using nlohmann::json;

namespace {

void validate(const ChatRequest& request) {
    if (request.messages.empty()) {
        throw InputError("chat request must have at least one message");
    }
    const auto& first = request.messages.front().role;
    if (first != "system" && first != "user") {
        throw InputError("first chat message role must be system or user, got \"" + first + "\"");
    }
    for (const auto& msg : request.messages) {
        if (msg.role != "system" && msg.role != "user" && msg.role != "assistant") {
            throw InputError("invalid chat message role \"" + msg.role + "\"");
        }
    }
    if (!std::isfinite(request.temperature) || request.temperature < 0.0) {
        throw InputError("temperature must be finite and >= 0");
    }
    if (request.n_samples < 1) {
        throw InputError("n_samples must be >= 1");
    }
    if (request.max_tokens < 1) {
        throw InputError("max_tokens must be >= 1");
    }
}

std::string rendered_prompt(const ChatRequest& request) {
    std::string out;
    for (const auto& msg : request.messages) {
        if (!out.empty()) {
            out.push_back('\n');
        }
        out += msg.content;
    }
    return out;
}

long count_words(std::string_view text) {
    long n = 0;
    bool in_word = false;
    for (char c : text) {
        const bool ws = c == ' ' || c == '\t' || c == '\n' || c == '\r';
        if (!ws && !in_word) {
            ++n;
        }
        in_word = !ws;
    }
    return n;
}

// Trailing "#<digits>" of the seed_tag; 0 when absent.
std::size_t seed_ordinal(std::string_view seed_tag) {
    auto pos = seed_tag.rfind('#');
    if (pos == std::string_view::npos || pos + 1 >= seed_tag.size()) {
        return 0;
    }
    std::size_t value = 0;
    for (std::size_t i = pos + 1; i < seed_tag.size(); ++i) {
        const char c = seed_tag[i];
        if (c < '0' || c > '9') {
            return 0;
        }
        value = value * 10 + static_cast<std::size_t>(c - '0');
    }
    return value;
}

}  // namespace

std::string canonical_request_json(const ChatRequest& request) {
    json messages = json::array();
    for (const auto& msg : request.messages) {
        messages.push_back({{"content", msg.content}, {"role", msg.role}});
    }
    json j = {{"backend_id", request.backend_id},
              {"max_tokens", request.max_tokens},
              {"messages", std::move(messages)},
              {"model", request.model},
              {"n_samples", request.n_samples},
              {"seed_tag", request.seed_tag},
              {"temperature", request.temperature}};
    return j.dump();
}

std::string cache_key(const ChatRequest& request) {
    return sha256_hex(canonical_request_json(request));
}

MockScript MockScript::load(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& ex) {
        throw ConfigError("invalid mock script " + path.string() + ": " + ex.what());
    }
    MockScript script;
    for (const auto& rule : j.value("rules", json::array())) {
        MockRule r;
        r.match = rule.value("match", "");
        for (const auto& resp : rule.value("responses", json::array())) {
            r.responses.push_back(resp.get<std::string>());
        }
        if (r.responses.empty()) {
            throw ConfigError("mock rule \"" + r.match + "\" has no responses");
        }
        script.rules.push_back(std::move(r));
    }
    script.default_response = j.value("default", script.default_response);
    return script;
}

ChatResponse MockBackend::invoke(const ChatRequest& request) {
    calls_.fetch_add(1);
    const std::string prompt = rendered_prompt(request);
    const MockRule* matched = nullptr;
    for (const auto& rule : script_.rules) {
        if (prompt.find(rule.match) != std::string::npos) {
            matched = &rule;
            break;
        }
    }
    const std::size_t ordinal = seed_ordinal(request.seed_tag);

    ChatResponse response;
    response.completions.reserve(static_cast<std::size_t>(request.n_samples));
    for (int i = 0; i < request.n_samples; ++i) {
        if (matched) {
            const std::size_t idx =
                (ordinal * static_cast<std::size_t>(request.n_samples) + static_cast<std::size_t>(i)) %
                matched->responses.size();
            response.completions.push_back(matched->responses[idx]);
        } else {
            response.completions.push_back(script_.default_response);
        }
    }
    response.usage.prompt_tokens = count_words(prompt);
    for (const auto& c : response.completions) {
        response.usage.completion_tokens += count_words(c);
    }
    return response;
}

OpenAiBackend::OpenAiBackend(OpenAiBackendOptions options) : options_(std::move(options)) {
    if (options_.base_url.empty()) {
        throw ConfigError("openai backend requires base_url");
    }
    if (const char* key = std::getenv(options_.api_key_env.c_str())) {
        api_key_ = key;
    }
}

ChatResponse OpenAiBackend::invoke(const ChatRequest& request) {
    json messages = json::array();
    for (const auto& msg : request.messages) {
        messages.push_back({{"role", msg.role}, {"content", msg.content}});
    }
    const json body = {{"model", request.model},
                       {"messages", std::move(messages)},
                       {"temperature", request.temperature},
                       {"n", request.n_samples},
                       {"max_tokens", request.max_tokens}};
    const std::string payload = body.dump();

    httplib::Client client(options_.base_url);
    client.set_connection_timeout(10);
    client.set_read_timeout(300);
    httplib::Headers headers;
    if (!api_key_.empty()) {
        headers.emplace("Authorization", "Bearer " + api_key_);
    }

    httplib::Result res;
    auto backoff = options_.base_backoff;
    int attempt = 0;
    while (true) {
        res = client.Post("/v1/chat/completions", headers, payload, "application/json");
        const bool transient = !res || res->status == 429 || res->status >= 500;
        if (!transient) {
            break;
        }
        if (attempt >= options_.max_retries) {
            throw BackendError("chat completion failed after " + std::to_string(attempt) +
                               " retries: " +
                               (res ? "HTTP " + std::to_string(res->status)
                                    : httplib::to_string(res.error())));
        }
        std::this_thread::sleep_for(backoff);
        backoff = std::min(backoff * 2, options_.max_backoff);
        ++attempt;
    }
    if (res->status != 200) {
        throw BackendError("chat completion HTTP " + std::to_string(res->status) + ": " +
                           res->body.substr(0, 200));
    }

    json parsed;
    try {
        parsed = json::parse(res->body);
    } catch (const json::exception&) {
        throw BackendError("malformed chat completion response: " + res->body.substr(0, 200));
    }
    if (!parsed.contains("choices") || !parsed["choices"].is_array()) {
        throw BackendError("chat completion response missing choices: " +
                           res->body.substr(0, 200));
    }
    ChatResponse response;
    for (const auto& choice : parsed["choices"]) {
        if (!choice.contains("message") || !choice["message"].contains("content")) {
            throw BackendError("chat completion choice missing message content");
        }
        const auto& content = choice["message"]["content"];
        response.completions.push_back(content.is_null() ? "" : content.get<std::string>());
    }
    if (response.completions.size() != static_cast<std::size_t>(request.n_samples)) {
        throw BackendError("backend returned " + std::to_string(response.completions.size()) +
                           " choices, expected " + std::to_string(request.n_samples));
    }
    if (parsed.contains("usage") && parsed["usage"].is_object()) {
        response.usage.prompt_tokens = parsed["usage"].value("prompt_tokens", 0L);
        response.usage.completion_tokens = parsed["usage"].value("completion_tokens", 0L);
    }
    return response;
}

Gateway::Gateway(std::shared_ptr<ChatBackend> backend, std::filesystem::path cache_dir,
                 int max_inflight)
    : backend_(std::move(backend)),
      cache_dir_(std::move(cache_dir)),
      max_inflight_(max_inflight),
      inflight_(max_inflight) {
    if (!backend_) {
        throw ConfigError("gateway requires a backend");
    }
    if (max_inflight_ < 1) {
        throw ConfigError("max_inflight must be >= 1");
    }
    std::filesystem::create_directories(cache_dir_);
}

ChatResponse Gateway::complete(const ChatRequest& request) {
    validate(request);
    const std::string key = cache_key(request);
    const auto cache_path = cache_dir_ / key;

    if (std::filesystem::exists(cache_path)) {
        json entry;
        try {
            entry = json::parse(read_file(cache_path));
            ChatResponse response;
            for (const auto& c : entry.at("response").at("completions")) {
                response.completions.push_back(c.get<std::string>());
            }
            response.usage.prompt_tokens =
                entry["response"]["usage"].value("prompt_tokens", 0L);
            response.usage.completion_tokens =
                entry["response"]["usage"].value("completion_tokens", 0L);
            response.cached = true;
            cache_hits_.fetch_add(1);
            return response;
        } catch (const json::exception&) {
            // Corrupt entry: fall through and re-fetch.
        }
    }

    inflight_.acquire();
    ChatResponse response;
    try {
        response = backend_->invoke(request);
    } catch (...) {
        inflight_.release();
        throw;
    }
    inflight_.release();
    backend_calls_.fetch_add(1);

    json completions = json::array();
    for (const auto& c : response.completions) {
        completions.push_back(c);
    }
    const json entry = {
        {"request", json::parse(canonical_request_json(request))},
        {"response",
         {{"completions", std::move(completions)},
          {"usage",
           {{"prompt_tokens", response.usage.prompt_tokens},
            {"completion_tokens", response.usage.completion_tokens}}}}},
        {"timestamp", static_cast<long>(std::time(nullptr))}};
    write_file_atomic(cache_path, entry.dump());

    response.cached = false;
    return response;
}

}  // namespace forge
