#pragma once

#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <map>
#include <string>

namespace forge {

/// Provenance record for one command run: config digest, content hashes of
/// inputs and outputs, per-stage counts/timings and warning counters.
class RunManifest {
public:
    RunManifest(std::string command, std::string config_digest)
        : command_(std::move(command)),
          config_digest_(std::move(config_digest)),
          start_(std::chrono::steady_clock::now()) {}

    void add_input(const std::filesystem::path& path);
    void add_output(const std::filesystem::path& path);
    void set_count(const std::string& name, std::int64_t value) { counts_[name] = value; }
    void set_warning(const std::string& name, std::int64_t value) {
        if (value != 0) warnings_[name] = value;
    }
    void set_gateway_stats(long backend_calls, long cache_hits) {
        backend_calls_ = backend_calls;
        cache_hits_ = cache_hits;
    }

    const std::map<std::string, std::string>& outputs() const { return outputs_; }

    nlohmann::json to_json() const;
    void write(const std::filesystem::path& path) const;

private:
    std::string command_;
    std::string config_digest_;
    std::chrono::steady_clock::time_point start_;
    std::map<std::string, std::string> inputs_;   // path -> sha256
    std::map<std::string, std::string> outputs_;  // path -> sha256
    std::map<std::string, std::int64_t> counts_;
    std::map<std::string, std::int64_t> warnings_;
    long backend_calls_ = 0;
    long cache_hits_ = 0;
};

}  // namespace forge
