#include "forge/manifest.hpp"

#include "forge/util.hpp"

namespace forge {

using nlohmann::json;

void RunManifest::add_input(const std::filesystem::path& path) {
    inputs_[path.string()] = sha256_file(path);
}

void RunManifest::add_output(const std::filesystem::path& path) {
    outputs_[path.string()] = sha256_file(path);
}

json RunManifest::to_json() const {
    const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::steady_clock::now() - start_)
                             .count();
    return {{"command", command_},
            {"config_digest", config_digest_},
            {"inputs", inputs_},
            {"outputs", outputs_},
            {"counts", counts_},
            {"warnings", warnings_},
            {"gateway", {{"backend_calls", backend_calls_}, {"cache_hits", cache_hits_}}},
            {"elapsed_ms", elapsed}};
}

void RunManifest::write(const std::filesystem::path& path) const {
    write_file_atomic(path, to_json().dump(2));
}

}  // namespace forge
