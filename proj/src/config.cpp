#include "forge/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "forge/text.hpp"
#include "forge/util.hpp"

namespace forge {

namespace {

std::string unquote(std::string value) {
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
        return value.substr(1, value.size() - 2);
    }
    return value;
}

long to_int(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const long parsed = std::stol(value, &pos);
        if (pos != value.size()) {
            throw std::invalid_argument(value);
        }
        return parsed;
    } catch (const std::exception&) {
        throw ConfigError("config key \"" + key + "\" expects an integer, got \"" + value + "\"");
    }
}

double to_double(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const double parsed = std::stod(value, &pos);
        if (pos != value.size()) {
            throw std::invalid_argument(value);
        }
        return parsed;
    } catch (const std::exception&) {
        throw ConfigError("config key \"" + key + "\" expects a number, got \"" + value + "\"");
    }
}

}  // namespace

std::map<std::string, std::string> parse_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read config file: " + path.string());
    }
    std::map<std::string, std::string> entries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped.front() == '#') {
            continue;
        }
        const auto eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                              ": expected key = value");
        }
        const std::string key = trim(stripped.substr(0, eq));
        std::string value = trim(stripped.substr(eq + 1));
        if (!value.empty() && value.front() == '"') {
            const auto close = value.find('"', 1);
            if (close == std::string::npos) {
                throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                                  ": unterminated string");
            }
            value = value.substr(1, close - 1);
        } else {
            const auto hash = value.find('#');
            if (hash != std::string::npos) {
                value = trim(value.substr(0, hash));
            }
        }
        if (key.empty()) {
            throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": empty key");
        }
        entries[key] = value;
    }
    return entries;
}

void apply_override(std::map<std::string, std::string>& entries, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("--set expects key=value, got \"" + assignment + "\"");
    }
    entries[trim(assignment.substr(0, eq))] = unquote(trim(assignment.substr(eq + 1)));
}

RunConfig make_run_config(const std::map<std::string, std::string>& entries) {
    RunConfig config;
    for (const auto& [key, value] : entries) {
        if (key == "corpus_path") {
            config.corpus_path = value;
        } else if (key == "queries_path") {
            config.queries_path = value;
        } else if (key == "templates_path") {
            config.templates_path = value;
        } else if (key == "cache_dir") {
            config.cache_dir = value;
        } else if (key == "out_dir") {
            config.out_dir = value;
        } else if (key == "index_path") {
            config.index_path = value;
        } else if (key == "backend.kind") {
            config.backend.kind = value;
        } else if (key == "backend.base_url") {
            config.backend.base_url = value;
        } else if (key == "backend.model") {
            config.backend.model = value;
        } else if (key == "backend.mock_script") {
            config.backend.mock_script = value;
        } else if (key == "retrieval.kind") {
            config.retrieval.kind = value;
        } else if (key == "retrieval.k") {
            config.retrieval.k = static_cast<int>(to_int(key, value));
        } else if (key == "retrieval.context_m") {
            config.retrieval.context_m = static_cast<int>(to_int(key, value));
        } else if (key == "retrieval.remote_endpoint") {
            config.retrieval.remote_endpoint = value;
        } else if (key == "sampling.cot_temperature") {
            config.sampling.cot_temperature = to_double(key, value);
        } else if (key == "sampling.n_per_doc") {
            config.sampling.n_per_doc = static_cast<int>(to_int(key, value));
        } else if (key == "sampling.max_tokens") {
            config.sampling.max_tokens = static_cast<int>(to_int(key, value));
        } else if (key == "dpo.beta") {
            config.dpo.beta = to_double(key, value);
        } else if (key == "seed") {
            config.seed = static_cast<std::uint64_t>(to_int(key, value));
        } else if (key == "max_inflight") {
            config.max_inflight = static_cast<int>(to_int(key, value));
        } else if (key.starts_with("metric.")) {
            config.dataset_metric_map[key.substr(7)] = headline_metric_from_string(value);
        } else {
            throw ConfigError("unknown config key \"" + key + "\"");
        }
    }

    if (const char* env_cache = std::getenv("FORGE_CACHE_DIR")) {
        if (*env_cache != '\0') {
            config.cache_dir = env_cache;
        }
    }

    if (config.backend.kind != "mock" && config.backend.kind != "openai_compatible") {
        throw ConfigError("backend.kind must be mock or openai_compatible");
    }
    if (config.backend.kind == "openai_compatible" && config.backend.base_url.empty()) {
        throw ConfigError("backend.kind openai_compatible requires backend.base_url");
    }
    if (config.retrieval.kind != "bm25" && config.retrieval.kind != "remote") {
        throw ConfigError("retrieval.kind must be bm25 or remote");
    }
    if (config.retrieval.kind == "remote" && config.retrieval.remote_endpoint.empty()) {
        throw ConfigError("retrieval.kind remote requires retrieval.remote_endpoint");
    }
    if (config.retrieval.k < 1) {
        throw ConfigError("retrieval.k must be >= 1");
    }
    if (config.retrieval.context_m < 1 || config.retrieval.context_m > config.retrieval.k) {
        throw ConfigError("retrieval.context_m must be in [1, retrieval.k]");
    }
    if (config.sampling.cot_temperature < 0.0) {
        throw ConfigError("sampling.cot_temperature must be >= 0");
    }
    if (config.sampling.n_per_doc < 1) {
        throw ConfigError("sampling.n_per_doc must be >= 1");
    }
    if (config.sampling.max_tokens < 1) {
        throw ConfigError("sampling.max_tokens must be >= 1");
    }
    if (config.dpo.beta <= 0.0) {
        throw ConfigError("dpo.beta must be > 0");
    }
    if (config.max_inflight < 1) {
        throw ConfigError("max_inflight must be >= 1");
    }
    return config;
}

std::string RunConfig::digest() const {
    std::ostringstream out;
    out << "backend.base_url=" << backend.base_url << '\n'
        << "backend.kind=" << backend.kind << '\n'
        << "backend.mock_script=" << backend.mock_script.string() << '\n'
        << "backend.model=" << backend.model << '\n'
        << "cache_dir=" << cache_dir.string() << '\n'
        << "corpus_path=" << corpus_path.string() << '\n'
        << "dpo.beta=" << dpo.beta << '\n'
        << "index_path=" << effective_index_path().string() << '\n'
        << "max_inflight=" << max_inflight << '\n'
        << "out_dir=" << out_dir.string() << '\n'
        << "queries_path=" << queries_path.string() << '\n'
        << "retrieval.context_m=" << retrieval.context_m << '\n'
        << "retrieval.k=" << retrieval.k << '\n'
        << "retrieval.kind=" << retrieval.kind << '\n'
        << "retrieval.remote_endpoint=" << retrieval.remote_endpoint << '\n'
        << "sampling.cot_temperature=" << sampling.cot_temperature << '\n'
        << "sampling.max_tokens=" << sampling.max_tokens << '\n'
        << "sampling.n_per_doc=" << sampling.n_per_doc << '\n'
        << "seed=" << seed << '\n'
        << "templates_path=" << templates_path.string() << '\n';
    for (const auto& [dataset, metric] : dataset_metric_map) {
        out << "metric." << dataset << "=" << to_string(metric) << '\n';
    }
    return sha256_hex(out.str());
}

}  // namespace forge
