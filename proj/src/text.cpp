#include "forge/text.hpp"

#include <sstream>

namespace forge {

namespace {

// Locale-independent ASCII classification; bytes >= 0x80 count as letters so
// UTF-8 content passes through untouched.
bool is_space(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_alnum(unsigned char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}

bool is_punct(unsigned char c) {
    return c < 0x80 && !is_alnum(c) && !is_space(c);
}

char lower(unsigned char c) {
    return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c);
}

bool is_article(std::string_view token) {
    return token == "a" || token == "an" || token == "the";
}

std::vector<std::string> split_ws(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (unsigned char c : text) {
        if (is_space(c)) {
            if (!cur.empty()) {
                tokens.push_back(std::move(cur));
                cur.clear();
            }
        } else {
            cur.push_back(static_cast<char>(c));
        }
    }
    if (!cur.empty()) {
        tokens.push_back(std::move(cur));
    }
    return tokens;
}

std::string lower_strip_punct(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (unsigned char c : text) {
        if (is_punct(c)) {
            continue;
        }
        out.push_back(lower(c));
    }
    return out;
}

}  // namespace

std::string normalize_answer(std::string_view text) {
    std::vector<std::string> tokens = split_ws(lower_strip_punct(text));
    std::string out;
    for (const auto& tok : tokens) {
        if (is_article(tok)) {
            continue;
        }
        if (!out.empty()) {
            out.push_back(' ');
        }
        out += tok;
    }
    return out;
}

bool contains_normalized(std::string_view text, const std::vector<std::string>& aliases) {
    const std::string norm_text = normalize_answer(text);
    for (const auto& alias : aliases) {
        const std::string norm_alias = normalize_answer(alias);
        if (norm_alias.empty()) {
            continue;
        }
        if (norm_text.find(norm_alias) != std::string::npos) {
            return true;
        }
    }
    return false;
}

std::vector<std::string> rouge_tokens(std::string_view text) {
    return split_ws(lower_strip_punct(text));
}

std::vector<std::string> bm25_tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (unsigned char c : text) {
        if (is_alnum(c)) {
            cur.push_back(lower(c));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) {
        tokens.push_back(std::move(cur));
    }
    return tokens;
}

std::string trim(std::string_view text) {
    std::size_t begin = 0;
    std::size_t end = text.size();
    while (begin < end && is_space(static_cast<unsigned char>(text[begin]))) {
        ++begin;
    }
    while (end > begin && is_space(static_cast<unsigned char>(text[end - 1]))) {
        --end;
    }
    return std::string(text.substr(begin, end - begin));
}

std::string to_lower(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (unsigned char c : text) {
        out.push_back(lower(c));
    }
    return out;
}

}  // namespace forge
