#include "forge/corpus.hpp"

#include <unordered_set>

#include "forge/jsonl.hpp"
#include "forge/text.hpp"
#include "forge/util.hpp"

namespace forge {

std::vector<CorpusDocument> load_corpus_jsonl(const std::filesystem::path& path) {
    std::vector<CorpusDocument> docs;
    std::unordered_set<std::string> seen;
    for (const auto& row : read_jsonl(path)) {
        CorpusDocument doc;
        if (!row.contains("doc_id") || !row["doc_id"].is_string()) {
            throw InputError(path.string() + ": corpus row missing string doc_id");
        }
        doc.doc_id = row["doc_id"].get<std::string>();
        if (row.contains("title") && row["title"].is_string()) {
            doc.title = row["title"].get<std::string>();
        }
        if (!row.contains("text") || !row["text"].is_string()) {
            throw InputError("corpus doc \"" + doc.doc_id + "\" missing string text");
        }
        doc.text = row["text"].get<std::string>();
        if (trim(doc.text).empty()) {
            throw InputError("corpus doc \"" + doc.doc_id + "\" has empty text");
        }
        if (!seen.insert(doc.doc_id).second) {
            throw InputError("duplicate doc_id \"" + doc.doc_id + "\" in corpus");
        }
        docs.push_back(std::move(doc));
    }
    if (docs.empty()) {
        throw InputError("empty corpus: " + path.string());
    }
    return docs;
}

}  // namespace forge
