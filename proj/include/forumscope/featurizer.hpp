#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "forumscope/embedding.hpp"
#include "forumscope/textfeat.hpp"

namespace forumscope {

enum class Encoding { bow, tfidf, doc2vec };

inline const char* encoding_name(Encoding e) {
    switch (e) {
        case Encoding::bow: return "bow";
        case Encoding::tfidf: return "tfidf";
        case Encoding::doc2vec: return "doc2vec";
    }
    return "?";
}

inline Encoding parse_encoding(std::string_view s) {
    const auto n = to_lower(s);
    if (n == "bow") return Encoding::bow;
    if (n == "tfidf" || n == "tf-idf") return Encoding::tfidf;
    if (n == "doc2vec" || n == "embedding") return Encoding::doc2vec;
    throw Error("unknown encoding '" + std::string(s) + "' (expected bow, tfidf or doc2vec)");
}

/// A fitted text encoder: a vocabulary for bow/tfidf, or a document
/// embedding model for doc2vec.
class Featurizer {
public:
    static Featurizer fit(Encoding enc, const std::vector<std::string>& documents, const VocabParams& vp,
                          const EmbeddingParams& ep, const std::vector<std::string>& tags = {}) {
        Featurizer f;
        f.encoding_ = enc;
        if (enc == Encoding::doc2vec)
            f.embedding_ = train_doc_embeddings(documents, ep, tags);
        else
            f.vocab_ = build_vocabulary(documents, vp);
        return f;
    }

    Encoding encoding() const { return encoding_; }
    const Vocabulary* vocabulary() const { return vocab_ ? &*vocab_ : nullptr; }
    const EmbeddingModel* embedding() const { return embedding_ ? &*embedding_ : nullptr; }

    std::size_t n_features() const { return vocab_ ? vocab_->size() : embedding_->dim(); }

    SparseVector transform(std::string_view document) const {
        switch (encoding_) {
            case Encoding::bow: return bow_vector(document, *vocab_);
            case Encoding::tfidf: return tfidf_vector(document, *vocab_);
            case Encoding::doc2vec: return SparseVector::from_dense(infer_doc_embedding(*embedding_, document));
        }
        return {};
    }

    /// Vector for a document the embedding was trained on (stored row),
    /// falling back to transform() for anything else.
    SparseVector transform_known(std::string_view tag, std::string_view document) const {
        if (embedding_)
            if (auto i = embedding_->doc_index(tag)) {
                auto row = embedding_->doc_vector(*i);
                return SparseVector::from_dense(std::vector<double>(row.begin(), row.end()));
            }
        return transform(document);
    }

    /// Human-readable name of a feature column (the gram, or "dim_<i>").
    std::string feature_name(std::size_t i) const {
        if (vocab_) return vocab_->term(i);
        return "dim_" + std::to_string(i);
    }

    nlohmann::json to_json() const {
        nlohmann::json j{{"encoding", encoding_name(encoding_)}};
        if (vocab_) j["vocabulary"] = vocab_->to_json();
        if (embedding_) j["embedding"] = embedding_->to_json();
        return j;
    }

    static Featurizer from_json(const nlohmann::json& j) {
        Featurizer f;
        f.encoding_ = parse_encoding(j.at("encoding").get<std::string>());
        if (f.encoding_ == Encoding::doc2vec)
            f.embedding_ = EmbeddingModel::from_json(j.at("embedding"));
        else
            f.vocab_ = Vocabulary::from_json(j.at("vocabulary"));
        return f;
    }

    std::string hash() const { return sha256_hex(to_json().dump()); }

private:
    Encoding encoding_ = Encoding::tfidf;
    std::optional<Vocabulary> vocab_;
    std::optional<EmbeddingModel> embedding_;
};

}  // namespace forumscope
