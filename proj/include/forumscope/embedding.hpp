#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "forumscope/common.hpp"
#include "forumscope/hash.hpp"
#include "forumscope/random.hpp"
#include "forumscope/textfeat.hpp"

namespace forumscope {

struct EmbeddingParams {
    std::size_t dim = 100;
    std::size_t epochs = 20;
    double learning_rate = 0.025;
    double min_learning_rate = 0.0001;
    std::size_t negative = 5;
    std::size_t min_count = 1;   // word frequency cut for the output vocabulary
    std::size_t infer_epochs = 50;
    std::uint64_t seed = 1162;
};

/// Negative-sampling objective for one (document, word) pair:
///   -log s(d.u_pos) - sum_n log s(-d.u_n)
/// Gradients are written when the output spans are non-empty.
struct NsGradient {
    double loss = 0;
    std::vector<double> d_doc;
    std::vector<std::vector<double>> d_words;  // positive first, then negatives
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// log(sigmoid(x)), stable for large |x|
inline double log_sigmoid(double x) {
    if (x >= 0) return -std::log1p(std::exp(-x));
    return x - std::log1p(std::exp(x));
}

}  // namespace detail

inline double ns_loss(std::span<const double> doc, std::span<const double> positive,
                      const std::vector<std::span<const double>>& negatives) {
    double loss = -detail::log_sigmoid(detail::dot(doc, positive));
    for (auto n : negatives) loss -= detail::log_sigmoid(-detail::dot(doc, n));
    return loss;
}

inline NsGradient ns_gradient(std::span<const double> doc, std::span<const double> positive,
                              const std::vector<std::span<const double>>& negatives) {
    NsGradient g;
    const std::size_t dim = doc.size();
    g.d_doc.assign(dim, 0.0);
    g.d_words.reserve(negatives.size() + 1);
    auto accumulate = [&](std::span<const double> w, double label) {
        const double z = detail::dot(doc, w);
        g.loss -= detail::log_sigmoid(label > 0 ? z : -z);
        const double coeff = detail::sigmoid(z) - label;  // dL/dz
        std::vector<double> dw(dim);
        for (std::size_t i = 0; i < dim; ++i) {
            g.d_doc[i] += coeff * w[i];
            dw[i] = coeff * doc[i];
        }
        g.d_words.push_back(std::move(dw));
    };
    accumulate(positive, 1.0);
    for (auto n : negatives) accumulate(n, 0.0);
    return g;
}

/// Distributed bag-of-words document vectors trained with negative sampling.
/// `word_vectors` holds the output-layer vector of each vocabulary word.
struct EmbeddingModel {
    static constexpr int kSchemaVersion = 1;

    EmbeddingParams params;
    std::vector<std::string> words;
    std::vector<std::size_t> word_counts;
    std::vector<std::string> doc_tags;
    std::vector<double> doc_vectors;   // docs x dim, row-major
    std::vector<double> word_vectors;  // words x dim, row-major
    std::vector<double> epoch_loss;  // per-token objective on fixed negatives, after each epoch

    std::size_t dim() const { return params.dim; }
    std::size_t doc_count() const { return doc_tags.size(); }

    std::span<const double> doc_vector(std::size_t i) const {
        return {doc_vectors.data() + i * params.dim, params.dim};
    }
    std::span<const double> word_vector(std::size_t i) const {
        return {word_vectors.data() + i * params.dim, params.dim};
    }

    std::optional<std::size_t> word_index(std::string_view w) const {
        if (index_.empty() && !words.empty()) rebuild_index();
        auto it = index_.find(std::string(w));
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    std::optional<std::size_t> doc_index(std::string_view tag) const {
        for (std::size_t i = 0; i < doc_tags.size(); ++i)
            if (doc_tags[i] == tag) return i;
        return std::nullopt;
    }

    nlohmann::json to_json() const {
        return {{"schema_version", kSchemaVersion},
                {"kind", "doc_embedding"},
                {"stop_list", std::string(kStopListVersion)},
                {"params",
                 {{"dim", params.dim},
                  {"epochs", params.epochs},
                  {"learning_rate", params.learning_rate},
                  {"min_learning_rate", params.min_learning_rate},
                  {"negative", params.negative},
                  {"min_count", params.min_count},
                  {"infer_epochs", params.infer_epochs},
                  {"seed", params.seed}}},
                {"words", words},
                {"word_counts", word_counts},
                {"doc_tags", doc_tags},
                {"doc_vectors", doc_vectors},
                {"word_vectors", word_vectors},
                {"epoch_loss", epoch_loss}};
    }

    static EmbeddingModel from_json(const nlohmann::json& j) {
        if (j.value("schema_version", -1) != kSchemaVersion || j.value("kind", "") != "doc_embedding")
            throw Error("embedding schema_version mismatch");
        EmbeddingModel m;
        const auto& p = j.at("params");
        m.params.dim = p.at("dim").get<std::size_t>();
        m.params.epochs = p.at("epochs").get<std::size_t>();
        m.params.learning_rate = p.at("learning_rate").get<double>();
        m.params.min_learning_rate = p.at("min_learning_rate").get<double>();
        m.params.negative = p.at("negative").get<std::size_t>();
        m.params.min_count = p.at("min_count").get<std::size_t>();
        m.params.infer_epochs = p.at("infer_epochs").get<std::size_t>();
        m.params.seed = p.at("seed").get<std::uint64_t>();
        m.words = j.at("words").get<std::vector<std::string>>();
        m.word_counts = j.at("word_counts").get<std::vector<std::size_t>>();
        m.doc_tags = j.at("doc_tags").get<std::vector<std::string>>();
        m.doc_vectors = j.at("doc_vectors").get<std::vector<double>>();
        m.word_vectors = j.at("word_vectors").get<std::vector<double>>();
        m.epoch_loss = j.at("epoch_loss").get<std::vector<double>>();
        if (m.doc_vectors.size() != m.doc_tags.size() * m.params.dim ||
            m.word_vectors.size() != m.words.size() * m.params.dim)
            throw Error("embedding arrays do not match declared dimensions");
        for (double v : m.doc_vectors)
            if (!std::isfinite(v)) throw Error("embedding contains non-finite values");
        return m;
    }

    std::string hash() const { return sha256_hex(to_json().dump()); }

private:
    mutable std::unordered_map<std::string, std::size_t> index_;

    void rebuild_index() const {
        index_.clear();
        for (std::size_t i = 0; i < words.size(); ++i) index_.emplace(words[i], i);
    }
};

namespace detail {

/// Unigram^0.75 sampler over the model vocabulary.
class NegativeSampler {
public:
    explicit NegativeSampler(const std::vector<std::size_t>& counts) {
        cumulative_.reserve(counts.size());
        double acc = 0;
        for (auto c : counts) {
            acc += std::pow(double(c), 0.75);
            cumulative_.push_back(acc);
        }
    }

    std::size_t draw(Rng& rng) const {
        const double u = rng.uniform() * cumulative_.back();
        auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
        return std::min<std::size_t>(std::size_t(it - cumulative_.begin()), cumulative_.size() - 1);
    }

private:
    std::vector<double> cumulative_;
};

// One SGD step on (doc row, positive word); returns the loss.
// Word vectors are updated only when `words_out` is non-null (it must alias
// `words`).
inline double sgd_step(double* doc, const double* words, double* words_out, std::size_t dim, std::size_t positive,
                       std::size_t negative, const NegativeSampler& sampler, Rng& rng, double lr,
                       std::vector<double>& doc_grad) {
    std::fill(doc_grad.begin(), doc_grad.end(), 0.0);
    double loss = 0;
    auto apply = [&](std::size_t w, double label) {
        const double* u = words + w * dim;
        double z = 0;
        for (std::size_t i = 0; i < dim; ++i) z += doc[i] * u[i];
        loss -= log_sigmoid(label > 0 ? z : -z);
        const double coeff = sigmoid(z) - label;
        for (std::size_t i = 0; i < dim; ++i) doc_grad[i] += coeff * u[i];
        if (words_out) {
            double* out = words_out + w * dim;
            for (std::size_t i = 0; i < dim; ++i) out[i] -= lr * coeff * doc[i];
        }
    };
    apply(positive, 1.0);
    for (std::size_t k = 0; k < negative; ++k) {
        const std::size_t w = sampler.draw(rng);
        if (w == positive) continue;
        apply(w, 0.0);
    }
    for (std::size_t i = 0; i < dim; ++i) doc[i] -= lr * doc_grad[i];
    return loss;
}

inline std::vector<std::size_t> encode_words(const EmbeddingModel& m, std::string_view document) {
    std::vector<std::size_t> ids;
    for (const auto& t : tokenize(document))
        if (auto i = m.word_index(t)) ids.push_back(*i);
    return ids;
}

inline std::uint64_t text_seed(std::string_view text) {
    return std::stoull(sha256_hex(text).substr(0, 15), nullptr, 16);
}

// Summed negative-sampling loss over every (document, token) pair with the
// given negatives; collisions with the positive word are skipped.
inline double fixed_objective(const EmbeddingModel& m, const std::vector<std::vector<std::size_t>>& ids,
                              const std::vector<std::vector<std::size_t>>& negatives) {
    const std::size_t k = m.params.negative;
    double loss = 0;
    for (std::size_t d = 0; d < ids.size(); ++d) {
        const auto doc = m.doc_vector(d);
        for (std::size_t t = 0; t < ids[d].size(); ++t) {
            const auto pos = ids[d][t];
            loss -= log_sigmoid(dot(doc, m.word_vector(pos)));
            for (std::size_t n = 0; n < k; ++n) {
                const auto w = negatives[d][t * k + n];
                if (w == pos) continue;
                loss -= log_sigmoid(-dot(doc, m.word_vector(w)));
            }
        }
    }
    return loss;
}

}  // namespace detail

/// Trains document vectors for `documents` (tags default to their index).
/// Deterministic for a fixed seed: documents are visited in a seeded
/// per-epoch shuffle and the learning rate decays linearly.
inline EmbeddingModel train_doc_embeddings(const std::vector<std::string>& documents, EmbeddingParams params,
                                           std::vector<std::string> tags = {}) {
    if (params.dim < 2) throw Error("embedding dim must be >= 2");
    if (documents.empty()) throw Error("cannot train embeddings on an empty corpus");
    if (tags.empty())
        for (std::size_t i = 0; i < documents.size(); ++i) tags.push_back(std::to_string(i));
    if (tags.size() != documents.size()) throw Error("one tag per document required");

    EmbeddingModel m;
    m.params = params;
    m.doc_tags = std::move(tags);

    std::vector<std::vector<std::string>> tokenized;
    std::map<std::string, std::size_t> freq;
    for (const auto& d : documents) {
        tokenized.push_back(tokenize(d));
        for (const auto& t : tokenized.back()) ++freq[t];
    }
    for (const auto& [w, c] : freq)
        if (c >= params.min_count) {
            m.words.push_back(w);
            m.word_counts.push_back(c);
        }
    const std::size_t dim = params.dim;
    Rng init(derive_seed(params.seed, 0));
    m.doc_vectors.resize(documents.size() * dim);
    for (auto& v : m.doc_vectors) v = (init.uniform() - 0.5) / double(dim);
    m.word_vectors.assign(m.words.size() * dim, 0.0);
    if (m.words.empty()) return m;

    std::vector<std::vector<std::size_t>> ids(documents.size());
    std::size_t total_tokens = 0;
    for (std::size_t d = 0; d < documents.size(); ++d) {
        for (const auto& t : tokenized[d])
            if (auto i = m.word_index(t)) ids[d].push_back(*i);
        total_tokens += ids[d].size();
    }
    const detail::NegativeSampler sampler(m.word_counts);
    Rng rng(derive_seed(params.seed, 1));
    std::vector<std::size_t> order(documents.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<double> grad(dim);
    const double total_steps = double(std::max<std::size_t>(1, total_tokens * params.epochs));
    // Fixed negatives for the per-epoch objective, drawn once.
    std::vector<std::vector<std::size_t>> eval_negatives(documents.size());
    {
        Rng eval_rng(derive_seed(params.seed, 2));
        for (std::size_t d = 0; d < documents.size(); ++d)
            for (std::size_t k = 0; k < ids[d].size() * params.negative; ++k)
                eval_negatives[d].push_back(sampler.draw(eval_rng));
    }
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < params.epochs; ++epoch) {
        rng.shuffle(order);
        for (auto d : order) {
            double* doc = m.doc_vectors.data() + d * dim;
            for (auto w : ids[d]) {
                const double lr = std::max(params.min_learning_rate,
                                           params.learning_rate * (1.0 - double(step++) / total_steps));
                detail::sgd_step(doc, m.word_vectors.data(), m.word_vectors.data(), dim, w, params.negative, sampler,
                                 rng, lr, grad);
            }
        }
        m.epoch_loss.push_back(detail::fixed_objective(m, ids, eval_negatives) / double(std::max<std::size_t>(1, total_tokens)));
    }
    return m;
}

/// Fits a vector for an unseen document against frozen word vectors. The
/// start point and negative draws are seeded from the model seed and the
/// document text, so repeated calls agree. Empty documents map to zero.
inline std::vector<double> infer_doc_embedding(const EmbeddingModel& model, std::string_view document) {
    const std::size_t dim = model.params.dim;
    std::vector<double> doc(dim, 0.0);
    const auto ids = detail::encode_words(model, document);
    if (ids.empty() || model.words.empty()) return doc;
    Rng rng(derive_seed(model.params.seed, detail::text_seed(document)));
    for (auto& v : doc) v = (rng.uniform() - 0.5) / double(dim);
    const detail::NegativeSampler sampler(model.word_counts);
    std::vector<double> grad(dim);
    const std::size_t epochs = std::max<std::size_t>(1, model.params.infer_epochs);
    const double total = double(epochs * ids.size());
    std::size_t step = 0;
    for (std::size_t e = 0; e < epochs; ++e)
        for (auto w : ids) {
            const double lr = std::max(model.params.min_learning_rate,
                                       model.params.learning_rate * (1.0 - double(step++) / total));
            detail::sgd_step(doc.data(), model.word_vectors.data(), nullptr, dim, w, model.params.negative, sampler, rng,
                             lr, grad);
        }
    return doc;
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
    const double na = std::sqrt(detail::dot(a, a)), nb = std::sqrt(detail::dot(b, b));
    if (na == 0 || nb == 0) return 0;
    return detail::dot(a, b) / (na * nb);
}

}  // namespace forumscope
