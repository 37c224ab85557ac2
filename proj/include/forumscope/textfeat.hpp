#pragma once

#include <algorithm>
#include <cmath>
#include <future>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "forumscope/common.hpp"
#include "forumscope/hash.hpp"

namespace forumscope {

inline constexpr std::string_view kStopListVersion = "en-sklearn-318-v1";

/// Frozen English stop list. Changing it changes every vocabulary hash, so
/// bump kStopListVersion with it.
inline const std::unordered_set<std::string_view>& stop_words() {
    static const std::unordered_set<std::string_view> words{
        "a", "about", "above", "across", "after", "afterwards", "again", "against", "all", "almost", "alone",
        "along", "already", "also", "although", "always", "am", "among", "amongst", "amoungst", "amount", "an",
        "and", "another", "any", "anyhow", "anyone", "anything", "anyway", "anywhere", "are", "around", "as",
        "at", "back", "be", "became", "because", "become", "becomes", "becoming", "been", "before", "beforehand",
        "behind", "being", "below", "beside", "besides", "between", "beyond", "bill", "both", "bottom", "but",
        "by", "call", "can", "cannot", "cant", "co", "con", "could", "couldnt", "cry", "de", "describe",
        "detail", "do", "done", "down", "due", "during", "each", "eg", "eight", "either", "eleven", "else",
        "elsewhere", "empty", "enough", "etc", "even", "ever", "every", "everyone", "everything", "everywhere",
        "except", "few", "fifteen", "fifty", "fill", "find", "fire", "first", "five", "for", "former",
        "formerly", "forty", "found", "four", "from", "front", "full", "further", "get", "give", "go", "had",
        "has", "hasnt", "have", "he", "hence", "her", "here", "hereafter", "hereby", "herein", "hereupon",
        "hers", "herself", "him", "himself", "his", "how", "however", "hundred", "i", "ie", "if", "in", "inc",
        "indeed", "interest", "into", "is", "it", "its", "itself", "keep", "last", "latter", "latterly", "least",
        "less", "ltd", "made", "many", "may", "me", "meanwhile", "might", "mill", "mine", "more", "moreover",
        "most", "mostly", "move", "much", "must", "my", "myself", "name", "namely", "neither", "never",
        "nevertheless", "next", "nine", "no", "nobody", "none", "noone", "nor", "not", "nothing", "now",
        "nowhere", "of", "off", "often", "on", "once", "one", "only", "onto", "or", "other", "others",
        "otherwise", "our", "ours", "ourselves", "out", "over", "own", "part", "per", "perhaps", "please", "put",
        "rather", "re", "same", "see", "seem", "seemed", "seeming", "seems", "serious", "several", "she",
        "should", "show", "side", "since", "sincere", "six", "sixty", "so", "some", "somehow", "someone",
        "something", "sometime", "sometimes", "somewhere", "still", "such", "system", "take", "ten", "than",
        "that", "the", "their", "them", "themselves", "then", "thence", "there", "thereafter", "thereby",
        "therefore", "therein", "thereupon", "these", "they", "thick", "thin", "third", "this", "those",
        "though", "three", "through", "throughout", "thru", "thus", "to", "together", "too", "top", "toward",
        "towards", "twelve", "twenty", "two", "un", "under", "until", "up", "upon", "us", "very", "via", "was",
        "we", "well", "were", "what", "whatever", "when", "whence", "whenever", "where", "whereafter", "whereas",
        "whereby", "wherein", "whereupon", "wherever", "whether", "which", "while", "whither", "who", "whoever",
        "whole", "whom", "whose", "why", "will", "with", "within", "without", "would", "yet", "you", "your",
        "yours", "yourself", "yourselves"
    };
    return words;
}

inline bool is_stop_word(std::string_view w) { return stop_words().count(w) > 0; }

namespace detail {

// ASCII letters/digits/underscore, plus any non-ASCII byte so UTF-8 words
// stay whole.
inline bool is_word_byte(unsigned char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c >= 0x80;
}

}  // namespace detail

/// Lowercased runs of two or more word characters, stop words removed.
inline std::vector<std::string> tokenize(std::string_view document) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < document.size()) {
        while (i < document.size() && !detail::is_word_byte(static_cast<unsigned char>(document[i]))) ++i;
        std::size_t j = i;
        while (j < document.size() && detail::is_word_byte(static_cast<unsigned char>(document[j]))) ++j;
        if (j - i >= 2) {
            auto tok = to_lower(document.substr(i, j - i));
            if (!is_stop_word(tok)) out.push_back(std::move(tok));
        }
        i = j;
    }
    return out;
}

/// Contiguous n-grams for n in [nmin, nmax], grouped by n, each group in
/// document order.
inline std::vector<std::string> ngrams(const std::vector<std::string>& tokens, int nmin = 1, int nmax = 3) {
    if (nmin < 1 || nmin > nmax) throw Error("invalid n-gram range [" + std::to_string(nmin) + "," + std::to_string(nmax) + "]");
    std::vector<std::string> out;
    for (int n = nmin; n <= nmax; ++n) {
        if (tokens.size() < std::size_t(n)) break;
        for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
            std::string g = tokens[i];
            for (int k = 1; k < n; ++k) {
                g += ' ';
                g += tokens[i + k];
            }
            out.push_back(std::move(g));
        }
    }
    return out;
}

struct VocabParams {
    std::size_t max_vocab = 30000;
    std::size_t min_count = 5;
    double max_doc_fraction = 0.90;
    int ngram_min = 1;
    int ngram_max = 3;

    friend bool operator==(const VocabParams&, const VocabParams&) = default;
};

/// Kept grams with their document frequencies. Index order is lexicographic
/// over the kept grams.
class Vocabulary {
public:
    static constexpr int kSchemaVersion = 1;

    Vocabulary() = default;

    Vocabulary(VocabParams params, std::vector<std::string> terms, std::vector<std::size_t> doc_freq,
               std::vector<std::size_t> corpus_freq, std::size_t total_docs)
        : params_(params), terms_(std::move(terms)), doc_freq_(std::move(doc_freq)),
          corpus_freq_(std::move(corpus_freq)), total_docs_(total_docs) {
        if (terms_.size() != doc_freq_.size() || terms_.size() != corpus_freq_.size())
            throw Error("vocabulary arrays disagree in length");
        index_.reserve(terms_.size());
        for (std::size_t i = 0; i < terms_.size(); ++i)
            if (!index_.emplace(terms_[i], i).second) throw Error("duplicate vocabulary term '" + terms_[i] + "'");
    }

    std::size_t size() const { return terms_.size(); }
    bool empty() const { return terms_.empty(); }
    const VocabParams& params() const { return params_; }
    const std::vector<std::string>& terms() const { return terms_; }
    const std::string& term(std::size_t i) const { return terms_.at(i); }
    std::size_t doc_freq(std::size_t i) const { return doc_freq_.at(i); }
    std::size_t corpus_freq(std::size_t i) const { return corpus_freq_.at(i); }
    std::size_t total_docs() const { return total_docs_; }

    std::optional<std::size_t> find(std::string_view gram) const {
        auto it = index_.find(std::string(gram));
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    /// Smoothed inverse document frequency: ln((1 + N) / (1 + df)) + 1.
    double idf(std::size_t i) const {
        return std::log((1.0 + double(total_docs_)) / (1.0 + double(doc_freq_.at(i)))) + 1.0;
    }

    nlohmann::json to_json() const {
        return {{"schema_version", kSchemaVersion},
                {"kind", "vocabulary"},
                {"stop_list", std::string(kStopListVersion)},
                {"params",
                 {{"max_vocab", params_.max_vocab},
                  {"min_count", params_.min_count},
                  {"max_doc_fraction", params_.max_doc_fraction},
                  {"ngram_min", params_.ngram_min},
                  {"ngram_max", params_.ngram_max}}},
                {"total_docs", total_docs_},
                {"terms", terms_},
                {"doc_freq", doc_freq_},
                {"corpus_freq", corpus_freq_}};
    }

    static Vocabulary from_json(const nlohmann::json& j) {
        if (j.value("schema_version", -1) != kSchemaVersion || j.value("kind", "") != "vocabulary")
            throw Error("vocabulary schema_version mismatch");
        if (j.value("stop_list", "") != kStopListVersion) throw Error("vocabulary built with a different stop list");
        const auto& p = j.at("params");
        VocabParams params{p.at("max_vocab").get<std::size_t>(), p.at("min_count").get<std::size_t>(),
                           p.at("max_doc_fraction").get<double>(), p.at("ngram_min").get<int>(),
                           p.at("ngram_max").get<int>()};
        return Vocabulary(params, j.at("terms").get<std::vector<std::string>>(),
                          j.at("doc_freq").get<std::vector<std::size_t>>(),
                          j.at("corpus_freq").get<std::vector<std::size_t>>(), j.at("total_docs").get<std::size_t>());
    }

    std::string hash() const { return sha256_hex(to_json().dump()); }

private:
    VocabParams params_;
    std::vector<std::string> terms_;
    std::vector<std::size_t> doc_freq_;
    std::vector<std::size_t> corpus_freq_;
    std::size_t total_docs_ = 0;
    std::unordered_map<std::string, std::size_t> index_;
};

namespace detail {

struct GramCounts {
    std::unordered_map<std::string, std::size_t> corpus;
    std::unordered_map<std::string, std::size_t> docs;
};

inline GramCounts count_grams(const std::vector<std::string>& documents, std::size_t begin, std::size_t end,
                              const VocabParams& p) {
    GramCounts c;
    for (std::size_t d = begin; d < end; ++d) {
        auto grams = ngrams(tokenize(documents[d]), p.ngram_min, p.ngram_max);
        std::unordered_set<std::string_view> seen;
        for (const auto& g : grams) ++c.corpus[g];
        for (const auto& g : grams)
            if (seen.insert(g).second) ++c.docs[g];
    }
    return c;
}

}  // namespace detail

/// Counts grams across documents (parallel map over chunks, single reduce),
/// then applies the three cuts: corpus frequency >= min_count, document
/// fraction <= max_doc_fraction, and the max_vocab most frequent (ties by
/// gram).
inline Vocabulary build_vocabulary(const std::vector<std::string>& documents, const VocabParams& params = {}) {
    if (params.ngram_min < 1 || params.ngram_min > params.ngram_max) throw Error("invalid n-gram range");
    const std::size_t n = documents.size();
    const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(std::thread::hardware_concurrency(), n / 64));
    std::vector<std::future<detail::GramCounts>> parts;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t b = n * w / workers, e = n * (w + 1) / workers;
        parts.push_back(std::async(workers > 1 ? std::launch::async : std::launch::deferred, detail::count_grams,
                                   std::cref(documents), b, e, std::cref(params)));
    }
    detail::GramCounts total;
    for (auto& f : parts) {
        auto c = f.get();
        if (total.corpus.empty()) {
            total = std::move(c);
            continue;
        }
        for (auto& [g, k] : c.corpus) total.corpus[g] += k;
        for (auto& [g, k] : c.docs) total.docs[g] += k;
    }

    struct Cand {
        const std::string* gram;
        std::size_t freq, df;
    };
    std::vector<Cand> kept;
    for (const auto& [g, freq] : total.corpus) {
        const std::size_t df = total.docs[g];
        if (freq < params.min_count) continue;
        if (double(df) > params.max_doc_fraction * double(n)) continue;
        kept.push_back({&g, freq, df});
    }
    std::sort(kept.begin(), kept.end(), [](const Cand& a, const Cand& b) {
        if (a.freq != b.freq) return a.freq > b.freq;
        return *a.gram < *b.gram;
    });
    if (kept.size() > params.max_vocab) kept.resize(params.max_vocab);
    std::sort(kept.begin(), kept.end(), [](const Cand& a, const Cand& b) { return *a.gram < *b.gram; });

    std::vector<std::string> terms;
    std::vector<std::size_t> df, cf;
    for (const auto& c : kept) {
        terms.push_back(*c.gram);
        df.push_back(c.df);
        cf.push_back(c.freq);
    }
    return Vocabulary(params, std::move(terms), std::move(df), std::move(cf), n);
}

/// Sorted-index sparse vector; stored values are nonzero.
struct SparseVector {
    std::vector<std::uint32_t> indices;
    std::vector<double> values;

    std::size_t nnz() const { return indices.size(); }
    bool empty() const { return indices.empty(); }

    double at(std::uint32_t index) const {
        auto it = std::lower_bound(indices.begin(), indices.end(), index);
        if (it == indices.end() || *it != index) return 0.0;
        return values[std::size_t(it - indices.begin())];
    }

    std::vector<double> dense(std::size_t dim) const {
        std::vector<double> out(dim, 0.0);
        for (std::size_t i = 0; i < indices.size(); ++i) out.at(indices[i]) = values[i];
        return out;
    }

    static SparseVector from_dense(const std::vector<double>& v) {
        SparseVector s;
        for (std::size_t i = 0; i < v.size(); ++i)
            if (v[i] != 0.0) {
                s.indices.push_back(std::uint32_t(i));
                s.values.push_back(v[i]);
            }
        return s;
    }

    friend bool operator==(const SparseVector&, const SparseVector&) = default;
};

/// "index:value index:value ..." with round-trip precision.
inline std::string to_sparse_text(const SparseVector& v) {
    std::string out;
    char buf[64];
    for (std::size_t i = 0; i < v.indices.size(); ++i) {
        if (i) out.push_back(' ');
        std::snprintf(buf, sizeof buf, "%u:%.17g", v.indices[i], v.values[i]);
        out += buf;
    }
    return out;
}

inline SparseVector parse_sparse_text(std::string_view text) {
    SparseVector v;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && text[i] == ' ') ++i;
        if (i >= text.size()) break;
        std::size_t j = text.find(' ', i);
        if (j == std::string_view::npos) j = text.size();
        const std::string item(text.substr(i, j - i));
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw Error("malformed sparse entry '" + item + "'");
        const auto idx = std::strtoul(item.c_str(), nullptr, 10);
        if (!v.indices.empty() && idx <= v.indices.back()) throw Error("sparse indices not ascending");
        v.indices.push_back(std::uint32_t(idx));
        v.values.push_back(std::strtod(item.c_str() + colon + 1, nullptr));
        i = j;
    }
    return v;
}

namespace detail {

inline std::map<std::size_t, double> vocab_counts(std::string_view document, const Vocabulary& vocab) {
    std::map<std::size_t, double> counts;
    const auto& p = vocab.params();
    for (const auto& g : ngrams(tokenize(document), p.ngram_min, p.ngram_max))
        if (auto idx = vocab.find(g)) counts[*idx] += 1.0;
    return counts;
}

}  // namespace detail

/// Raw gram counts restricted to the vocabulary.
inline SparseVector bow_vector(std::string_view document, const Vocabulary& vocab) {
    SparseVector v;
    for (const auto& [idx, c] : detail::vocab_counts(document, vocab)) {
        v.indices.push_back(std::uint32_t(idx));
        v.values.push_back(c);
    }
    return v;
}

/// count * (ln((1+N)/(1+df)) + 1), L2-normalized.
inline SparseVector tfidf_vector(std::string_view document, const Vocabulary& vocab) {
    SparseVector v;
    double norm2 = 0;
    for (const auto& [idx, c] : detail::vocab_counts(document, vocab)) {
        const double w = c * vocab.idf(idx);
        v.indices.push_back(std::uint32_t(idx));
        v.values.push_back(w);
        norm2 += w * w;
    }
    if (norm2 > 0) {
        const double inv = 1.0 / std::sqrt(norm2);
        for (auto& x : v.values) x *= inv;
    }
    return v;
}

}  // namespace forumscope
