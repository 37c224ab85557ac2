#pragma once

// Independent reference implementations used by the unit tests and the
// acceptance binary. None of these call into the code they check beyond
// tokenize(), whose output is their input.

#include <algorithm>
#include <cmath>
#include <map>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include "forumscope/common.hpp"
#include "forumscope/textfeat.hpp"

namespace oracle {

/// Leftmost non-overlapping CVE matches with a digit boundary after the
/// suffix, as (offset, uppercase id).
inline std::vector<std::pair<std::size_t, std::string>> cve_matches(const std::string& s) {
    static const std::regex re("cve-[0-9]{4}-[0-9]{4,7}(?![0-9])", std::regex::icase | std::regex::optimize);
    std::vector<std::pair<std::size_t, std::string>> out;
    for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it)
        out.push_back({std::size_t(it->position()), forumscope::to_upper(it->str())});
    return out;
}

/// The same matches found by walking the string one character at a time.
inline std::vector<std::pair<std::size_t, std::string>> cve_scan(const std::string& s) {
    auto digit = [&](std::size_t i) { return i < s.size() && s[i] >= '0' && s[i] <= '9'; };
    auto lower = [&](std::size_t i) { return i < s.size() ? char(s[i] | 0x20) : '\0'; };
    std::vector<std::pair<std::size_t, std::string>> out;
    std::size_t i = 0;
    while (i < s.size()) {
        bool ok = lower(i) == 'c' && lower(i + 1) == 'v' && lower(i + 2) == 'e' && i + 3 < s.size() && s[i + 3] == '-';
        std::size_t j = i + 4;
        for (int k = 0; ok && k < 4; ++k, ++j) ok = digit(j);
        ok = ok && j < s.size() && s[j] == '-';
        std::size_t run = 0;
        if (ok)
            while (digit(j + 1 + run)) ++run;
        if (ok && run >= 4 && run <= 7) {
            std::string id = "CVE-" + s.substr(i + 4, 4) + "-" + s.substr(j + 1, run);
            out.push_back({i, id});
            i = j + 1 + run;
        } else {
            ++i;
        }
    }
    return out;
}

/// Vocabulary by applying the three cut rules one at a time, then ranking.
/// Returns gram -> document frequency.
inline std::map<std::string, std::size_t> vocabulary(const std::vector<std::string>& docs,
                                                     const forumscope::VocabParams& p) {
    std::map<std::string, std::size_t> freq, df;
    for (const auto& d : docs) {
        const auto toks = forumscope::tokenize(d);
        std::set<std::string> seen;
        for (int n = p.ngram_min; n <= p.ngram_max; ++n)
            for (std::size_t i = 0; i + std::size_t(n) <= toks.size(); ++i) {
                std::string g;
                for (int k = 0; k < n; ++k) g += (k ? " " : "") + toks[i + std::size_t(k)];
                ++freq[g];
                seen.insert(g);
            }
        for (const auto& g : seen) ++df[g];
    }
    std::set<std::string> frequent, not_ubiquitous;
    for (const auto& [g, f] : freq)
        if (f >= p.min_count) frequent.insert(g);
    for (const auto& [g, f] : df)
        if (double(f) / double(docs.size()) <= p.max_doc_fraction) not_ubiquitous.insert(g);
    std::vector<std::pair<std::string, std::size_t>> both;
    for (const auto& g : frequent)
        if (not_ubiquitous.count(g)) both.push_back({g, freq[g]});
    std::sort(both.begin(), both.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    if (both.size() > p.max_vocab) both.resize(p.max_vocab);
    std::map<std::string, std::size_t> out;
    for (const auto& [g, f] : both) out[g] = df[g];
    return out;
}

/// Direct evaluation of count * (ln((1+N)/(1+df)) + 1), L2-normalized, as a
/// gram -> weight map over the grams present in `vocab`.
inline std::map<std::string, double> tfidf(const std::string& doc, const std::vector<std::string>& corpus,
                                           const std::set<std::string>& vocab, int nmin = 1, int nmax = 3) {
    auto grams_of = [&](const std::string& d) {
        const auto toks = forumscope::tokenize(d);
        std::vector<std::string> out;
        for (int n = nmin; n <= nmax; ++n)
            for (std::size_t i = 0; i + std::size_t(n) <= toks.size(); ++i) {
                std::string g;
                for (int k = 0; k < n; ++k) g += (k ? " " : "") + toks[i + std::size_t(k)];
                out.push_back(g);
            }
        return out;
    };
    std::map<std::string, double> counts;
    for (const auto& g : grams_of(doc))
        if (vocab.count(g)) counts[g] += 1;
    std::vector<std::set<std::string>> doc_sets;
    for (const auto& d : corpus) {
        const auto gs = grams_of(d);
        doc_sets.emplace_back(gs.begin(), gs.end());
    }
    const double N = double(corpus.size());
    double norm = 0;
    for (auto& [g, c] : counts) {
        double df = 0;
        for (const auto& s : doc_sets) df += s.count(g) ? 1 : 0;
        c *= std::log((1 + N) / (1 + df)) + 1;
        norm += c * c;
    }
    for (auto& [g, c] : counts) c /= std::sqrt(norm);
    return counts;
}

/// Gini of explicit counts.
inline double gini(const std::vector<double>& counts) {
    double n = 0, s = 0;
    for (double c : counts) n += c;
    for (double c : counts) s += (c / n) * (c / n);
    return 1 - s;
}

struct RootSplit {
    double gain = 0;
    int feature = -1;
    double threshold = 0;
};

/// Exhaustive root split over dense rows: every feature, every midpoint
/// between consecutive distinct values. Ties keep the first found (lowest
/// feature, then lowest threshold).
inline RootSplit best_root_split(const std::vector<std::vector<double>>& rows, const std::vector<int>& labels,
                                 std::size_t n_classes) {
    const std::size_t n = rows.size();
    std::vector<double> all(n_classes, 0);
    for (int l : labels) all[std::size_t(l)] += 1;
    const double parent = gini(all);
    RootSplit best;
    for (std::size_t f = 0; f < rows.front().size(); ++f) {
        std::set<double> values;
        for (const auto& r : rows) values.insert(r[f]);
        std::vector<double> sorted(values.begin(), values.end());
        for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
            const double thr = (sorted[i] + sorted[i + 1]) / 2;
            std::vector<double> left(n_classes, 0), right(n_classes, 0);
            for (std::size_t r = 0; r < n; ++r) (rows[r][f] <= thr ? left : right)[std::size_t(labels[r])] += 1;
            double nl = 0, nr = 0;
            for (double c : left) nl += c;
            for (double c : right) nr += c;
            const double gain = parent - (nl / double(n)) * gini(left) - (nr / double(n)) * gini(right);
            if (gain > best.gain + 1e-12) best = {gain, int(f), thr};
        }
    }
    return best;
}

struct HandMetrics {
    double accuracy;
    std::vector<double> precision, recall, f1;
    double macro_f1, weighted_recall;
};

/// Metrics from a confusion matrix written out term by term.
inline HandMetrics metrics(const std::vector<std::vector<double>>& m) {
    const std::size_t k = m.size();
    HandMetrics h{};
    double total = 0, trace = 0;
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            total += m[i][j];
            if (i == j) trace += m[i][j];
        }
    h.accuracy = trace / total;
    double wr = 0, mf = 0;
    for (std::size_t c = 0; c < k; ++c) {
        double row = 0, col = 0;
        for (std::size_t j = 0; j < k; ++j) row += m[c][j];
        for (std::size_t i = 0; i < k; ++i) col += m[i][c];
        const double p = col > 0 ? m[c][c] / col : 0, r = row > 0 ? m[c][c] / row : 0;
        const double f = p + r > 0 ? 2 * p * r / (p + r) : 0;
        h.precision.push_back(p);
        h.recall.push_back(r);
        h.f1.push_back(f);
        wr += r * row;
        mf += f;
    }
    h.weighted_recall = wr / total;
    h.macro_f1 = mf / double(k);
    return h;
}

/// Confusion matrices with metrics worked out by hand.
struct MetricsCase {
    std::vector<std::vector<std::size_t>> counts;
    double accuracy;
    std::vector<double> precision, recall, f1;
    std::vector<bool> precision_undefined;
};

inline std::vector<MetricsCase> hand_metric_cases() {
    return {
        {{{1, 1}, {0, 2}}, 0.75, {1.0, 2.0 / 3}, {0.5, 1.0}, {2.0 / 3, 0.8}, {false, false}},
        {{{3, 0, 0}, {0, 4, 0}, {0, 0, 5}}, 1.0, {1, 1, 1}, {1, 1, 1}, {1, 1, 1}, {false, false, false}},
        {{{7}}, 1.0, {1}, {1}, {1}, {false}},
        {{{5, 2, 1}, {1, 6, 3}, {0, 2, 8}},
         19.0 / 28,
         {5.0 / 6, 0.6, 2.0 / 3},
         {5.0 / 8, 0.6, 0.8},
         {5.0 / 7, 0.6, 8.0 / 11},
         {false, false, false}},
        {{{0, 3}, {0, 2}}, 0.4, {0.0, 0.4}, {0.0, 1.0}, {0.0, 4.0 / 7}, {true, false}},
    };
}

}  // namespace oracle
