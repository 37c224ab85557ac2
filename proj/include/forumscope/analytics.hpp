#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "forumscope/common.hpp"
#include "forumscope/corpus.hpp"
#include "forumscope/csv.hpp"
#include "forumscope/cve_extract.hpp"
#include "forumscope/dataset.hpp"
#include "forumscope/enrich.hpp"
#include "forumscope/textfeat.hpp"

namespace forumscope {

/// Shortest round-trip-safe text for a sample value (integers print bare).
inline std::string fmt_value(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v == 0 ? 0.0 : v);
    return buf;
}

struct CdfSummary {
    double min = 0, median = 0, max = 0;
    std::size_t count = 0;
};

/// Right-continuous step function: fractions[i] = #(samples <= values[i]) / n.
struct CdfSeries {
    std::string name;
    std::vector<double> values;  // distinct, ascending
    std::vector<double> fractions;
    CdfSummary summary;
};

/// Median is the lower-middle element for an even sample count.
inline CdfSeries empirical_cdf(std::vector<double> samples, std::string name = {}) {
    if (samples.empty()) throw Error("empirical_cdf needs at least one sample", "report");
    std::sort(samples.begin(), samples.end());
    CdfSeries s;
    s.name = std::move(name);
    const double n = double(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (i + 1 < samples.size() && samples[i + 1] == samples[i]) continue;
        s.values.push_back(samples[i]);
        s.fractions.push_back(i + 1 == samples.size() ? 1.0 : double(i + 1) / n);
    }
    s.summary = {samples.front(), samples[(samples.size() - 1) / 2], samples.back(), samples.size()};
    return s;
}

inline CdfSeries price_cdf(const std::vector<PriceMention>& prices) {
    std::vector<double> v;
    for (const auto& p : prices) v.push_back(p.amount);
    if (v.empty()) throw Error("no price mentions to summarise", "report");
    return empirical_cdf(std::move(v), "prices");
}

inline CdfSeries delay_cdf(const std::vector<DelayRecord>& delays) {
    std::vector<double> v;
    for (const auto& d : delays) v.push_back(double(d.post_age_days));
    if (v.empty()) throw Error("no delay records to summarise", "report");
    return empirical_cdf(std::move(v), "delays");
}

/// Externally published summary statistics, echoed as-is next to computed
/// series.
struct OverlaySummary {
    std::string name;
    double min = 0, median = 0, max = 0;
};

/// CSV `name,min,median,max`.
inline std::vector<OverlaySummary> load_overlay(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open overlay file " + path.string(), "report");
    csv::Reader reader(in, '#');
    csv::Record rec;
    if (!reader.next(rec)) throw Error("overlay file " + path.string() + " is empty", "report");
    const csv::Header header(rec.fields);
    const auto ci = header.index("name"), lo = header.index("min"), me = header.index("median"),
               hi = header.index("max");
    std::vector<OverlaySummary> out;
    while (reader.next(rec)) {
        if (rec.fields.size() != header.size())
            throw Error("overlay line " + std::to_string(rec.line) + ": expected " + std::to_string(header.size()) +
                            " fields",
                        "report");
        OverlaySummary o;
        o.name = rec.fields[ci];
        auto num = [&](std::size_t i) {
            const auto& f = rec.fields[i];
            char* end = nullptr;
            const double v = std::strtod(f.c_str(), &end);
            if (f.empty() || end != f.c_str() + f.size())
                throw Error("overlay line " + std::to_string(rec.line) + ": '" + f + "' is not a number", "report");
            return v;
        };
        o.min = num(lo);
        o.median = num(me);
        o.max = num(hi);
        if (!(o.min <= o.median && o.median <= o.max))
            throw Error("overlay line " + std::to_string(rec.line) + ": expected min <= median <= max", "report");
        out.push_back(std::move(o));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Score distributions

enum class DedupMode { citation, distinct };

inline const char* dedup_mode_name(DedupMode m) { return m == DedupMode::citation ? "citation" : "distinct"; }

inline DedupMode parse_dedup_mode(std::string_view s) {
    const auto n = to_lower(s);
    if (n == "citation" || n == "a") return DedupMode::citation;
    if (n == "distinct" || n == "b") return DedupMode::distinct;
    throw Error("unknown dedup mode '" + std::string(s) + "'");
}

struct Quartiles {
    double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};

namespace detail {

inline double median_sorted(const double* v, std::size_t n) {
    return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

}  // namespace detail

/// Tukey hinges: q1/q3 are medians of the lower/upper halves, each half
/// including the middle element when the count is odd.
inline Quartiles tukey_quartiles(std::vector<double> v) {
    if (v.empty()) throw Error("quartiles need at least one sample");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    const std::size_t half = (n + 1) / 2;
    return {v.front(), detail::median_sorted(v.data(), half), detail::median_sorted(v.data(), n),
            detail::median_sorted(v.data() + (n - half), half), v.back()};
}

struct BoxplotSummary {
    std::string group;  // class label or "All"
    ScoreKind score = ScoreKind::cvss_v2;
    DedupMode mode = DedupMode::citation;
    std::size_t count = 0;
    std::size_t skipped = 0;  // citations or CVEs without the requested score
    std::optional<Quartiles> stats;  // absent when count == 0
};

inline const std::vector<std::string>& score_groups() {
    static const std::vector<std::string> g{"PoC", "Weaponization", "Exploitation", "All"};
    return g;
}

namespace detail {

// Per group, the (cve_id, score) samples; mode B keeps the first occurrence
// of each CVE.
inline std::vector<std::vector<std::pair<std::string, std::optional<double>>>> group_samples(
    const std::vector<MentionScore>& scores, const LabelMap& labels, ScoreKind kind, DedupMode mode) {
    std::vector<std::vector<std::pair<std::string, std::optional<double>>>> out(4);
    std::vector<std::set<std::string>> seen(4);
    for (const auto& s : scores) {
        auto l = labels.find(s.thread_id);
        if (l == labels.end() || !in_scope(l->second)) continue;
        std::optional<double> v;
        switch (kind) {
            case ScoreKind::cvss_v2: v = s.cvss_v2; break;
            case ScoreKind::cvss_v31: v = s.cvss_v31; break;
            case ScoreKind::epss: v = s.epss; break;
        }
        for (std::size_t g : {std::size_t(l->second), std::size_t(3)}) {
            if (mode == DedupMode::distinct && !seen[g].insert(s.cve_id).second) continue;
            out[g].push_back({s.cve_id, v});
        }
    }
    return out;
}

}  // namespace detail

/// One summary per class plus "All" (the union of the three classes).
inline std::vector<BoxplotSummary> score_distribution(const std::vector<MentionScore>& scores, const LabelMap& labels,
                                                      ScoreKind kind, DedupMode mode) {
    const auto groups = detail::group_samples(scores, labels, kind, mode);
    std::vector<BoxplotSummary> out;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        BoxplotSummary b;
        b.group = score_groups()[g];
        b.score = kind;
        b.mode = mode;
        std::vector<double> v;
        for (const auto& [id, s] : groups[g]) {
            if (s)
                v.push_back(*s);
            else
                ++b.skipped;
        }
        b.count = v.size();
        if (!v.empty()) b.stats = tukey_quartiles(std::move(v));
        out.push_back(std::move(b));
    }
    return out;
}

inline std::vector<BoxplotSummary> score_distribution(const std::vector<MentionScore>& scores, const LabelMap& labels,
                                                      std::string_view kind, DedupMode mode) {
    return score_distribution(scores, labels, parse_score_kind(kind), mode);
}

/// Fraction of citations whose score is strictly above `global_mean`.
/// Citations lacking the score are left out of numerator and denominator.
inline double share_above_global_mean(const std::vector<MentionScore>& scores, ScoreKind kind, double global_mean) {
    std::size_t n = 0, above = 0;
    for (const auto& s : scores) {
        std::optional<double> v;
        switch (kind) {
            case ScoreKind::cvss_v2: v = s.cvss_v2; break;
            case ScoreKind::cvss_v31: v = s.cvss_v31; break;
            case ScoreKind::epss: v = s.epss; break;
        }
        if (!v) continue;
        ++n;
        if (*v > global_mean) ++above;
    }
    if (!n) throw Error(std::string("no citations carry a ") + score_kind_name(kind) + " score", "report");
    return double(above) / double(n);
}

// ---------------------------------------------------------------------------
// Keywords and boards

struct KeywordFrequency {
    std::string group;
    std::vector<std::pair<std::string, std::size_t>> grams;  // count desc, ties lexicographic
};

inline std::vector<std::pair<std::string, std::size_t>> top_grams(const std::map<std::string, std::size_t>& counts,
                                                                  std::size_t top_k) {
    std::vector<std::pair<std::string, std::size_t>> v(counts.begin(), counts.end());
    std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    if (v.size() > top_k) v.resize(top_k);
    return v;
}

/// Unigram counts over thread documents, per in-scope class and "All".
inline std::vector<KeywordFrequency> keyword_frequencies(const std::vector<Thread>& threads, const LabelMap& labels,
                                                         std::size_t top_k) {
    std::vector<std::map<std::string, std::size_t>> counts(4);
    for (const auto& t : threads) {
        auto l = labels.find(t.thread_id);
        if (l == labels.end() || !in_scope(l->second)) continue;
        for (const auto& tok : tokenize(t.document)) {
            ++counts[std::size_t(l->second)][tok];
            ++counts[3][tok];
        }
    }
    std::vector<KeywordFrequency> out;
    for (std::size_t g = 0; g < 4; ++g) out.push_back({score_groups()[g], top_grams(counts[g], top_k)});
    return out;
}

struct BoardCount {
    std::string forum, board;
    std::size_t threads = 0, posts = 0;
};

/// Thread and post counts per (forum, board), sorted by thread count desc.
inline std::vector<BoardCount> board_breakdown(const std::vector<Thread>& threads) {
    std::map<std::pair<std::string, std::string>, BoardCount> m;
    for (const auto& t : threads) {
        auto& b = m[{t.forum, t.board}];
        b.forum = t.forum;
        b.board = t.board;
        ++b.threads;
        b.posts += t.posts.size();
    }
    std::vector<BoardCount> out;
    for (auto& [k, v] : m) out.push_back(v);
    std::stable_sort(out.begin(), out.end(), [](const BoardCount& a, const BoardCount& b) { return a.threads > b.threads; });
    return out;
}

// ---------------------------------------------------------------------------
// CSV output

inline void write_cdf_csv(std::ostream& out, const CdfSeries& s) {
    out << "value,fraction\n";
    for (std::size_t i = 0; i < s.values.size(); ++i) out << fmt_value(s.values[i]) << ',' << fmt_double(s.fractions[i], 6) << '\n';
}

/// Computed summaries followed by overlay rows (source = "overlay").
inline void write_cdf_summary_csv(std::ostream& out, const std::vector<CdfSeries>& series,
                                  const std::vector<OverlaySummary>& overlay) {
    out << "name,source,min,median,max,count\n";
    for (const auto& s : series)
        csv::write_row(out, {s.name, "computed", fmt_value(s.summary.min), fmt_value(s.summary.median),
                             fmt_value(s.summary.max), std::to_string(s.summary.count)});
    for (const auto& o : overlay)
        csv::write_row(out, {o.name, "overlay", fmt_value(o.min), fmt_value(o.median), fmt_value(o.max), ""});
}

inline void write_boxplot_csv(std::ostream& out, const std::vector<BoxplotSummary>& rows) {
    out << "# quartiles: Tukey hinges (median of lower/upper halves, middle element in both halves for odd n)\n";
    out << "group,score,mode,count,skipped,min,q1,median,q3,max\n";
    for (const auto& b : rows) {
        std::vector<std::string> cells{b.group, score_kind_name(b.score), dedup_mode_name(b.mode),
                                       std::to_string(b.count), std::to_string(b.skipped)};
        for (auto v : {&Quartiles::min, &Quartiles::q1, &Quartiles::median, &Quartiles::q3, &Quartiles::max})
            cells.push_back(b.stats ? fmt_value((*b.stats).*v) : std::string{});
        csv::write_row(out, cells);
    }
}

inline void write_keywords_csv(std::ostream& out, const KeywordFrequency& k) {
    out << "gram,count\n";
    for (const auto& [g, c] : k.grams) csv::write_row(out, {g, std::to_string(c)});
}

inline void write_boards_csv(std::ostream& out, const std::vector<BoardCount>& rows) {
    out << "forum,board,threads,posts\n";
    for (const auto& b : rows) csv::write_row(out, {b.forum, b.board, std::to_string(b.threads), std::to_string(b.posts)});
}

}  // namespace forumscope
