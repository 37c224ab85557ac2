#pragma once

#include <cstdlib>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "forumscope/common.hpp"
#include "forumscope/corpus.hpp"
#include "forumscope/csv.hpp"

namespace forumscope {

struct CveMention {
    std::string cve_id;  // "CVE-YYYY-NNNN", uppercase
    std::string post_id;
    std::string thread_id;
    std::size_t char_offset = 0;  // byte offset into Post::clean_content

    friend auto operator<=>(const CveMention&, const CveMention&) = default;
};

struct PriceMention {
    double amount = 0;  // USD
    std::string post_id;
    std::string context;
};

inline constexpr std::size_t kMaxCveSuffixDigits = 7;

namespace detail {

inline bool is_digit(char c) { return c >= '0' && c <= '9'; }

// Length of a CVE id starting at pos (case-insensitive), 0 when none.
inline std::size_t cve_match_len(std::string_view s, std::size_t pos) {
    if (!iequals_at(s, pos, "cve-")) return 0;
    std::size_t p = pos + 4;
    for (int k = 0; k < 4; ++k, ++p)
        if (p >= s.size() || !is_digit(s[p])) return 0;
    if (p >= s.size() || s[p] != '-') return 0;
    ++p;
    std::size_t digits = 0;
    while (p + digits < s.size() && is_digit(s[p + digits])) ++digits;
    if (digits < 4 || digits > kMaxCveSuffixDigits) return 0;
    return p + digits - pos;
}

}  // namespace detail

/// Case-insensitive `cve-[0-9]{4}-[0-9]{4,7}` scan over the clean text. Every
/// non-overlapping occurrence is returned, repeated ids included.
inline std::vector<CveMention> extract_cve_mentions(const Post& post) {
    std::vector<CveMention> out;
    const std::string_view s = post.clean_content;
    for (std::size_t i = 0; i + 13 <= s.size();) {
        if (s[i] != 'c' && s[i] != 'C') {
            ++i;
            continue;
        }
        if (auto len = detail::cve_match_len(s, i)) {
            out.push_back({to_upper(s.substr(i, len)), post.post_id, post.thread_id, i});
            i += len;
        } else {
            ++i;
        }
    }
    return out;
}

inline std::vector<CveMention> extract_cve_mentions(const std::vector<Post>& posts) {
    std::vector<CveMention> out;
    for (const auto& p : posts) {
        auto m = extract_cve_mentions(p);
        out.insert(out.end(), m.begin(), m.end());
    }
    return out;
}

inline std::vector<CveMention> extract_cve_mentions(const std::vector<Thread>& threads) {
    std::vector<CveMention> out;
    for (const auto& t : threads) {
        auto m = extract_cve_mentions(t.posts);
        out.insert(out.end(), m.begin(), m.end());
    }
    return out;
}

/// Threads with at least one mention, each with its complete post list.
inline std::vector<Thread> filter_citing_threads(const std::vector<Thread>& threads,
                                                 const std::vector<CveMention>& mentions) {
    std::set<std::string, std::less<>> citing;
    for (const auto& m : mentions) citing.insert(m.thread_id);
    std::vector<Thread> out;
    for (const auto& t : threads)
        if (citing.count(t.thread_id)) out.push_back(t);
    return out;
}

inline std::set<std::string> unique_cves(const std::vector<CveMention>& mentions) {
    std::set<std::string> ids;
    for (const auto& m : mentions) ids.insert(m.cve_id);
    return ids;
}

// Price rule: a number is a price when a currency marker ("$", "usd",
// "dollars") is attached to it or stands within two whitespace tokens of it.
inline constexpr double kMinPriceUsd = 1.0;
inline constexpr double kMaxPriceUsd = 100000.0;
inline constexpr std::size_t kPriceMarkerWindow = 2;
inline constexpr std::size_t kPriceContextChars = 40;

namespace detail {

struct SpanToken {
    std::size_t begin = 0, end = 0;
    std::string core;  // lowercase, surrounding punctuation removed
};

inline std::vector<SpanToken> whitespace_tokens(std::string_view s) {
    std::vector<SpanToken> toks;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && is_space(s[i])) ++i;
        if (i >= s.size()) break;
        std::size_t j = i;
        while (j < s.size() && !is_space(s[j])) ++j;
        std::string_view w = s.substr(i, j - i);
        constexpr std::string_view lead = "([{\"'*~:", trail = ")]}\"'.,;:!?*~";
        while (!w.empty() && lead.find(w.front()) != std::string_view::npos) w.remove_prefix(1);
        while (!w.empty() && trail.find(w.back()) != std::string_view::npos) w.remove_suffix(1);
        toks.push_back({i, j, to_lower(w)});
        i = j;
    }
    return toks;
}

inline bool is_currency_marker(std::string_view core) {
    return core == "$" || core == "usd" || core == "dollars";
}

// Parses "1,234.50" or "1234" (entire string). Thousands groups must be exact.
inline bool parse_amount(std::string_view s, double& out) {
    if (s.empty() || !is_digit(s.front())) return false;
    std::string digits;
    std::size_t i = 0, lead = 0;
    while (i < s.size() && is_digit(s[i])) digits.push_back(s[i++]), ++lead;
    if (i < s.size() && s[i] == ',') {
        if (lead > 3) return false;
        while (i < s.size() && s[i] == ',') {
            if (i + 4 > s.size()) return false;
            for (std::size_t k = 1; k <= 3; ++k)
                if (!is_digit(s[i + k])) return false;
            digits.append(s.substr(i + 1, 3));
            i += 4;
            if (i < s.size() && is_digit(s[i])) return false;
        }
    }
    if (i < s.size() && s[i] == '.') {
        digits.push_back('.');
        ++i;
        if (i >= s.size()) return false;
        while (i < s.size() && is_digit(s[i])) digits.push_back(s[i++]);
    }
    if (i != s.size()) return false;
    out = std::strtod(digits.c_str(), nullptr);
    return true;
}

// Splits a token core into (amount, attached marker?).
inline bool numeric_core(std::string_view core, double& amount, bool& attached) {
    attached = false;
    for (std::string_view pre : {"us$", "$"}) {
        if (core.substr(0, pre.size()) == pre) {
            core.remove_prefix(pre.size());
            attached = true;
            break;
        }
    }
    if (!attached) {
        for (std::string_view suf : {"dollars", "usd", "$"}) {
            if (core.size() > suf.size() && core.substr(core.size() - suf.size()) == suf) {
                core.remove_suffix(suf.size());
                attached = true;
                break;
            }
        }
    }
    return parse_amount(core, amount);
}

inline std::string utf8_safe_slice(std::string_view s, std::size_t begin, std::size_t end) {
    auto cont = [&](std::size_t i) { return i < s.size() && (static_cast<unsigned char>(s[i]) & 0xC0) == 0x80; };
    while (begin > 0 && cont(begin)) --begin;
    while (end < s.size() && cont(end)) ++end;
    return std::string(s.substr(begin, end - begin));
}

}  // namespace detail

inline std::vector<PriceMention> extract_price_mentions(const Post& post) {
    std::vector<PriceMention> out;
    const std::string_view s = post.clean_content;
    const auto toks = detail::whitespace_tokens(s);
    for (std::size_t i = 0; i < toks.size(); ++i) {
        double amount = 0;
        bool attached = false;
        if (!detail::numeric_core(toks[i].core, amount, attached)) continue;
        bool priced = attached;
        const std::size_t lo = i >= kPriceMarkerWindow ? i - kPriceMarkerWindow : 0;
        const std::size_t hi = std::min(toks.size() - 1, i + kPriceMarkerWindow);
        for (std::size_t j = lo; j <= hi && !priced; ++j)
            if (j != i && detail::is_currency_marker(toks[j].core)) priced = true;
        if (!priced || amount < kMinPriceUsd || amount > kMaxPriceUsd) continue;
        const std::size_t cb = toks[i].begin > kPriceContextChars ? toks[i].begin - kPriceContextChars : 0;
        const std::size_t ce = std::min(s.size(), toks[i].end + kPriceContextChars);
        out.push_back({amount, post.post_id, detail::utf8_safe_slice(s, cb, ce)});
    }
    return out;
}

inline std::vector<PriceMention> extract_price_mentions(const std::vector<Post>& posts) {
    std::vector<PriceMention> out;
    for (const auto& p : posts) {
        auto m = extract_price_mentions(p);
        out.insert(out.end(), m.begin(), m.end());
    }
    return out;
}

inline void write_mentions_csv(std::ostream& out, const std::vector<CveMention>& mentions) {
    out << "cve_id,post_id,thread_id,char_offset\n";
    for (const auto& m : mentions)
        csv::write_row(out, {m.cve_id, m.post_id, m.thread_id, std::to_string(m.char_offset)});
}

inline std::vector<CveMention> read_mentions_csv(std::istream& in) {
    csv::Reader reader(in);
    csv::Record rec;
    std::vector<CveMention> out;
    if (!reader.next(rec)) return out;
    const csv::Header h(rec.fields);
    const auto id = h.index("cve_id"), post = h.index("post_id"), thread = h.index("thread_id"),
               off = h.index("char_offset");
    while (reader.next(rec)) {
        if (rec.fields.size() != h.size()) throw Error("malformed mention row at line " + std::to_string(rec.line));
        out.push_back({rec.fields[id], rec.fields[post], rec.fields[thread],
                       std::size_t(std::strtoull(rec.fields[off].c_str(), nullptr, 10))});
    }
    return out;
}

inline void write_prices_csv(std::ostream& out, const std::vector<PriceMention>& prices) {
    out << "amount_usd,post_id,context\n";
    for (const auto& p : prices) csv::write_row(out, {fmt_double(p.amount, 2), p.post_id, p.context});
}

inline std::vector<PriceMention> read_prices_csv(std::istream& in) {
    csv::Reader reader(in);
    csv::Record rec;
    std::vector<PriceMention> out;
    if (!reader.next(rec)) return out;
    const csv::Header h(rec.fields);
    const auto amt = h.index("amount_usd"), post = h.index("post_id"), ctx = h.index("context");
    while (reader.next(rec)) {
        if (rec.fields.size() != h.size()) throw Error("malformed price row at line " + std::to_string(rec.line));
        out.push_back({std::strtod(rec.fields[amt].c_str(), nullptr), rec.fields[post], rec.fields[ctx]});
    }
    return out;
}

}  // namespace forumscope
