#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "forumscope/common.hpp"
#include "forumscope/csv.hpp"

namespace forumscope {

struct Post {
    std::string post_id;
    std::string thread_id;
    std::string board;
    std::string forum;
    std::string author;
    DateTime created_at;
    std::string subject;
    std::string raw_content;
    std::string clean_content;
};

/// Posts of one thread in chronological order, plus the document the
/// featurizers consume: title, newline, then each post's clean text.
struct Thread {
    std::string thread_id;
    std::string title;
    std::string board;
    std::string forum;
    std::vector<Post> posts;
    std::string document;
};

enum class CorpusFormat { jsonl, csv };

inline CorpusFormat corpus_format_for(const std::filesystem::path& p) {
    const auto ext = to_lower(p.extension().string());
    return ext == ".csv" ? CorpusFormat::csv : CorpusFormat::jsonl;
}

struct NormalizeOptions {
    /// Drop the bodies of [quote]...[/quote] reply blocks instead of only
    /// their wrappers.
    bool drop_quotes = false;
};

namespace detail {

inline bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
inline bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

inline bool iequals_at(std::string_view s, std::size_t pos, std::string_view lit) {
    if (pos + lit.size() > s.size()) return false;
    for (std::size_t i = 0; i < lit.size(); ++i) {
        char c = s[pos + i];
        if (c >= 'A' && c <= 'Z') c = char(c - 'A' + 'a');
        if (c != lit[i]) return false;
    }
    return true;
}

// <tag ...>, </tag>, <!-- ... -->, <!DOCTYPE ...>
inline std::string strip_html_tags(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        if (s[i] == '<' && i + 1 < s.size()) {
            if (s.substr(i, 4) == "<!--") {
                const auto end = s.find("-->", i + 4);
                if (end != std::string_view::npos) {
                    out.push_back(' ');
                    i = end + 3;
                    continue;
                }
            }
            const char n = s[i + 1];
            const bool opener = is_alpha(n) || n == '!' ||
                                (n == '/' && i + 2 < s.size() && is_alpha(s[i + 2]));
            if (opener) {
                std::size_t j = i + 1;
                while (j < s.size() && s[j] != '<' && s[j] != '>') ++j;
                if (j < s.size() && s[j] == '>') {
                    out.push_back(' ');
                    i = j + 1;
                    continue;
                }
            }
        }
        out.push_back(s[i++]);
    }
    return out;
}

inline constexpr std::string_view kBbTags[] = {
    "quote", "url", "img", "code", "b", "i", "u", "s", "color", "size", "font", "center", "left",
    "right", "align", "spoiler", "hide", "list", "*", "php", "email", "youtube", "video", "sub",
    "sup", "strike", "table", "tr", "td", "indent", "highlight", "mention", "media", "attach"};

// Length of a BBCode tag starting at pos, or 0.
inline std::size_t bbcode_tag_len(std::string_view s, std::size_t pos, std::string_view* name = nullptr,
                                  bool* closing = nullptr) {
    if (s[pos] != '[') return 0;
    std::size_t p = pos + 1;
    bool close = false;
    if (p < s.size() && s[p] == '/') {
        close = true;
        ++p;
    }
    for (auto tag : kBbTags) {
        if (!iequals_at(s, p, tag)) continue;
        std::size_t q = p + tag.size();
        if (q >= s.size()) continue;
        if (s[q] == ']') {
            if (name) *name = tag;
            if (closing) *closing = close;
            return q + 1 - pos;
        }
        if (s[q] == '=' && !close) {
            std::size_t r = q + 1;
            while (r < s.size() && s[r] != ']' && s[r] != '[' && s[r] != '\n') ++r;
            if (r < s.size() && s[r] == ']') {
                if (name) *name = tag;
                if (closing) *closing = close;
                return r + 1 - pos;
            }
        }
    }
    return 0;
}

inline std::string drop_quote_blocks(std::string_view s) {
    // Innermost-first removal so nested quotes unwind correctly.
    std::string cur(s);
    while (true) {
        std::size_t open_at = std::string::npos, open_len = 0;
        bool removed = false;
        for (std::size_t i = 0; i < cur.size(); ++i) {
            if (cur[i] != '[') continue;
            std::string_view name;
            bool closing = false;
            const auto len = bbcode_tag_len(cur, i, &name, &closing);
            if (!len || name != "quote") continue;
            if (!closing) {
                open_at = i;
                open_len = len;
            } else if (open_at != std::string::npos) {
                cur.replace(open_at, i + len - open_at, " ");
                removed = true;
                break;
            }
        }
        (void)open_len;
        if (!removed) return cur;
    }
}

inline std::string strip_bbcode(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        if (s[i] == '[') {
            if (auto len = bbcode_tag_len(s, i)) {
                out.push_back(' ');
                i += len;
                continue;
            }
        }
        out.push_back(s[i++]);
    }
    return out;
}

inline bool url_terminator(char c) {
    return is_space(c) || c == '<' || c == '>' || c == '[' || c == ']' || c == '"';
}

inline std::string strip_urls(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        std::size_t skip = 0;
        if (iequals_at(s, i, "https://"))
            skip = 8;
        else if (iequals_at(s, i, "http://"))
            skip = 7;
        else if (iequals_at(s, i, "www.") && (i == 0 || !std::isalnum(static_cast<unsigned char>(s[i - 1]))))
            skip = 4;
        if (skip) {
            std::size_t j = i + skip;
            while (j < s.size() && !url_terminator(s[j])) ++j;
            out.push_back(' ');
            i = j;
            continue;
        }
        out.push_back(s[i++]);
    }
    return out;
}

inline std::string collapse_whitespace(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending = false;
    for (char c : s) {
        if (is_space(c)) {
            pending = !out.empty();
            continue;
        }
        if (pending) out.push_back(' ');
        pending = false;
        out.push_back(c);
    }
    return out;
}

}  // namespace detail

/// Removes markup tags, BBCode wrappers (including quote blocks) and URLs,
/// then collapses whitespace. Case is preserved. Idempotent.
inline std::string normalize_text(std::string_view raw, const NormalizeOptions& opts = {}) {
    std::string cur(raw);
    if (opts.drop_quotes) cur = detail::drop_quote_blocks(cur);
    while (true) {
        std::string next = detail::strip_urls(detail::strip_bbcode(detail::strip_html_tags(cur)));
        if (opts.drop_quotes) next = detail::drop_quote_blocks(next);
        if (next == cur) break;
        cur = std::move(next);
    }
    return detail::collapse_whitespace(cur);
}

struct IngestWarning {
    std::size_t line = 0;
    std::string message;
};

struct IngestResult {
    std::vector<Post> posts;
    std::vector<IngestWarning> warnings;
    std::size_t skipped = 0;
};

namespace detail {

inline const char* const kRequiredPostFields[] = {"post_id", "thread_id", "board",     "forum",
                                                  "author",  "created_at", "raw_content"};

inline bool is_post_field(std::string_view key) {
    if (key == "subject") return true;
    for (auto name : kRequiredPostFields)
        if (key == name) return true;
    return false;
}

// Returns an error message, or empty on success.
inline std::string post_from_fields(const std::map<std::string, std::string, std::less<>>& f, Post& p) {
    for (auto name : kRequiredPostFields)
        if (!f.count(name)) return std::string("missing field '") + name + "'";
    p.post_id = std::string(trim(f.find("post_id")->second));
    if (p.post_id.empty()) return "empty post_id";
    p.thread_id = std::string(trim(f.find("thread_id")->second));
    p.board = f.find("board")->second;
    p.forum = f.find("forum")->second;
    p.author = f.find("author")->second;
    auto when = parse_datetime(f.find("created_at")->second);
    if (!when) return "unparseable created_at '" + f.find("created_at")->second + "'";
    p.created_at = *when;
    if (auto it = f.find("subject"); it != f.end()) p.subject = it->second;
    p.raw_content = f.find("raw_content")->second;
    return {};
}

}  // namespace detail

/// Reads a forum dump. Malformed records are skipped with a warning carrying
/// their line number; a duplicate post_id aborts the ingest.
inline IngestResult ingest_corpus(const std::filesystem::path& path, CorpusFormat format,
                                  const NormalizeOptions& opts = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open corpus file " + path.string(), "ingest");

    IngestResult result;
    std::unordered_set<std::string> seen;
    auto accept = [&](Post&& p, std::size_t line) {
        if (!seen.insert(p.post_id).second)
            throw Error("duplicate post_id '" + p.post_id + "' at line " + std::to_string(line), "ingest");
        p.clean_content = normalize_text(p.raw_content, opts);
        result.posts.push_back(std::move(p));
    };
    auto reject = [&](std::size_t line, std::string msg) {
        result.warnings.push_back({line, std::move(msg)});
        ++result.skipped;
    };

    if (format == CorpusFormat::jsonl) {
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (trim(line).empty()) continue;
            auto j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.is_object()) {
                reject(lineno, "invalid JSON object");
                continue;
            }
            std::map<std::string, std::string, std::less<>> fields;
            std::string bad_field;
            for (auto it = j.begin(); it != j.end(); ++it) {
                if (it->is_string())
                    fields[it.key()] = it->get<std::string>();
                else if (it->is_number_integer() && it.key() != "created_at")
                    fields[it.key()] = std::to_string(it->get<long long>());
                else if (detail::is_post_field(it.key()))
                    bad_field = it.key();
            }
            if (!bad_field.empty()) {
                reject(lineno, "field '" + bad_field + "' is not a string");
                continue;
            }
            Post p;
            if (auto err = detail::post_from_fields(fields, p); !err.empty()) {
                reject(lineno, err);
                continue;
            }
            accept(std::move(p), lineno);
        }
    } else {
        csv::Reader reader(in);
        csv::Record rec;
        if (!reader.next(rec)) return result;
        const csv::Header header(rec.fields);
        std::vector<std::string> names = rec.fields;
        for (auto& n : names) n = std::string(trim(n));
        while (true) {
            try {
                if (!reader.next(rec)) break;
            } catch (const Error& e) {
                reject(rec.line, e.what());
                break;
            }
            if (rec.fields.size() != names.size()) {
                reject(rec.line, "expected " + std::to_string(names.size()) + " fields, got " +
                                     std::to_string(rec.fields.size()));
                continue;
            }
            std::map<std::string, std::string, std::less<>> fields;
            for (std::size_t i = 0; i < names.size(); ++i) fields[names[i]] = rec.fields[i];
            Post p;
            if (auto err = detail::post_from_fields(fields, p); !err.empty()) {
                reject(rec.line, err);
                continue;
            }
            accept(std::move(p), rec.line);
        }
    }
    return result;
}

/// Optional thread table: thread_id -> title (CSV `thread_id,title` or JSONL).
inline std::map<std::string, std::string> load_thread_titles(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open thread table " + path.string(), "ingest");
    std::map<std::string, std::string> titles;
    if (corpus_format_for(path) == CorpusFormat::csv) {
        csv::Reader reader(in);
        csv::Record rec;
        if (!reader.next(rec)) return titles;
        const csv::Header h(rec.fields);
        const auto id = h.index("thread_id"), title = h.index("title");
        while (reader.next(rec))
            if (rec.fields.size() > std::max(id, title)) titles[rec.fields[id]] = rec.fields[title];
    } else {
        std::string line;
        while (std::getline(in, line)) {
            auto j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_object() && j.contains("thread_id") && j.contains("title"))
                titles[j["thread_id"].get<std::string>()] = j["title"].get<std::string>();
        }
    }
    return titles;
}

inline bool post_order(const Post& a, const Post& b) {
    if (a.created_at != b.created_at) return a.created_at < b.created_at;
    return a.post_id < b.post_id;
}

/// Groups posts into threads (sorted by thread_id). The title comes from the
/// thread table when it has an entry, else the earliest post's subject.
inline std::vector<Thread> assemble_threads(std::vector<Post> posts,
                                            const std::map<std::string, std::string>& titles = {},
                                            const NormalizeOptions& opts = {}) {
    std::map<std::string, std::vector<Post>> groups;
    for (auto& p : posts) {
        if (p.thread_id.empty()) throw Error("post '" + p.post_id + "' has an empty thread_id", "ingest");
        groups[p.thread_id].push_back(std::move(p));
    }
    std::vector<Thread> threads;
    threads.reserve(groups.size());
    for (auto& [id, members] : groups) {
        std::sort(members.begin(), members.end(), post_order);
        Thread t;
        t.thread_id = id;
        t.board = members.front().board;
        t.forum = members.front().forum;
        if (auto it = titles.find(id); it != titles.end())
            t.title = normalize_text(it->second, opts);
        else
            t.title = normalize_text(members.front().subject, opts);
        t.document = t.title;
        for (const auto& p : members) {
            t.document += '\n';
            t.document += p.clean_content;
        }
        t.posts = std::move(members);
        threads.push_back(std::move(t));
    }
    return threads;
}

inline nlohmann::json post_to_json(const Post& p) {
    return {{"post_id", p.post_id},         {"thread_id", p.thread_id}, {"board", p.board},
            {"forum", p.forum},             {"author", p.author},       {"created_at", p.created_at.iso()},
            {"subject", p.subject},         {"raw_content", p.raw_content}};
}

inline void write_corpus_jsonl(std::ostream& out, const std::vector<Post>& posts) {
    for (const auto& p : posts) out << post_to_json(p).dump() << '\n';
}

}  // namespace forumscope
