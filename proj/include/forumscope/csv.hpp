#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "forumscope/common.hpp"

namespace forumscope::csv {

/// One parsed RFC-4180 record plus the physical line it started on.
struct Record {
    std::vector<std::string> fields;
    std::size_t line = 0;
};

/// Streaming RFC-4180 reader: quoted fields, doubled quotes, embedded newlines.
/// Lines starting with `comment` (when nonzero) outside a record are skipped.
class Reader {
public:
    explicit Reader(std::istream& in, char comment = '\0') : in_(in), comment_(comment) {}

    bool next(Record& rec) {
        rec.fields.clear();
        std::string field;
        bool quoted = false, any = false, field_started = false;
        int c;
        while (true) {
            c = in_.get();
            if (c == EOF) {
                if (quoted) throw Error("unterminated quoted field starting near line " + std::to_string(rec.line));
                if (!any) return false;
                rec.fields.push_back(std::move(field));
                return true;
            }
            if (!any) {
                ++line_;
                rec.line = line_;
                any = true;
                if (comment_ && c == comment_) {
                    std::string skip;
                    std::getline(in_, skip);
                    any = false;
                    continue;
                }
                if (c == '\n') {  // blank line
                    any = false;
                    continue;
                }
                if (c == '\r' && in_.peek() == '\n') {
                    in_.get();
                    any = false;
                    continue;
                }
            }
            if (quoted) {
                if (c == '"') {
                    if (in_.peek() == '"') {
                        field.push_back('"');
                        in_.get();
                    } else {
                        quoted = false;
                    }
                } else {
                    if (c == '\n') ++line_;
                    field.push_back(char(c));
                }
                continue;
            }
            if (c == '"' && !field_started) {
                quoted = true;
                field_started = true;
            } else if (c == ',') {
                rec.fields.push_back(std::move(field));
                field.clear();
                field_started = false;
            } else if (c == '\n') {
                rec.fields.push_back(std::move(field));
                return true;
            } else if (c == '\r' && in_.peek() == '\n') {
                in_.get();
                rec.fields.push_back(std::move(field));
                return true;
            } else {
                field.push_back(char(c));
                field_started = true;
            }
        }
    }

private:
    std::istream& in_;
    char comment_;
    std::size_t line_ = 0;
};

inline std::string quote(std::string_view v) {
    if (v.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(v);
    std::string out = "\"";
    for (char c : v) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

inline void write_row(std::ostream& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out << ',';
        out << quote(fields[i]);
    }
    out << '\n';
}

/// Maps header names to column indexes; throws when a required name is absent.
class Header {
public:
    Header() = default;
    explicit Header(const std::vector<std::string>& names) : names_(names) {
        for (auto& n : names_) n = std::string(trim(n));
        if (!names_.empty() && names_[0].rfind("\xEF\xBB\xBF", 0) == 0) names_[0].erase(0, 3);
    }

    std::size_t index(std::string_view name) const {
        for (std::size_t i = 0; i < names_.size(); ++i)
            if (names_[i] == name) return i;
        throw Error("CSV header lacks required column '" + std::string(name) + "'");
    }

    bool has(std::string_view name) const {
        for (auto& n : names_)
            if (n == name) return true;
        return false;
    }

    std::size_t size() const { return names_.size(); }

private:
    std::vector<std::string> names_;
};

}  // namespace forumscope::csv
