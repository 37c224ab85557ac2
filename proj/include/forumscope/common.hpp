#pragma once

#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace forumscope {

/// Error raised by every library operation. The optional stage tag names the
/// pipeline step that failed so the CLI can report "<stage>: <cause>".
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what, std::string stage = {})
        : std::runtime_error(what), stage_(std::move(stage)) {}

    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

/// A calendar day, stored as days since 1970-01-01.
class Date {
public:
    constexpr Date() = default;
    constexpr explicit Date(std::int64_t days) : days_(days) {}

    static Date from_ymd(int y, unsigned m, unsigned d) {
        using namespace std::chrono;
        const year_month_day ymd{year{y}, month{m}, day{d}};
        if (!ymd.ok())
            throw Error("invalid calendar date " + std::to_string(y) + "-" + std::to_string(m) + "-" +
                        std::to_string(d));
        return Date(sys_days{ymd}.time_since_epoch().count());
    }

    constexpr std::int64_t days() const { return days_; }

    std::string iso() const {
        using namespace std::chrono;
        const year_month_day ymd{sys_days{std::chrono::days{days_}}};
        char buf[16];
        std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", int(ymd.year()), unsigned(ymd.month()),
                      unsigned(ymd.day()));
        return buf;
    }

    friend constexpr auto operator<=>(const Date&, const Date&) = default;
    friend constexpr std::int64_t operator-(Date a, Date b) { return a.days_ - b.days_; }

private:
    std::int64_t days_ = 0;
};

/// A UTC instant with second resolution.
class DateTime {
public:
    constexpr DateTime() = default;
    constexpr explicit DateTime(std::int64_t epoch_seconds) : secs_(epoch_seconds) {}

    constexpr std::int64_t epoch_seconds() const { return secs_; }

    Date date() const {
        auto d = secs_ / 86400;
        if (secs_ % 86400 < 0) --d;
        return Date(d);
    }

    std::string iso() const {
        auto rem = secs_ % 86400;
        if (rem < 0) rem += 86400;
        char buf[16];
        std::snprintf(buf, sizeof buf, "T%02d:%02d:%02dZ", int(rem / 3600), int(rem / 60 % 60), int(rem % 60));
        return date().iso() + buf;
    }

    friend constexpr auto operator<=>(const DateTime&, const DateTime&) = default;

private:
    std::int64_t secs_ = 0;
};

namespace detail {

inline bool read_int(std::string_view s, std::size_t pos, std::size_t len, int& out) {
    if (pos + len > s.size()) return false;
    for (std::size_t i = pos; i < pos + len; ++i)
        if (s[i] < '0' || s[i] > '9') return false;
    std::from_chars(s.data() + pos, s.data() + pos + len, out);
    return true;
}

}  // namespace detail

/// Parses "YYYY-MM-DD" optionally followed by a time part ("T" or space,
/// "HH:MM[:SS[.fff]]") and a zone ("Z" or "+HH:MM"/"-HH:MM"). Returns nullopt
/// on anything else.
inline std::optional<DateTime> parse_datetime(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    int y, mo, d;
    if (s.size() < 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
    if (!detail::read_int(s, 0, 4, y) || !detail::read_int(s, 5, 2, mo) || !detail::read_int(s, 8, 2, d))
        return std::nullopt;
    using namespace std::chrono;
    const year_month_day ymd{year{y}, month{unsigned(mo)}, day{unsigned(d)}};
    if (!ymd.ok()) return std::nullopt;
    std::int64_t secs = std::int64_t(sys_days{ymd}.time_since_epoch().count()) * 86400;
    std::size_t pos = 10;
    if (pos < s.size() && (s[pos] == 'T' || s[pos] == ' ')) {
        int hh, mm, ss = 0;
        if (!detail::read_int(s, pos + 1, 2, hh) || pos + 3 >= s.size() || s[pos + 3] != ':' ||
            !detail::read_int(s, pos + 4, 2, mm))
            return std::nullopt;
        pos += 6;
        if (pos < s.size() && s[pos] == ':') {
            if (!detail::read_int(s, pos + 1, 2, ss)) return std::nullopt;
            pos += 3;
            if (pos < s.size() && s[pos] == '.') {
                ++pos;
                while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
            }
        }
        if (hh > 23 || mm > 59 || ss > 60) return std::nullopt;
        secs += hh * 3600 + mm * 60 + ss;
    }
    if (pos < s.size()) {
        if (s[pos] == 'Z' && pos + 1 == s.size()) {
            pos += 1;
        } else if (s[pos] == '+' || s[pos] == '-') {
            int oh, om = 0;
            const int sign = s[pos] == '+' ? 1 : -1;
            if (!detail::read_int(s, pos + 1, 2, oh)) return std::nullopt;
            std::size_t p = pos + 3;
            if (p < s.size() && s[p] == ':') ++p;
            if (p < s.size() && !detail::read_int(s, p, 2, om)) return std::nullopt;
            if (p < s.size()) p += 2;
            if (p != s.size()) return std::nullopt;
            secs -= sign * (oh * 3600 + om * 60);
            pos = p;
        } else {
            return std::nullopt;
        }
    }
    return DateTime(secs);
}

inline std::optional<Date> parse_date(std::string_view s) {
    auto dt = parse_datetime(s);
    if (!dt) return std::nullopt;
    return dt->date();
}

inline std::string to_lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out)
        if (c >= 'A' && c <= 'Z') c = char(c - 'A' + 'a');
    return out;
}

inline std::string to_upper(std::string_view s) {
    std::string out(s);
    for (auto& c : out)
        if (c >= 'a' && c <= 'z') c = char(c - 'a' + 'A');
    return out;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r' || s.front() == '\n'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '\n'))
        s.remove_suffix(1);
    return s;
}

/// Fixed-format decimal rendering shared by every CSV writer so output files
/// are byte-stable across runs.
inline std::string fmt_double(double v, int precision = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    std::string s(buf);
    if (s == "-0" || s.find_first_not_of("-0.") == std::string::npos) {
        // normalize negative zero
        if (s.front() == '-') s.erase(0, 1);
    }
    return s;
}

}  // namespace forumscope
