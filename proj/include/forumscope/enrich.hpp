#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "forumscope/common.hpp"
#include "forumscope/csv.hpp"
#include "forumscope/cve_extract.hpp"

namespace forumscope {

struct CveRecord {
    std::string cve_id;
    Date published;
    std::optional<double> cvss_v2;
    std::optional<double> cvss_v31;
    std::optional<double> epss;
    std::optional<double> epss_percentile;
    std::optional<Date> epss_date;
    std::string description;
};

using NvdMap = std::map<std::string, CveRecord>;

struct EpssEntry {
    double epss = 0;
    double percentile = 0;
    std::optional<Date> date;
};

using EpssMap = std::map<std::string, EpssEntry>;

struct LoadWarning {
    std::size_t line = 0;
    std::string message;
};

struct NvdLoad {
    NvdMap records;
    std::vector<LoadWarning> warnings;
};

enum class ScoreKind { cvss_v2, cvss_v31, epss };

inline const char* score_kind_name(ScoreKind k) {
    switch (k) {
        case ScoreKind::cvss_v2: return "cvss_v2";
        case ScoreKind::cvss_v31: return "cvss_v31";
        case ScoreKind::epss: return "epss";
    }
    return "?";
}

inline ScoreKind parse_score_kind(std::string_view name) {
    const auto n = to_lower(name);
    if (n == "cvss_v2" || n == "cvss2" || n == "cvssv2") return ScoreKind::cvss_v2;
    if (n == "cvss_v31" || n == "cvss31" || n == "cvssv31" || n == "cvss_v3") return ScoreKind::cvss_v31;
    if (n == "epss") return ScoreKind::epss;
    throw Error("unknown score kind '" + std::string(name) + "'");
}

inline std::optional<double> score_of(const CveRecord& r, ScoreKind k) {
    switch (k) {
        case ScoreKind::cvss_v2: return r.cvss_v2;
        case ScoreKind::cvss_v31: return r.cvss_v31;
        case ScoreKind::epss: return r.epss;
    }
    return std::nullopt;
}

inline bool is_cve_id(std::string_view id) {
    return detail::cve_match_len(id, 0) == id.size() && id == to_upper(id);
}

namespace detail {

inline std::string nvd_record_from_json(const nlohmann::json& j, CveRecord& r) {
    if (!j.is_object()) return "not a JSON object";
    if (!j.contains("cve_id") || !j["cve_id"].is_string()) return "missing cve_id";
    r.cve_id = to_upper(trim(j["cve_id"].get<std::string>()));
    if (!is_cve_id(r.cve_id)) return "malformed cve_id '" + r.cve_id + "'";
    if (!j.contains("published") || !j["published"].is_string()) return "missing published date";
    auto d = parse_date(j["published"].get<std::string>());
    if (!d) return "unparseable published date";
    r.published = *d;
    for (auto [key, slot] : {std::pair{"cvss_v2", &r.cvss_v2}, std::pair{"cvss_v31", &r.cvss_v31}}) {
        if (!j.contains(key) || j[key].is_null()) continue;
        if (!j[key].is_number()) return std::string(key) + " is not a number";
        const double v = j[key].get<double>();
        if (!(v >= 0.0 && v <= 10.0)) return std::string(key) + " outside [0,10]";
        *slot = v;
    }
    if (j.contains("description") && j["description"].is_string()) r.description = j["description"].get<std::string>();
    return {};
}

}  // namespace detail

/// Local NVD mirror (JSONL). Versions missing from a record stay absent.
/// Duplicate ids keep the record with the latest published date.
inline NvdLoad load_nvd(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open NVD mirror " + path.string(), "enrich");
    NvdLoad out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto j = nlohmann::json::parse(line, nullptr, false);
        CveRecord r;
        std::string err = j.is_discarded() ? "invalid JSON" : detail::nvd_record_from_json(j, r);
        if (!err.empty()) {
            out.warnings.push_back({lineno, err});
            continue;
        }
        auto it = out.records.find(r.cve_id);
        if (it == out.records.end())
            out.records.emplace(r.cve_id, std::move(r));
        else if (r.published >= it->second.published)
            it->second = std::move(r);
    }
    return out;
}

inline void write_nvd_jsonl(std::ostream& out, const NvdMap& nvd) {
    for (const auto& [id, r] : nvd) {
        nlohmann::json j{{"cve_id", id}, {"published", r.published.iso()}, {"description", r.description}};
        j["cvss_v2"] = r.cvss_v2 ? nlohmann::json(*r.cvss_v2) : nlohmann::json(nullptr);
        j["cvss_v31"] = r.cvss_v31 ? nlohmann::json(*r.cvss_v31) : nlohmann::json(nullptr);
        out << j.dump() << '\n';
    }
}

/// Converts an official NVD JSON document into mirror records. Accepts both
/// the API 2.0 layout (`vulnerabilities[].cve`) and the legacy 1.1 feed
/// (`CVE_Items[]`).
inline NvdMap convert_nvd_feed(const nlohmann::json& feed) {
    NvdMap out;
    auto english = [](const nlohmann::json& arr, const char* text_key) {
        if (!arr.is_array()) return std::string{};
        for (const auto& d : arr)
            if (d.value("lang", "") == "en") return d.value(text_key, std::string{});
        return arr.empty() ? std::string{} : arr[0].value(text_key, std::string{});
    };
    if (feed.contains("vulnerabilities")) {
        for (const auto& v : feed["vulnerabilities"]) {
            const auto& c = v.at("cve");
            CveRecord r;
            r.cve_id = c.at("id").get<std::string>();
            auto d = parse_date(c.at("published").get<std::string>());
            if (!d) continue;
            r.published = *d;
            r.description = english(c.value("descriptions", nlohmann::json::array()), "value");
            const auto metrics = c.value("metrics", nlohmann::json::object());
            auto base = [&](const char* key) -> std::optional<double> {
                if (!metrics.contains(key) || metrics[key].empty()) return std::nullopt;
                const auto& m = metrics[key];
                for (const auto& e : m)
                    if (e.value("type", "") == "Primary") return e.at("cvssData").at("baseScore").get<double>();
                return m[0].at("cvssData").at("baseScore").get<double>();
            };
            r.cvss_v2 = base("cvssMetricV2");
            r.cvss_v31 = base("cvssMetricV31");
            out[r.cve_id] = std::move(r);
        }
    } else if (feed.contains("CVE_Items")) {
        for (const auto& item : feed["CVE_Items"]) {
            CveRecord r;
            r.cve_id = item.at("cve").at("CVE_data_meta").at("ID").get<std::string>();
            auto d = parse_date(item.value("publishedDate", std::string{}));
            if (!d) continue;
            r.published = *d;
            r.description = english(item["cve"].value("description", nlohmann::json::object())
                                        .value("description_data", nlohmann::json::array()),
                                    "value");
            const auto impact = item.value("impact", nlohmann::json::object());
            if (impact.contains("baseMetricV2"))
                r.cvss_v2 = impact["baseMetricV2"].at("cvssV2").at("baseScore").get<double>();
            if (impact.contains("baseMetricV3")) {
                const auto& v3 = impact["baseMetricV3"].at("cvssV3");
                if (v3.value("version", "") == "3.1") r.cvss_v31 = v3.at("baseScore").get<double>();
            }
            out[r.cve_id] = std::move(r);
        }
    } else {
        throw Error("unrecognized NVD feed layout", "enrich");
    }
    return out;
}

/// EPSS CSV (`cve,epss,percentile`) with `#` metadata lines. A
/// `score_date:` entry in the metadata becomes the snapshot date.
inline EpssMap load_epss(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open EPSS file " + path.string(), "enrich");
    EpssMap out;
    std::optional<Date> snapshot;
    std::string line;
    std::size_t lineno = 0;
    bool header_checked = false;
    while (std::getline(in, line)) {
        ++lineno;
        auto t = trim(line);
        if (t.empty()) continue;
        if (t.front() == '#') {
            if (auto pos = t.find("score_date:"); pos != std::string_view::npos) {
                auto rest = t.substr(pos + 11);
                rest = rest.substr(0, rest.find(','));
                snapshot = parse_date(rest);
            }
            continue;
        }
        std::istringstream row{std::string(t)};
        csv::Reader reader(row);
        csv::Record rec;
        reader.next(rec);
        if (!header_checked) {
            header_checked = true;
            if (!rec.fields.empty() && to_lower(trim(rec.fields[0])) == "cve") continue;
        }
        const std::string where = "EPSS row " + std::to_string(lineno);
        if (rec.fields.size() < 2) throw Error(where + ": expected cve,epss[,percentile]", "enrich");
        const auto id = to_upper(trim(rec.fields[0]));
        if (!is_cve_id(id)) throw Error(where + ": malformed CVE id '" + id + "'", "enrich");
        auto number = [&](const std::string& field, const char* what) {
            char* end = nullptr;
            const std::string f(trim(field));
            const double v = std::strtod(f.c_str(), &end);
            if (f.empty() || end != f.c_str() + f.size()) throw Error(where + ": " + what + " is not a number", "enrich");
            if (!(v >= 0.0 && v <= 1.0)) throw Error(where + ": " + what + " outside [0,1]", "enrich");
            return v;
        };
        EpssEntry e;
        e.epss = number(rec.fields[1], "epss");
        if (rec.fields.size() > 2) e.percentile = number(rec.fields[2], "percentile");
        out[id] = e;
    }
    for (auto& [id, e] : out) e.date = snapshot;
    return out;
}

/// Attaches EPSS values to NVD records in place.
inline void merge_epss(NvdMap& nvd, const EpssMap& epss) {
    for (auto& [id, r] : nvd) {
        auto it = epss.find(id);
        if (it == epss.end()) continue;
        r.epss = it->second.epss;
        r.epss_percentile = it->second.percentile;
        r.epss_date = it->second.date;
    }
}

/// Whole-day signed difference post_date - cve_published.
inline std::int64_t post_age(Date post_date, Date cve_published) { return post_date - cve_published; }

struct DelayRecord {
    std::string cve_id;
    std::string post_id;
    std::int64_t post_age_days = 0;

    friend bool operator==(const DelayRecord&, const DelayRecord&) = default;
};

struct MentionScore {
    std::string cve_id;
    std::string post_id;
    std::string thread_id;
    std::optional<double> cvss_v2;
    std::optional<double> cvss_v31;
    std::optional<double> epss;
};

struct Enrichment {
    std::vector<DelayRecord> delays;
    std::vector<MentionScore> scores;  // parallel to delays
    std::vector<CveMention> unmatched;
    std::optional<Date> epss_date;
};

/// Joins mentions with NVD and EPSS. Mentions without an NVD record go to
/// `unmatched`; nothing is dropped.
inline Enrichment join_enrichment(const std::vector<CveMention>& mentions,
                                  const std::map<std::string, Date>& post_dates, const NvdMap& nvd,
                                  const EpssMap& epss) {
    Enrichment out;
    for (const auto& [id, e] : epss)
        if (e.date) {
            out.epss_date = e.date;
            break;
        }
    for (const auto& m : mentions) {
        auto rec = nvd.find(m.cve_id);
        if (rec == nvd.end()) {
            out.unmatched.push_back(m);
            continue;
        }
        auto pd = post_dates.find(m.post_id);
        if (pd == post_dates.end()) throw Error("mention refers to unknown post '" + m.post_id + "'", "enrich");
        out.delays.push_back({m.cve_id, m.post_id, post_age(pd->second, rec->second.published)});
        MentionScore s{m.cve_id, m.post_id, m.thread_id, rec->second.cvss_v2, rec->second.cvss_v31, std::nullopt};
        if (auto e = epss.find(m.cve_id); e != epss.end())
            s.epss = e->second.epss;
        else
            s.epss = rec->second.epss;
        out.scores.push_back(std::move(s));
    }
    return out;
}

/// Mean of one score over every NVD record carrying it.
inline std::optional<double> global_mean_score(const NvdMap& nvd, ScoreKind kind) {
    double sum = 0;
    std::size_t n = 0;
    for (const auto& [id, r] : nvd)
        if (auto v = score_of(r, kind)) sum += *v, ++n;
    if (!n) return std::nullopt;
    return sum / double(n);
}

inline std::string opt_str(const std::optional<double>& v, int precision = 4) {
    return v ? fmt_double(*v, precision) : std::string{};
}

inline void write_enrichment_csv(std::ostream& out, const Enrichment& e) {
    out << "cve_id,post_id,thread_id,post_age_days,cvss_v2,cvss_v31,epss\n";
    for (std::size_t i = 0; i < e.delays.size(); ++i) {
        const auto& d = e.delays[i];
        const auto& s = e.scores[i];
        csv::write_row(out, {d.cve_id, d.post_id, s.thread_id, std::to_string(d.post_age_days), opt_str(s.cvss_v2),
                             opt_str(s.cvss_v31), opt_str(s.epss, 5)});
    }
}

}  // namespace forumscope
