#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "forumscope/common.hpp"
#include "forumscope/corpus.hpp"
#include "forumscope/dataset.hpp"
#include "forumscope/enrich.hpp"
#include "forumscope/random.hpp"

namespace forumscope::synth {

struct Params {
    std::size_t poc = 246, weaponization = 401, exploitation = 103;
    std::size_t uncited = 0;  // threads with no CVE id (unlabeled)
    std::size_t scam = 0;     // CVE-citing threads labeled Scam
    double keyword_incidence = 0.80;  // per class keyword, per thread
    double leakage = 0.03;            // chance of one foreign class keyword
    std::size_t cve_pool = 300;
    std::uint64_t seed = 1162;
};

struct Corpus {
    std::vector<Post> posts;
    std::vector<std::pair<std::string, ThreadLabel>> labels;
    NvdMap nvd;
    EpssMap epss;
    Date epss_date;
};

inline const std::vector<std::string>& class_keywords(ThreadLabel l) {
    static const std::vector<std::string> poc{"poc", "proof of concept", "tutorial", "guide"};
    static const std::vector<std::string> weapon{"fully functional", "source code", "working exploit", "weaponized"};
    static const std::vector<std::string> exploit{"fud", "fully undetectable", "bitcoin", "lizard squad"};
    switch (l) {
        case ThreadLabel::PoC: return poc;
        case ThreadLabel::Weaponization: return weapon;
        default: return exploit;
    }
}

inline const std::vector<std::string>& noise_words() {
    static const std::vector<std::string> w{
        "server",   "windows",   "download", "thanks",   "help",     "code",      "update",   "version",  "linux",
        "payload",  "shell",     "access",   "system",   "patch",    "target",    "network",  "remote",   "admin",
        "password", "account",   "website",  "database", "injection", "scanner",  "port",     "service",  "browser",
        "java",     "flash",     "office",   "document", "email",    "link",      "file",     "tool",     "program",
        "release",  "issue",     "problem",  "question", "answer",   "working",   "tested",   "running",  "using",
        "anyone",   "know",      "need",     "want",     "looking",  "good",      "nice",     "great",    "bro",
        "mate",     "post",      "thread",   "reply",    "pm",       "vouch",     "legit",    "price",    "cheap",
        "private",  "public",    "old",      "new",      "latest",   "kernel",    "driver",   "memory",   "buffer",
        "overflow", "privilege", "escalation", "bypass", "login",    "session",   "cookie",   "token",    "domain",
        "host",     "proxy",     "vpn",      "router",   "firmware", "android",   "iphone",   "mobile",   "app",
        "plugin",   "wordpress", "joomla",   "php",      "sql",      "script",    "python",   "perl",     "ruby",
        "module",   "metasploit", "nmap",    "burp",     "setup",    "config",    "install",  "compile",  "build",
        "error",    "crash",     "fix",      "report",   "details",  "info",      "check",    "try",      "works",
        "month",    "week",      "today",    "yesterday", "time",    "people",    "user",     "users",    "forum",
        "section",  "rules",     "staff",    "member",   "team",     "group",     "contact",  "skype",    "discord"};
    return w;
}

// Table-1 style boards with per-class weights (PoC, Weaponization, Exploitation).
struct BoardWeight {
    const char* name;
    double w[3];
};

inline const std::vector<BoardWeight>& boards() {
    static const std::vector<BoardWeight> b{
        {"Pentesting and Forensics", {55, 57, 3}},    {"Premium Tools and Programs", {1, 3, 4}},
        {"Website and Forum Hacking", {34, 43, 12}},  {"Hacking Tools and Programs", {7, 28, 7}},
        {"Premium Sellers Section", {0, 28, 26}},     {"Beginner Hacking", {43, 47, 6}},
        {"Botnets, IRC, and Zombies", {4, 34, 5}},    {"Hacking Tutorials", {21, 4, 3}},
        {"Secondary Sellers Market", {4, 21, 0}},     {"News and Happenings", {9, 5, 1}}};
    return b;
}

namespace detail {

class Writer {
public:
    explicit Writer(Rng& rng) : rng_(rng) {
        // Zipf(1) weights over the noise vocabulary.
        double s = 0;
        for (std::size_t i = 0; i < noise_words().size(); ++i) cdf_.push_back(s += 1.0 / double(i + 1));
        for (auto& c : cdf_) c /= s;
    }

    const std::string& noise() {
        const double u = rng_.uniform();
        const auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
        return noise_words()[std::min<std::size_t>(std::size_t(it - cdf_.begin()), noise_words().size() - 1)];
    }

    std::string sentence(std::size_t min_words, std::size_t max_words) {
        const auto n = min_words + rng_.below(max_words - min_words + 1);
        std::string s;
        for (std::size_t i = 0; i < n; ++i) {
            if (i) s += ' ';
            s += noise();
        }
        return s;
    }

private:
    Rng& rng_;
    std::vector<double> cdf_;
};

inline std::string cve_text(Rng& rng, const std::string& id) {
    switch (rng.below(5)) {
        case 0: return to_lower(id);
        case 1: return "(" + id + ")";
        case 2: return id + ",";
        default: return id;
    }
}

inline std::string price_text(Rng& rng) {
    // Log-uniform between $5 and $4400.
    const auto amount = std::int64_t(std::llround(std::exp(rng.uniform(std::log(5.0), std::log(4400.0)))));
    auto with_commas = [](std::int64_t v) {
        auto s = std::to_string(v);
        for (int i = int(s.size()) - 3; i > 0; i -= 3) s.insert(std::size_t(i), ",");
        return s;
    };
    switch (rng.below(4)) {
        case 0: return "price $" + with_commas(amount);
        case 1: return "selling for " + std::to_string(amount) + " usd";
        case 2: return "only " + std::to_string(amount) + " dollars";
        default: return "asking " + with_commas(amount) + "$ obo";
    }
}

inline std::string decorate(Rng& rng, std::string text) {
    switch (rng.below(6)) {
        case 0: return "[b]" + text + "[/b]";
        case 1: return text + "<br>see https://pastebin.com/raw/" + std::to_string(rng.below(1000000));
        case 2: return "<p>" + text + "</p>";
        default: return text;
    }
}

}  // namespace detail

/// Deterministic forum dump with planted class keywords, CVE citations,
/// prices and matching NVD/EPSS side files.
inline Corpus generate(const Params& p) {
    Rng rng(p.seed);
    detail::Writer writer(rng);
    Corpus out;

    // CVE pool with publication dates 2008-2021 and skewed-high CVSS.
    std::vector<std::string> pool;
    for (std::size_t i = 0; i < p.cve_pool; ++i) {
        const int year = 2008 + int(rng.below(14));
        const auto id = "CVE-" + std::to_string(year) + "-" + std::to_string(1000 + rng.below(30000));
        if (out.nvd.count(id)) continue;
        CveRecord r;
        r.cve_id = id;
        r.published = Date(Date::from_ymd(year, 1, 1).days() + std::int64_t(rng.below(365)));
        r.cvss_v2 = std::round(std::min(10.0, 4.0 + 6.5 * std::sqrt(rng.uniform())) * 10) / 10;
        if (year >= 2016 || rng.bernoulli(0.3)) r.cvss_v31 = std::round(std::min(10.0, 5.0 + 5.0 * rng.uniform()) * 10) / 10;
        r.description = "Synthetic vulnerability record " + id;
        out.nvd.emplace(id, r);
        pool.push_back(id);
    }
    std::sort(pool.begin(), pool.end());
    out.epss_date = Date::from_ymd(2023, 6, 1);
    for (const auto& id : pool) {
        if (rng.bernoulli(0.1)) continue;  // not every CVE is scored
        const double e = std::round(std::pow(rng.uniform(), 3.0) * 1e5) / 1e5;
        out.epss[id] = {e, std::round(rng.uniform() * 1e5) / 1e5, out.epss_date};
    }

    struct Plan {
        std::optional<ThreadLabel> label;
        bool cites;
    };
    std::vector<Plan> plans;
    for (std::size_t i = 0; i < p.poc; ++i) plans.push_back({ThreadLabel::PoC, true});
    for (std::size_t i = 0; i < p.weaponization; ++i) plans.push_back({ThreadLabel::Weaponization, true});
    for (std::size_t i = 0; i < p.exploitation; ++i) plans.push_back({ThreadLabel::Exploitation, true});
    for (std::size_t i = 0; i < p.scam; ++i) plans.push_back({ThreadLabel::Scam, true});
    for (std::size_t i = 0; i < p.uncited; ++i) plans.push_back({std::nullopt, false});
    rng.shuffle(plans);

    std::size_t post_no = 0;
    for (std::size_t t = 0; t < plans.size(); ++t) {
        const auto& plan = plans[t];
        char tid[24];
        std::snprintf(tid, sizeof tid, "t%05zu", t + 1);
        const int cls = plan.label && in_scope(*plan.label) ? int(*plan.label) : int(rng.below(3));

        double total = 0;
        for (const auto& b : boards()) total += b.w[cls] + 0.5;
        double u = rng.uniform() * total;
        std::string board = boards().back().name;
        for (const auto& b : boards())
            if ((u -= b.w[cls] + 0.5) < 0) {
                board = b.name;
                break;
            }

        // Phrases to plant across the thread.
        std::vector<std::string> planted;
        if (plan.label && in_scope(*plan.label)) {
            for (const auto& k : class_keywords(*plan.label))
                if (rng.bernoulli(p.keyword_incidence)) planted.push_back(k);
            if (rng.bernoulli(p.leakage)) {
                const auto other = ThreadLabel((cls + 1 + int(rng.below(2))) % 3);
                const auto& ks = class_keywords(other);
                planted.push_back(ks[rng.below(ks.size())]);
            }
        } else if (plan.label == ThreadLabel::Scam) {
            planted = {"scam", "ripper", "does not work"};
        }
        std::vector<std::string> cves;
        if (plan.cites) {
            const auto n = 1 + rng.below(3);
            for (std::size_t k = 0; k < n; ++k) cves.push_back(pool[rng.below(pool.size())]);
        }

        const std::size_t n_posts = 1 + rng.below(4);
        // Thread start relative to the first cited CVE: mostly after
        // publication, sometimes before.
        std::int64_t start_day;
        if (!cves.empty()) {
            const auto pub = out.nvd.at(cves[0]).published.days();
            start_day = rng.bernoulli(0.08) ? pub - std::int64_t(rng.below(400)) : pub + std::int64_t(rng.below(900));
        } else {
            start_day = Date::from_ymd(2010, 1, 1).days() + std::int64_t(rng.below(4000));
        }
        std::int64_t when = start_day * 86400 + std::int64_t(rng.below(86400));

        const std::string title = writer.sentence(3, 6);
        std::vector<std::vector<std::string>> chunks(n_posts);
        for (const auto& k : planted) chunks[rng.below(n_posts)].push_back(k);
        for (std::size_t k = 0; k < cves.size(); ++k) chunks[k == 0 ? 0 : rng.below(n_posts)].push_back(cves[k]);
        const bool priced = cls != int(ThreadLabel::PoC) && rng.bernoulli(0.35);

        for (std::size_t k = 0; k < n_posts; ++k) {
            Post post;
            char pid[24];
            std::snprintf(pid, sizeof pid, "p%06zu", ++post_no);
            post.post_id = pid;
            post.thread_id = tid;
            post.board = board;
            post.forum = "Hackforums";
            post.author = "user" + std::to_string(rng.below(150));
            post.created_at = DateTime(when);
            when += 600 + std::int64_t(rng.below(3 * 86400));
            post.subject = k == 0 ? title : "Re: " + title;

            std::vector<std::string> sentences;
            const auto n_sent = 2 + rng.below(4);
            for (std::size_t s = 0; s < n_sent; ++s) sentences.push_back(writer.sentence(5, 12));
            for (const auto& item : chunks[k]) {
                auto& s = sentences[rng.below(sentences.size())];
                const auto text = item.rfind("CVE-", 0) == 0 ? detail::cve_text(rng, item) : item;
                s += (rng.bernoulli(0.5) ? " " : " about ") + text + " " + writer.noise();
            }
            if (priced && k == 0) sentences.push_back(detail::price_text(rng));
            std::string body;
            for (const auto& s : sentences) body += (body.empty() ? "" : ". ") + s;
            post.raw_content = detail::decorate(rng, body + ".");
            out.posts.push_back(std::move(post));
        }
        if (plan.label) out.labels.push_back({tid, *plan.label});
    }
    return out;
}

/// Writes posts.jsonl, labels.csv, nvd.jsonl, epss.csv and overlay.csv.
inline void write_corpus_files(const Corpus& c, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto open = [&](const char* name) {
        std::ofstream f(dir / name, std::ios::binary);
        if (!f) throw Error("cannot write " + (dir / name).string());
        return f;
    };
    {
        auto f = open("posts.jsonl");
        write_corpus_jsonl(f, c.posts);
    }
    {
        auto f = open("labels.csv");
        f << "thread_id,label\n";
        for (const auto& [id, l] : c.labels) f << id << ',' << label_name(l) << '\n';
    }
    {
        auto f = open("nvd.jsonl");
        write_nvd_jsonl(f, c.nvd);
    }
    {
        auto f = open("epss.csv");
        f << "#model_version:v2023.03.01,score_date:" << c.epss_date.iso() << "T00:00:00+0000\n";
        f << "cve,epss,percentile\n";
        for (const auto& [id, e] : c.epss)
            f << id << ',' << fmt_double(e.epss, 5) << ',' << fmt_double(e.percentile, 5) << '\n';
    }
    {
        auto f = open("overlay.csv");
        f << "name,min,median,max\n";
        f << "russian_market_prices,100,2000,8000\n";
        f << "russian_market_delays,-30,95.5,1500\n";
    }
}

}  // namespace forumscope::synth
