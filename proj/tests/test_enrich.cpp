#include <gtest/gtest.h>

#include "forumscope/enrich.hpp"
#include "forumscope/random.hpp"
#include "support.hpp"

using namespace forumscope;
using testing_support::TempDir;
using testing_support::write_file;

namespace {

Date day(int y, unsigned m, unsigned d) { return Date::from_ymd(y, m, d); }

CveMention mention(const std::string& id, const std::string& pid) { return {id, pid, "t" + pid, 0}; }

}  // namespace

TEST(Nvd, PartialScoresStayAbsent) {
    TempDir d("nvd1");
    write_file(d / "nvd.jsonl",
               R"({"cve_id":"CVE-2011-3544","published":"2011-10-19","cvss_v2":10.0,"description":"java"})"
               "\n");
    auto r = load_nvd(d / "nvd.jsonl");
    ASSERT_EQ(r.records.size(), 1u);
    const auto& rec = r.records.at("CVE-2011-3544");
    EXPECT_EQ(rec.cvss_v2, 10.0);
    EXPECT_FALSE(rec.cvss_v31);
    EXPECT_EQ(rec.published, day(2011, 10, 19));
}

TEST(Nvd, EmptyFileEmptyMap) {
    TempDir d("nvd0");
    write_file(d / "nvd.jsonl", "");
    EXPECT_TRUE(load_nvd(d / "nvd.jsonl").records.empty());
    EXPECT_THROW(load_nvd(d / "missing.jsonl"), Error);
}

TEST(Nvd, MalformedSkippedDuplicatesKeepLatest) {
    TempDir d("nvddup");
    write_file(d / "nvd.jsonl",
               "{not json}\n"
               R"({"cve_id":"CVE-2019-0708","published":"2019-05-16","cvss_v2":10.0})" "\n"
               R"({"cve_id":"CVE-2019-0708","published":"2019-06-01","cvss_v2":9.0})" "\n"
               R"({"cve_id":"CVE-2019-0709","published":"2019-05-16","cvss_v2":12.0})" "\n"
               R"({"cve_id":"bogus","published":"2019-05-16"})" "\n");
    auto r = load_nvd(d / "nvd.jsonl");
    EXPECT_EQ(r.records.size(), 1u);
    EXPECT_EQ(r.records.at("CVE-2019-0708").cvss_v2, 9.0);
    ASSERT_EQ(r.warnings.size(), 3u);
    EXPECT_EQ(r.warnings[0].line, 1u);
    EXPECT_EQ(r.warnings[1].line, 4u);
}

TEST(Nvd, FiftyRecordFixtureMatchesOracle) {
    TempDir d("nvd50");
    forumscope::Rng rng(50);
    NvdMap oracle;
    std::string text;
    for (int i = 0; i < 50; ++i) {
        CveRecord r;
        char id[32];
        std::snprintf(id, sizeof id, "CVE-%d-%05d", 2005 + i % 15, 100 + i);
        r.cve_id = id;
        r.published = Date(12000 + std::int64_t(rng.below(6000)));
        if (rng.bernoulli(0.8)) r.cvss_v2 = double(rng.below(101)) / 10.0;
        if (rng.bernoulli(0.5)) r.cvss_v31 = double(rng.below(101)) / 10.0;
        r.description = "desc " + std::to_string(i);
        nlohmann::json j{{"cve_id", r.cve_id}, {"published", r.published.iso()}, {"description", r.description}};
        if (r.cvss_v2) j["cvss_v2"] = *r.cvss_v2;
        if (r.cvss_v31) j["cvss_v31"] = *r.cvss_v31;
        text += j.dump() + "\n";
        oracle[r.cve_id] = r;
    }
    write_file(d / "nvd.jsonl", text);
    auto got = load_nvd(d / "nvd.jsonl").records;
    ASSERT_EQ(got.size(), oracle.size());
    for (const auto& [id, r] : oracle) {
        const auto& g = got.at(id);
        EXPECT_EQ(g.published, r.published);
        EXPECT_EQ(g.cvss_v2, r.cvss_v2);
        EXPECT_EQ(g.cvss_v31, r.cvss_v31);
        EXPECT_EQ(g.description, r.description);
    }
}

TEST(Nvd, ConvertsApi2Feed) {
    auto feed = nlohmann::json::parse(R"({"vulnerabilities":[{"cve":{"id":"CVE-2021-44228","published":"2021-12-10T10:15:09.143",
        "descriptions":[{"lang":"es","value":"x"},{"lang":"en","value":"log4j"}],
        "metrics":{"cvssMetricV31":[{"type":"Primary","cvssData":{"baseScore":10.0}}],
                   "cvssMetricV2":[{"type":"Primary","cvssData":{"baseScore":9.3}}]}}}]})");
    auto m = convert_nvd_feed(feed);
    ASSERT_EQ(m.size(), 1u);
    const auto& r = m.at("CVE-2021-44228");
    EXPECT_EQ(r.published, day(2021, 12, 10));
    EXPECT_EQ(r.cvss_v31, 10.0);
    EXPECT_EQ(r.cvss_v2, 9.3);
    EXPECT_EQ(r.description, "log4j");
    EXPECT_THROW(convert_nvd_feed(nlohmann::json::object()), Error);
}

TEST(Epss, ParsesRowsAndSkipsComments) {
    TempDir d("epss");
    write_file(d / "epss.csv",
               "#model_version:v2023.03.01,score_date:2023-02-28T00:00:00+0000\n"
               "cve,epss,percentile\n"
               "CVE-2011-3544,0.97,0.99\n"
               "# trailing note\n"
               "cve-2017-0144,0.975,0.999\n");
    auto m = load_epss(d / "epss.csv");
    ASSERT_EQ(m.size(), 2u);
    EXPECT_EQ(m.at("CVE-2011-3544").epss, 0.97);
    EXPECT_EQ(m.at("CVE-2017-0144").percentile, 0.999);
    ASSERT_TRUE(m.at("CVE-2011-3544").date);
    EXPECT_EQ(*m.at("CVE-2011-3544").date, day(2023, 2, 28));
}

TEST(Epss, OutOfRangeNamesRow) {
    TempDir d("epssbad");
    write_file(d / "epss.csv", "cve,epss,percentile\nCVE-2011-3544,0.5,0.5\nCVE-2011-3545,1.5,0.5\n");
    try {
        load_epss(d / "epss.csv");
        FAIL() << "expected error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("row 3"), std::string::npos) << e.what();
    }
}

TEST(Epss, TwentyRowFixtureMatchesOracle) {
    TempDir d("epss20");
    forumscope::Rng rng(20);
    std::map<std::string, std::pair<double, double>> oracle;
    std::string text = "# comment\ncve,epss,percentile\n";
    for (int i = 0; i < 20; ++i) {
        const std::string id = "CVE-2020-" + std::to_string(10000 + i);
        const double e = double(rng.below(100001)) / 100000.0, p = double(rng.below(100001)) / 100000.0;
        oracle[id] = {e, p};
        text += id + "," + fmt_double(e, 5) + "," + fmt_double(p, 5) + "\n";
    }
    write_file(d / "epss.csv", text);
    auto m = load_epss(d / "epss.csv");
    ASSERT_EQ(m.size(), 20u);
    for (const auto& [id, v] : oracle) {
        EXPECT_DOUBLE_EQ(m.at(id).epss, v.first);
        EXPECT_DOUBLE_EQ(m.at(id).percentile, v.second);
    }
}

TEST(PostAge, Examples) {
    EXPECT_EQ(post_age(day(2019, 1, 31), day(2019, 1, 1)), 30);
    EXPECT_EQ(post_age(day(2019, 1, 1), day(2019, 1, 1)), 0);
    EXPECT_EQ(post_age(day(2018, 12, 1), day(2019, 1, 1)), -31);
}

// Julian-day-number oracle, independent of std::chrono.
TEST(PostAge, RandomPairsMatchJulianDayOracle) {
    auto jdn = [](int y, int m, int d) {
        const int a = (14 - m) / 12, yy = y + 4800 - a, mm = m + 12 * a - 3;
        return std::int64_t(d) + (153 * mm + 2) / 5 + 365LL * yy + yy / 4 - yy / 100 + yy / 400 - 32045;
    };
    const int mdays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    forumscope::Rng rng(1000);
    auto random_date = [&](int& y, int& m, int& d) {
        y = 1990 + int(rng.below(40));
        m = 1 + int(rng.below(12));
        const bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
        d = 1 + int(rng.below(mdays[m - 1] + (m == 2 && leap)));
    };
    for (int i = 0; i < 1000; ++i) {
        int y1, m1, d1, y2, m2, d2;
        random_date(y1, m1, d1);
        random_date(y2, m2, d2);
        const Date a = day(y1, m1, d1), b = day(y2, m2, d2);
        EXPECT_EQ(post_age(a, b), jdn(y1, m1, d1) - jdn(y2, m2, d2));
        EXPECT_EQ(post_age(a, b), -post_age(b, a));
    }
}

TEST(Join, UnknownIdGoesToUnmatched) {
    NvdMap nvd;
    auto e = join_enrichment({mention("CVE-2000-0001", "p1")}, {{"p1", day(2020, 1, 1)}}, nvd, {});
    EXPECT_TRUE(e.delays.empty());
    EXPECT_EQ(e.unmatched.size(), 1u);
}

TEST(Join, DelaysMatchPerPairOracle) {
    NvdMap nvd;
    nvd["CVE-2011-3544"] = {"CVE-2011-3544", day(2011, 10, 19), 10.0, std::nullopt, {}, {}, {}, ""};
    nvd["CVE-2017-0144"] = {"CVE-2017-0144", day(2017, 3, 17), 9.3, 8.8, {}, {}, {}, ""};
    EpssMap epss{{"CVE-2017-0144", {0.97, 0.99, day(2023, 2, 28)}}};
    std::map<std::string, Date> dates{{"p1", day(2012, 1, 1)}, {"p2", day(2017, 1, 1)}, {"p3", day(2011, 10, 19)}};
    std::vector<CveMention> ms{mention("CVE-2011-3544", "p1"), mention("CVE-2017-0144", "p2"),
                               mention("CVE-2011-3544", "p3"), mention("CVE-1999-0001", "p1")};
    auto e = join_enrichment(ms, dates, nvd, epss);
    ASSERT_EQ(e.delays.size(), 3u);
    EXPECT_EQ(e.delays.size() + e.unmatched.size(), ms.size());
    for (std::size_t i = 0; i < 3; ++i)
        EXPECT_EQ(e.delays[i].post_age_days, dates.at(ms[i].post_id) - nvd.at(ms[i].cve_id).published);
    EXPECT_EQ(e.delays[1].post_age_days, -75);
    EXPECT_EQ(e.scores[1].epss, 0.97);
    EXPECT_FALSE(e.scores[0].epss);
    ASSERT_TRUE(e.epss_date);
    EXPECT_EQ(*e.epss_date, day(2023, 2, 28));

    auto again = join_enrichment(ms, dates, nvd, epss);
    EXPECT_EQ(again.delays, e.delays);
}

TEST(Join, MedianDelayFixture) {
    NvdMap nvd;
    nvd["CVE-2015-0001"] = {"CVE-2015-0001", day(2015, 1, 1), 5.0, {}, {}, {}, {}, ""};
    std::map<std::string, Date> dates;
    std::vector<CveMention> ms;
    for (int off : {-396, 20, 132, 500, 7181}) {
        const auto pid = "p" + std::to_string(off);
        dates[pid] = Date(day(2015, 1, 1).days() + off);
        ms.push_back(mention("CVE-2015-0001", pid));
    }
    auto e = join_enrichment(ms, dates, nvd, {});
    std::vector<std::int64_t> v;
    for (const auto& d : e.delays) v.push_back(d.post_age_days);
    std::sort(v.begin(), v.end());
    EXPECT_EQ(v[v.size() / 2], 132);
    EXPECT_EQ(v.front(), -396);
    EXPECT_EQ(v.back(), 7181);
}

TEST(GlobalMean, OverRecordsCarryingScore) {
    NvdMap nvd;
    nvd["CVE-2000-0001"] = {"CVE-2000-0001", day(2000, 1, 1), 4.0, {}, {}, {}, {}, ""};
    nvd["CVE-2000-0002"] = {"CVE-2000-0002", day(2000, 1, 1), 8.0, 9.0, {}, {}, {}, ""};
    EXPECT_DOUBLE_EQ(*global_mean_score(nvd, ScoreKind::cvss_v2), 6.0);
    EXPECT_DOUBLE_EQ(*global_mean_score(nvd, ScoreKind::cvss_v31), 9.0);
    EXPECT_FALSE(global_mean_score(nvd, ScoreKind::epss));
    EXPECT_THROW(parse_score_kind("cvss_v4"), Error);
}
