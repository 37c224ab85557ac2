#include <gtest/gtest.h>

#include <set>

#include "forumscope/analytics.hpp"
#include "forumscope/random.hpp"
#include "support.hpp"

using namespace forumscope;
using testing_support::TempDir;
using testing_support::write_file;

namespace {

MentionScore score(const std::string& cve, const std::string& thread, std::optional<double> v2,
                   std::optional<double> epss = std::nullopt) {
    return {cve, "p-" + thread, thread, v2, std::nullopt, epss};
}

Post priced_post(const std::string& pid, const std::string& text) {
    Post p;
    p.post_id = pid;
    p.thread_id = "t";
    p.clean_content = text;
    return p;
}

}  // namespace

TEST(Cdf, CountOracleExample) {
    const auto s = empirical_cdf({1, 2, 2, 5});
    EXPECT_EQ(s.values, (std::vector<double>{1, 2, 5}));
    EXPECT_EQ(s.fractions, (std::vector<double>{0.25, 0.75, 1.0}));
    EXPECT_EQ(s.summary.median, 2);
}

TEST(Cdf, SingleSampleAndEmpty) {
    const auto s = empirical_cdf({7});
    EXPECT_EQ(s.fractions, std::vector<double>{1.0});
    EXPECT_EQ(s.summary.min, 7);
    EXPECT_EQ(s.summary.median, 7);
    EXPECT_EQ(s.summary.max, 7);
    EXPECT_THROW(empirical_cdf({}), Error);
    EXPECT_THROW(price_cdf({}), Error);
    EXPECT_THROW(delay_cdf({}), Error);
}

TEST(Cdf, LowerMiddleMedianForEvenCount) { EXPECT_EQ(empirical_cdf({4, 1, 3, 2}).summary.median, 2); }

TEST(Cdf, RandomSetsAreStepFunctionsEndingAtOne) {
    forumscope::Rng rng(1000);
    for (int i = 0; i < 1000; ++i) {
        std::vector<double> v;
        for (std::size_t k = 0, n = 1 + rng.below(60); k < n; ++k) v.push_back(double(rng.below(40)) - 20);
        const auto s = empirical_cdf(v);
        ASSERT_EQ(s.fractions.back(), 1.0);
        for (std::size_t k = 0; k < s.values.size(); ++k) {
            EXPECT_GT(s.fractions[k], 0.0);
            if (k) {
                EXPECT_GE(s.fractions[k], s.fractions[k - 1]);
                EXPECT_LT(s.values[k - 1], s.values[k]);
            }
            const double at = double(std::count_if(v.begin(), v.end(), [&](double x) { return x <= s.values[k]; }));
            EXPECT_DOUBLE_EQ(s.fractions[k], at / double(v.size()));
        }
    }
}

TEST(Cdf, PriceFixtureReproducesSummary) {
    std::vector<Post> posts{priced_post("a", "selling for $1 only"), priced_post("b", "crypter 100 USD lifetime"),
                            priced_post("c", "price: 4,400 USD firm"), priced_post("d", "$25 per month"),
                            priced_post("e", "asking 350 dollars")};
    const auto s = price_cdf(extract_price_mentions(posts));
    EXPECT_EQ(s.name, "prices");
    EXPECT_EQ(s.summary.min, 1);
    EXPECT_EQ(s.summary.median, 100);
    EXPECT_EQ(s.summary.max, 4400);
    EXPECT_EQ(s.summary.count, 5u);
}

TEST(Cdf, DelayFixtureReproducesSummary) {
    std::vector<DelayRecord> d;
    for (std::int64_t v : {-396, 0, 132, 800, 7181}) d.push_back({"CVE-2000-0001", "p", v});
    const auto s = delay_cdf(d);
    EXPECT_EQ(s.summary.min, -396);
    EXPECT_EQ(s.summary.median, 132);
    EXPECT_EQ(s.summary.max, 7181);
    std::vector<DelayRecord> zeros(4, {"CVE-2000-0001", "p", 0});
    EXPECT_EQ(delay_cdf(zeros).values, std::vector<double>{0});
}

TEST(Overlay, LoadsVerbatimAndRejectsMalformed) {
    TempDir d("overlay");
    write_file(d / "o.csv", "# external figures\nname,min,median,max\nrussian_market_prices,100,2000,8000\n"
                            "russian_market_delays,-30,95.5,1500\n");
    const auto o = load_overlay(d / "o.csv");
    ASSERT_EQ(o.size(), 2u);
    EXPECT_EQ(o[0].median, 2000);
    EXPECT_EQ(o[1].median, 95.5);
    std::ostringstream out;
    write_cdf_summary_csv(out, {empirical_cdf({1, 100, 4400}, "prices")}, o);
    EXPECT_NE(out.str().find("russian_market_prices,overlay,100,2000,8000,"), std::string::npos);
    EXPECT_NE(out.str().find("prices,computed,1,100,4400,3"), std::string::npos);

    write_file(d / "bad.csv", "name,min,median,max\nx,1,abc,3\n");
    EXPECT_THROW(load_overlay(d / "bad.csv"), Error);
    write_file(d / "order.csv", "name,min,median,max\nx,5,1,3\n");
    EXPECT_THROW(load_overlay(d / "order.csv"), Error);
    EXPECT_THROW(load_overlay(d / "missing.csv"), Error);
}

TEST(Quartiles, HandValues) {
    const auto q = tukey_quartiles({7, 9, 10});
    EXPECT_EQ(q.median, 9);
    EXPECT_EQ(q.q1, 8);
    EXPECT_EQ(q.q3, 9.5);
    const auto r = tukey_quartiles({1, 2, 3, 4, 5, 6, 7, 8});
    EXPECT_EQ(r.q1, 2.5);
    EXPECT_EQ(r.median, 4.5);
    EXPECT_EQ(r.q3, 6.5);
    forumscope::Rng rng(4);
    for (int i = 0; i < 200; ++i) {
        std::vector<double> v;
        for (std::size_t k = 0, n = 1 + rng.below(30); k < n; ++k) v.push_back(rng.uniform(0, 10));
        const auto s = tukey_quartiles(v);
        EXPECT_LE(s.min, s.q1);
        EXPECT_LE(s.q1, s.median);
        EXPECT_LE(s.median, s.q3);
        EXPECT_LE(s.q3, s.max);
    }
}

TEST(ScoreDistribution, CitationVersusDistinct) {
    const LabelMap labels{{"t1", ThreadLabel::PoC}, {"t2", ThreadLabel::PoC}, {"t3", ThreadLabel::PoC}};
    const std::vector<MentionScore> s{score("CVE-2011-3544", "t1", 9.3), score("CVE-2011-3544", "t2", 9.3),
                                      score("CVE-2011-3544", "t3", 9.3)};
    EXPECT_EQ(score_distribution(s, labels, ScoreKind::cvss_v2, DedupMode::citation)[0].count, 3u);
    EXPECT_EQ(score_distribution(s, labels, ScoreKind::cvss_v2, DedupMode::distinct)[0].count, 1u);
    EXPECT_THROW(score_distribution(s, labels, "cvss_v9", DedupMode::citation), Error);
}

TEST(ScoreDistribution, RecountOraclesOnRandomFixtures) {
    forumscope::Rng rng(77);
    for (int round = 0; round < 100; ++round) {
        LabelMap labels;
        std::vector<MentionScore> s;
        std::map<std::string, std::optional<double>> cve_score;
        for (int c = 0; c < 25; ++c) {
            const auto id = "CVE-2010-" + std::to_string(1000 + c);
            cve_score[id] = rng.bernoulli(0.8) ? std::optional<double>(double(rng.below(101)) / 10) : std::nullopt;
        }
        for (int t = 0; t < 30; ++t) {
            const auto tid = "t" + std::to_string(t);
            labels[tid] = ThreadLabel(rng.below(4));  // includes Scam, excluded from groups
            for (std::size_t k = 0, n = 1 + rng.below(4); k < n; ++k) {
                const auto id = "CVE-2010-" + std::to_string(1000 + rng.below(25));
                s.push_back(score(id, tid, cve_score[id]));
            }
        }
        for (auto mode : {DedupMode::citation, DedupMode::distinct}) {
            const auto rows = score_distribution(s, labels, ScoreKind::cvss_v2, mode);
            for (std::size_t g = 0; g < 4; ++g) {
                std::multiset<double> samples;
                std::set<std::string> seen;
                std::size_t skipped = 0;
                for (const auto& m : s) {
                    const auto l = labels.at(m.thread_id);
                    if (!in_scope(l) || (g < 3 && std::size_t(l) != g)) continue;
                    if (mode == DedupMode::distinct && !seen.insert(m.cve_id).second) continue;
                    if (m.cvss_v2)
                        samples.insert(*m.cvss_v2);
                    else
                        ++skipped;
                }
                EXPECT_EQ(rows[g].count, samples.size());
                EXPECT_EQ(rows[g].skipped, skipped);
                if (rows[g].stats) {
                    EXPECT_EQ(rows[g].stats->min, *samples.begin());
                    EXPECT_EQ(rows[g].stats->max, *samples.rbegin());
                }
            }
            if (mode == DedupMode::distinct) {
                std::set<std::string> scored;
                for (const auto& m : s)
                    if (in_scope(labels.at(m.thread_id)) && m.cvss_v2) scored.insert(m.cve_id);
                EXPECT_EQ(rows[3].count, scored.size());
            } else {
                EXPECT_EQ(rows[3].count, rows[0].count + rows[1].count + rows[2].count);
            }
        }
    }
}

TEST(ScoreDistribution, MedianAboveSevenFixture) {
    const LabelMap labels{{"a", ThreadLabel::PoC}, {"b", ThreadLabel::Weaponization}, {"c", ThreadLabel::Exploitation}};
    const std::vector<MentionScore> s{score("CVE-1", "a", 9.3), score("CVE-2", "b", 7.5), score("CVE-3", "c", 10.0),
                                      score("CVE-4", "a", 4.3), score("CVE-5", "b", 6.8)};
    const auto all = score_distribution(s, labels, ScoreKind::cvss_v2, DedupMode::citation)[3];
    EXPECT_GT(all.stats->median, 7.0);
}

TEST(ShareAboveMean, StrictAndRecount) {
    std::vector<MentionScore> equal(5, score("CVE-1", "t", 5.0));
    EXPECT_EQ(share_above_global_mean(equal, ScoreKind::cvss_v2, 5.0), 0.0);

    std::vector<MentionScore> fixture;
    for (int i = 0; i < 100; ++i) fixture.push_back(score("CVE-x", "t", i < 91 ? 9.0 : 3.0));
    fixture.push_back(score("CVE-y", "t", std::nullopt));
    EXPECT_DOUBLE_EQ(share_above_global_mean(fixture, ScoreKind::cvss_v2, 6.5), 0.91);

    forumscope::Rng rng(5);
    for (int i = 0; i < 100; ++i) {
        std::vector<MentionScore> s;
        std::size_t n = 0, above = 0;
        const double mean = rng.uniform(0, 10);
        for (int k = 0; k < 40; ++k) {
            std::optional<double> v;
            if (rng.bernoulli(0.9)) v = double(rng.below(101)) / 10;
            if (v) ++n, above += *v > mean;
            s.push_back(score("CVE", "t", v));
        }
        if (n) {
            EXPECT_DOUBLE_EQ(share_above_global_mean(s, ScoreKind::cvss_v2, mean), double(above) / double(n));
        }
    }
    EXPECT_THROW(share_above_global_mean({score("CVE", "t", std::nullopt)}, ScoreKind::cvss_v2, 1), Error);
}

TEST(Keywords, SaltedWordRanksFirstAndCountsMatch) {
    std::vector<Thread> threads;
    LabelMap labels;
    for (int i = 0; i < 6; ++i) {
        Thread t;
        t.thread_id = "t" + std::to_string(i);
        t.document = i < 3 ? "multisploit kit multisploit release notes tutorial" : "crypter fud bitcoin crypter";
        labels[t.thread_id] = i < 3 ? ThreadLabel::PoC : ThreadLabel::Exploitation;
        threads.push_back(t);
    }
    const auto k = keyword_frequencies(threads, labels, 10);
    ASSERT_EQ(k.size(), 4u);
    EXPECT_EQ(k[0].grams.front(), (std::pair<std::string, std::size_t>{"multisploit", 6}));
    EXPECT_TRUE(k[1].grams.empty());
    for (const auto& group : k) {
        std::map<std::string, std::size_t> dense;
        for (const auto& t : threads) {
            const auto l = labels.at(t.thread_id);
            if (group.group != "All" && group.group != label_name(l)) continue;
            for (const auto& tok : tokenize(t.document)) ++dense[tok];
        }
        for (const auto& [g, c] : group.grams) EXPECT_EQ(dense.at(g), c);
        for (std::size_t i = 1; i < group.grams.size(); ++i) {
            const auto& a = group.grams[i - 1];
            const auto& b = group.grams[i];
            EXPECT_TRUE(a.second > b.second || (a.second == b.second && a.first < b.first));
        }
    }
}

TEST(Boards, GroupByCounts) {
    std::vector<Thread> threads(3);
    threads[0].forum = threads[1].forum = threads[2].forum = "Hackforums";
    threads[0].board = threads[1].board = "Hacking Tools";
    threads[2].board = "Cryptography";
    threads[0].posts.resize(2);
    threads[1].posts.resize(1);
    threads[2].posts.resize(4);
    const auto b = board_breakdown(threads);
    ASSERT_EQ(b.size(), 2u);
    EXPECT_EQ(b[0].board, "Hacking Tools");
    EXPECT_EQ(b[0].threads, 2u);
    EXPECT_EQ(b[0].posts, 3u);
}

TEST(Output, BoxplotHeaderDocumentsConvention) {
    std::ostringstream out;
    write_boxplot_csv(out, score_distribution({score("CVE-1", "a", 9.0)}, {{"a", ThreadLabel::PoC}}, ScoreKind::cvss_v2,
                                              DedupMode::citation));
    EXPECT_EQ(out.str().rfind("# quartiles: Tukey", 0), 0u);
    EXPECT_NE(out.str().find("PoC,cvss_v2,citation,1,0,9,9,9,9,9"), std::string::npos);
    EXPECT_NE(out.str().find("Weaponization,cvss_v2,citation,0,0,,,,,"), std::string::npos);
}
