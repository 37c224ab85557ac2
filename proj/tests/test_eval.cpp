#include <gtest/gtest.h>

#include <numeric>

#include "forumscope/eval.hpp"
#include "forumscope/random.hpp"
#include "oracles.hpp"

using namespace forumscope;

namespace {

ConfusionMatrix from_counts(const std::vector<std::vector<std::size_t>>& counts) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < counts.size(); ++i) names.push_back("c" + std::to_string(i));
    return {names, counts};
}

ConfusionMatrix random_matrix(forumscope::Rng& rng) {
    const std::size_t k = 2 + rng.below(4);
    std::vector<std::vector<std::size_t>> c(k, std::vector<std::size_t>(k));
    for (auto& row : c)
        for (auto& v : row) v = rng.below(4) == 0 ? 0 : rng.below(50);
    c[0][0] += 1;
    return from_counts(c);
}

}  // namespace

TEST(Confusion, HandCount) {
    const auto cm = confusion({0, 0, 1, 1}, {0, 1, 1, 1}, {"A", "B"});
    EXPECT_EQ(cm.counts, (std::vector<std::vector<std::size_t>>{{1, 1}, {0, 2}}));
    const auto diag = confusion({0, 1, 2, 2}, {0, 1, 2, 2}, {"A", "B", "C"});
    EXPECT_EQ(diag.counts, (std::vector<std::vector<std::size_t>>{{1, 0, 0}, {0, 1, 0}, {0, 0, 2}}));
    EXPECT_THROW(confusion({0, 1}, {0}, {"A", "B"}), Error);
    EXPECT_THROW(confusion({}, {}, {"A"}), Error);
    EXPECT_THROW(confusion({0, 3}, {0, 1}, {"A", "B"}), Error);
}

TEST(Confusion, RowSumsEqualTrueCounts) {
    forumscope::Rng rng(1);
    std::vector<int> t, p;
    std::vector<std::size_t> counts(3, 0);
    for (int i = 0; i < 500; ++i) {
        t.push_back(int(rng.below(3)));
        p.push_back(int(rng.below(3)));
        ++counts[std::size_t(t.back())];
    }
    const auto cm = confusion(t, p, {"a", "b", "c"});
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(cm.row_sum(c), counts[c]);
    EXPECT_EQ(cm.total(), 500u);
}

TEST(Metrics, HandComputedMatrices) {
    for (const auto& hc : oracle::hand_metric_cases()) {
        const auto r = metrics(from_counts(hc.counts));
        EXPECT_NEAR(r.accuracy, hc.accuracy, 1e-12);
        for (std::size_t c = 0; c < hc.counts.size(); ++c) {
            EXPECT_NEAR(r.per_class[c].precision, hc.precision[c], 1e-12);
            EXPECT_NEAR(r.per_class[c].recall, hc.recall[c], 1e-12);
            EXPECT_NEAR(r.per_class[c].f1, hc.f1[c], 1e-12);
            EXPECT_EQ(r.per_class[c].precision_undefined, hc.precision_undefined[c]);
        }
        const double macro_f1 = std::accumulate(hc.f1.begin(), hc.f1.end(), 0.0) / double(hc.f1.size());
        EXPECT_NEAR(r.macro.f1, macro_f1, 1e-12);
    }
}

TEST(Metrics, AccuracyEqualsWeightedRecall) {
    forumscope::Rng rng(200);
    for (int i = 0; i < 200; ++i) {
        const auto cm = random_matrix(rng);
        const auto r = metrics(cm);
        EXPECT_NEAR(r.accuracy, r.weighted.recall, 1e-12);
    }
}

TEST(Metrics, MatchOracleOnRandomMatrices) {
    forumscope::Rng rng(201);
    for (int i = 0; i < 200; ++i) {
        const auto cm = random_matrix(rng);
        std::vector<std::vector<double>> d;
        for (const auto& row : cm.counts) d.emplace_back(row.begin(), row.end());
        const auto h = oracle::metrics(d);
        const auto r = metrics(cm);
        EXPECT_NEAR(r.accuracy, h.accuracy, 1e-12);
        EXPECT_NEAR(r.macro.f1, h.macro_f1, 1e-12);
        for (std::size_t c = 0; c < cm.n(); ++c) {
            EXPECT_NEAR(r.per_class[c].precision, h.precision[c], 1e-12);
            EXPECT_NEAR(r.per_class[c].recall, h.recall[c], 1e-12);
        }
        for (const auto& m : r.per_class)
            for (double v : {m.precision, m.recall, m.f1}) {
                EXPECT_GE(v, 0.0);
                EXPECT_LE(v, 1.0);
            }
    }
}

TEST(Metrics, PermutationInvariantAverages) {
    forumscope::Rng rng(202);
    for (int i = 0; i < 50; ++i) {
        const auto cm = random_matrix(rng);
        std::vector<std::size_t> perm(cm.n());
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm);
        auto pc = cm;
        for (std::size_t a = 0; a < cm.n(); ++a)
            for (std::size_t b = 0; b < cm.n(); ++b) pc.counts[a][b] = cm.counts[perm[a]][perm[b]];
        const auto r = metrics(cm), q = metrics(pc);
        EXPECT_NEAR(r.accuracy, q.accuracy, 1e-12);
        EXPECT_NEAR(r.macro.f1, q.macro.f1, 1e-12);
        EXPECT_NEAR(r.weighted.precision, q.weighted.precision, 1e-12);
        for (std::size_t a = 0; a < cm.n(); ++a) EXPECT_NEAR(q.per_class[a].f1, r.per_class[perm[a]].f1, 1e-12);
    }
}

TEST(Metrics, CsvLayout) {
    const auto r = metrics(from_counts({{1, 1}, {0, 2}}), "RF", "tfidf", "3class");
    std::ostringstream out;
    write_metrics_header(out);
    write_metrics_row(out, r);
    EXPECT_EQ(out.str(), "model,encoding,task,accuracy,precision,recall,f1\nRF,tfidf,3class,0.7500,0.8333,0.7500,0.7333\n");
    std::ostringstream pc;
    write_per_class_rows(pc, metrics(from_counts({{0, 3}, {0, 2}})));
    EXPECT_NE(pc.str().find("precision_zero_division"), std::string::npos);
}
