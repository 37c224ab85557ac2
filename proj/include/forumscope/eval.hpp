#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "forumscope/common.hpp"
#include "forumscope/csv.hpp"

namespace forumscope {

/// counts[t][p]: items of true class t predicted as p.
struct ConfusionMatrix {
    std::vector<std::string> class_names;
    std::vector<std::vector<std::size_t>> counts;

    std::size_t n() const { return counts.size(); }

    std::size_t total() const {
        std::size_t s = 0;
        for (const auto& row : counts)
            for (auto c : row) s += c;
        return s;
    }

    std::size_t row_sum(std::size_t t) const {
        std::size_t s = 0;
        for (auto c : counts.at(t)) s += c;
        return s;
    }

    std::size_t col_sum(std::size_t p) const {
        std::size_t s = 0;
        for (const auto& row : counts) s += row.at(p);
        return s;
    }
};

inline ConfusionMatrix confusion(const std::vector<int>& truth, const std::vector<int>& predicted,
                                 std::vector<std::string> class_names) {
    if (truth.size() != predicted.size())
        throw Error("confusion: " + std::to_string(truth.size()) + " true labels vs " +
                    std::to_string(predicted.size()) + " predictions");
    if (truth.empty()) throw Error("confusion: no items");
    const std::size_t k = class_names.size();
    ConfusionMatrix cm{std::move(class_names), std::vector<std::vector<std::size_t>>(k, std::vector<std::size_t>(k, 0))};
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || std::size_t(truth[i]) >= k || predicted[i] < 0 || std::size_t(predicted[i]) >= k)
            throw Error("confusion: label outside class range");
        ++cm.counts[std::size_t(truth[i])][std::size_t(predicted[i])];
    }
    return cm;
}

struct ClassMetrics {
    std::string name;
    double precision = 0, recall = 0, f1 = 0;
    std::size_t support = 0;
    bool precision_undefined = false;  // no predictions of this class
    bool recall_undefined = false;     // no true items of this class
};

struct AverageMetrics {
    double precision = 0, recall = 0, f1 = 0;
};

/// Zero-division cells are reported as 0 and flagged instead of NaN.
struct MetricsReport {
    std::string model, encoding, task;
    double accuracy = 0;
    std::vector<ClassMetrics> per_class;
    AverageMetrics macro, weighted;
};

inline MetricsReport metrics(const ConfusionMatrix& cm, std::string model = {}, std::string encoding = {},
                             std::string task = {}) {
    MetricsReport r{std::move(model), std::move(encoding), std::move(task), 0, {}, {}, {}};
    const std::size_t total = cm.total();
    if (cm.n() == 0 || total == 0) throw Error("metrics: empty confusion matrix");
    std::size_t trace = 0;
    for (std::size_t i = 0; i < cm.n(); ++i) trace += cm.counts[i][i];
    r.accuracy = double(trace) / double(total);
    for (std::size_t c = 0; c < cm.n(); ++c) {
        ClassMetrics m;
        m.name = c < cm.class_names.size() ? cm.class_names[c] : std::to_string(c);
        const double diag = double(cm.counts[c][c]);
        const auto col = cm.col_sum(c), row = cm.row_sum(c);
        m.support = row;
        if (col) m.precision = diag / double(col);
        else m.precision_undefined = true;
        if (row) m.recall = diag / double(row);
        else m.recall_undefined = true;
        if (m.precision + m.recall > 0) m.f1 = 2 * m.precision * m.recall / (m.precision + m.recall);
        r.macro.precision += m.precision / double(cm.n());
        r.macro.recall += m.recall / double(cm.n());
        r.macro.f1 += m.f1 / double(cm.n());
        const double w = double(row) / double(total);
        r.weighted.precision += w * m.precision;
        r.weighted.recall += w * m.recall;
        r.weighted.f1 += w * m.f1;
        r.per_class.push_back(std::move(m));
    }
    return r;
}

/// Summary layout: model,encoding,task,accuracy,precision,recall,f1 using
/// support-weighted averages (accuracy equals weighted recall).
inline void write_metrics_header(std::ostream& out) { out << "model,encoding,task,accuracy,precision,recall,f1\n"; }

inline void write_metrics_row(std::ostream& out, const MetricsReport& r) {
    csv::write_row(out, {r.model, r.encoding, r.task, fmt_double(r.accuracy, 4), fmt_double(r.weighted.precision, 4),
                         fmt_double(r.weighted.recall, 4), fmt_double(r.weighted.f1, 4)});
}

/// Extended per-class file, including both macro and weighted averages.
inline void write_per_class_header(std::ostream& out) {
    out << "model,encoding,task,class,precision,recall,f1,support,flags\n";
}

inline void write_per_class_rows(std::ostream& out, const MetricsReport& r) {
    for (const auto& m : r.per_class) {
        std::string flags;
        if (m.precision_undefined) flags += "precision_zero_division";
        if (m.recall_undefined) flags += std::string(flags.empty() ? "" : ";") + "recall_zero_division";
        csv::write_row(out, {r.model, r.encoding, r.task, m.name, fmt_double(m.precision, 4), fmt_double(m.recall, 4),
                             fmt_double(m.f1, 4), std::to_string(m.support), flags});
    }
    std::size_t support = 0;
    for (const auto& m : r.per_class) support += m.support;
    csv::write_row(out, {r.model, r.encoding, r.task, "macro avg", fmt_double(r.macro.precision, 4),
                         fmt_double(r.macro.recall, 4), fmt_double(r.macro.f1, 4), std::to_string(support), ""});
    csv::write_row(out, {r.model, r.encoding, r.task, "weighted avg", fmt_double(r.weighted.precision, 4),
                         fmt_double(r.weighted.recall, 4), fmt_double(r.weighted.f1, 4), std::to_string(support), ""});
}

inline void write_confusion_csv(std::ostream& out, const ConfusionMatrix& cm) {
    std::vector<std::string> header{"true\\predicted"};
    header.insert(header.end(), cm.class_names.begin(), cm.class_names.end());
    csv::write_row(out, header);
    for (std::size_t t = 0; t < cm.n(); ++t) {
        std::vector<std::string> row{cm.class_names.at(t)};
        for (auto c : cm.counts[t]) row.push_back(std::to_string(c));
        csv::write_row(out, row);
    }
}

}  // namespace forumscope
