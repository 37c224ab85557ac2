#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <future>
#include <limits>
#include <optional>
#include <queue>
#include <string>
#include <thread>
#include <tuple>
#include <variant>
#include <vector>

#include <json.hpp>

#include "forumscope/common.hpp"
#include "forumscope/dataset.hpp"
#include "forumscope/eval.hpp"
#include "forumscope/random.hpp"
#include "forumscope/textfeat.hpp"

namespace forumscope {

/// 1 - sum (c_i / n)^2.
template <class Count>
double gini_impurity(const std::vector<Count>& class_counts) {
    double n = 0;
    for (auto c : class_counts) {
        if (c < 0) throw Error("gini_impurity: negative class count");
        n += double(c);
    }
    if (n <= 0) throw Error("gini_impurity: all class counts are zero");
    double s = 0;
    for (auto c : class_counts) {
        const double p = double(c) / n;
        s += p * p;
    }
    return 1.0 - s;
}

/// Features inspected per node: all, sqrt(F), log2(F), a fixed count, or a
/// fraction of F.
struct MaxFeatures {
    enum class Kind { all = 0, sqrt = 1, log2 = 2, count = 3, fraction = 4 };
    Kind kind = Kind::all;
    double value = 0;

    std::size_t resolve(std::size_t n_features) const {
        std::size_t m = n_features;
        switch (kind) {
            case Kind::all: m = n_features; break;
            case Kind::sqrt: m = std::size_t(std::sqrt(double(n_features))); break;
            case Kind::log2: m = std::size_t(std::log2(std::max<double>(1, double(n_features)))); break;
            case Kind::count: m = std::size_t(value); break;
            case Kind::fraction: m = std::size_t(value * double(n_features)); break;
        }
        return std::clamp<std::size_t>(m, 1, std::max<std::size_t>(1, n_features));
    }

    std::string str() const {
        switch (kind) {
            case Kind::all: return "all";
            case Kind::sqrt: return "sqrt";
            case Kind::log2: return "log2";
            case Kind::count: return std::to_string(std::size_t(value));
            case Kind::fraction: {
                char buf[32];
                std::snprintf(buf, sizeof buf, "%g", value);
                return buf;
            }
        }
        return "all";
    }

    static MaxFeatures parse(std::string_view s) {
        const auto n = to_lower(trim(s));
        if (n == "all" || n == "none" || n.empty()) return {Kind::all, 0};
        if (n == "sqrt" || n == "auto") return {Kind::sqrt, 0};
        if (n == "log2") return {Kind::log2, 0};
        char* end = nullptr;
        const double v = std::strtod(n.c_str(), &end);
        if (end != n.c_str() + n.size() || !(v > 0)) throw Error("invalid max_features '" + std::string(s) + "'");
        if (n.find('.') != std::string::npos) {
            if (v > 1) throw Error("max_features fraction must be in (0, 1]");
            return {Kind::fraction, v};
        }
        return {Kind::count, v};
    }

    friend bool operator==(const MaxFeatures&, const MaxFeatures&) = default;
};

struct TreeParams {
    std::optional<std::size_t> max_depth;  // unlimited when absent
    MaxFeatures max_features;
    std::size_t min_samples_split = 2;
    std::optional<std::size_t> max_leaf_nodes;  // unlimited when absent

    friend bool operator==(const TreeParams&, const TreeParams&) = default;
};

struct ForestParams {
    TreeParams tree{std::nullopt, {MaxFeatures::Kind::sqrt, 0}, 2, std::nullopt};
    std::size_t n_trees = 100;
    bool bootstrap = true;

    friend bool operator==(const ForestParams&, const ForestParams&) = default;
};

/// Column-major training view: per-feature nonzero entries plus labels and
/// integer sample weights (bootstrap counts).
class TrainingView {
public:
    struct Entry {
        std::uint32_t row;
        double value;
    };

    explicit TrainingView(const LabeledDataset& ds) : n_features_(ds.n_features), n_classes_(ds.n_classes()) {
        if (ds.items.empty()) throw Error("cannot fit a model on an empty training set");
        if (n_features_ == 0) throw Error("cannot fit a model without features");
        columns_.resize(n_features_);
        labels_.reserve(ds.items.size());
        for (std::size_t r = 0; r < ds.items.size(); ++r) {
            const auto& it = ds.items[r];
            if (it.label < 0 || std::size_t(it.label) >= n_classes_) throw Error("item label outside class range");
            labels_.push_back(it.label);
            for (std::size_t k = 0; k < it.features.indices.size(); ++k) {
                const auto f = it.features.indices[k];
                if (f >= n_features_) throw Error("feature index outside the declared feature space");
                columns_[f].push_back({std::uint32_t(r), it.features.values[k]});
            }
        }
    }

    std::size_t n_rows() const { return labels_.size(); }
    std::size_t n_features() const { return n_features_; }
    std::size_t n_classes() const { return n_classes_; }
    int label(std::size_t r) const { return labels_[r]; }
    const std::vector<Entry>& column(std::size_t f) const { return columns_[f]; }

private:
    std::size_t n_features_, n_classes_;
    std::vector<std::vector<Entry>> columns_;
    std::vector<int> labels_;
};

struct TreeNode {
    int feature = -1;  // -1 for leaves
    double threshold = 0;
    int left = -1, right = -1;
    std::vector<double> class_counts;  // weighted training counts at this node

    bool is_leaf() const { return feature < 0; }
};

/// Binary CART classifier: left branch takes value <= threshold.
class DecisionTree {
public:
    DecisionTree() = default;
    DecisionTree(std::vector<std::string> class_names, std::size_t n_features, TreeParams params, std::uint64_t seed,
                 std::vector<TreeNode> nodes)
        : class_names_(std::move(class_names)), n_features_(n_features), params_(params), seed_(seed),
          nodes_(std::move(nodes)) {}

    const std::vector<TreeNode>& nodes() const { return nodes_; }
    const std::vector<std::string>& class_names() const { return class_names_; }
    std::size_t n_features() const { return n_features_; }
    const TreeParams& params() const { return params_; }
    std::uint64_t seed() const { return seed_; }

    std::size_t leaf_count() const {
        return std::size_t(std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.is_leaf(); }));
    }

    std::size_t depth() const { return depth_from(0); }

    /// Index of the leaf reached by x.
    std::size_t leaf_for(const SparseVector& x) const {
        check_dims(x);
        std::size_t i = 0;
        while (!nodes_[i].is_leaf()) {
            const auto& n = nodes_[i];
            i = std::size_t(x.at(std::uint32_t(n.feature)) <= n.threshold ? n.left : n.right);
        }
        return i;
    }

    std::vector<double> predict_proba(const SparseVector& x) const { return leaf_distribution(nodes_[leaf_for(x)]); }

    static std::vector<double> leaf_distribution(const TreeNode& leaf) {
        std::vector<double> p = leaf.class_counts;
        double s = 0;
        for (double v : p) s += v;
        for (auto& v : p) v /= s;
        return p;
    }

    void check_dims(const SparseVector& x) const {
        if (!x.indices.empty() && x.indices.back() >= n_features_)
            throw Error("feature vector index " + std::to_string(x.indices.back()) + " outside model feature space of " +
                        std::to_string(n_features_));
    }

private:
    std::vector<std::string> class_names_;
    std::size_t n_features_ = 0;
    TreeParams params_;
    std::uint64_t seed_ = 0;
    std::vector<TreeNode> nodes_;

    std::size_t depth_from(std::size_t i) const {
        if (nodes_[i].is_leaf()) return 0;
        return 1 + std::max(depth_from(std::size_t(nodes_[i].left)), depth_from(std::size_t(nodes_[i].right)));
    }
};

inline int argmax_label(const std::vector<double>& p) {
    int best = 0;
    for (std::size_t c = 1; c < p.size(); ++c)
        if (p[c] > p[std::size_t(best)]) best = int(c);
    return best;
}

inline constexpr double kGainEpsilon = 1e-12;

namespace detail {

struct SplitChoice {
    int feature = -1;
    double threshold = 0;
    double gain = 0;
};

// Better split: higher gain; within kGainEpsilon, lower feature index, then
// lower threshold.
inline bool better_split(const SplitChoice& a, const SplitChoice& b) {
    if (b.feature < 0) return a.feature >= 0;
    if (a.gain > b.gain + kGainEpsilon) return true;
    if (a.gain < b.gain - kGainEpsilon) return false;
    if (a.feature != b.feature) return a.feature < b.feature;
    return a.threshold < b.threshold;
}

inline double gini_of(const std::vector<double>& counts, double total) {
    if (total <= 0) return 0;
    double s = 0;
    for (double c : counts) s += (c / total) * (c / total);
    return 1.0 - s;
}

class TreeBuilder {
public:
    TreeBuilder(const TrainingView& view, const std::vector<double>& weights, const TreeParams& params,
                std::uint64_t seed)
        : view_(view), weights_(weights), params_(params), rng_(derive_seed(seed, 0xfea7)),
          mark_(view.n_rows(), -1), perm_(view.n_features()) {
        for (std::size_t f = 0; f < perm_.size(); ++f) perm_[f] = f;
        m_features_ = params.max_features.resolve(view.n_features());
    }

    std::vector<TreeNode> build() {
        struct Pending {
            std::vector<std::uint32_t> rows;
            std::size_t depth;
            SplitChoice split;
        };
        std::vector<TreeNode> nodes;
        std::vector<Pending> pending;

        std::vector<std::uint32_t> root_rows;
        for (std::size_t r = 0; r < view_.n_rows(); ++r)
            if (weights_[r] > 0) root_rows.push_back(std::uint32_t(r));
        if (root_rows.empty()) throw Error("training set has no positively weighted samples");

        auto make_node = [&](std::vector<std::uint32_t> rows, std::size_t depth) {
            TreeNode n;
            n.class_counts.assign(view_.n_classes(), 0.0);
            for (auto r : rows) n.class_counts[std::size_t(view_.label(r))] += weights_[r];
            const int id = int(nodes.size());
            Pending p{std::move(rows), depth, {}};
            p.split = find_split(id, p.rows, n.class_counts, depth);
            nodes.push_back(std::move(n));
            pending.push_back(std::move(p));
            return id;
        };

        const double root_weight = [&] {
            double w = 0;
            for (auto r : root_rows) w += weights_[r];
            return w;
        }();
        make_node(std::move(root_rows), 0);

        // Best-first: expand the pending node with the largest weighted
        // impurity decrease; ties go to the older node.
        using QItem = std::pair<double, int>;
        auto cmp = [](const QItem& a, const QItem& b) {
            if (a.first != b.first) return a.first < b.first;
            return a.second > b.second;
        };
        std::priority_queue<QItem, std::vector<QItem>, decltype(cmp)> queue(cmp);
        auto enqueue = [&](int id) {
            const auto& p = pending[std::size_t(id)];
            if (p.split.feature < 0) return;
            double w = 0;
            for (double c : nodes[std::size_t(id)].class_counts) w += c;
            queue.push({w / root_weight * p.split.gain, id});
        };
        enqueue(0);
        std::size_t leaves = 1;
        while (!queue.empty()) {
            if (params_.max_leaf_nodes && leaves >= *params_.max_leaf_nodes) break;
            const int id = queue.top().second;
            queue.pop();
            auto rows = std::move(pending[std::size_t(id)].rows);
            const auto split = pending[std::size_t(id)].split;
            const auto depth = pending[std::size_t(id)].depth;
            std::vector<std::uint32_t> left_rows, right_rows;
            partition(rows, split, left_rows, right_rows);
            nodes[std::size_t(id)].feature = split.feature;
            nodes[std::size_t(id)].threshold = split.threshold;
            const int l = make_node(std::move(left_rows), depth + 1);
            const int r = make_node(std::move(right_rows), depth + 1);
            nodes[std::size_t(id)].left = l;
            nodes[std::size_t(id)].right = r;
            ++leaves;
            enqueue(l);
            enqueue(r);
        }
        return nodes;
    }

private:
    const TrainingView& view_;
    const std::vector<double>& weights_;
    TreeParams params_;
    Rng rng_;
    std::vector<int> mark_;
    std::vector<std::size_t> perm_;
    std::size_t m_features_ = 1;

    struct ValueEntry {
        double value;
        int label;
        double weight;
    };

    void partition(const std::vector<std::uint32_t>& rows, const SplitChoice& s, std::vector<std::uint32_t>& left,
                   std::vector<std::uint32_t>& right) {
        // Row values for the split feature; rows absent from the column are 0.
        std::vector<double> value(view_.n_rows(), 0.0);
        for (const auto& e : view_.column(std::size_t(s.feature))) value[e.row] = e.value;
        for (auto r : rows) (value[r] <= s.threshold ? left : right).push_back(r);
    }

    // Best threshold for one feature; feature = -1 when the feature is
    // constant on this node.
    SplitChoice best_threshold(int node_id, std::size_t f, const std::vector<double>& node_counts, double node_w,
                               double parent_gini, std::vector<ValueEntry>& buf) {
        buf.clear();
        std::vector<double> zero_counts = node_counts;
        for (const auto& e : view_.column(f)) {
            if (mark_[e.row] != node_id) continue;
            const double w = weights_[e.row];
            buf.push_back({e.value, view_.label(e.row), w});
            zero_counts[std::size_t(view_.label(e.row))] -= w;
        }
        for (std::size_t c = 0; c < zero_counts.size(); ++c)
            if (zero_counts[c] > 0.5) buf.push_back({0.0, int(c), zero_counts[c]});
        SplitChoice best;
        if (buf.size() < 2) return best;
        std::sort(buf.begin(), buf.end(), [](const ValueEntry& a, const ValueEntry& b) {
            if (a.value != b.value) return a.value < b.value;
            return a.label < b.label;
        });
        if (buf.front().value == buf.back().value) return best;
        std::vector<double> left(node_counts.size(), 0.0);
        double left_w = 0;
        for (std::size_t i = 0; i + 1 < buf.size(); ++i) {
            left[std::size_t(buf[i].label)] += buf[i].weight;
            left_w += buf[i].weight;
            if (buf[i].value == buf[i + 1].value) continue;
            std::vector<double> right(node_counts.size());
            for (std::size_t c = 0; c < right.size(); ++c) right[c] = node_counts[c] - left[c];
            const double right_w = node_w - left_w;
            const double gain = parent_gini - (left_w / node_w) * gini_of(left, left_w) -
                                (right_w / node_w) * gini_of(right, right_w);
            double thr = buf[i].value + (buf[i + 1].value - buf[i].value) / 2.0;
            if (thr >= buf[i + 1].value) thr = buf[i].value;
            const SplitChoice cand{int(f), thr, gain};
            if (better_split(cand, best)) best = cand;
        }
        return best;
    }

    SplitChoice find_split(int node_id, const std::vector<std::uint32_t>& rows, const std::vector<double>& counts,
                           std::size_t depth) {
        SplitChoice none;
        double w = 0;
        for (double c : counts) w += c;
        if (params_.max_depth && depth >= *params_.max_depth) return none;
        if (w < double(params_.min_samples_split) || w < 2) return none;
        const double parent = gini_of(counts, w);
        if (parent <= kGainEpsilon) return none;
        for (auto r : rows) mark_[r] = node_id;

        std::vector<ValueEntry> buf;
        SplitChoice best;
        const std::size_t nf = perm_.size();
        auto consider = [&](std::size_t f) {
            auto cand = best_threshold(node_id, f, counts, w, parent, buf);
            if (cand.feature >= 0 && better_split(cand, best)) best = cand;
            return cand.feature >= 0;
        };
        if (m_features_ >= nf) {
            for (std::size_t f = 0; f < nf; ++f) consider(f);
        } else {
            // Partial Fisher-Yates draw of m features, visited in index order.
            // When none of them varies on this node, keep drawing until one
            // does or the features run out.
            for (std::size_t i = 0; i < m_features_; ++i) std::swap(perm_[i], perm_[i + rng_.below(nf - i)]);
            std::vector<std::size_t> chosen(perm_.begin(), perm_.begin() + std::ptrdiff_t(m_features_));
            std::sort(chosen.begin(), chosen.end());
            bool any_valid = false;
            for (auto f : chosen) any_valid = consider(f) || any_valid;
            for (std::size_t i = m_features_; !any_valid && i < nf; ++i) {
                std::swap(perm_[i], perm_[i + rng_.below(nf - i)]);
                any_valid = consider(perm_[i]);
            }
        }
        if (best.feature < 0 || best.gain <= kGainEpsilon) return none;
        return best;
    }
};

}  // namespace detail

inline DecisionTree fit_tree_weighted(const TrainingView& view, const std::vector<std::string>& class_names,
                                      const std::vector<double>& weights, const TreeParams& params,
                                      std::uint64_t seed) {
    if (params.min_samples_split < 2) throw Error("min_samples_split must be >= 2");
    if (params.max_leaf_nodes && *params.max_leaf_nodes < 2) throw Error("max_leaf_nodes must be >= 2");
    detail::TreeBuilder builder(view, weights, params, seed);
    return DecisionTree(class_names, view.n_features(), params, seed, builder.build());
}

inline DecisionTree fit_tree(const LabeledDataset& train, const TreeParams& params, std::uint64_t seed) {
    const TrainingView view(train);
    const std::vector<double> weights(view.n_rows(), 1.0);
    return fit_tree_weighted(view, train.class_names, weights, params, seed);
}

class RandomForest {
public:
    RandomForest() = default;
    RandomForest(ForestParams params, std::uint64_t master_seed, std::vector<DecisionTree> trees)
        : params_(params), master_seed_(master_seed), trees_(std::move(trees)) {}

    const std::vector<DecisionTree>& trees() const { return trees_; }
    const ForestParams& params() const { return params_; }
    std::uint64_t master_seed() const { return master_seed_; }
    const std::vector<std::string>& class_names() const { return trees_.front().class_names(); }
    std::size_t n_features() const { return trees_.front().n_features(); }

    /// Mean of the trees' leaf distributions.
    std::vector<double> predict_proba(const SparseVector& x) const {
        std::vector<double> sum(class_names().size(), 0.0);
        for (const auto& t : trees_) {
            const auto p = t.predict_proba(x);
            for (std::size_t c = 0; c < sum.size(); ++c) sum[c] += p[c];
        }
        for (auto& v : sum) v /= double(trees_.size());
        return sum;
    }

private:
    ForestParams params_;
    std::uint64_t master_seed_ = 0;
    std::vector<DecisionTree> trees_;
};

/// Seed of forest tree i; tree 0 uses the master seed itself.
constexpr std::uint64_t forest_tree_seed(std::uint64_t master_seed, std::size_t i) { return master_seed + i; }

namespace detail {

// Runs fn(i) for i in [0, n) on up to hardware_concurrency threads; results
// are placed by index so scheduling cannot change them.
template <class Fn>
auto parallel_map(std::size_t n, Fn fn) -> std::vector<decltype(fn(std::size_t{}))> {
    using R = decltype(fn(std::size_t{}));
    std::vector<std::optional<R>> slots(n);
    const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(std::thread::hardware_concurrency(), n));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) slots[i].emplace(fn(i));
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::future<void>> running;
        for (std::size_t w = 0; w < workers; ++w)
            running.push_back(std::async(std::launch::async, [&] {
                for (std::size_t i = next++; i < n; i = next++) slots[i].emplace(fn(i));
            }));
        for (auto& f : running) f.get();
    }
    std::vector<R> out;
    out.reserve(n);
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

}  // namespace detail

inline RandomForest fit_forest(const LabeledDataset& train, const ForestParams& params, std::uint64_t master_seed) {
    if (params.n_trees < 1) throw Error("n_trees must be >= 1");
    const TrainingView view(train);
    auto trees = detail::parallel_map(params.n_trees, [&](std::size_t i) {
        const auto seed = forest_tree_seed(master_seed, i);
        std::vector<double> weights(view.n_rows(), params.bootstrap ? 0.0 : 1.0);
        if (params.bootstrap) {
            Rng rng(derive_seed(seed, 0xb007));
            for (std::size_t k = 0; k < view.n_rows(); ++k) weights[rng.below(view.n_rows())] += 1.0;
        }
        return fit_tree_weighted(view, train.class_names, weights, params.tree, seed);
    });
    return RandomForest(params, master_seed, std::move(trees));
}

enum class ModelKind { tree, forest };

inline const char* model_kind_name(ModelKind k) { return k == ModelKind::tree ? "tree" : "forest"; }

inline ModelKind parse_model_kind(std::string_view s) {
    const auto n = to_lower(s);
    if (n == "tree" || n == "dt" || n == "decision_tree") return ModelKind::tree;
    if (n == "forest" || n == "rf" || n == "random_forest") return ModelKind::forest;
    throw Error("unknown model kind '" + std::string(s) + "' (expected tree or forest)");
}

/// A trained classifier plus the hash of the featurizer it expects.
struct Model {
    std::variant<DecisionTree, RandomForest> impl;
    std::string featurizer_hash;

    ModelKind kind() const { return impl.index() == 0 ? ModelKind::tree : ModelKind::forest; }

    const std::vector<std::string>& class_names() const {
        return std::visit([](const auto& m) -> const std::vector<std::string>& { return m.class_names(); }, impl);
    }
    std::size_t n_features() const {
        return std::visit([](const auto& m) { return m.n_features(); }, impl);
    }
    std::vector<double> predict_proba(const SparseVector& x) const {
        return std::visit([&](const auto& m) { return m.predict_proba(x); }, impl);
    }

    void check_featurizer(const std::string& hash) const {
        if (!featurizer_hash.empty() && hash != featurizer_hash)
            throw Error("featurizer hash " + hash.substr(0, 12) + " does not match the model's " +
                        featurizer_hash.substr(0, 12));
    }
};

struct Prediction {
    int label = 0;
    std::vector<double> probabilities;
};

/// Argmax of the class distribution; ties resolve to the lowest class index.
template <class M>
Prediction predict(const M& model, const SparseVector& x) {
    Prediction p;
    p.probabilities = model.predict_proba(x);
    p.label = argmax_label(p.probabilities);
    return p;
}

/// Dense overload: the vector length must equal the model feature count.
template <class M>
Prediction predict(const M& model, const std::vector<double>& x) {
    if (x.size() != model.n_features())
        throw Error("feature vector has " + std::to_string(x.size()) + " entries, model expects " +
                    std::to_string(model.n_features()));
    return predict(model, SparseVector::from_dense(x));
}

inline Model fit_model(ModelKind kind, const LabeledDataset& train, const ForestParams& params, std::uint64_t seed) {
    if (kind == ModelKind::tree) return {fit_tree(train, params.tree, seed), {}};
    return {fit_forest(train, params, seed), {}};
}

// ---------------------------------------------------------------------------
// Grid search

enum class ScoringMetric { macro_f1, accuracy };

inline ScoringMetric parse_scoring(std::string_view s) {
    const auto n = to_lower(s);
    if (n == "macro_f1" || n == "f1") return ScoringMetric::macro_f1;
    if (n == "accuracy") return ScoringMetric::accuracy;
    throw Error("unknown scoring metric '" + std::string(s) + "'");
}

inline const char* scoring_name(ScoringMetric m) { return m == ScoringMetric::macro_f1 ? "macro_f1" : "accuracy"; }

struct HyperParamGrid {
    std::vector<std::optional<std::size_t>> max_depth{std::nullopt};
    std::vector<MaxFeatures> max_features{{MaxFeatures::Kind::sqrt, 0}};
    std::vector<std::size_t> min_samples_split{2};
    std::vector<std::optional<std::size_t>> max_leaf_nodes{std::nullopt};
    std::vector<std::size_t> n_trees{100};
    bool bootstrap = true;
    ScoringMetric scoring = ScoringMetric::macro_f1;
    std::size_t k = 5;

    std::vector<ForestParams> points(ModelKind kind) const {
        if (max_depth.empty() || max_features.empty() || min_samples_split.empty() || max_leaf_nodes.empty() ||
            n_trees.empty())
            throw Error("hyperparameter grid has an empty axis");
        std::vector<ForestParams> out;
        const std::vector<std::size_t> trees = kind == ModelKind::tree ? std::vector<std::size_t>{1} : n_trees;
        for (auto d : max_depth)
            for (auto mf : max_features)
                for (auto mss : min_samples_split)
                    for (auto mln : max_leaf_nodes)
                        for (auto nt : trees) out.push_back({{d, mf, mss, mln}, nt, bootstrap});
        return out;
    }
};

/// Lexicographic order key; "unlimited" sorts after every finite value.
inline auto hyperparam_key(const ForestParams& p) {
    constexpr auto inf = std::numeric_limits<std::size_t>::max();
    return std::make_tuple(p.tree.max_depth.value_or(inf), int(p.tree.max_features.kind), p.tree.max_features.value,
                           p.tree.min_samples_split, p.tree.max_leaf_nodes.value_or(inf), p.n_trees);
}

inline std::string describe(const ForestParams& p, ModelKind kind) {
    auto opt = [](const std::optional<std::size_t>& v) { return v ? std::to_string(*v) : std::string("none"); };
    std::string s = "max_depth=" + opt(p.tree.max_depth) + " max_features=" + p.tree.max_features.str() +
                    " min_samples_split=" + std::to_string(p.tree.min_samples_split) +
                    " max_leaf_nodes=" + opt(p.tree.max_leaf_nodes);
    if (kind == ModelKind::forest) s += " n_trees=" + std::to_string(p.n_trees);
    return s;
}

struct GridRow {
    ForestParams params;
    std::vector<double> fold_scores;
    double mean = 0;
};

struct GridResult {
    ForestParams best;
    double best_score = 0;
    std::vector<GridRow> table;
};

inline double score_predictions(const LabeledDataset& validation, const Model& model, ScoringMetric metric) {
    std::vector<int> truth, pred;
    for (const auto& it : validation.items) {
        truth.push_back(it.label);
        pred.push_back(predict(model, it.features).label);
    }
    const auto report = metrics(confusion(truth, pred, validation.class_names));
    return metric == ScoringMetric::accuracy ? report.accuracy : report.macro.f1;
}

/// Mean k-fold validation score per grid point. Training folds are
/// oversampled; validation folds are scored untouched. The best point has
/// the highest mean, ties going to the smallest hyperparameter tuple.
inline GridResult grid_search(const LabeledDataset& ds, const HyperParamGrid& grid, ModelKind kind,
                              std::uint64_t seed) {
    const auto points = grid.points(kind);
    const auto folds = stratified_kfold(ds, grid.k, seed);
    const std::size_t k = folds.size();
    std::vector<LabeledDataset> fold_train(k);
    for (std::size_t f = 0; f < k; ++f)
        fold_train[f] = oversample(ds.subset(fold_training_indexes(folds, f)), derive_seed(seed, 100 + f));

    const auto scores = detail::parallel_map(points.size() * k, [&](std::size_t job) {
        const auto& p = points[job / k];
        const std::size_t f = job % k;
        const auto model = fit_model(kind, fold_train[f], p, seed);
        return score_predictions(ds.subset(folds[f]), model, grid.scoring);
    });

    GridResult result;
    for (std::size_t i = 0; i < points.size(); ++i) {
        GridRow row{points[i], {}, 0};
        for (std::size_t f = 0; f < k; ++f) {
            row.fold_scores.push_back(scores[i * k + f]);
            row.mean += scores[i * k + f];
        }
        row.mean /= double(k);
        result.table.push_back(std::move(row));
    }
    const GridRow* best = &result.table.front();
    for (const auto& row : result.table)
        if (row.mean > best->mean || (row.mean == best->mean && hyperparam_key(row.params) < hyperparam_key(best->params)))
            best = &row;
    result.best = best->params;
    result.best_score = best->mean;
    return result;
}

inline void write_grid_csv(std::ostream& out, const GridResult& g, ModelKind kind) {
    out << "max_depth,max_features,min_samples_split,max_leaf_nodes,n_trees";
    const std::size_t k = g.table.empty() ? 0 : g.table.front().fold_scores.size();
    for (std::size_t f = 0; f < k; ++f) out << ",fold" << f;
    out << ",mean,best\n";
    for (const auto& row : g.table) {
        const auto& p = row.params;
        std::vector<std::string> cells{p.tree.max_depth ? std::to_string(*p.tree.max_depth) : "none",
                                       p.tree.max_features.str(), std::to_string(p.tree.min_samples_split),
                                       p.tree.max_leaf_nodes ? std::to_string(*p.tree.max_leaf_nodes) : "none",
                                       std::to_string(kind == ModelKind::tree ? 1 : p.n_trees)};
        for (double s : row.fold_scores) cells.push_back(fmt_double(s, 6));
        cells.push_back(fmt_double(row.mean, 6));
        cells.push_back(row.params == g.best ? "1" : "0");
        csv::write_row(out, cells);
    }
}

// ---------------------------------------------------------------------------
// Rule export

namespace detail {

inline std::string fmt_threshold(double t) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", t);
    return buf;
}

}  // namespace detail

/// One line per root-to-leaf path:
///   "poc > 0.5 AND pm <= 0.5 → PoC (p=0.742)"
inline std::vector<std::string> export_rules(const DecisionTree& tree,
                                             const std::function<std::string(std::size_t)>& feature_name) {
    std::vector<std::string> rules;
    const auto& nodes = tree.nodes();
    std::vector<std::string> path;
    std::function<void(std::size_t)> walk = [&](std::size_t i) {
        const auto& n = nodes[i];
        if (n.is_leaf()) {
            const auto p = DecisionTree::leaf_distribution(n);
            const int label = argmax_label(p);
            std::string cond;
            for (std::size_t k = 0; k < path.size(); ++k) cond += (k ? " AND " : "") + path[k];
            if (cond.empty()) cond = "TRUE";
            char prob[32];
            std::snprintf(prob, sizeof prob, "%.3f", p[std::size_t(label)]);
            rules.push_back(cond + " → " + tree.class_names().at(std::size_t(label)) + " (p=" + prob + ")");
            return;
        }
        const auto name = feature_name(std::size_t(n.feature));
        const auto thr = detail::fmt_threshold(n.threshold);
        path.push_back(name + " <= " + thr);
        walk(std::size_t(n.left));
        path.back() = name + " > " + thr;
        walk(std::size_t(n.right));
        path.pop_back();
    };
    walk(0);
    return rules;
}

// ---------------------------------------------------------------------------
// Serialization

inline constexpr int kModelSchemaVersion = 1;

namespace detail {

inline nlohmann::json tree_params_json(const TreeParams& p) {
    nlohmann::json j{{"max_features", p.max_features.str()}, {"min_samples_split", p.min_samples_split}};
    j["max_depth"] = p.max_depth ? nlohmann::json(*p.max_depth) : nlohmann::json(nullptr);
    j["max_leaf_nodes"] = p.max_leaf_nodes ? nlohmann::json(*p.max_leaf_nodes) : nlohmann::json(nullptr);
    return j;
}

inline TreeParams tree_params_from_json(const nlohmann::json& j) {
    TreeParams p;
    if (!j.at("max_depth").is_null()) p.max_depth = j["max_depth"].get<std::size_t>();
    if (!j.at("max_leaf_nodes").is_null()) p.max_leaf_nodes = j["max_leaf_nodes"].get<std::size_t>();
    p.max_features = MaxFeatures::parse(j.at("max_features").get<std::string>());
    p.min_samples_split = j.at("min_samples_split").get<std::size_t>();
    return p;
}

inline nlohmann::json tree_json(const DecisionTree& t) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : t.nodes()) {
        if (n.is_leaf())
            nodes.push_back({{"counts", n.class_counts}});
        else
            nodes.push_back({{"feature", n.feature},
                             {"threshold", n.threshold},
                             {"left", n.left},
                             {"right", n.right},
                             {"counts", n.class_counts}});
    }
    return {{"seed", t.seed()}, {"nodes", nodes}};
}

inline DecisionTree tree_from_json(const nlohmann::json& j, const std::vector<std::string>& classes,
                                   std::size_t n_features, const TreeParams& params) {
    std::vector<TreeNode> nodes;
    for (const auto& nj : j.at("nodes")) {
        TreeNode n;
        n.class_counts = nj.at("counts").get<std::vector<double>>();
        if (n.class_counts.size() != classes.size()) throw Error("model node has wrong class count length");
        if (nj.contains("feature")) {
            n.feature = nj["feature"].get<int>();
            n.threshold = nj.at("threshold").get<double>();
            n.left = nj.at("left").get<int>();
            n.right = nj.at("right").get<int>();
        } else {
            double s = 0;
            for (double c : n.class_counts) s += c;
            if (!(s > 0)) throw Error("model leaf has no training weight");
        }
        nodes.push_back(std::move(n));
    }
    if (nodes.empty()) throw Error("model tree has no nodes");
    // Children must point strictly forward so traversal terminates.
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const auto& n = nodes[i];
        if (n.is_leaf()) continue;
        if (n.feature < 0 || std::size_t(n.feature) >= n_features) throw Error("model node feature out of range");
        for (int c : {n.left, n.right})
            if (c <= int(i) || std::size_t(c) >= nodes.size()) throw Error("model node child index out of range");
    }
    return DecisionTree(classes, n_features, params, j.at("seed").get<std::uint64_t>(), std::move(nodes));
}

}  // namespace detail

inline std::string serialize_model(const Model& m) {
    nlohmann::json j{{"schema_version", kModelSchemaVersion},
                     {"kind", model_kind_name(m.kind())},
                     {"featurizer_hash", m.featurizer_hash},
                     {"class_names", m.class_names()},
                     {"n_features", m.n_features()}};
    if (const auto* t = std::get_if<DecisionTree>(&m.impl)) {
        j["params"] = detail::tree_params_json(t->params());
        j["trees"] = nlohmann::json::array({detail::tree_json(*t)});
    } else {
        const auto& f = std::get<RandomForest>(m.impl);
        j["params"] = detail::tree_params_json(f.params().tree);
        j["n_trees"] = f.params().n_trees;
        j["bootstrap"] = f.params().bootstrap;
        j["master_seed"] = f.master_seed();
        j["trees"] = nlohmann::json::array();
        for (const auto& t : f.trees()) j["trees"].push_back(detail::tree_json(t));
    }
    return j.dump();
}

/// Inverse of serialize_model. Any schema or structural problem throws; a
/// partially decoded model is never returned.
inline Model deserialize_model(std::string_view bytes) {
    auto j = nlohmann::json::parse(bytes, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error("model payload is not valid JSON");
    if (j.value("schema_version", -1) != kModelSchemaVersion)
        throw Error("model schema_version mismatch (expected " + std::to_string(kModelSchemaVersion) + ")");
    try {
        const auto kind = parse_model_kind(j.at("kind").get<std::string>());
        const auto classes = j.at("class_names").get<std::vector<std::string>>();
        const auto n_features = j.at("n_features").get<std::size_t>();
        const auto params = detail::tree_params_from_json(j.at("params"));
        Model m;
        m.featurizer_hash = j.value("featurizer_hash", "");
        if (kind == ModelKind::tree) {
            if (j.at("trees").size() != 1) throw Error("tree model must hold exactly one tree");
            m.impl = detail::tree_from_json(j["trees"][0], classes, n_features, params);
        } else {
            ForestParams fp{params, j.at("n_trees").get<std::size_t>(), j.at("bootstrap").get<bool>()};
            std::vector<DecisionTree> trees;
            for (const auto& tj : j.at("trees")) trees.push_back(detail::tree_from_json(tj, classes, n_features, params));
            if (trees.empty() || trees.size() != fp.n_trees) throw Error("forest tree count does not match n_trees");
            m.impl = RandomForest(fp, j.at("master_seed").get<std::uint64_t>(), std::move(trees));
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("malformed model payload: ") + e.what());
    }
}

}  // namespace forumscope
