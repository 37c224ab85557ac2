#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>
#include <toml.hpp>

#include "forumscope/common.hpp"
#include "forumscope/corpus.hpp"
#include "forumscope/embedding.hpp"
#include "forumscope/featurizer.hpp"
#include "forumscope/models.hpp"
#include "forumscope/textfeat.hpp"

namespace forumscope {

struct PipelineConfig {
    // inputs
    std::filesystem::path corpus, labels, nvd, epss, overlay, titles, rules;
    std::filesystem::path out_dir = "out";

    NormalizeOptions normalize;
    Encoding encoding = Encoding::tfidf;
    VocabParams vocab;
    EmbeddingParams embedding;

    ModelKind model = ModelKind::forest;
    std::uint64_t seed = 1162;
    double test_fraction = 0.25;
    bool grid_search = true;
    HyperParamGrid grid;
    ForestParams defaults;  // used when grid_search is off

    double alert_threshold = 0.5;
    std::size_t top_k = 50;

    void validate() const {
        if (!(alert_threshold > 0.0 && alert_threshold <= 1.0)) throw Error("alert threshold must be in (0, 1]", "config");
        if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw Error("test_fraction must be in (0, 1)", "config");
        if (grid.k < 2) throw Error("grid k must be >= 2", "config");
        if (vocab.ngram_min < 1 || vocab.ngram_min > vocab.ngram_max) throw Error("invalid n-gram range", "config");
    }

    /// Everything except paths, as JSON; used to key stage caches.
    nlohmann::json settings_json() const {
        auto opt = [](const std::optional<std::size_t>& v) { return v ? nlohmann::json(*v) : nlohmann::json("none"); };
        nlohmann::json g{{"k", grid.k}, {"scoring", scoring_name(grid.scoring)}, {"bootstrap", grid.bootstrap}};
        for (auto v : grid.max_depth) g["max_depth"].push_back(opt(v));
        for (auto v : grid.max_features) g["max_features"].push_back(v.str());
        g["min_samples_split"] = grid.min_samples_split;
        for (auto v : grid.max_leaf_nodes) g["max_leaf_nodes"].push_back(opt(v));
        g["n_trees"] = grid.n_trees;
        return {{"normalize", {{"drop_quotes", normalize.drop_quotes}}},
                {"encoding", encoding_name(encoding)},
                {"vocab",
                 {{"max_vocab", vocab.max_vocab},
                  {"min_count", vocab.min_count},
                  {"max_doc_fraction", vocab.max_doc_fraction},
                  {"ngram_min", vocab.ngram_min},
                  {"ngram_max", vocab.ngram_max}}},
                {"embedding",
                 {{"dim", embedding.dim},
                  {"epochs", embedding.epochs},
                  {"learning_rate", embedding.learning_rate},
                  {"min_learning_rate", embedding.min_learning_rate},
                  {"negative", embedding.negative},
                  {"min_count", embedding.min_count},
                  {"infer_epochs", embedding.infer_epochs},
                  {"seed", embedding.seed}}},
                {"model", model_kind_name(model)},
                {"seed", seed},
                {"test_fraction", test_fraction},
                {"grid_search", grid_search},
                {"grid", g},
                {"defaults",
                 {{"max_depth", opt(defaults.tree.max_depth)},
                  {"max_features", defaults.tree.max_features.str()},
                  {"min_samples_split", defaults.tree.min_samples_split},
                  {"max_leaf_nodes", opt(defaults.tree.max_leaf_nodes)},
                  {"n_trees", defaults.n_trees},
                  {"bootstrap", defaults.bootstrap}}},
                {"alert_threshold", alert_threshold},
                {"top_k", top_k}};
    }
};

inline PipelineConfig default_config() {
    PipelineConfig c;
    c.grid.max_depth = {std::nullopt, 20};
    c.grid.max_features = {{MaxFeatures::Kind::sqrt, 0}};
    c.grid.min_samples_split = {2, 5};
    c.grid.max_leaf_nodes = {std::nullopt};
    c.grid.n_trees = {100};
    return c;
}

namespace detail {

inline std::optional<std::size_t> optional_count(const toml::node& n, const std::string& key) {
    if (auto s = n.value<std::string>()) {
        const auto v = to_lower(*s);
        if (v == "none" || v == "unlimited") return std::nullopt;
        throw Error(key + ": expected an integer or \"none\", got \"" + *s + "\"", "config");
    }
    if (auto i = n.value<std::int64_t>()) {
        if (*i < 1) throw Error(key + " must be >= 1", "config");
        return std::size_t(*i);
    }
    throw Error(key + ": expected an integer or \"none\"", "config");
}

inline MaxFeatures max_features_of(const toml::node& n, const std::string& key) {
    if (auto s = n.value<std::string>()) return MaxFeatures::parse(*s);
    if (n.is_integer()) return {MaxFeatures::Kind::count, double(*n.value<std::int64_t>())};
    if (n.is_floating_point()) {
        const double v = *n.value<double>();
        if (!(v > 0 && v <= 1)) throw Error(key + " fraction must be in (0, 1]", "config");
        return {MaxFeatures::Kind::fraction, v};
    }
    throw Error(key + ": expected a string or number", "config");
}

template <class T, class Fn>
std::vector<T> list_of(toml::node_view<toml::node> v, const std::string& key, Fn convert) {
    std::vector<T> out;
    if (const auto* arr = v.as_array()) {
        for (const auto& el : *arr) out.push_back(convert(el, key));
    } else if (v) {
        out.push_back(convert(*v.node(), key));
    }
    if (v && out.empty()) throw Error(key + " must not be empty", "config");
    return out;
}

inline std::size_t count_of(const toml::node& n, const std::string& key) {
    auto i = n.value<std::int64_t>();
    if (!i || *i < 0) throw Error(key + ": expected a non-negative integer", "config");
    return std::size_t(*i);
}

}  // namespace detail

/// Reads a TOML config. Relative paths resolve against the file's directory.
inline PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig c = default_config()) {
    toml::table t;
    try {
        t = toml::parse_file(path.string());
    } catch (const toml::parse_error& e) {
        throw Error("cannot parse " + path.string() + ": " + std::string(e.description()), "config");
    }
    const auto base = path.parent_path();
    auto path_of = [&](std::string_view key, std::filesystem::path& slot) {
        if (auto s = t["paths"][key].value<std::string>()) {
            std::filesystem::path p(*s);
            slot = p.is_absolute() ? p : base / p;
        }
    };
    path_of("corpus", c.corpus);
    path_of("labels", c.labels);
    path_of("nvd", c.nvd);
    path_of("epss", c.epss);
    path_of("overlay", c.overlay);
    path_of("titles", c.titles);
    path_of("rules", c.rules);
    path_of("out_dir", c.out_dir);

    if (auto v = t["corpus"]["drop_quotes"].value<bool>()) c.normalize.drop_quotes = *v;

    const auto f = t["features"];
    if (auto v = f["encoding"].value<std::string>()) c.encoding = parse_encoding(*v);
    if (f["max_vocab"]) c.vocab.max_vocab = detail::count_of(*f["max_vocab"].node(), "features.max_vocab");
    if (f["min_count"]) c.vocab.min_count = detail::count_of(*f["min_count"].node(), "features.min_count");
    if (auto v = f["max_doc_fraction"].value<double>()) c.vocab.max_doc_fraction = *v;
    if (auto v = f["ngram_min"].value<int>()) c.vocab.ngram_min = *v;
    if (auto v = f["ngram_max"].value<int>()) c.vocab.ngram_max = *v;
    const auto e = t["embedding"];
    if (e["dim"]) c.embedding.dim = detail::count_of(*e["dim"].node(), "embedding.dim");
    if (e["epochs"]) c.embedding.epochs = detail::count_of(*e["epochs"].node(), "embedding.epochs");
    if (e["negative"]) c.embedding.negative = detail::count_of(*e["negative"].node(), "embedding.negative");
    if (e["min_count"]) c.embedding.min_count = detail::count_of(*e["min_count"].node(), "embedding.min_count");
    if (e["infer_epochs"]) c.embedding.infer_epochs = detail::count_of(*e["infer_epochs"].node(), "embedding.infer_epochs");
    if (auto v = e["learning_rate"].value<double>()) c.embedding.learning_rate = *v;
    if (auto v = e["min_learning_rate"].value<double>()) c.embedding.min_learning_rate = *v;

    const auto m = t["model"];
    if (auto v = m["kind"].value<std::string>()) c.model = parse_model_kind(*v);
    if (auto v = m["seed"].value<std::int64_t>()) c.seed = std::uint64_t(*v);
    if (auto v = m["test_fraction"].value<double>()) c.test_fraction = *v;
    if (auto v = m["grid_search"].value<bool>()) c.grid_search = *v;
    if (m["max_depth"]) c.defaults.tree.max_depth = detail::optional_count(*m["max_depth"].node(), "model.max_depth");
    if (m["max_features"]) c.defaults.tree.max_features = detail::max_features_of(*m["max_features"].node(), "model.max_features");
    if (m["min_samples_split"]) c.defaults.tree.min_samples_split = detail::count_of(*m["min_samples_split"].node(), "model.min_samples_split");
    if (m["max_leaf_nodes"]) c.defaults.tree.max_leaf_nodes = detail::optional_count(*m["max_leaf_nodes"].node(), "model.max_leaf_nodes");
    if (m["n_trees"]) c.defaults.n_trees = detail::count_of(*m["n_trees"].node(), "model.n_trees");
    if (auto v = m["bootstrap"].value<bool>()) c.defaults.bootstrap = c.grid.bootstrap = *v;

    const auto g = t["grid"];
    if (g["max_depth"]) c.grid.max_depth = detail::list_of<std::optional<std::size_t>>(g["max_depth"], "grid.max_depth", detail::optional_count);
    if (g["max_features"]) c.grid.max_features = detail::list_of<MaxFeatures>(g["max_features"], "grid.max_features", detail::max_features_of);
    if (g["min_samples_split"]) c.grid.min_samples_split = detail::list_of<std::size_t>(g["min_samples_split"], "grid.min_samples_split", detail::count_of);
    if (g["max_leaf_nodes"]) c.grid.max_leaf_nodes = detail::list_of<std::optional<std::size_t>>(g["max_leaf_nodes"], "grid.max_leaf_nodes", detail::optional_count);
    if (g["n_trees"]) c.grid.n_trees = detail::list_of<std::size_t>(g["n_trees"], "grid.n_trees", detail::count_of);
    if (g["k"]) c.grid.k = detail::count_of(*g["k"].node(), "grid.k");
    if (auto v = g["scoring"].value<std::string>()) c.grid.scoring = parse_scoring(*v);

    if (auto v = t["alerts"]["threshold"].value<double>()) c.alert_threshold = *v;
    if (t["report"]["top_k"]) c.top_k = detail::count_of(*t["report"]["top_k"].node(), "report.top_k");
    return c;
}

}  // namespace forumscope
