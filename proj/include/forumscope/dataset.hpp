#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "forumscope/common.hpp"
#include "forumscope/corpus.hpp"
#include "forumscope/csv.hpp"
#include "forumscope/random.hpp"
#include "forumscope/textfeat.hpp"

namespace forumscope {

enum class ThreadLabel { PoC = 0, Weaponization = 1, Exploitation = 2, Scam = 3, Other = 4 };

inline constexpr std::array<ThreadLabel, 3> kInScopeLabels{ThreadLabel::PoC, ThreadLabel::Weaponization,
                                                          ThreadLabel::Exploitation};

inline const char* label_name(ThreadLabel l) {
    switch (l) {
        case ThreadLabel::PoC: return "PoC";
        case ThreadLabel::Weaponization: return "Weaponization";
        case ThreadLabel::Exploitation: return "Exploitation";
        case ThreadLabel::Scam: return "Scam";
        case ThreadLabel::Other: return "Other";
    }
    return "?";
}

inline std::optional<ThreadLabel> parse_label(std::string_view s) {
    const auto n = to_lower(trim(s));
    if (n == "poc" || n == "proof-of-concept" || n == "proof of concept") return ThreadLabel::PoC;
    if (n == "weaponization" || n == "weaponisation") return ThreadLabel::Weaponization;
    if (n == "exploitation") return ThreadLabel::Exploitation;
    if (n == "scam") return ThreadLabel::Scam;
    if (n == "other" || n == "others") return ThreadLabel::Other;
    return std::nullopt;
}

inline bool in_scope(ThreadLabel l) { return int(l) <= int(ThreadLabel::Exploitation); }

using LabelMap = std::map<std::string, ThreadLabel>;

/// Labels CSV (`thread_id,label`, header optional, labels case-insensitive).
/// Scam/Other rows are kept here and dropped later by dataset assembly.
inline LabelMap load_labels(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open labels file " + path.string(), "label");
    csv::Reader reader(in);
    csv::Record rec;
    LabelMap out;
    bool first = true;
    while (reader.next(rec)) {
        if (first) {
            first = false;
            if (rec.fields.size() >= 2 && to_lower(trim(rec.fields[0])) == "thread_id") continue;
        }
        const std::string where = "labels row " + std::to_string(rec.line);
        if (rec.fields.size() < 2) throw Error(where + ": expected thread_id,label", "label");
        const std::string id(trim(rec.fields[0]));
        auto label = parse_label(rec.fields[1]);
        if (!label) throw Error(where + ": unknown label '" + rec.fields[1] + "'", "label");
        auto [it, inserted] = out.emplace(id, *label);
        if (!inserted && it->second != *label)
            throw Error(where + ": thread '" + id + "' relabeled from " + label_name(it->second) + " to " +
                            label_name(*label),
                        "label");
    }
    return out;
}

inline std::map<ThreadLabel, std::size_t> label_counts(const LabelMap& labels) {
    std::map<ThreadLabel, std::size_t> counts;
    for (const auto& [id, l] : labels) ++counts[l];
    return counts;
}

// ---------------------------------------------------------------------------
// Weak labeling from the code-book keyword table

struct LabelRule {
    ThreadLabel label;
    std::vector<std::string> phrases;
};

struct RuleTable {
    std::string version;
    std::vector<LabelRule> rules;

    static RuleTable defaults() {
        return {"codebook-v1",
                {{ThreadLabel::PoC, {"poc", "proof of concept", "tutorial", "guide"}},
                 {ThreadLabel::Weaponization,
                  {"vulnerability", "exploit", "fully functional", "source code", "working exploit", "weaponized"}},
                 {ThreadLabel::Exploitation,
                  {"lizard squad", "lulzsec", "anonymous", "apt28", "lazarus", "bitcoin", "btc", "monero",
                   "cryptocurrency", "exploitation", "attack", "fud", "fully undetectable", "undetectable",
                   "exploit market", "for sale"}}}};
    }

    nlohmann::json to_json() const {
        nlohmann::json rules_j = nlohmann::json::array();
        for (const auto& r : rules) rules_j.push_back({{"label", label_name(r.label)}, {"phrases", r.phrases}});
        return {{"version", version}, {"rules", rules_j}};
    }

    /// Accepts either {"version":..., "rules":[...]} or a bare list of
    /// {"label":..., "phrases":[...]} objects.
    static RuleTable from_json(const nlohmann::json& j) {
        RuleTable t;
        const nlohmann::json* list = &j;
        if (j.is_object()) {
            t.version = j.value("version", "custom");
            list = &j.at("rules");
        } else {
            t.version = "custom";
        }
        for (const auto& r : *list) {
            auto label = parse_label(r.at("label").get<std::string>());
            if (!label || !in_scope(*label)) throw Error("rule table: label must be PoC, Weaponization or Exploitation");
            t.rules.push_back({*label, r.at("phrases").get<std::vector<std::string>>()});
        }
        return t;
    }
};

struct WeakLabel {
    std::optional<ThreadLabel> label;
    std::vector<std::string> fired;  // "<Label>:<phrase>"
};

namespace detail {

// Lowercase alphanumeric words, no stop-word filtering (phrases need "of").
inline std::vector<std::string> plain_words(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && !is_word_byte(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t j = i;
        while (j < text.size() && is_word_byte(static_cast<unsigned char>(text[j]))) ++j;
        if (j > i) out.push_back(to_lower(text.substr(i, j - i)));
        i = j;
    }
    return out;
}

inline bool contains_phrase(const std::vector<std::string>& words, const std::vector<std::string>& phrase) {
    if (phrase.empty() || phrase.size() > words.size()) return false;
    for (std::size_t i = 0; i + phrase.size() <= words.size(); ++i)
        if (std::equal(phrase.begin(), phrase.end(), words.begin() + std::ptrdiff_t(i))) return true;
    return false;
}

}  // namespace detail

/// Keyword-presence suggestion; the most severe class with a fired rule wins
/// (Exploitation > Weaponization > PoC).
inline WeakLabel weak_label(const Thread& thread, const RuleTable& table = RuleTable::defaults()) {
    const auto words = detail::plain_words(thread.document);
    WeakLabel out;
    int best = -1;
    for (const auto& rule : table.rules)
        for (const auto& phrase : rule.phrases)
            if (detail::contains_phrase(words, detail::plain_words(phrase))) {
                out.fired.push_back(std::string(label_name(rule.label)) + ":" + phrase);
                best = std::max(best, int(rule.label));
            }
    if (best >= 0) out.label = ThreadLabel(best);
    return out;
}

// ---------------------------------------------------------------------------
// Labeled datasets, balancing and splits

struct LabeledItem {
    std::string thread_id;
    SparseVector features;
    int label = 0;
};

/// Items over a fixed class list (index = class id). Class order is
/// PoC, Weaponization, Exploitation for the three-class task; binary tasks
/// put the positive class first.
struct LabeledDataset {
    std::vector<std::string> class_names;
    std::size_t n_features = 0;
    std::vector<LabeledItem> items;

    std::size_t size() const { return items.size(); }
    std::size_t n_classes() const { return class_names.size(); }

    std::vector<std::size_t> class_counts() const {
        std::vector<std::size_t> c(class_names.size(), 0);
        for (const auto& it : items) ++c.at(std::size_t(it.label));
        return c;
    }

    LabeledDataset subset(const std::vector<std::size_t>& idx) const {
        LabeledDataset d{class_names, n_features, {}};
        d.items.reserve(idx.size());
        for (auto i : idx) d.items.push_back(items.at(i));
        return d;
    }
};

enum class Task { three_class, exploitation_vs_rest, poc_vs_rest, weaponization_vs_rest };

inline constexpr std::array<Task, 4> kAllTasks{Task::three_class, Task::exploitation_vs_rest, Task::poc_vs_rest,
                                              Task::weaponization_vs_rest};

inline const char* task_name(Task t) {
    switch (t) {
        case Task::three_class: return "PoC/Weaponization/Exploitation";
        case Task::exploitation_vs_rest: return "Exploitation vs Non-exploitation";
        case Task::poc_vs_rest: return "PoC vs Non-PoC";
        case Task::weaponization_vs_rest: return "Weaponization vs Non-weaponization";
    }
    return "?";
}

inline const char* task_slug(Task t) {
    switch (t) {
        case Task::three_class: return "3class";
        case Task::exploitation_vs_rest: return "exploitation";
        case Task::poc_vs_rest: return "poc";
        case Task::weaponization_vs_rest: return "weaponization";
    }
    return "?";
}

inline std::vector<std::string> task_classes(Task t) {
    switch (t) {
        case Task::three_class: return {"PoC", "Weaponization", "Exploitation"};
        case Task::exploitation_vs_rest: return {"Exploitation", "Non-exploitation"};
        case Task::poc_vs_rest: return {"PoC", "Non-PoC"};
        case Task::weaponization_vs_rest: return {"Weaponization", "Non-weaponization"};
    }
    return {};
}

/// Class index of an in-scope label under a task.
inline int task_class(Task t, ThreadLabel l) {
    if (!in_scope(l)) throw Error("label outside the classification scope");
    switch (t) {
        case Task::three_class: return int(l);
        case Task::exploitation_vs_rest: return l == ThreadLabel::Exploitation ? 0 : 1;
        case Task::poc_vs_rest: return l == ThreadLabel::PoC ? 0 : 1;
        case Task::weaponization_vs_rest: return l == ThreadLabel::Weaponization ? 0 : 1;
    }
    return 0;
}

/// Relabels a three-class dataset for a one-vs-rest task.
inline LabeledDataset remap_task(const LabeledDataset& three_class, Task t) {
    LabeledDataset d{task_classes(t), three_class.n_features, three_class.items};
    for (auto& it : d.items) it.label = task_class(t, ThreadLabel(it.label));
    return d;
}

/// Raises every class to the majority count by drawing existing items of that
/// class uniformly with replacement. Originals come first, unchanged.
inline LabeledDataset oversample(const LabeledDataset& ds, std::uint64_t seed) {
    const auto counts = ds.class_counts();
    for (std::size_t c = 0; c < counts.size(); ++c)
        if (counts[c] == 0) throw Error("cannot oversample: class '" + ds.class_names[c] + "' is empty");
    const std::size_t target = *std::max_element(counts.begin(), counts.end());
    LabeledDataset out = ds;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < ds.items.size(); ++i)
            if (std::size_t(ds.items[i].label) == c) members.push_back(i);
        Rng rng(derive_seed(seed, c));
        for (std::size_t k = counts[c]; k < target; ++k) out.items.push_back(ds.items[members[rng.below(members.size())]]);
    }
    return out;
}

namespace detail {

// Item indexes of class c in thread_id order, then shuffled with a class seed.
inline std::vector<std::size_t> shuffled_class_members(const LabeledDataset& ds, std::size_t c, std::uint64_t seed) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < ds.items.size(); ++i)
        if (std::size_t(ds.items[i].label) == c) members.push_back(i);
    std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
        if (ds.items[a].thread_id != ds.items[b].thread_id) return ds.items[a].thread_id < ds.items[b].thread_id;
        return a < b;
    });
    Rng rng(derive_seed(seed, c));
    rng.shuffle(members);
    return members;
}

inline void sort_by_thread(std::vector<std::size_t>& idx, const LabeledDataset& ds) {
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (ds.items[a].thread_id != ds.items[b].thread_id) return ds.items[a].thread_id < ds.items[b].thread_id;
        return a < b;
    });
}

}  // namespace detail

struct SplitIndexes {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Stratified split: each class contributes round(count * test_fraction)
/// items to the test side. Index lists are sorted by thread_id.
inline SplitIndexes train_test_split_indexes(const LabeledDataset& ds, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw Error("test_fraction must be in (0, 1)");
    const auto counts = ds.class_counts();
    SplitIndexes out;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] == 0) continue;
        if (counts[c] < 2)
            throw Error("class '" + ds.class_names[c] + "' has fewer than 2 items; cannot split");
        auto members = detail::shuffled_class_members(ds, c, seed);
        const auto n_test = std::size_t(std::llround(double(counts[c]) * test_fraction));
        for (std::size_t k = 0; k < members.size(); ++k) (k < n_test ? out.test : out.train).push_back(members[k]);
    }
    detail::sort_by_thread(out.train, ds);
    detail::sort_by_thread(out.test, ds);
    return out;
}

inline std::pair<LabeledDataset, LabeledDataset> train_test_split(const LabeledDataset& ds, double test_fraction,
                                                                  std::uint64_t seed) {
    auto idx = train_test_split_indexes(ds, test_fraction, seed);
    return {ds.subset(idx.train), ds.subset(idx.test)};
}

/// k disjoint, covering folds (item indexes). Each class is dealt round-robin
/// after a seeded shuffle, and the dealing position carries over between
/// classes so fold sizes stay within one of each other.
inline std::vector<std::vector<std::size_t>> stratified_kfold(const LabeledDataset& ds, std::size_t k,
                                                              std::uint64_t seed) {
    if (k < 2) throw Error("stratified k-fold needs k >= 2");
    const auto counts = ds.class_counts();
    std::vector<std::vector<std::size_t>> folds(k);
    std::size_t cursor = 0;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] == 0) continue;
        if (counts[c] < k)
            throw Error("class '" + ds.class_names[c] + "' has " + std::to_string(counts[c]) + " items, fewer than k=" +
                        std::to_string(k));
        for (auto i : detail::shuffled_class_members(ds, c, seed)) folds[cursor++ % k].push_back(i);
    }
    for (auto& f : folds) detail::sort_by_thread(f, ds);
    return folds;
}

/// Training indexes for fold `held_out`: every other fold, concatenated.
inline std::vector<std::size_t> fold_training_indexes(const std::vector<std::vector<std::size_t>>& folds,
                                                      std::size_t held_out) {
    std::vector<std::size_t> out;
    for (std::size_t f = 0; f < folds.size(); ++f)
        if (f != held_out) out.insert(out.end(), folds[f].begin(), folds[f].end());
    return out;
}

/// Split manifest rows: thread_id,partition,fold (fold empty for test rows).
inline void write_split_manifest(std::ostream& out, const LabeledDataset& ds, const SplitIndexes& split,
                                 const std::vector<std::vector<std::size_t>>& train_folds) {
    out << "thread_id,partition,fold\n";
    std::map<std::string, std::string> fold_of;
    for (std::size_t f = 0; f < train_folds.size(); ++f)
        for (auto i : train_folds[f]) fold_of[ds.items.at(split.train.at(i)).thread_id] = std::to_string(f);
    for (auto i : split.train) csv::write_row(out, {ds.items[i].thread_id, "train", fold_of[ds.items[i].thread_id]});
    for (auto i : split.test) csv::write_row(out, {ds.items[i].thread_id, "test", ""});
}

}  // namespace forumscope
