#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "forumscope/analytics.hpp"
#include "forumscope/common.hpp"
#include "forumscope/config.hpp"
#include "forumscope/corpus.hpp"
#include "forumscope/csv.hpp"
#include "forumscope/cve_extract.hpp"
#include "forumscope/dataset.hpp"
#include "forumscope/enrich.hpp"
#include "forumscope/eval.hpp"
#include "forumscope/featurizer.hpp"
#include "forumscope/hash.hpp"
#include "forumscope/models.hpp"

namespace forumscope {

namespace fs = std::filesystem;

inline const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> s{"ingest", "extract", "enrich",      "featurize", "label",
                                            "split",  "grid-search", "train", "evaluate",  "report"};
    return s;
}

/// One pipeline run per output directory. The lock file is removed when the
/// guard goes out of scope.
class DirLock {
public:
    explicit DirLock(const fs::path& dir) : path_(dir / ".lock") {
        fs::create_directories(dir);
        std::FILE* f = std::fopen(path_.c_str(), "wx");
        if (!f) throw Error("output directory " + dir.string() + " is locked by another run (" + path_.string() + ")", "lock");
        std::fclose(f);
    }
    ~DirLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

private:
    fs::path path_;
};

// ---------------------------------------------------------------------------
// Artifact I/O

namespace artifacts {

inline std::ofstream create(const fs::path& p) {
    fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write " + p.string());
    return f;
}

inline std::ifstream open(const fs::path& p, const std::string& hint = {}) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw Error("missing artifact " + p.filename().string() + (hint.empty() ? "" : " (run " + hint + " first)"));
    return f;
}

inline std::string slurp(const fs::path& p, const std::string& hint = {}) {
    auto f = open(p, hint);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline void write_posts(const fs::path& p, const std::vector<Post>& posts) {
    auto f = create(p);
    for (const auto& post : posts) {
        auto j = post_to_json(post);
        j["clean_content"] = post.clean_content;
        f << j.dump() << '\n';
    }
}

inline std::vector<Post> read_posts(const fs::path& p) {
    auto f = open(p, "ingest");
    std::vector<Post> out;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        Post post;
        post.post_id = j.at("post_id").get<std::string>();
        post.thread_id = j.at("thread_id").get<std::string>();
        post.board = j.at("board").get<std::string>();
        post.forum = j.at("forum").get<std::string>();
        post.author = j.at("author").get<std::string>();
        post.created_at = *parse_datetime(j.at("created_at").get<std::string>());
        post.subject = j.at("subject").get<std::string>();
        post.raw_content = j.at("raw_content").get<std::string>();
        post.clean_content = j.at("clean_content").get<std::string>();
        out.push_back(std::move(post));
    }
    return out;
}

inline std::vector<CveMention> read_mentions(const fs::path& p) {
    auto f = open(p, "extract");
    return read_mentions_csv(f);
}

inline void write_features(const fs::path& p, const std::vector<std::pair<std::string, SparseVector>>& rows) {
    auto f = create(p);
    for (const auto& [id, v] : rows) f << id << '\t' << to_sparse_text(v) << '\n';
}

inline std::map<std::string, SparseVector> read_features(const fs::path& p) {
    auto f = open(p, "featurize");
    std::map<std::string, SparseVector> out;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw Error("malformed features row");
        out[line.substr(0, tab)] = parse_sparse_text(std::string_view(line).substr(tab + 1));
    }
    return out;
}

inline Featurizer read_featurizer(const fs::path& p) {
    return Featurizer::from_json(nlohmann::json::parse(slurp(p, "featurize")));
}

/// dataset.csv: thread_id,label (three in-scope classes).
inline std::vector<std::pair<std::string, ThreadLabel>> read_dataset(const fs::path& p) {
    auto f = open(p, "label");
    csv::Reader reader(f);
    csv::Record rec;
    reader.next(rec);
    std::vector<std::pair<std::string, ThreadLabel>> out;
    while (reader.next(rec)) out.push_back({rec.fields.at(0), *parse_label(rec.fields.at(1))});
    return out;
}

struct SplitRow {
    std::string thread_id;
    bool train = true;
};

inline std::vector<SplitRow> read_split(const fs::path& p) {
    auto f = open(p, "split");
    csv::Reader reader(f);
    csv::Record rec;
    reader.next(rec);
    std::vector<SplitRow> out;
    while (reader.next(rec)) out.push_back({rec.fields.at(0), rec.fields.at(1) == "train"});
    return out;
}

inline Enrichment read_enrichment(const fs::path& p) {
    auto f = open(p, "enrich");
    csv::Reader reader(f);
    csv::Record rec;
    reader.next(rec);
    Enrichment e;
    auto opt = [](const std::string& s) -> std::optional<double> {
        if (s.empty()) return std::nullopt;
        return std::stod(s);
    };
    while (reader.next(rec)) {
        const auto& r = rec.fields;
        e.delays.push_back({r.at(0), r.at(1), std::stoll(r.at(3))});
        e.scores.push_back({r.at(0), r.at(1), r.at(2), opt(r.at(4)), opt(r.at(5)), opt(r.at(6))});
    }
    return e;
}

inline std::string params_json(const ForestParams& p) {
    auto opt = [](const std::optional<std::size_t>& v) { return v ? nlohmann::json(*v) : nlohmann::json("none"); };
    return nlohmann::json{{"max_depth", opt(p.tree.max_depth)},
                          {"max_features", p.tree.max_features.str()},
                          {"min_samples_split", p.tree.min_samples_split},
                          {"max_leaf_nodes", opt(p.tree.max_leaf_nodes)},
                          {"n_trees", p.n_trees},
                          {"bootstrap", p.bootstrap}}
        .dump(2);
}

inline ForestParams read_params(const fs::path& p) {
    const auto j = nlohmann::json::parse(slurp(p, "grid-search"));
    auto opt = [](const nlohmann::json& v) -> std::optional<std::size_t> {
        if (v.is_string()) return std::nullopt;
        return v.get<std::size_t>();
    };
    ForestParams fp;
    fp.tree.max_depth = opt(j.at("max_depth"));
    fp.tree.max_features = MaxFeatures::parse(j.at("max_features").get<std::string>());
    fp.tree.min_samples_split = j.at("min_samples_split").get<std::size_t>();
    fp.tree.max_leaf_nodes = opt(j.at("max_leaf_nodes"));
    fp.n_trees = j.at("n_trees").get<std::size_t>();
    fp.bootstrap = j.at("bootstrap").get<bool>();
    return fp;
}

}  // namespace artifacts

// ---------------------------------------------------------------------------
// Stage framework

enum class StageStatus { ran, cached };

struct StageInput {
    std::string key;  // stable name; never the absolute path
    fs::path path;
};

/// Hash-gated stage: re-runs only when an input file, the stage settings or
/// a recorded output changed.
class StageRunner {
public:
    explicit StageRunner(fs::path out_dir) : out_(std::move(out_dir)) {}

    const fs::path& out_dir() const { return out_; }
    fs::path manifest_path(const std::string& stage) const { return out_ / "manifests" / (stage + ".json"); }

    StageStatus run(const std::string& stage, const std::vector<StageInput>& inputs, const nlohmann::json& settings,
                    const std::function<std::vector<std::string>()>& body) {
        try {
            nlohmann::json in = nlohmann::json::object();
            for (const auto& i : inputs) {
                if (!fs::exists(i.path))
                    throw Error("missing input " + i.key + " (" + i.path.filename().string() + ")");
                in[i.key] = sha256_file(i.path);
            }
            const auto settings_hash = sha256_hex(settings.dump());
            if (is_current(stage, in, settings_hash)) return StageStatus::cached;
            auto outputs = body();
            std::sort(outputs.begin(), outputs.end());
            nlohmann::json out = nlohmann::json::object();
            for (const auto& o : outputs) out[o] = sha256_file(out_ / o);
            nlohmann::json manifest{{"stage", stage}, {"inputs", in}, {"settings_sha256", settings_hash}, {"outputs", out}};
            auto f = artifacts::create(manifest_path(stage));
            f << manifest.dump(2) << '\n';
            return StageStatus::ran;
        } catch (const Error& e) {
            throw Error(e.what(), stage);
        } catch (const std::exception& e) {
            throw Error(e.what(), stage);
        }
    }

private:
    fs::path out_;

    bool is_current(const std::string& stage, const nlohmann::json& inputs, const std::string& settings_hash) const {
        std::ifstream f(manifest_path(stage), std::ios::binary);
        if (!f) return false;
        const auto m = nlohmann::json::parse(f, nullptr, false);
        if (m.is_discarded() || !m.is_object()) return false;
        if (m.value("inputs", nlohmann::json()) != inputs || m.value("settings_sha256", "") != settings_hash) return false;
        if (!m.contains("outputs") || !m["outputs"].is_object()) return false;
        for (const auto& [name, hash] : m["outputs"].items()) {
            const auto p = out_ / name;
            if (!fs::exists(p) || sha256_file(p) != hash.get<std::string>()) return false;
        }
        return true;
    }
};

// ---------------------------------------------------------------------------
// Stages

class Pipeline {
public:
    using Log = std::function<void(const std::string&)>;

    explicit Pipeline(PipelineConfig cfg, Log log = {}) : cfg_(std::move(cfg)), runner_(cfg_.out_dir), log_(std::move(log)) {
        cfg_.validate();
    }

    const PipelineConfig& config() const { return cfg_; }

    StageStatus run_stage(const std::string& name) {
        const std::map<std::string, StageStatus (Pipeline::*)()> table{
            {"ingest", &Pipeline::ingest},     {"extract", &Pipeline::extract},         {"enrich", &Pipeline::enrich},
            {"featurize", &Pipeline::featurize}, {"label", &Pipeline::label},          {"split", &Pipeline::split},
            {"grid-search", &Pipeline::grid},  {"train", &Pipeline::train},             {"evaluate", &Pipeline::evaluate},
            {"report", &Pipeline::report}};
        auto it = table.find(name);
        if (it == table.end()) throw Error("unknown stage '" + name + "'", "pipeline");
        const auto status = (this->*(it->second))();
        say(name + ": " + (status == StageStatus::cached ? "cached" : "ran"));
        return status;
    }

    /// Every stage in order; returns the status per stage.
    std::vector<std::pair<std::string, StageStatus>> run_all() {
        std::vector<std::pair<std::string, StageStatus>> out;
        for (const auto& s : stage_names()) out.push_back({s, run_stage(s)});
        return out;
    }

    fs::path out(const std::string& name) const { return cfg_.out_dir / name; }

private:
    PipelineConfig cfg_;
    StageRunner runner_;
    Log log_;

    void say(const std::string& s) const {
        if (log_) log_(s);
    }

    static StageInput external(const std::string& key, const fs::path& p) {
        if (p.empty()) throw Error("no " + key + " path configured");
        if (!fs::exists(p)) throw Error(key + " file not found: " + p.string());
        return {key, p};
    }

    StageInput artifact(const std::string& name) const { return {name, out(name)}; }

    std::vector<std::string> tasks_slugs() const {
        std::vector<std::string> s;
        for (auto t : kAllTasks) s.push_back(task_slug(t));
        return s;
    }

    // -- ingest --------------------------------------------------------------
    StageStatus ingest() {
        std::vector<StageInput> in;
        try {
            in.push_back(external("corpus", cfg_.corpus));
            if (!cfg_.titles.empty()) in.push_back(external("titles", cfg_.titles));
        } catch (const Error& e) {
            throw Error(e.what(), "ingest");
        }
        return runner_.run("ingest", in, {{"drop_quotes", cfg_.normalize.drop_quotes}}, [&] {
            auto result = ingest_corpus(cfg_.corpus, corpus_format_for(cfg_.corpus), cfg_.normalize);
            std::sort(result.posts.begin(), result.posts.end(), [](const Post& a, const Post& b) {
                if (a.thread_id != b.thread_id) return a.thread_id < b.thread_id;
                return post_order(a, b);
            });
            artifacts::write_posts(out("posts.jsonl"), result.posts);
            auto w = artifacts::create(out("ingest_warnings.csv"));
            w << "line,message\n";
            for (const auto& x : result.warnings) csv::write_row(w, {std::to_string(x.line), x.message});
            std::vector<std::string> outputs{"posts.jsonl", "ingest_warnings.csv"};
            if (!cfg_.titles.empty()) {
                auto titles = load_thread_titles(cfg_.titles);
                auto t = artifacts::create(out("titles.csv"));
                t << "thread_id,title\n";
                for (const auto& [id, title] : titles) csv::write_row(t, {id, title});
                outputs.push_back("titles.csv");
            }
            return outputs;
        });
    }

    std::vector<Thread> load_threads() const {
        std::map<std::string, std::string> titles;
        if (fs::exists(out("titles.csv"))) {
            auto f = artifacts::open(out("titles.csv"));
            csv::Reader r(f);
            csv::Record rec;
            r.next(rec);
            while (r.next(rec)) titles[rec.fields.at(0)] = rec.fields.at(1);
        }
        return assemble_threads(artifacts::read_posts(out("posts.jsonl")), titles, cfg_.normalize);
    }

    // -- extract -------------------------------------------------------------
    StageStatus extract() {
        return runner_.run("extract", {artifact("posts.jsonl")}, nlohmann::json::object(), [&] {
            const auto posts = artifacts::read_posts(out("posts.jsonl"));
            auto mentions = extract_cve_mentions(posts);
            std::sort(mentions.begin(), mentions.end());
            auto prices = extract_price_mentions(posts);
            {
                auto f = artifacts::create(out("mentions.csv"));
                write_mentions_csv(f, mentions);
            }
            {
                auto f = artifacts::create(out("prices.csv"));
                write_prices_csv(f, prices);
            }
            return std::vector<std::string>{"mentions.csv", "prices.csv"};
        });
    }

    // -- enrich --------------------------------------------------------------
    StageStatus enrich() {
        std::vector<StageInput> in{artifact("posts.jsonl"), artifact("mentions.csv")};
        try {
            in.push_back(external("nvd", cfg_.nvd));
            if (!cfg_.epss.empty()) in.push_back(external("epss", cfg_.epss));
        } catch (const Error& e) {
            throw Error(e.what(), "enrich");
        }
        return runner_.run("enrich", in, nlohmann::json::object(), [&] {
            const auto posts = artifacts::read_posts(out("posts.jsonl"));
            std::map<std::string, Date> dates;
            for (const auto& p : posts) dates[p.post_id] = p.created_at.date();
            auto nvd = load_nvd(cfg_.nvd);
            EpssMap epss;
            if (!cfg_.epss.empty()) epss = load_epss(cfg_.epss);
            merge_epss(nvd.records, epss);
            const auto e = join_enrichment(artifacts::read_mentions(out("mentions.csv")), dates, nvd.records, epss);
            {
                auto f = artifacts::create(out("enrichment.csv"));
                write_enrichment_csv(f, e);
            }
            {
                auto f = artifacts::create(out("unmatched.csv"));
                write_mentions_csv(f, e.unmatched);
            }
            {
                auto f = artifacts::create(out("nvd_stats.csv"));
                f << "score,global_mean,records,epss_date\n";
                for (auto k : {ScoreKind::cvss_v2, ScoreKind::cvss_v31, ScoreKind::epss}) {
                    std::size_t n = 0;
                    for (const auto& [id, r] : nvd.records) n += score_of(r, k).has_value();
                    const auto mean = global_mean_score(nvd.records, k);
                    csv::write_row(f, {score_kind_name(k), mean ? fmt_double(*mean, 6) : "", std::to_string(n),
                                       e.epss_date ? e.epss_date->iso() : ""});
                }
                for (const auto& w : nvd.warnings)
                    say("enrich: warning: NVD line " + std::to_string(w.line) + ": " + w.message);
            }
            return std::vector<std::string>{"enrichment.csv", "unmatched.csv", "nvd_stats.csv"};
        });
    }

    // -- featurize -----------------------------------------------------------
    std::vector<Thread> citing_threads() const {
        return filter_citing_threads(load_threads(), artifacts::read_mentions(out("mentions.csv")));
    }

    StageStatus featurize() {
        const auto s = cfg_.settings_json();
        const nlohmann::json settings{{"encoding", s["encoding"]}, {"vocab", s["vocab"]}, {"embedding", s["embedding"]},
                                      {"drop_quotes", cfg_.normalize.drop_quotes}};
        std::vector<StageInput> in{artifact("posts.jsonl"), artifact("mentions.csv")};
        if (fs::exists(out("titles.csv"))) in.push_back(artifact("titles.csv"));
        return runner_.run("featurize", in, settings, [&] {
            const auto threads = citing_threads();
            if (threads.empty()) throw Error("no thread cites a CVE; nothing to featurize");
            std::vector<std::string> docs, tags;
            for (const auto& t : threads) {
                docs.push_back(t.document);
                tags.push_back(t.thread_id);
            }
            const auto f = Featurizer::fit(cfg_.encoding, docs, cfg_.vocab, cfg_.embedding, tags);
            {
                auto o = artifacts::create(out("featurizer.json"));
                o << f.to_json().dump() << '\n';
            }
            std::vector<std::pair<std::string, SparseVector>> rows;
            for (const auto& t : threads) rows.push_back({t.thread_id, f.transform_known(t.thread_id, t.document)});
            artifacts::write_features(out("features.txt"), rows);
            return std::vector<std::string>{"featurizer.json", "features.txt"};
        });
    }

    // -- label ---------------------------------------------------------------
    StageStatus label() {
        std::vector<StageInput> in{artifact("posts.jsonl"), artifact("mentions.csv")};
        try {
            in.push_back(external("labels", cfg_.labels));
        } catch (const Error& e) {
            throw Error(e.what(), "label");
        }
        if (fs::exists(out("titles.csv"))) in.push_back(artifact("titles.csv"));
        if (!cfg_.rules.empty()) {
            try {
                in.push_back(external("rules", cfg_.rules));
            } catch (const Error& e) {
                throw Error(e.what(), "label");
            }
        }
        return runner_.run("label", in, nlohmann::json::object(), [&] {
            const auto labels = load_labels(cfg_.labels);
            const auto rules = cfg_.rules.empty() ? RuleTable::defaults()
                                                  : RuleTable::from_json(nlohmann::json::parse(artifacts::slurp(cfg_.rules)));
            const auto threads = citing_threads();
            auto ds = artifacts::create(out("dataset.csv"));
            auto weak = artifacts::create(out("weak_labels.csv"));
            ds << "thread_id,label\n";
            weak << "thread_id,gold,weak,fired\n";
            std::map<std::string, std::size_t> counts;
            for (const auto& t : threads) {
                auto it = labels.find(t.thread_id);
                const auto gold = it == labels.end() ? ThreadLabel::Other : it->second;
                ++counts[label_name(gold)];
                if (in_scope(gold)) csv::write_row(ds, {t.thread_id, label_name(gold)});
                const auto w = weak_label(t, rules);
                std::string fired;
                for (const auto& x : w.fired) fired += (fired.empty() ? "" : ";") + x;
                csv::write_row(weak, {t.thread_id, label_name(gold), w.label ? label_name(*w.label) : "", fired});
            }
            auto summary = artifacts::create(out("label_summary.csv"));
            summary << "label,citing_threads,in_scope\n";
            for (auto l : {ThreadLabel::PoC, ThreadLabel::Weaponization, ThreadLabel::Exploitation, ThreadLabel::Scam,
                           ThreadLabel::Other})
                csv::write_row(summary, {label_name(l), std::to_string(counts[label_name(l)]), in_scope(l) ? "1" : "0"});
            return std::vector<std::string>{"dataset.csv", "weak_labels.csv", "label_summary.csv"};
        });
    }

    LabeledDataset labeled_dataset(bool with_features) const {
        const auto rows = artifacts::read_dataset(out("dataset.csv"));
        std::map<std::string, SparseVector> features;
        std::size_t n_features = 0;
        if (with_features) {
            features = artifacts::read_features(out("features.txt"));
            n_features = artifacts::read_featurizer(out("featurizer.json")).n_features();
        }
        LabeledDataset ds{task_classes(Task::three_class), n_features, {}};
        for (const auto& [id, l] : rows) {
            LabeledItem item{id, {}, task_class(Task::three_class, l)};
            if (with_features) {
                auto it = features.find(id);
                if (it == features.end()) throw Error("no feature vector for thread " + id);
                item.features = it->second;
            }
            ds.items.push_back(std::move(item));
        }
        return ds;
    }

    // -- split ---------------------------------------------------------------
    StageStatus split() {
        const nlohmann::json settings{{"seed", cfg_.seed}, {"test_fraction", cfg_.test_fraction}, {"k", cfg_.grid.k}};
        return runner_.run("split", {artifact("dataset.csv")}, settings, [&] {
            const auto ds = labeled_dataset(false);
            const auto idx = train_test_split_indexes(ds, cfg_.test_fraction, cfg_.seed);
            const auto train = ds.subset(idx.train);
            const auto folds = stratified_kfold(train, cfg_.grid.k, cfg_.seed);
            auto f = artifacts::create(out("split.csv"));
            write_split_manifest(f, ds, idx, folds);
            return std::vector<std::string>{"split.csv"};
        });
    }

    std::pair<LabeledDataset, LabeledDataset> train_test() const {
        const auto ds = labeled_dataset(true);
        std::map<std::string, std::size_t> pos;
        for (std::size_t i = 0; i < ds.items.size(); ++i) pos[ds.items[i].thread_id] = i;
        std::vector<std::size_t> train, test;
        for (const auto& r : artifacts::read_split(out("split.csv"))) {
            auto it = pos.find(r.thread_id);
            if (it == pos.end()) throw Error("split refers to unknown thread " + r.thread_id);
            (r.train ? train : test).push_back(it->second);
        }
        return {ds.subset(train), ds.subset(test)};
    }

    // -- grid search ---------------------------------------------------------
    StageStatus grid() {
        const auto s = cfg_.settings_json();
        const nlohmann::json settings{{"model", s["model"]}, {"seed", cfg_.seed}, {"grid_search", cfg_.grid_search},
                                      {"grid", s["grid"]},   {"defaults", s["defaults"]}};
        return runner_.run("grid-search", {artifact("features.txt"), artifact("featurizer.json"), artifact("dataset.csv"), artifact("split.csv")},
                           settings, [&] {
                               std::vector<std::string> outputs;
                               const auto train = train_test().first;
                               for (auto t : kAllTasks) {
                                   const std::string slug = task_slug(t);
                                   ForestParams best = cfg_.defaults;
                                   if (cfg_.grid_search) {
                                       const auto g = grid_search(remap_task(train, t), cfg_.grid, cfg_.model, cfg_.seed);
                                       best = g.best;
                                       auto f = artifacts::create(out("grid_" + slug + ".csv"));
                                       write_grid_csv(f, g, cfg_.model);
                                       outputs.push_back("grid_" + slug + ".csv");
                                   }
                                   if (cfg_.model == ModelKind::tree) best.n_trees = 1;
                                   auto f = artifacts::create(out("params_" + slug + ".json"));
                                   f << artifacts::params_json(best) << '\n';
                                   outputs.push_back("params_" + slug + ".json");
                               }
                               return outputs;
                           });
    }

    // -- train ---------------------------------------------------------------
    StageStatus train() {
        std::vector<StageInput> in{artifact("features.txt"), artifact("featurizer.json"), artifact("dataset.csv"),
                                   artifact("split.csv")};
        for (const auto& slug : tasks_slugs()) in.push_back(artifact("params_" + slug + ".json"));
        const nlohmann::json settings{{"model", model_kind_name(cfg_.model)}, {"seed", cfg_.seed}};
        return runner_.run("train", in, settings, [&] {
            const auto train = train_test().first;
            const auto fhash = artifacts::read_featurizer(out("featurizer.json")).hash();
            std::vector<std::string> outputs;
            for (auto t : kAllTasks) {
                const std::string slug = task_slug(t);
                const auto params = artifacts::read_params(out("params_" + slug + ".json"));
                const auto balanced = oversample(remap_task(train, t), derive_seed(cfg_.seed, 0x7a5c + std::uint64_t(t)));
                auto model = fit_model(cfg_.model, balanced, params, cfg_.seed);
                model.featurizer_hash = fhash;
                auto f = artifacts::create(out("model_" + slug + ".json"));
                f << serialize_model(model) << '\n';
                outputs.push_back("model_" + slug + ".json");
            }
            return outputs;
        });
    }

    // -- evaluate ------------------------------------------------------------
    StageStatus evaluate() {
        std::vector<StageInput> in{artifact("features.txt"), artifact("featurizer.json"), artifact("dataset.csv"),
                                   artifact("split.csv")};
        for (const auto& slug : tasks_slugs()) in.push_back(artifact("model_" + slug + ".json"));
        return runner_.run("evaluate", in, nlohmann::json::object(), [&] {
            const auto test = train_test().second;
            const auto featurizer = artifacts::read_featurizer(out("featurizer.json"));
            std::vector<std::string> outputs{"metrics.csv"};
            auto summary = artifacts::create(out("metrics.csv"));
            write_metrics_header(summary);
            for (auto t : kAllTasks) {
                const std::string slug = task_slug(t);
                const auto model = deserialize_model(artifacts::slurp(out("model_" + slug + ".json")));
                model.check_featurizer(featurizer.hash());
                const auto ds = remap_task(test, t);
                std::vector<int> truth, pred;
                auto preds = artifacts::create(out("predictions_" + slug + ".csv"));
                std::string header = "thread_id,truth,predicted";
                for (const auto& c : ds.class_names) header += ",p_" + c;
                preds << header << '\n';
                for (const auto& it : ds.items) {
                    const auto p = predict(model, it.features);
                    truth.push_back(it.label);
                    pred.push_back(p.label);
                    std::vector<std::string> row{it.thread_id, ds.class_names[std::size_t(it.label)],
                                                 ds.class_names[std::size_t(p.label)]};
                    for (double v : p.probabilities) row.push_back(fmt_double(v, 6));
                    csv::write_row(preds, row);
                }
                const auto cm = confusion(truth, pred, ds.class_names);
                const auto report = metrics(cm, model_kind_name(cfg_.model), encoding_name(featurizer.encoding()), task_name(t));
                write_metrics_row(summary, report);
                {
                    auto f = artifacts::create(out("metrics_per_class_" + slug + ".csv"));
                    write_per_class_header(f);
                    write_per_class_rows(f, report);
                }
                {
                    auto f = artifacts::create(out("confusion_" + slug + ".csv"));
                    write_confusion_csv(f, cm);
                }
                outputs.insert(outputs.end(), {"predictions_" + slug + ".csv", "metrics_per_class_" + slug + ".csv",
                                               "confusion_" + slug + ".csv"});
                if (const auto* tree = std::get_if<DecisionTree>(&model.impl)) {
                    auto f = artifacts::create(out("rules_" + slug + ".txt"));
                    for (const auto& r : export_rules(*tree, [&](std::size_t i) { return featurizer.feature_name(i); }))
                        f << r << '\n';
                    outputs.push_back("rules_" + slug + ".txt");
                }
            }
            return outputs;
        });
    }

    // -- report --------------------------------------------------------------
    StageStatus report() {
        std::vector<StageInput> in{artifact("posts.jsonl"), artifact("mentions.csv"), artifact("prices.csv"),
                                   artifact("enrichment.csv"), artifact("nvd_stats.csv"), artifact("dataset.csv")};
        if (!cfg_.overlay.empty()) {
            try {
                in.push_back(external("overlay", cfg_.overlay));
            } catch (const Error& e) {
                throw Error(e.what(), "report");
            }
        }
        if (fs::exists(out("titles.csv"))) in.push_back(artifact("titles.csv"));
        return runner_.run("report", in, {{"top_k", cfg_.top_k}}, [&] { return write_report(); });
    }

    std::vector<std::string> write_report() {
        std::vector<std::string> outputs;
        auto emit = [&](const std::string& name, const std::function<void(std::ostream&)>& fn) {
            auto f = artifacts::create(out("report/" + name));
            fn(f);
            outputs.push_back("report/" + name);
        };
        LabelMap labels;
        for (const auto& [id, l] : artifacts::read_dataset(out("dataset.csv"))) labels[id] = l;
        const auto enrichment = artifacts::read_enrichment(out("enrichment.csv"));
        std::vector<PriceMention> prices;
        {
            auto f = artifacts::open(out("prices.csv"));
            prices = read_prices_csv(f);
        }

        std::vector<CdfSeries> series;
        if (!prices.empty()) series.push_back(price_cdf(prices));
        if (!enrichment.delays.empty()) series.push_back(delay_cdf(enrichment.delays));
        for (const auto& s : series) emit("cdf_" + s.name + ".csv", [&](std::ostream& o) { write_cdf_csv(o, s); });
        std::vector<OverlaySummary> overlay;
        if (!cfg_.overlay.empty()) overlay = load_overlay(cfg_.overlay);
        emit("cdf_summary.csv", [&](std::ostream& o) { write_cdf_summary_csv(o, series, overlay); });

        for (auto kind : {ScoreKind::cvss_v2, ScoreKind::cvss_v31, ScoreKind::epss})
            for (auto mode : {DedupMode::citation, DedupMode::distinct}) {
                const auto rows = score_distribution(enrichment.scores, labels, kind, mode);
                emit(std::string("box_") + score_kind_name(kind) + "_" + dedup_mode_name(mode) + ".csv",
                     [&](std::ostream& o) { write_boxplot_csv(o, rows); });
            }

        // Share of in-scope citations above the NVD-wide mean.
        std::map<std::string, std::optional<double>> means;
        std::string epss_date;
        {
            auto f = artifacts::open(out("nvd_stats.csv"));
            csv::Reader r(f);
            csv::Record rec;
            r.next(rec);
            while (r.next(rec)) {
                means[rec.fields.at(0)] = rec.fields.at(1).empty() ? std::nullopt : std::optional<double>(std::stod(rec.fields[1]));
                epss_date = rec.fields.at(3);
            }
        }
        std::vector<MentionScore> in_scope_scores;
        for (const auto& s : enrichment.scores)
            if (labels.count(s.thread_id)) in_scope_scores.push_back(s);
        emit("risk_summary.csv", [&](std::ostream& o) {
            o << "score,global_mean,share_above_mean,citations,epss_date\n";
            for (auto kind : {ScoreKind::cvss_v2, ScoreKind::cvss_v31, ScoreKind::epss}) {
                const auto mean = means[score_kind_name(kind)];
                std::size_t n = 0;
                for (const auto& s : in_scope_scores) {
                    const auto v = kind == ScoreKind::cvss_v2 ? s.cvss_v2 : kind == ScoreKind::cvss_v31 ? s.cvss_v31 : s.epss;
                    n += v.has_value();
                }
                std::string share;
                if (mean && n) share = fmt_double(share_above_global_mean(in_scope_scores, kind, *mean), 6);
                csv::write_row(o, {score_kind_name(kind), mean ? fmt_double(*mean, 6) : "", share, std::to_string(n),
                                   kind == ScoreKind::epss ? epss_date : ""});
            }
        });

        const auto threads = citing_threads();
        for (const auto& k : keyword_frequencies(threads, labels, cfg_.top_k))
            emit("keywords_" + k.group + ".csv", [&](std::ostream& o) { write_keywords_csv(o, k); });
        emit("boards.csv", [&](std::ostream& o) { write_boards_csv(o, board_breakdown(threads)); });
        return outputs;
    }
};

// ---------------------------------------------------------------------------
// Classification of new threads and alerting

struct AlertRecord {
    std::string thread_id;
    std::string label;
    double probability = 0;
    std::vector<std::string> cves;
    std::optional<double> max_cvss;
    std::optional<double> max_epss;
    std::string timestamp;  // latest post in the thread

    nlohmann::json to_json() const {
        nlohmann::json j{{"thread_id", thread_id}, {"label", label},  {"probability", probability},
                         {"cves", cves},           {"timestamp", timestamp}};
        j["max_cvss"] = max_cvss ? nlohmann::json(*max_cvss) : nlohmann::json(nullptr);
        j["max_epss"] = max_epss ? nlohmann::json(*max_epss) : nlohmann::json(nullptr);
        return j;
    }

    /// Content hash; identical alerts share an id.
    std::string id() const { return sha256_hex(to_json().dump()); }
};

struct ThreadPrediction {
    std::string thread_id;
    bool in_scope = false;  // false: no CVE mention, not classified
    std::string label;
    std::vector<double> probabilities;
    std::vector<std::string> cves;
};

struct ClassifyResult {
    std::vector<std::string> class_names;
    std::vector<ThreadPrediction> predictions;
    std::vector<AlertRecord> alerts;  // all qualifying alerts, including already logged ones
    std::size_t appended = 0;
};

/// Appends alerts whose id is not yet present. The log starts with a header
/// line carrying its creation time.
inline std::size_t append_alerts(const fs::path& log, const std::vector<AlertRecord>& alerts,
                                 const std::string& created_at) {
    std::set<std::string> known;
    if (std::ifstream in(log, std::ios::binary); in) {
        std::string line;
        while (std::getline(in, line)) {
            const auto j = nlohmann::json::parse(line, nullptr, false);
            if (!j.is_discarded() && j.is_object() && j.contains("id")) known.insert(j["id"].get<std::string>());
        }
    }
    const bool fresh = !fs::exists(log);
    if (fresh) fs::create_directories(log.parent_path().empty() ? fs::path(".") : log.parent_path());
    std::ofstream out(log, std::ios::binary | std::ios::app);
    if (!out) throw Error("cannot open alert log " + log.string(), "alerts");
    if (fresh) out << nlohmann::json{{"alert_log", 1}, {"created_at", created_at}}.dump() << '\n';
    std::size_t n = 0;
    for (const auto& a : alerts) {
        const auto id = a.id();
        if (!known.insert(id).second) continue;
        auto j = a.to_json();
        j["id"] = id;
        out << j.dump() << '\n';
        ++n;
    }
    return n;
}

inline std::vector<nlohmann::json> read_alerts(const fs::path& log) {
    std::ifstream in(log, std::ios::binary);
    if (!in) throw Error("cannot open alert log " + log.string(), "alerts");
    std::vector<nlohmann::json> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) throw Error("alert log line is not JSON", "alerts");
        if (j.contains("id")) out.push_back(std::move(j));
    }
    return out;
}

inline std::string utc_now_iso() {
    const auto now = std::chrono::system_clock::now();
    return DateTime(std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count()).iso();
}

/// Classifies the threads in a posts file with the trained three-class model
/// of `cfg.out_dir` and appends Exploitation alerts to `alert_log`.
inline ClassifyResult classify_new(const PipelineConfig& cfg, const fs::path& posts_file, const fs::path& alert_log) {
    const auto featurizer = artifacts::read_featurizer(cfg.out_dir / "featurizer.json");
    const auto model =
        deserialize_model(artifacts::slurp(cfg.out_dir / ("model_" + std::string(task_slug(Task::three_class)) + ".json"), "train"));
    model.check_featurizer(featurizer.hash());

    auto ingested = ingest_corpus(posts_file, corpus_format_for(posts_file), cfg.normalize);
    const auto threads = assemble_threads(std::move(ingested.posts), {}, cfg.normalize);

    NvdMap nvd;
    if (!cfg.nvd.empty() && fs::exists(cfg.nvd)) nvd = load_nvd(cfg.nvd).records;
    if (!cfg.epss.empty() && fs::exists(cfg.epss)) merge_epss(nvd, load_epss(cfg.epss));

    ClassifyResult result;
    result.class_names = model.class_names();
    const int exploitation = task_class(Task::three_class, ThreadLabel::Exploitation);
    for (const auto& t : threads) {
        ThreadPrediction p;
        p.thread_id = t.thread_id;
        for (const auto& id : unique_cves(extract_cve_mentions(t.posts))) p.cves.push_back(id);
        if (p.cves.empty()) {
            p.label = "not in scope";
            result.predictions.push_back(std::move(p));
            continue;
        }
        p.in_scope = true;
        const auto pred = predict(model, featurizer.transform(t.document));
        p.label = result.class_names[std::size_t(pred.label)];
        p.probabilities = pred.probabilities;
        const double prob = pred.probabilities[std::size_t(exploitation)];
        if (pred.label == exploitation && prob >= cfg.alert_threshold) {
            AlertRecord a{t.thread_id, p.label, prob, p.cves, std::nullopt, std::nullopt, {}};
            for (const auto& id : p.cves) {
                auto it = nvd.find(id);
                if (it == nvd.end()) continue;
                const auto cvss = it->second.cvss_v31 ? it->second.cvss_v31 : it->second.cvss_v2;
                if (cvss && (!a.max_cvss || *cvss > *a.max_cvss)) a.max_cvss = cvss;
                if (it->second.epss && (!a.max_epss || *it->second.epss > *a.max_epss)) a.max_epss = it->second.epss;
            }
            DateTime latest = t.posts.front().created_at;
            for (const auto& post : t.posts) latest = std::max(latest, post.created_at, [](DateTime x, DateTime y) {
                                                     return x.epoch_seconds() < y.epoch_seconds();
                                                 });
            a.timestamp = latest.iso();
            result.alerts.push_back(std::move(a));
        }
        result.predictions.push_back(std::move(p));
    }
    result.appended = append_alerts(alert_log, result.alerts, utc_now_iso());
    return result;
}

inline void write_classifications_csv(std::ostream& out, const ClassifyResult& r) {
    std::string header = "thread_id,status,label";
    for (const auto& c : r.class_names) header += ",p_" + c;
    out << header << ",cves\n";
    for (const auto& p : r.predictions) {
        std::vector<std::string> row{p.thread_id, p.in_scope ? "classified" : "not in scope", p.in_scope ? p.label : ""};
        for (std::size_t c = 0; c < r.class_names.size(); ++c)
            row.push_back(p.in_scope ? fmt_double(p.probabilities[c], 6) : "");
        std::string cves;
        for (const auto& id : p.cves) cves += (cves.empty() ? "" : ";") + id;
        row.push_back(cves);
        csv::write_row(out, row);
    }
}

}  // namespace forumscope
