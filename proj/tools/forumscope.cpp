// forumscope command-line driver.

#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "forumscope/config.hpp"
#include "forumscope/pipeline.hpp"
#include "forumscope/synthetic.hpp"

using namespace forumscope;

namespace {

struct Overrides {
    std::string config;
    std::string corpus, labels, nvd, epss, overlay, titles, out_dir;
    std::string encoding, model, scoring;
    std::optional<std::uint64_t> seed;
    std::optional<double> threshold;
    bool no_grid = false;
    bool drop_quotes = false;
};

PipelineConfig resolve(const Overrides& o) {
    PipelineConfig c = default_config();
    if (!o.config.empty()) c = load_config(o.config, c);
    auto set = [](const std::string& v, std::filesystem::path& slot) {
        if (!v.empty()) slot = v;
    };
    set(o.corpus, c.corpus);
    set(o.labels, c.labels);
    set(o.nvd, c.nvd);
    set(o.epss, c.epss);
    set(o.overlay, c.overlay);
    set(o.titles, c.titles);
    set(o.out_dir, c.out_dir);
    if (!o.encoding.empty()) c.encoding = parse_encoding(o.encoding);
    if (!o.model.empty()) c.model = parse_model_kind(o.model);
    if (!o.scoring.empty()) c.grid.scoring = parse_scoring(o.scoring);
    if (o.seed) c.seed = *o.seed;
    if (o.threshold) c.alert_threshold = *o.threshold;
    if (o.no_grid) c.grid_search = false;
    if (o.drop_quotes) c.normalize.drop_quotes = true;
    c.validate();
    return c;
}

void print_status(const std::string& line) { std::cout << line << '\n'; }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"forumscope: CVE-citing forum thread mining and classification"};
    app.require_subcommand(1);
    app.fallthrough();

    Overrides o;
    app.add_option("-c,--config", o.config, "TOML configuration file");
    app.add_option("--corpus", o.corpus, "forum dump (.jsonl or .csv)");
    app.add_option("--labels", o.labels, "thread labels CSV");
    app.add_option("--nvd", o.nvd, "local NVD mirror (JSONL)");
    app.add_option("--epss", o.epss, "EPSS scores CSV");
    app.add_option("--overlay", o.overlay, "external summary statistics CSV");
    app.add_option("--titles", o.titles, "thread titles CSV");
    app.add_option("-o,--out", o.out_dir, "output directory");
    app.add_option("--encoding", o.encoding, "bow | tfidf | doc2vec");
    app.add_option("--model", o.model, "tree | forest");
    app.add_option("--scoring", o.scoring, "grid search metric: macro_f1 | accuracy");
    app.add_option("--seed", o.seed, "master seed");
    app.add_option("--alert-threshold", o.threshold, "minimum Exploitation probability for an alert");
    app.add_flag("--no-grid", o.no_grid, "skip grid search and train with [model] defaults");
    app.add_flag("--drop-quotes", o.drop_quotes, "remove quoted blocks from posts");

    std::vector<std::pair<std::string, CLI::App*>> stage_cmds;
    const std::map<std::string, std::string> help{
        {"ingest", "read and normalise the forum dump"},
        {"extract", "find CVE ids and prices"},
        {"enrich", "join mentions with NVD and EPSS"},
        {"featurize", "fit the text encoder over CVE-citing threads"},
        {"label", "attach labels and weak-label suggestions"},
        {"split", "stratified train/test split and CV folds"},
        {"grid-search", "cross-validated hyperparameter search per task"},
        {"train", "fit the final model per task"},
        {"evaluate", "score held-out threads"},
        {"report", "analytics tables"}};
    for (const auto& s : stage_names()) stage_cmds.push_back({s, app.add_subcommand(s, help.at(s))});

    auto* run = app.add_subcommand("run", "all stages in order (cached stages are skipped)");

    std::string input, output, alert_log;
    auto* classify = app.add_subcommand("classify", "classify new threads and append Exploitation alerts");
    classify->add_option("input", input, "posts file (.jsonl or .csv)")->required();
    classify->add_option("--output", output, "predictions CSV (default: stdout)");
    classify->add_option("--alert-log", alert_log, "alert log (default: <out>/alerts.jsonl)");

    auto* alerts = app.add_subcommand("alerts", "list logged alerts");
    alerts->add_option("--alert-log", alert_log, "alert log (default: <out>/alerts.jsonl)");

    synth::Params sp;
    std::string synth_dir;
    auto* gen = app.add_subcommand("synth", "write a synthetic corpus with side files");
    gen->add_option("dir", synth_dir, "destination directory")->required();
    gen->add_option("--poc", sp.poc);
    gen->add_option("--weaponization", sp.weaponization);
    gen->add_option("--exploitation", sp.exploitation);
    gen->add_option("--uncited", sp.uncited);
    gen->add_option("--scam", sp.scam);
    gen->add_option("--incidence", sp.keyword_incidence);
    gen->add_option("--leakage", sp.leakage);
    gen->add_option("--synth-seed", sp.seed);

    CLI11_PARSE(app, argc, argv);

    std::string stage = "cli";
    try {
        if (gen->parsed()) {
            stage = "synth";
            synth::write_corpus_files(synth::generate(sp), synth_dir);
            std::cout << "wrote synthetic corpus to " << synth_dir << '\n';
            return 0;
        }
        stage = "config";
        const auto cfg = resolve(o);
        const auto log_path = alert_log.empty() ? cfg.out_dir / "alerts.jsonl" : std::filesystem::path(alert_log);

        if (alerts->parsed()) {
            stage = "alerts";
            for (const auto& a : read_alerts(log_path)) std::cout << a.dump() << '\n';
            return 0;
        }
        if (classify->parsed()) {
            stage = "classify";
            DirLock lock(cfg.out_dir);
            const auto r = classify_new(cfg, input, log_path);
            if (output.empty()) {
                write_classifications_csv(std::cout, r);
            } else {
                auto f = artifacts::create(output);
                write_classifications_csv(f, r);
            }
            std::cerr << r.alerts.size() << " alert(s), " << r.appended << " new, log " << log_path.string() << '\n';
            return 0;
        }

        stage = "pipeline";
        DirLock lock(cfg.out_dir);
        Pipeline pipeline(cfg, print_status);
        if (run->parsed()) {
            pipeline.run_all();
            return 0;
        }
        for (const auto& [name, cmd] : stage_cmds)
            if (cmd->parsed()) {
                stage = name;
                pipeline.run_stage(name);
            }
        return 0;
    } catch (const Error& e) {
        std::cerr << (e.stage().empty() ? stage : e.stage()) << ": " << e.what() << '\n';
    } catch (const std::exception& e) {
        std::cerr << stage << ": " << e.what() << '\n';
    }
    return 1;
}
