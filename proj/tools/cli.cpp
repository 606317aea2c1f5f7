#include "cli.hpp"

#include <CLI11.hpp>

#include <ostream>

#include "xlpack/pipeline.hpp"

namespace xlpack {

namespace {

bool overridden(const std::vector<std::string>& sets, const std::string& key) {
    for (const auto& s : sets) {
        if (s.compare(0, key.size() + 1, key + "=") == 0) return true;
    }
    return false;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Build cross-lingual in-context pretraining data from Wikipedia dumps.", "xlpack"};
    app.require_subcommand(1);

    std::string config_path;
    int workers = 0;
    bool emit_text = false;
    bool discard_tails = false;
    bool dump_tsv = false;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> sets;

    app.add_option("--config", config_path, "Pipeline configuration (JSON)")->required();
    app.add_option("--workers", workers, "Worker threads for parallel stages (0 = all cores)")
        ->check(CLI::NonNegativeNumber);
    app.add_flag("--emit-text", emit_text, "pack: also write rendered contexts to contexts.text.jsonl");
    app.add_flag("--discard-tails", discard_tails, "slide: drop contexts cut by a window instead of deferring them");
    app.add_flag("--dump-tsv", dump_tsv, "align: write parsed dump records under debug/");
    app.add_option("--seed", seed, "Seed for direction mixing and the validation split");
    app.add_option("--set", sets, "Override a config field, e.g. --set pack.n_budget=2048")->take_all();
    app.fallthrough();

    const std::pair<Stage, const char*> commands[] = {
        {Stage::align, "Resolve langlinks into the bilingual pair map"},
        {Stage::retrieve, "Two-step retrieval of English web documents for L articles"},
        {Stage::pack, "Pack aligned pairs into budgeted contexts"},
        {Stage::slide, "Tokenize contexts and cut them into training windows"},
        {Stage::stats, "Per-language token statistics"},
        {Stage::export_shards, "Write final shards and manifests"},
        {Stage::all, "Run every stage in order"},
    };
    for (const auto& [stage, help] : commands) app.add_subcommand(std::string(to_string(stage)), help);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << "run with --help for usage\n";
        return 1;
    }

    const Stage stage = *parse_stage(app.get_subcommands().front()->get_name());

    try {
        auto doc = load_config_json(config_path);
        if (seed) {
            if (!overridden(sets, "pack.seed")) apply_override(doc, "pack.seed=" + std::to_string(*seed));
            if (!overridden(sets, "split.seed")) apply_override(doc, "split.seed=" + std::to_string(*seed));
        }
        if (discard_tails) apply_override(doc, "slide.discard_tails=true");
        for (const auto& s : sets) apply_override(doc, s);

        const auto base = std::filesystem::absolute(config_path).parent_path();
        const PipelineConfig cfg = validate_config(doc, base);

        RunOptions opts;
        opts.workers = workers;
        opts.emit_text = emit_text;
        opts.dump_tsv = dump_tsv;
        run_stage(stage, cfg, opts);
        return 0;
    } catch (const ConfigError& e) {
        err << (dynamic_cast<const MissingInputError*>(&e) ? "missing input:\n" : "invalid configuration:\n");
        for (const auto& d : e.diagnostics()) err << "  " << d.field << ": " << d.message << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        const int code = exit_code_for(e);
        err << (code == 2 ? "input error: " : "stage failed: ") << e.what() << "\n";
        return code;
    }
}

}  // namespace xlpack
