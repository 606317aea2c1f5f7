#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "xlpack/config.hpp"

namespace xlpack {

enum class Stage { align, retrieve, pack, slide, stats, export_shards, all };

std::string_view to_string(Stage s);
std::optional<Stage> parse_stage(std::string_view s);

struct RunOptions {
    int workers = 0;  // 0 keeps the OpenMP default
    bool emit_text = false;
    bool dump_tsv = false;
};

// Artifact locations below the output directory.
namespace artifact {
inline constexpr const char* kPairs = "pairs.tsv";
inline constexpr const char* kPseudoPairs = "pseudo_pairs.jsonl";
inline constexpr const char* kContexts = "contexts.jsonl";
inline constexpr const char* kContextText = "contexts.text.jsonl";
inline constexpr const char* kWindows = "windows";
inline constexpr const char* kStats = "stats.json";
inline constexpr const char* kExport = "export";
inline constexpr const char* kRunReport = "run_report.jsonl";
inline constexpr const char* kDebug = "debug";
}  // namespace artifact

/// Failure inside a stage that is neither a config nor an input problem.
class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::string& what)
        : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

/// Appends line-delimited JSON events to run_report.jsonl.
class RunReport {
public:
    explicit RunReport(const std::filesystem::path& path);
    void event(nlohmann::json e);

private:
    std::ofstream out_;
};

/// One line of contexts.jsonl and back.
nlohmann::json context_to_json(const PackedContext& ctx);
PackedContext context_from_json(const nlohmann::json& j);

nlohmann::json pair_to_json(const ArticlePair& p);
ArticlePair pair_from_json(const nlohmann::json& j);

/// Runs one stage (or the whole chain) against `cfg`, logging to the run
/// report in the output directory.
void run_stage(Stage stage, const PipelineConfig& cfg, const RunOptions& opts);

/// Exit codes: 0 ok, 1 config error, 2 input error, 3 stage failure.
int exit_code_for(const std::exception& e);

}  // namespace xlpack
