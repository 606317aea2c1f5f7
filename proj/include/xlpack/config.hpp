#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "xlpack/alignment.hpp"
#include "xlpack/dump_ingest.hpp"
#include "xlpack/embedding.hpp"
#include "xlpack/export.hpp"
#include "xlpack/packing.hpp"
#include "xlpack/retrieval.hpp"
#include "xlpack/sliding.hpp"
#include "xlpack/tokenizer.hpp"

namespace xlpack {

struct PathsConfig {
    std::optional<std::filesystem::path> langlinks_l;  // L wiki langlinks (L page -> English title)
    std::optional<std::filesystem::path> pages_en;
    std::optional<std::filesystem::path> langlinks_en;  // English wiki langlinks (English page -> L title)
    std::optional<std::filesystem::path> pages_l;
    std::optional<std::filesystem::path> articles_en;
    std::optional<std::filesystem::path> articles_l;
    std::optional<std::filesystem::path> corpus;
    std::optional<std::filesystem::path> corpus_embeddings;
    std::optional<std::filesystem::path> pair_map;
    std::filesystem::path output_dir = "out";
};

struct ProviderConfig {
    std::string kind = "mock";  // mock | file | wire
    std::size_t dim = 64;
    std::uint64_t seed = 32;
    std::optional<std::filesystem::path> cache;
    WireConfig wire;
};

struct RetrievalSettings {
    RetrievalConfig params;
    ProviderConfig provider;
};

struct PipelineConfig {
    std::string language_l;
    PathsConfig paths;
    TokenizerSpec tokenizer;
    PackConfig pack;
    SlidePolicy slide;
    std::optional<RetrievalSettings> retrieval;
    SplitConfig split;
    AlignFilter align;
    PageColumns page_columns;
    std::uint64_t shard_max_bytes = 256ull << 20;
    std::size_t batch_pairs = 2048;

    nlohmann::json effective;  // the validated document, overrides applied
};

struct ConfigDiagnostic {
    std::string field;
    std::string message;
};

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<ConfigDiagnostic> diags);
    const std::vector<ConfigDiagnostic>& diagnostics() const { return diags_; }

private:
    std::vector<ConfigDiagnostic> diags_;
};

/// Raised when a configured input path does not exist.
class MissingInputError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

/// Reads the JSON document. Throws ConfigError when missing or unparseable.
nlohmann::json load_config_json(const std::filesystem::path& path);

/// `a.b.c=value`; the value is parsed as JSON when possible, else taken as a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Structural and cross-field checks. Relative paths resolve against `base_dir`.
/// Throws ConfigError listing every violation (MissingInputError when the
/// only problems are nonexistent input paths). Never touches the network.
PipelineConfig validate_config(const nlohmann::json& doc, const std::filesystem::path& base_dir,
                               bool check_paths = true);

/// Hex digest over the configuration minus paths; identical settings give
/// identical digests wherever the files live.
std::string config_digest(const PipelineConfig& cfg);

}  // namespace xlpack
