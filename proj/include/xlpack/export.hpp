#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "xlpack/packing.hpp"
#include "xlpack/sliding.hpp"

namespace xlpack {

/// Exact rational in [0, 1).
struct Fraction {
    std::uint64_t num = 1;
    std::uint64_t den = 1000;

    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
    std::string str() const { return std::to_string(num) + "/" + std::to_string(den); }
};

/// Accepts "a/b" or a decimal literal such as "0.001".
std::optional<Fraction> parse_fraction(std::string_view text);

struct SplitConfig {
    Fraction validation_fraction{1, 1000};
    std::uint64_t seed = 32;
};

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
};

/// Seeded Fisher-Yates over [0, count); the first floor(count * fraction)
/// positions of the permutation go to validation. Both lists ascend.
SplitIndices split_validation(std::size_t count, const SplitConfig& cfg);

template <typename T>
std::pair<std::vector<T>, std::vector<T>> split_validation(std::vector<T> items, const SplitConfig& cfg) {
    auto idx = split_validation(items.size(), cfg);
    std::vector<T> train;
    std::vector<T> validation;
    train.reserve(idx.train.size());
    validation.reserve(idx.validation.size());
    for (auto i : idx.train) train.push_back(std::move(items[i]));
    for (auto i : idx.validation) validation.push_back(std::move(items[i]));
    return {std::move(train), std::move(validation)};
}

struct ShardFileInfo {
    std::string file;
    std::uint64_t windows = 0;
    std::uint64_t tokens = 0;
    std::uint64_t bytes = 0;
};

struct ShardManifest {
    std::string config_digest;
    std::string tokenizer_kind;
    std::size_t n_budget = 0;
    std::uint64_t window_count = 0;
    std::uint64_t token_total = 0;
    std::map<std::string, std::uint64_t> per_language_tokens;
    std::uint64_t control_tokens = 0;
    std::uint64_t seed = 0;
    std::string split = "train";
    std::string created_at;
    std::string slide_kind;
    bool complete = false;
    std::vector<ShardFileInfo> shards;

    nlohmann::json to_json() const;
    static ShardManifest from_json(const nlohmann::json& j);
};

inline constexpr const char* kManifestFile = "manifest.json";

/// `windows-NNNNN.bin` for shard `index`.
std::string shard_file_name(std::size_t index);

/// Little-endian u32 count followed by that many u32 ids.
void encode_record(std::span<const TokenId> ids, std::string& out);

/// Writes windows into size-capped shard files. On any error the file being
/// written is removed before the exception propagates.
class ShardWriter {
public:
    ShardWriter(std::filesystem::path dir, std::uint64_t shard_max_bytes);
    ~ShardWriter();
    ShardWriter(const ShardWriter&) = delete;
    ShardWriter& operator=(const ShardWriter&) = delete;

    void write(std::span<const TokenId> ids);
    /// Closes the last shard, fills the counting fields of `base` and writes
    /// the manifest next to the shards.
    ShardManifest finish(ShardManifest base);

private:
    void open_next();
    void close_current();
    void fail_current();

    std::filesystem::path dir_;
    std::uint64_t max_bytes_;
    std::ofstream out_;
    std::filesystem::path current_path_;
    std::vector<ShardFileInfo> files_;
    std::string scratch_;
    bool finished_ = false;
};

ShardManifest write_shards(std::span<const WindowShard> windows, const std::filesystem::path& dir,
                           std::uint64_t shard_max_bytes, ShardManifest base);

ShardManifest read_manifest(const std::filesystem::path& dir);

/// Streams windows back in written order, checking every count against the
/// manifest. Errors name the file and byte offset.
class ShardReader {
public:
    explicit ShardReader(const std::filesystem::path& dir);

    std::optional<WindowShard> next();
    const ShardManifest& manifest() const { return manifest_; }

private:
    [[noreturn]] void fail(const std::string& what) const;
    bool open_next_file();

    std::filesystem::path dir_;
    ShardManifest manifest_;
    std::size_t file_index_ = 0;
    std::ifstream in_;
    std::string current_;
    std::uint64_t offset_ = 0;
    std::uint64_t file_windows_ = 0;
    std::uint64_t file_tokens_ = 0;
    std::uint64_t windows_ = 0;
    std::uint64_t tokens_ = 0;
    bool open_ = false;
};

std::vector<WindowShard> read_shards(const std::filesystem::path& dir);

/// Token totals for one data source.
struct SourceStats {
    std::map<std::string, std::uint64_t> tokens_by_lang;
    std::uint64_t control_tokens = 0;
    std::uint64_t contexts = 0;

    bool operator==(const SourceStats&) const = default;
};

/// Wikipedia pairs and retrieval pseudo pairs are reported separately.
struct CorpusStats {
    SourceStats wikipedia;
    SourceStats retrieved;

    bool operator==(const CorpusStats&) const = default;
};

/// Recounts every segment (text + "\n\n") with the tokenizer and attributes
/// it to the segment's language; the split token goes to `control_tokens`.
/// Parallel map-reduce over contexts.
CorpusStats compute_stats(std::span<const PackedContext> contexts, const Tokenizer& tokenizer);
CorpusStats compute_stats_serial(std::span<const PackedContext> contexts, const Tokenizer& tokenizer);

/// Same accounting over unpacked pairs (titles plus paragraphs per side).
CorpusStats compute_pair_stats(std::span<const ArticlePair> pairs, const Tokenizer& tokenizer);

/// "1.53B", "12.4M", "980K" or the plain number.
std::string format_token_count(std::uint64_t n);

/// Rows of (source, language) token counts: W and F, each with an en row and
/// an L row.
nlohmann::json stats_to_json(const CorpusStats& stats, const std::string& lang_l);

}  // namespace xlpack
