#pragma once

// Synthetic dumps, articles and configs for tests and the acceptance run.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "xlpack/dump_ingest.hpp"

namespace xlpack::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag);
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

void write_file(const std::filesystem::path& p, const std::string& content);
std::string read_file(const std::filesystem::path& p);

/// MySQL string literal with every character that needs it escaped.
std::string sql_quote(std::string_view raw);

std::string langlinks_sql(const std::vector<LangLink>& links, std::size_t rows_per_insert = 100);

struct PageRow {
    PageId id = 0;
    int ns = 0;
    std::string title;  // underscores, as MediaWiki stores it
    bool redirect = false;
};
std::string pages_sql(const std::vector<PageRow>& rows, std::size_t rows_per_insert = 100);

std::string article_line(PageId id, const std::string& title, const std::string& text);

/// Random lowercase words drawn from a fixed pseudo-vocabulary.
std::string random_words(std::mt19937_64& rng, std::size_t n, std::size_t vocab = 5000);

struct WikiShape {
    std::size_t pairs = 100;
    std::size_t paragraphs_per_side = 4;  // mean; actual is uniform in [1, 2 * mean - 1]
    std::size_t words_per_paragraph = 12;  // mean; uniform in [1, 2 * mean - 1]
    std::uint64_t seed = 7;
    std::string lang = "xx";
};

struct WikiFixture {
    std::filesystem::path config;  // config.json referencing everything below
    nlohmann::json config_doc;
    std::size_t pairs = 0;
};

/// Writes dumps, article files and a config.json (whitespace tokenizer,
/// output under `dir/out`). Half the pairs are linked forward, half in
/// reverse, a few both ways.
WikiFixture write_synthetic_wiki(const std::filesystem::path& dir, const WikiShape& shape);

}  // namespace xlpack::testing
