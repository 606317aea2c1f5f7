#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "xlpack/byte_source.hpp"
#include "xlpack/common.hpp"

namespace xlpack {

struct LangLink {
    PageId from_page_id = 0;
    std::string target_lang;
    std::string target_title;

    bool operator==(const LangLink&) const = default;
};

struct PageRecord {
    PageId page_id = 0;
    int namespace_id = 0;
    std::string title;
    bool is_redirect = false;

    bool operator==(const PageRecord&) const = default;
};

struct RawArticle {
    PageId page_id = 0;
    std::string title;
    std::string text;
    std::string lang;

    bool operator==(const RawArticle&) const = default;
};

/// One value of an INSERT tuple, already unescaped when it was a string literal.
struct SqlField {
    std::string text;
    bool quoted = false;
};

/// Resolves MySQL string-literal escapes in the body of a quoted literal.
std::string unescape_sql(std::string_view body);

/// MediaWiki stores titles with underscores; everything downstream compares with spaces.
std::string normalize_title(std::string_view title);

/// Scans `INSERT INTO ... VALUES (...),(...);` statements in a mysqldump
/// stream and yields one tuple at a time. Lines that are not INSERT
/// statements are skipped. Memory use is the fixed read buffer plus the
/// largest single tuple.
class SqlTupleScanner {
public:
    explicit SqlTupleScanner(std::unique_ptr<ByteSource> src,
                             std::size_t buffer_bytes = BufferedReader::kDefaultCapacity);

    /// Fills `fields` with the next well-formed tuple. Malformed tuples are
    /// skipped and counted. Returns false at a clean end of input; throws
    /// TruncatedInput when the input stops inside a statement.
    bool next(std::vector<SqlField>& fields);

    std::uint64_t malformed() const { return malformed_; }
    std::size_t buffer_capacity() const { return in_.capacity(); }
    std::size_t peak_tuple_bytes() const { return peak_tuple_bytes_; }
    std::uint64_t offset() const { return in_.offset(); }

private:
    enum class TupleResult { ok, malformed };

    bool seek_values();
    TupleResult parse_tuple(std::vector<SqlField>& fields);
    bool read_quoted(int quote, std::string& out);
    void resync();
    [[noreturn]] void truncated(const char* where) const;

    BufferedReader in_;
    bool in_statement_ = false;
    std::uint64_t malformed_ = 0;
    std::size_t peak_tuple_bytes_ = 0;
};

/// Streams LangLink records out of a `langlinks` table dump.
class LangLinkReader {
public:
    LangLinkReader(std::unique_ptr<ByteSource> src, std::optional<std::string> filter_lang);

    /// Next matching link, or nullopt at end of input.
    std::optional<LangLink> next();

    /// Parse errors are recorded under `parse_errors`.
    Tally tally() const;
    const SqlTupleScanner& scanner() const { return scanner_; }

private:
    SqlTupleScanner scanner_;
    std::optional<std::string> filter_;
    std::vector<SqlField> fields_;
    std::uint64_t bad_records_ = 0;
};

/// Column positions in the `page` table; these moved between MediaWiki releases.
struct PageColumns {
    std::size_t id = 0;
    std::size_t namespace_id = 1;
    std::size_t title = 2;
    std::size_t is_redirect = 3;
};

class PageReader {
public:
    explicit PageReader(std::unique_ptr<ByteSource> src, PageColumns columns = {});

    std::optional<PageRecord> next();
    Tally tally() const;

private:
    SqlTupleScanner scanner_;
    PageColumns cols_;
    std::vector<SqlField> fields_;
    std::uint64_t bad_records_ = 0;
};

/// Lists the files that make up an article set: the path itself when it is a
/// file, otherwise every regular file below it in lexicographic path order.
std::vector<std::filesystem::path> list_article_files(const std::filesystem::path& path);

/// Parses one wikiextractor JSON line. Returns nullopt when the line is not a
/// JSON object or lacks `id`, `title` or `text`.
std::optional<RawArticle> parse_article_line(std::string_view line, std::string_view lang);

/// Streams RawArticle records from line-delimited JSON files.
class ArticleReader {
public:
    ArticleReader(const std::filesystem::path& path, std::string lang);

    std::optional<RawArticle> next();

    /// Bad lines are recorded under `article_parse_errors`.
    const Tally& tally() const { return tally_; }

private:
    std::vector<std::filesystem::path> files_;
    std::size_t file_index_ = 0;
    std::unique_ptr<BufferedReader> reader_;
    std::string lang_;
    std::string line_;
    Tally tally_;
};

// Convenience wrappers that drain a whole stream.
std::vector<LangLink> read_langlinks(std::unique_ptr<ByteSource> src,
                                     std::optional<std::string> filter_lang, Tally* tally = nullptr);
std::vector<PageRecord> read_pages(std::unique_ptr<ByteSource> src, PageColumns columns = {},
                                   Tally* tally = nullptr);
std::vector<RawArticle> read_articles(const std::filesystem::path& path, const std::string& lang,
                                      Tally* tally = nullptr);

/// Tab-separated debug rendering used by `--dump-tsv`.
std::string to_tsv(const LangLink& link);
std::string to_tsv(const PageRecord& page);

}  // namespace xlpack
