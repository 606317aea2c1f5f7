#include "xlpack/dump_ingest.hpp"

#include <algorithm>
#include <charconv>

#include "json.hpp"

namespace xlpack {

namespace {

// Appends the character(s) a MySQL backslash escape stands for.
void append_escape(std::string& out, char e) {
    switch (e) {
        case '0': out.push_back('\0'); break;
        case 'n': out.push_back('\n'); break;
        case 'r': out.push_back('\r'); break;
        case 't': out.push_back('\t'); break;
        case 'b': out.push_back('\b'); break;
        case 'Z': out.push_back('\x1a'); break;
        // \% and \_ keep their backslash outside LIKE patterns.
        case '%':
        case '_':
            out.push_back('\\');
            out.push_back(e);
            break;
        default: out.push_back(e); break;
    }
}

template <typename Int>
bool parse_int(std::string_view s, Int& out) {
    if (s.empty()) return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

std::string unescape_sql(std::string_view body) {
    std::string out;
    out.reserve(body.size());
    for (std::size_t i = 0; i < body.size(); ++i) {
        char c = body[i];
        if (c == '\\' && i + 1 < body.size()) {
            append_escape(out, body[++i]);
        } else if ((c == '\'' || c == '"') && i + 1 < body.size() && body[i + 1] == c) {
            out.push_back(c);
            ++i;
        } else {
            out.push_back(c);
        }
    }
    return out;
}

std::string normalize_title(std::string_view title) {
    std::string out(title);
    std::replace(out.begin(), out.end(), '_', ' ');
    return out;
}

// ---------------------------------------------------------------------------
// SqlTupleScanner

SqlTupleScanner::SqlTupleScanner(std::unique_ptr<ByteSource> src, std::size_t buffer_bytes)
    : in_(std::move(src), buffer_bytes) {}

void SqlTupleScanner::truncated(const char* where) const {
    throw TruncatedInput("input ends inside " + std::string(where) + " at byte " +
                         std::to_string(in_.offset()));
}

bool SqlTupleScanner::seek_values() {
    static constexpr std::string_view kInsert = "INSERT ";
    static constexpr std::string_view kValues = "VALUES";
    for (;;) {
        // At the start of a line.
        std::size_t m = 0;
        int c = 0;
        while (m < kInsert.size()) {
            c = in_.get();
            if (c == -1) return false;
            if (c != kInsert[m]) break;
            ++m;
        }
        if (m == kInsert.size()) {
            std::size_t v = 0;
            while (v < kValues.size()) {
                c = in_.get();
                if (c == -1) truncated("INSERT header");
                if (c == kValues[v]) {
                    ++v;
                } else {
                    v = (c == kValues[0]) ? 1 : 0;
                }
            }
            in_statement_ = true;
            return true;
        }
        if (c == '\n') continue;
        while ((c = in_.get()) != -1 && c != '\n') {
        }
        if (c == -1) return false;
    }
}

bool SqlTupleScanner::read_quoted(int quote, std::string& out) {
    for (;;) {
        int c = in_.get();
        if (c == -1) return false;
        if (c == '\\') {
            int e = in_.get();
            if (e == -1) return false;
            append_escape(out, static_cast<char>(e));
        } else if (c == quote) {
            if (in_.peek() != quote) return true;
            in_.get();
            out.push_back(static_cast<char>(quote));
        } else {
            out.push_back(static_cast<char>(c));
        }
    }
}

void SqlTupleScanner::resync() {
    int quote = 0;
    int c;
    while ((c = in_.get()) != -1) {
        if (quote != 0) {
            if (c == '\\') {
                if (in_.get() == -1) break;
            } else if (c == quote) {
                quote = 0;
            }
        } else if (c == '\'' || c == '"') {
            quote = c;
        } else if (c == ')') {
            return;
        } else if (c == ';') {
            in_statement_ = false;
            while ((c = in_.get()) != -1 && c != '\n') {
            }
            return;
        }
    }
    truncated("tuple");
}

SqlTupleScanner::TupleResult SqlTupleScanner::parse_tuple(std::vector<SqlField>& fields) {
    std::size_t n = 0;
    std::size_t bytes = 0;
    auto skip_ws_get = [this] {
        int c;
        do {
            c = in_.get();
        } while (c != -1 && is_space(static_cast<char>(c)));
        return c;
    };
    for (;;) {
        int c = skip_ws_get();
        if (c == -1) truncated("tuple");
        if (n == fields.size()) fields.emplace_back();
        SqlField& f = fields[n++];
        f.text.clear();
        if (c == '\'' || c == '"') {
            f.quoted = true;
            if (!read_quoted(c, f.text)) truncated("string literal");
        } else if (c == ',' || c == ')') {
            if (c == ',') resync();
            return TupleResult::malformed;
        } else {
            f.quoted = false;
            f.text.push_back(static_cast<char>(c));
            for (;;) {
                c = in_.peek();
                if (c == -1) truncated("tuple");
                if (c == ',' || c == ')' || is_space(static_cast<char>(c))) break;
                if (c == '(' || c == '\'' || c == '"' || c == ';') {
                    resync();
                    return TupleResult::malformed;
                }
                f.text.push_back(static_cast<char>(in_.get()));
            }
        }
        bytes += f.text.size();
        c = skip_ws_get();
        if (c == -1) truncated("tuple");
        if (c == ',') continue;
        if (c == ')') {
            fields.resize(n);
            peak_tuple_bytes_ = std::max(peak_tuple_bytes_, bytes);
            return TupleResult::ok;
        }
        resync();
        return TupleResult::malformed;
    }
}

bool SqlTupleScanner::next(std::vector<SqlField>& fields) {
    for (;;) {
        if (!in_statement_ && !seek_values()) return false;
        int c;
        do {
            c = in_.get();
        } while (c != -1 && is_space(static_cast<char>(c)));
        if (c == -1) truncated("INSERT statement");
        if (c == ',') continue;
        if (c == ';') {
            in_statement_ = false;
            while ((c = in_.get()) != -1 && c != '\n') {
            }
            continue;
        }
        if (c == '(') {
            if (parse_tuple(fields) == TupleResult::ok) return true;
            ++malformed_;
            continue;
        }
        ++malformed_;
        resync();
    }
}

// ---------------------------------------------------------------------------
// Table readers

LangLinkReader::LangLinkReader(std::unique_ptr<ByteSource> src, std::optional<std::string> filter_lang)
    : scanner_(std::move(src)), filter_(std::move(filter_lang)) {}

std::optional<LangLink> LangLinkReader::next() {
    while (scanner_.next(fields_)) {
        if (fields_.size() < 3 || fields_[0].quoted || !fields_[1].quoted || !fields_[2].quoted) {
            ++bad_records_;
            continue;
        }
        LangLink link;
        if (!parse_int(fields_[0].text, link.from_page_id) || fields_[1].text.empty()) {
            ++bad_records_;
            continue;
        }
        link.target_lang = fields_[1].text;
        std::transform(link.target_lang.begin(), link.target_lang.end(), link.target_lang.begin(),
                       [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
        if (filter_ && link.target_lang != *filter_) continue;
        link.target_title = normalize_title(fields_[2].text);
        return link;
    }
    return std::nullopt;
}

Tally LangLinkReader::tally() const {
    Tally t;
    t.add("parse_errors", scanner_.malformed() + bad_records_);
    return t;
}

PageReader::PageReader(std::unique_ptr<ByteSource> src, PageColumns columns)
    : scanner_(std::move(src)), cols_(columns) {}

std::optional<PageRecord> PageReader::next() {
    const std::size_t need =
        std::max({cols_.id, cols_.namespace_id, cols_.title, cols_.is_redirect}) + 1;
    while (scanner_.next(fields_)) {
        PageRecord page;
        int redirect = 0;
        if (fields_.size() < need || !fields_[cols_.title].quoted ||
            !parse_int(fields_[cols_.id].text, page.page_id) ||
            !parse_int(fields_[cols_.namespace_id].text, page.namespace_id) ||
            !parse_int(fields_[cols_.is_redirect].text, redirect)) {
            ++bad_records_;
            continue;
        }
        page.title = normalize_title(fields_[cols_.title].text);
        page.is_redirect = redirect != 0;
        return page;
    }
    return std::nullopt;
}

Tally PageReader::tally() const {
    Tally t;
    t.add("parse_errors", scanner_.malformed() + bad_records_);
    return t;
}

// ---------------------------------------------------------------------------
// Extracted articles

std::vector<std::filesystem::path> list_article_files(const std::filesystem::path& path) {
    namespace fs = std::filesystem;
    std::error_code ec;
    auto st = fs::status(path, ec);
    if (ec || !fs::exists(st)) throw InputError("article path does not exist: " + path.string());
    if (fs::is_regular_file(st)) return {path};
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(path)) {
        if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.generic_string() < b.generic_string(); });
    return files;
}

std::optional<RawArticle> parse_article_line(std::string_view line, std::string_view lang) {
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return std::nullopt;
    auto id = j.find("id");
    auto title = j.find("title");
    auto text = j.find("text");
    if (id == j.end() || title == j.end() || text == j.end() || !title->is_string() ||
        !text->is_string()) {
        return std::nullopt;
    }
    RawArticle a;
    if (id->is_number_unsigned()) {
        a.page_id = id->get<PageId>();
    } else if (id->is_string()) {
        if (!parse_int(id->get_ref<const std::string&>(), a.page_id)) return std::nullopt;
    } else {
        return std::nullopt;
    }
    a.title = title->get<std::string>();
    a.text = text->get<std::string>();
    a.lang = std::string(lang);
    return a;
}

ArticleReader::ArticleReader(const std::filesystem::path& path, std::string lang)
    : files_(list_article_files(path)), lang_(std::move(lang)) {}

std::optional<RawArticle> ArticleReader::next() {
    for (;;) {
        if (!reader_) {
            if (file_index_ == files_.size()) return std::nullopt;
            reader_ = std::make_unique<BufferedReader>(std::make_unique<FileSource>(files_[file_index_++]));
        }
        if (!reader_->getline(line_)) {
            reader_.reset();
            continue;
        }
        if (trim(line_).empty()) continue;
        if (auto a = parse_article_line(line_, lang_)) return a;
        tally_.add("article_parse_errors");
    }
}

std::vector<LangLink> read_langlinks(std::unique_ptr<ByteSource> src,
                                     std::optional<std::string> filter_lang, Tally* tally) {
    LangLinkReader reader(std::move(src), std::move(filter_lang));
    std::vector<LangLink> out;
    while (auto link = reader.next()) out.push_back(std::move(*link));
    if (tally) tally->merge(reader.tally());
    return out;
}

std::vector<PageRecord> read_pages(std::unique_ptr<ByteSource> src, PageColumns columns, Tally* tally) {
    PageReader reader(std::move(src), columns);
    std::vector<PageRecord> out;
    while (auto page = reader.next()) out.push_back(std::move(*page));
    if (tally) tally->merge(reader.tally());
    return out;
}

std::vector<RawArticle> read_articles(const std::filesystem::path& path, const std::string& lang,
                                      Tally* tally) {
    ArticleReader reader(path, lang);
    std::vector<RawArticle> out;
    while (auto a = reader.next()) out.push_back(std::move(*a));
    if (tally) tally->merge(reader.tally());
    return out;
}

std::string to_tsv(const LangLink& link) {
    return std::to_string(link.from_page_id) + '\t' + link.target_lang + '\t' + link.target_title;
}

std::string to_tsv(const PageRecord& page) {
    return std::to_string(page.page_id) + '\t' + std::to_string(page.namespace_id) + '\t' + page.title +
           '\t' + (page.is_redirect ? "1" : "0");
}

}  // namespace xlpack
