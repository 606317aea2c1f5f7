#include "xlpack/alignment.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstring>
#include <fstream>

namespace xlpack {

TitleIndex::TitleIndex(std::span<const PageRecord> pages, const AlignFilter& filter, Tally* tally) {
    ids_.reserve(pages.size());
    for (const auto& p : pages) {
        if (filter.require_article_namespace && p.namespace_id != 0) {
            if (tally) tally->add("pages_filtered_namespace");
            continue;
        }
        if (filter.drop_redirects && p.is_redirect) {
            if (tally) tally->add("pages_filtered_redirect");
            continue;
        }
        if (filter.drop_blank && trim(p.title).empty()) continue;
        auto [it, inserted] = ids_.try_emplace(p.title, p.page_id);
        if (!inserted && it->second != p.page_id) {
            if (tally) tally->add("title_collisions");
            it->second = std::min(it->second, p.page_id);
        }
    }
}

std::optional<PageId> TitleIndex::resolve(const std::string& title) const {
    auto it = ids_.find(title);
    if (it == ids_.end()) return std::nullopt;
    return it->second;
}

namespace {

void resolve_links(std::span<const LangLink> links, const TitleIndex& index, const AlignFilter& filter,
                   bool forward, std::vector<PairId>& out, Tally* tally) {
    for (const auto& link : links) {
        if (filter.drop_blank && trim(link.target_title).empty()) {
            if (tally) tally->add("links_blank_title");
            continue;
        }
        auto target = index.resolve(link.target_title);
        if (!target) {
            if (tally) tally->add("links_unresolved");
            continue;
        }
        out.push_back(forward ? PairId{link.from_page_id, *target} : PairId{*target, link.from_page_id});
    }
}

}  // namespace

std::vector<PairId> build_pair_map(std::span<const LangLink> links_l_to_en,
                                   std::span<const PageRecord> pages_en,
                                   std::span<const LangLink> links_en_to_l,
                                   std::span<const PageRecord> pages_l, const AlignFilter& filter,
                                   Tally* tally) {
    std::vector<PairId> pairs;
    pairs.reserve(links_l_to_en.size() + links_en_to_l.size());
    if (!links_l_to_en.empty()) {
        TitleIndex en(pages_en, filter, tally);
        resolve_links(links_l_to_en, en, filter, true, pairs, tally);
    }
    if (!links_en_to_l.empty()) {
        TitleIndex l(pages_l, filter, tally);
        resolve_links(links_en_to_l, l, filter, false, pairs, tally);
    }
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    return pairs;
}

// ---------------------------------------------------------------------------

InMemoryArticles::InMemoryArticles(std::vector<RawArticle> articles, Tally* tally) {
    by_id_.reserve(articles.size());
    for (auto& a : articles) {
        PageId id = a.page_id;
        if (!by_id_.try_emplace(id, std::move(a)).second && tally) tally->add("duplicate_article_ids");
    }
}

std::optional<RawArticle> InMemoryArticles::find(PageId id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
}

IndexedArticleStore::IndexedArticleStore(const std::filesystem::path& path, std::string lang, Tally* tally)
    : files_(list_article_files(path)), lang_(std::move(lang)) {
    for (std::uint32_t f = 0; f < files_.size(); ++f) {
        int fd = ::open(files_[f].c_str(), O_RDONLY);
        if (fd < 0) throw InputError("cannot open " + files_[f].string() + ": " + std::strerror(errno));
        fds_.push_back(fd);

        unsigned char magic[2] = {0, 0};
        if (::pread(fd, magic, 2, 0) == 2 && magic[0] == 0x1f && magic[1] == 0x8b) {
            throw InputError("compressed article file cannot be indexed: " + files_[f].string());
        }

        BufferedReader reader(std::make_unique<FileSource>(files_[f]));
        std::string line;
        for (;;) {
            std::uint64_t start = reader.offset();
            if (!reader.getline(line)) break;
            if (trim(line).empty()) continue;
            auto a = parse_article_line(line, lang_);
            if (!a) {
                if (tally) tally->add("article_parse_errors");
                continue;
            }
            Location loc{f, start, static_cast<std::uint32_t>(line.size())};
            if (!index_.try_emplace(a->page_id, loc).second && tally) tally->add("duplicate_article_ids");
        }
    }
}

IndexedArticleStore::~IndexedArticleStore() {
    for (int fd : fds_) ::close(fd);
}

std::optional<RawArticle> IndexedArticleStore::find(PageId id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    const Location& loc = it->second;
    std::string line(loc.length, '\0');
    std::size_t done = 0;
    while (done < line.size()) {
        ssize_t n = ::pread(fds_[loc.file], line.data() + done, line.size() - done,
                            static_cast<off_t>(loc.offset + done));
        if (n <= 0) throw InputError("short read in " + files_[loc.file].string());
        done += static_cast<std::size_t>(n);
    }
    return parse_article_line(line, lang_);
}

// ---------------------------------------------------------------------------

void join_articles(std::span<const PairId> pair_ids, const ArticleLookup& articles_en,
                   const ArticleLookup& articles_l, const std::string& lang_l, const PairSink& sink,
                   Tally* tally) {
    std::vector<PairId> ordered(pair_ids.begin(), pair_ids.end());
    std::sort(ordered.begin(), ordered.end());
    ordered.erase(std::unique(ordered.begin(), ordered.end()), ordered.end());

    constexpr std::size_t kBatch = 4096;
    std::vector<std::optional<ArticlePair>> slots;
    std::vector<unsigned char> blank_title;
    for (std::size_t base = 0; base < ordered.size(); base += kBatch) {
        const std::size_t count = std::min(kBatch, ordered.size() - base);
        slots.assign(count, std::nullopt);
        blank_title.assign(count, 0);
        const auto n = static_cast<std::int64_t>(count);
#pragma omp parallel for schedule(dynamic, 64)
        for (std::int64_t k = 0; k < n; ++k) {
            const PairId& id = ordered[base + static_cast<std::size_t>(k)];
            auto en = articles_en.find(id.id_en);
            if (!en || trim(en->text).empty()) continue;
            auto l = articles_l.find(id.id_l);
            if (!l || trim(l->text).empty()) continue;
            if (trim(en->title).empty() || trim(l->title).empty()) {
                blank_title[static_cast<std::size_t>(k)] = 1;
                continue;
            }
            ArticlePair p;
            p.pair = id;
            p.title_en = std::move(en->title);
            p.title_l = std::move(l->title);
            p.text_en = std::move(en->text);
            p.text_l = std::move(l->text);
            p.lang_l = lang_l;
            slots[static_cast<std::size_t>(k)] = std::move(p);
        }
        for (std::size_t k = 0; k < count; ++k) {
            if (slots[k]) {
                sink(std::move(*slots[k]));
            } else if (tally) {
                tally->add(blank_title[k] ? "pairs_blank_title" : "pairs_missing_text");
            }
        }
    }
}

std::vector<ArticlePair> join_articles(std::span<const PairId> pair_ids, const ArticleLookup& articles_en,
                                       const ArticleLookup& articles_l, const std::string& lang_l,
                                       Tally* tally) {
    std::vector<ArticlePair> out;
    join_articles(pair_ids, articles_en, articles_l, lang_l,
                  [&out](ArticlePair&& p) { out.push_back(std::move(p)); }, tally);
    return out;
}

void write_pair_map(const std::filesystem::path& path, std::span<const PairId> pairs) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& p : pairs) out << p.id_l << '\t' << p.id_en << '\n';
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<PairId> read_pair_map(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open pair map " + path.string());
    std::vector<PairId> pairs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto tab = line.find('\t');
        PairId p;
        bool ok = tab != std::string::npos;
        if (ok) {
            auto r1 = std::from_chars(line.data(), line.data() + tab, p.id_l);
            auto r2 = std::from_chars(line.data() + tab + 1, line.data() + line.size(), p.id_en);
            ok = r1.ec == std::errc() && r1.ptr == line.data() + tab && r2.ec == std::errc() &&
                 r2.ptr == line.data() + line.size();
        }
        if (!ok) throw InputError(path.string() + ":" + std::to_string(lineno) + ": malformed pair line");
        pairs.push_back(p);
    }
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    return pairs;
}

}  // namespace xlpack
