#pragma once

#include <compare>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "xlpack/common.hpp"
#include "xlpack/dump_ingest.hpp"

namespace xlpack {

/// (page id in language L, page id in English).
struct PairId {
    PageId id_l = 0;
    PageId id_en = 0;

    auto operator<=>(const PairId&) const = default;
};

enum class Provenance { wikipedia, retrieved };

struct ArticlePair {
    PairId pair;
    std::string title_en;
    std::string title_l;
    std::string text_en;
    std::string text_l;
    std::string lang_l;
    Provenance provenance = Provenance::wikipedia;
    std::string en_doc_id;  // set for retrieved pairs only
};

/// Which page-table entries count as valid link targets. Defaults are the strict set.
struct AlignFilter {
    bool drop_blank = true;
    bool require_article_namespace = true;
    bool drop_redirects = true;
};

/// Title -> page id lookup over one language's page table.
class TitleIndex {
public:
    TitleIndex(std::span<const PageRecord> pages, const AlignFilter& filter, Tally* tally = nullptr);

    std::optional<PageId> resolve(const std::string& title) const;
    std::size_t size() const { return ids_.size(); }

private:
    std::unordered_map<std::string, PageId> ids_;
};

/// Forward links (L page -> English title) resolved against the English page
/// table, unioned with reverse links (English page -> L title) resolved
/// against the L page table. Returns the deduplicated set in ascending order.
std::vector<PairId> build_pair_map(std::span<const LangLink> links_l_to_en,
                                   std::span<const PageRecord> pages_en,
                                   std::span<const LangLink> links_en_to_l,
                                   std::span<const PageRecord> pages_l,
                                   const AlignFilter& filter = {}, Tally* tally = nullptr);

/// Random access to one language's articles by page id. Implementations are
/// safe for concurrent `find` calls.
class ArticleLookup {
public:
    virtual ~ArticleLookup() = default;
    virtual std::optional<RawArticle> find(PageId id) const = 0;
};

/// Holds a whole article stream in memory. Later duplicates of a page id are
/// ignored and tallied under `duplicate_article_ids`.
class InMemoryArticles final : public ArticleLookup {
public:
    explicit InMemoryArticles(std::vector<RawArticle> articles, Tally* tally = nullptr);
    std::optional<RawArticle> find(PageId id) const override;

private:
    std::unordered_map<PageId, RawArticle> by_id_;
};

/// Byte-offset index over uncompressed line-delimited article files. Only the
/// index lives in memory; article bodies are read on demand.
class IndexedArticleStore final : public ArticleLookup {
public:
    IndexedArticleStore(const std::filesystem::path& path, std::string lang, Tally* tally = nullptr);
    ~IndexedArticleStore() override;
    IndexedArticleStore(const IndexedArticleStore&) = delete;
    IndexedArticleStore& operator=(const IndexedArticleStore&) = delete;

    std::optional<RawArticle> find(PageId id) const override;
    std::size_t size() const { return index_.size(); }

private:
    struct Location {
        std::uint32_t file = 0;
        std::uint64_t offset = 0;
        std::uint32_t length = 0;
    };
    std::vector<std::filesystem::path> files_;
    std::vector<int> fds_;
    std::unordered_map<PageId, Location> index_;
    std::string lang_;
};

using PairSink = std::function<void(ArticlePair&&)>;

/// Emits one ArticlePair per pair id whose two articles both exist with
/// non-empty text, in ascending (id_l, id_en) order. Lookups fan out over
/// OpenMP threads in batches; emission order does not depend on thread count.
void join_articles(std::span<const PairId> pair_ids, const ArticleLookup& articles_en,
                   const ArticleLookup& articles_l, const std::string& lang_l, const PairSink& sink,
                   Tally* tally = nullptr);

std::vector<ArticlePair> join_articles(std::span<const PairId> pair_ids, const ArticleLookup& articles_en,
                                       const ArticleLookup& articles_l, const std::string& lang_l,
                                       Tally* tally = nullptr);

/// `id_l<TAB>id_en` per line, ascending.
void write_pair_map(const std::filesystem::path& path, std::span<const PairId> pairs);
std::vector<PairId> read_pair_map(const std::filesystem::path& path);

}  // namespace xlpack
