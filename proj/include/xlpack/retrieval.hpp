#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "xlpack/alignment.hpp"
#include "xlpack/dump_ingest.hpp"
#include "xlpack/embedding.hpp"
#include "xlpack/vector_index.hpp"

namespace xlpack {

struct KeywordSet {
    std::string title_keyword;
    std::vector<std::string> content_keywords;  // most frequent first, at most max_keywords

    bool empty() const { return title_keyword.empty() && content_keywords.empty(); }
};

struct RetrievalConfig {
    double threshold = 0.75;
    std::size_t max_results = 3;
    std::size_t candidate_pool_k = 100;
    std::size_t max_keywords = 10;
};

struct RetrievalResult {
    std::string doc_id;
    double s_title = 0.0;
    double s_full = 0.0;
    double s_final = 0.0;
};

/// L-language title -> English title, through the L page table and the
/// L->en langlinks. Several English targets for one page keep the smallest.
using TitleMap = std::unordered_map<std::string, std::string>;
TitleMap build_title_map(std::span<const LangLink> links_l_to_en, std::span<const PageRecord> pages_l);

/// Targets of [[Target]] and [[Target|anchor]] links in document order,
/// with fragments dropped and underscores turned into spaces.
std::vector<std::string> extract_link_targets(std::string_view text);

/// Title keyword is the English mapping of the article title (raw title when
/// unmapped, tallied as `unmapped_titles`). Content keywords are mapped link
/// targets ranked by frequency, ties by first occurrence.
KeywordSet extract_keywords(const RawArticle& article_l, const TitleMap& title_map, std::size_t max_keywords = 10,
                            Tally* tally = nullptr);

/// Query text of the second step: title keyword followed by content keywords.
std::string full_query_text(const KeywordSet& ks);

/// (title query, full query). A set without a title keyword uses the full
/// query for both steps.
std::pair<std::string, std::string> query_texts(const KeywordSet& ks);

/// Scores the union of both queries' top candidate_pool_k hits against both
/// queries, averages, thresholds, sorts and caps.
std::vector<RetrievalResult> rescore_candidates(const EmbeddingVector& q_title, const EmbeddingVector& q_full,
                                                const FlatIndex& index, const RetrievalConfig& cfg);

std::vector<RetrievalResult> two_step_retrieve(const KeywordSet& ks, const FlatIndex& index,
                                               EmbeddingProvider& provider, const RetrievalConfig& cfg,
                                               Tally* tally = nullptr);

struct CorpusDoc {
    std::string id;
    std::string text;
};

/// Line-delimited {"id": string, "text": string}; bad lines tallied under
/// `corpus_parse_errors`.
std::vector<CorpusDoc> read_corpus(const std::filesystem::path& path, Tally* tally = nullptr);

/// Stable numeric stand-in for a web document id in PairId::id_en.
PageId pseudo_page_id(std::string_view doc_id);

/// One pseudo pair per retained result, English side from the web corpus.
/// Missing or empty documents are skipped (`retrieved_docs_missing_text`).
std::vector<ArticlePair> build_augmented_pairs(const RawArticle& article_l,
                                               std::span<const RetrievalResult> results,
                                               const std::unordered_map<std::string, std::string>& corpus_texts,
                                               Tally* tally = nullptr);

}  // namespace xlpack
