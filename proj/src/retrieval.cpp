#include "xlpack/retrieval.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_set>

#include "json.hpp"

namespace xlpack {

TitleMap build_title_map(std::span<const LangLink> links_l_to_en, std::span<const PageRecord> pages_l) {
    std::unordered_map<PageId, const std::string*> titles;
    for (const auto& p : pages_l) {
        if (p.namespace_id == 0) titles.emplace(p.page_id, &p.title);
    }
    TitleMap map;
    for (const auto& link : links_l_to_en) {
        if (trim(link.target_title).empty()) continue;
        auto it = titles.find(link.from_page_id);
        if (it == titles.end()) continue;
        auto [slot, inserted] = map.try_emplace(*it->second, link.target_title);
        if (!inserted && link.target_title < slot->second) slot->second = link.target_title;
    }
    return map;
}

std::vector<std::string> extract_link_targets(std::string_view text) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while ((pos = text.find("[[", pos)) != std::string_view::npos) {
        const std::size_t start = pos + 2;
        const std::size_t close = text.find("]]", start);
        if (close == std::string_view::npos) break;
        std::string_view inner = text.substr(start, close - start);
        // A nested "[[" means this opener was unbalanced; restart there.
        if (auto nested = inner.find("[["); nested != std::string_view::npos) {
            pos = start + nested;
            continue;
        }
        inner = inner.substr(0, inner.find('|'));
        inner = inner.substr(0, inner.find('#'));
        std::string target = normalize_title(trim(inner));
        target = std::string(trim(target));
        if (!target.empty()) {
            target[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(target[0])));
            out.push_back(std::move(target));
        }
        pos = close + 2;
    }
    return out;
}

KeywordSet extract_keywords(const RawArticle& article_l, const TitleMap& title_map, std::size_t max_keywords,
                            Tally* tally) {
    KeywordSet ks;
    const std::string title(trim(article_l.title));
    if (auto it = title_map.find(title); it != title_map.end()) {
        ks.title_keyword = it->second;
    } else {
        ks.title_keyword = title;
        if (tally && !title.empty()) tally->add("unmapped_titles");
    }

    struct Count {
        std::string keyword;
        std::size_t freq = 0;
        std::size_t first = 0;
    };
    std::vector<Count> counts;
    std::unordered_map<std::string, std::size_t> slot;
    std::size_t order = 0;
    for (const auto& target : extract_link_targets(article_l.text)) {
        auto it = title_map.find(target);
        if (it == title_map.end()) continue;
        auto [s, inserted] = slot.try_emplace(it->second, counts.size());
        if (inserted) counts.push_back({it->second, 0, order});
        ++counts[s->second].freq;
        ++order;
    }
    std::stable_sort(counts.begin(), counts.end(), [](const Count& a, const Count& b) {
        return a.freq > b.freq || (a.freq == b.freq && a.first < b.first);
    });
    for (std::size_t i = 0; i < counts.size() && i < max_keywords; ++i) {
        ks.content_keywords.push_back(std::move(counts[i].keyword));
    }
    return ks;
}

std::string full_query_text(const KeywordSet& ks) {
    std::string q = ks.title_keyword;
    for (const auto& k : ks.content_keywords) {
        if (!q.empty()) q += ' ';
        q += k;
    }
    return q;
}

std::pair<std::string, std::string> query_texts(const KeywordSet& ks) {
    std::string full = full_query_text(ks);
    std::string title = ks.title_keyword.empty() ? full : ks.title_keyword;
    return {std::move(title), std::move(full)};
}

std::vector<RetrievalResult> rescore_candidates(const EmbeddingVector& q_title, const EmbeddingVector& q_full,
                                                const FlatIndex& index, const RetrievalConfig& cfg) {
    std::vector<std::string> pool;
    for (const auto* q : {&q_title, &q_full}) {
        for (auto& hit : index.search(*q, cfg.candidate_pool_k)) pool.push_back(std::move(hit.doc_id));
    }
    std::sort(pool.begin(), pool.end());
    pool.erase(std::unique(pool.begin(), pool.end()), pool.end());

    std::vector<RetrievalResult> out;
    for (auto& id : pool) {
        RetrievalResult r;
        r.s_title = *index.score(id, q_title);
        r.s_full = *index.score(id, q_full);
        r.s_final = (r.s_title + r.s_full) / 2.0;
        if (r.s_final < cfg.threshold) continue;
        r.doc_id = std::move(id);
        out.push_back(std::move(r));
    }
    std::sort(out.begin(), out.end(), [](const RetrievalResult& a, const RetrievalResult& b) {
        return a.s_final > b.s_final || (a.s_final == b.s_final && a.doc_id < b.doc_id);
    });
    if (out.size() > cfg.max_results) out.resize(cfg.max_results);
    return out;
}

std::vector<RetrievalResult> two_step_retrieve(const KeywordSet& ks, const FlatIndex& index,
                                               EmbeddingProvider& provider, const RetrievalConfig& cfg,
                                               Tally* tally) {
    if (trim(ks.title_keyword).empty() && ks.content_keywords.empty()) {
        if (tally) tally->add("empty_keyword_sets");
        return {};
    }
    if (index.size() == 0) return {};
    auto [title_q, full_q] = query_texts(ks);
    const std::vector<std::string> queries{std::move(title_q), std::move(full_q)};
    auto vecs = provider.embed(queries);
    return rescore_candidates(vecs.at(0), vecs.at(1), index, cfg);
}

std::vector<CorpusDoc> read_corpus(const std::filesystem::path& path, Tally* tally) {
    std::vector<CorpusDoc> docs;
    for (const auto& file : list_article_files(path)) {
        BufferedReader reader(std::make_unique<FileSource>(file));
        std::string line;
        while (reader.getline(line)) {
            if (trim(line).empty()) continue;
            auto j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.is_object() || !j.contains("id") || !j.contains("text") ||
                !j["text"].is_string() || !(j["id"].is_string() || j["id"].is_number_integer())) {
                if (tally) tally->add("corpus_parse_errors");
                continue;
            }
            CorpusDoc d;
            d.id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
            d.text = j["text"].get<std::string>();
            docs.push_back(std::move(d));
        }
    }
    return docs;
}

PageId pseudo_page_id(std::string_view doc_id) { return fnv1a64(doc_id) >> 1; }

std::vector<ArticlePair> build_augmented_pairs(const RawArticle& article_l,
                                               std::span<const RetrievalResult> results,
                                               const std::unordered_map<std::string, std::string>& corpus_texts,
                                               Tally* tally) {
    std::vector<ArticlePair> out;
    for (const auto& r : results) {
        auto it = corpus_texts.find(r.doc_id);
        if (it == corpus_texts.end() || trim(it->second).empty()) {
            if (tally) tally->add("retrieved_docs_missing_text");
            continue;
        }
        ArticlePair p;
        p.pair = PairId{article_l.page_id, pseudo_page_id(r.doc_id)};
        const std::string& text = it->second;
        const auto nl = text.find('\n');
        std::string_view first = trim(std::string_view(text).substr(0, nl));
        std::string_view rest = nl == std::string::npos ? std::string_view{} : trim(std::string_view(text).substr(nl));
        if (!first.empty() && !rest.empty()) {
            p.title_en = std::string(first);
            p.text_en = std::string(rest);
        } else {
            p.title_en = r.doc_id;
            p.text_en = text;
        }
        p.title_l = article_l.title;
        p.text_l = article_l.text;
        p.lang_l = article_l.lang;
        p.provenance = Provenance::retrieved;
        p.en_doc_id = r.doc_id;
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace xlpack
