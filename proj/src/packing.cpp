#include "xlpack/packing.hpp"

#include <omp.h>

#include <algorithm>

namespace xlpack {

std::string_view to_string(Direction d) { return d == Direction::en_first ? "en_first" : "l_first"; }

std::string_view to_string(DirectionPolicy p) {
    switch (p) {
        case DirectionPolicy::en_first: return "en_first";
        case DirectionPolicy::l_first: return "l_first";
        case DirectionPolicy::mix: return "mix";
    }
    return "unknown";
}

std::string_view to_string(SegmentKind k) { return k == SegmentKind::title ? "title" : "paragraph"; }

std::string_view to_string(Layout l) { return l == Layout::cross_lingual ? "cross_lingual" : "monolingual"; }

std::optional<Direction> parse_direction(std::string_view s) {
    if (s == "en_first") return Direction::en_first;
    if (s == "l_first") return Direction::l_first;
    return std::nullopt;
}

std::optional<DirectionPolicy> parse_direction_policy(std::string_view s) {
    if (s == "en_first") return DirectionPolicy::en_first;
    if (s == "l_first") return DirectionPolicy::l_first;
    if (s == "mix") return DirectionPolicy::mix;
    return std::nullopt;
}

std::optional<SegmentKind> parse_segment_kind(std::string_view s) {
    if (s == "title") return SegmentKind::title;
    if (s == "paragraph") return SegmentKind::paragraph;
    return std::nullopt;
}

std::optional<Layout> parse_layout(std::string_view s) {
    if (s == "cross_lingual") return Layout::cross_lingual;
    if (s == "monolingual") return Layout::monolingual;
    return std::nullopt;
}

std::vector<std::string> split_paragraphs(std::string_view text) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    for (;;) {
        std::size_t hit = text.find(kParagraphDelimiter, pos);
        std::string_view piece =
            trim(text.substr(pos, hit == std::string_view::npos ? std::string_view::npos : hit - pos));
        if (!piece.empty()) out.emplace_back(piece);
        if (hit == std::string_view::npos) break;
        pos = hit + kParagraphDelimiter.size();
    }
    return out;
}

namespace {

std::size_t segment_cost(const Tokenizer& tok, std::string_view text) {
    std::string s;
    s.reserve(text.size() + kParagraphDelimiter.size());
    s.append(text);
    s.append(kParagraphDelimiter);
    return tok.count(s);
}

}  // namespace

ParagraphizedArticle paragraphize(std::string_view title, std::string_view text, std::string_view lang,
                                  const Tokenizer& tokenizer) {
    ParagraphizedArticle a;
    a.title = std::string(trim(title));
    a.title_tokens = segment_cost(tokenizer, a.title);
    a.lang = std::string(lang);
    // A literal split marker inside article text would encode to the split id
    // and break window boundaries downstream.
    std::string cleaned;
    const std::string& marker = tokenizer.split_text();
    if (!marker.empty() && text.find(marker) != std::string_view::npos) {
        cleaned.assign(text);
        for (std::size_t at; (at = cleaned.find(marker)) != std::string::npos;) cleaned.replace(at, marker.size(), " ");
        text = cleaned;
    }
    if (!marker.empty() && a.title.find(marker) != std::string::npos) {
        for (std::size_t at; (at = a.title.find(marker)) != std::string::npos;) a.title.replace(at, marker.size(), " ");
        a.title = std::string(trim(a.title));
        a.title_tokens = segment_cost(tokenizer, a.title);
    }
    for (auto& p : split_paragraphs(text)) {
        std::size_t t = segment_cost(tokenizer, p);
        a.paragraphs.push_back(Paragraph{std::move(p), t});
    }
    return a;
}

namespace {

// Longest token-boundary prefix of `text` whose segment cost fits `budget`.
std::optional<Paragraph> truncate_to(const Tokenizer& tok, const std::string& text, std::size_t budget) {
    const std::size_t delim = tok.count(kParagraphDelimiter);
    if (budget <= delim) return std::nullopt;
    std::size_t keep = budget - delim;
    while (keep > 0) {
        const std::size_t cut = tok.prefix_bytes(text, keep);
        // Never split a UTF-8 sequence; byte-level tokenizers would allow it.
        if (cut < text.size() && (static_cast<unsigned char>(text[cut]) & 0xC0) == 0x80) {
            --keep;
            continue;
        }
        std::string prefix(trim(std::string_view(text).substr(0, cut)));
        if (!prefix.empty()) {
            std::size_t cost = segment_cost(tok, prefix);
            if (cost <= budget) return Paragraph{std::move(prefix), cost};
        }
        --keep;
    }
    return std::nullopt;
}

// Packs `a` (leading block) and optionally `b` (trailing block).
std::vector<PackedContext> pack_sides(const ParagraphizedArticle& a, const ParagraphizedArticle* b,
                                      const PackConfig& cfg, const Tokenizer& tok, Tally* tally) {
    std::vector<PackedContext> out;
    const auto& pa = a.paragraphs;
    static const std::vector<Paragraph> kNone;
    const auto& pb = b ? b->paragraphs : kNone;
    const std::size_t na = pa.size();
    const std::size_t nb = pb.size();
    const std::size_t n = cfg.n_budget;
    const std::size_t titles_cost = a.title_tokens + (b ? b->title_tokens : 0);

    std::size_t i = 0;
    std::size_t j = 0;
    std::vector<Paragraph> block_a;
    std::vector<Paragraph> block_b;
    while (i < na || j < nb) {
        const bool with_titles = out.empty() || cfg.repeat_titles;
        std::size_t cost = 1 + (with_titles ? titles_cost : 0);
        block_a.clear();
        block_b.clear();
        bool cut = false;

        while (i < na && j < nb && cost + pa[i].tokens + pb[j].tokens <= n) {
            cost += pa[i].tokens + pb[j].tokens;
            block_a.push_back(pa[i++]);
            block_b.push_back(pb[j++]);
        }
        if (i == na) {
            while (j < nb && cost + pb[j].tokens <= n) {
                cost += pb[j].tokens;
                block_b.push_back(pb[j++]);
            }
        } else if (j == nb) {
            while (i < na && cost + pa[i].tokens <= n) {
                cost += pa[i].tokens;
                block_a.push_back(pa[i++]);
            }
        }

        if (block_a.empty() && block_b.empty()) {
            // Nothing fits pairwise: place the next paragraph by itself.
            const bool take_a = i < na;
            const Paragraph& next = take_a ? pa[i] : pb[j];
            auto& block = take_a ? block_a : block_b;
            if (cost + next.tokens <= n) {
                cost += next.tokens;
                block.push_back(next);
            } else {
                std::optional<Paragraph> head;
                if (cfg.truncate_oversize) head = truncate_to(tok, next.text, n - std::min(n, cost));
                if (!head) {
                    if (tally) tally->add("oversize_pairs_skipped");
                    return {};
                }
                if (tally) tally->add("truncated_paragraphs");
                cost += head->tokens;
                block.push_back(std::move(*head));
                cut = true;
            }
            ++(take_a ? i : j);
        }

        PackedContext ctx;
        ctx.token_len = cost;
        auto emit_block = [&](const ParagraphizedArticle& art, std::vector<Paragraph>& block) {
            if (with_titles) ctx.segments.push_back({art.lang, SegmentKind::title, art.title, art.title_tokens, false});
            for (auto& p : block) ctx.segments.push_back({art.lang, SegmentKind::paragraph, std::move(p.text), p.tokens, false});
        };
        emit_block(a, block_a);
        if (b) emit_block(*b, block_b);
        if (cut) {
            for (auto& s : ctx.segments) {
                if (s.kind == SegmentKind::paragraph) s.truncated = true;
            }
        }
        ctx.seq_index = static_cast<std::uint32_t>(out.size());
        out.push_back(std::move(ctx));
    }
    return out;
}

}  // namespace

std::vector<PackedContext> pack_pair(const ArticlePair& pair, const Tokenizer& tokenizer, const PackConfig& cfg,
                                     Direction direction, Tally* tally) {
    auto en = paragraphize(pair.title_en, pair.text_en, "en", tokenizer);
    auto l = paragraphize(pair.title_l, pair.text_l, pair.lang_l, tokenizer);
    if (en.paragraphs.empty() || l.paragraphs.empty()) {
        if (tally) tally->add("pairs_without_paragraphs");
        return {};
    }
    const bool en_leads = direction == Direction::en_first;
    auto contexts = pack_sides(en_leads ? en : l, en_leads ? &l : &en, cfg, tokenizer, tally);
    for (auto& c : contexts) {
        c.direction = direction;
        c.pair = pair.pair;
        c.provenance = pair.provenance;
    }
    return contexts;
}

std::vector<PackedContext> pack_monolingual(const ArticlePair& pair, const Tokenizer& tokenizer,
                                            const PackConfig& cfg, Tally* tally) {
    std::vector<PackedContext> out;
    auto en = paragraphize(pair.title_en, pair.text_en, "en", tokenizer);
    auto l = paragraphize(pair.title_l, pair.text_l, pair.lang_l, tokenizer);
    for (const auto* art : {&en, &l}) {
        if (art->paragraphs.empty()) continue;
        auto part = pack_sides(*art, nullptr, cfg, tokenizer, tally);
        for (auto& c : part) {
            c.direction = art == &en ? Direction::en_first : Direction::l_first;
            c.pair = pair.pair;
            c.provenance = pair.provenance;
            c.seq_index = static_cast<std::uint32_t>(out.size());
            out.push_back(std::move(c));
        }
    }
    return out;
}

Direction choose_direction(const PackConfig& cfg, const PairId& pair) {
    switch (cfg.direction_policy) {
        case DirectionPolicy::en_first: return Direction::en_first;
        case DirectionPolicy::l_first: return Direction::l_first;
        case DirectionPolicy::mix: break;
    }
    const std::uint64_t h = mix64(cfg.seed ^ mix64(pair.id_l ^ mix64(pair.id_en)));
    const std::uint64_t total = cfg.mix_ratio.en_first + cfg.mix_ratio.l_first;
    // Multiply-shift maps h uniformly onto [0, total).
    const auto draw = static_cast<std::uint64_t>((static_cast<unsigned __int128>(h) * total) >> 64);
    return draw < cfg.mix_ratio.en_first ? Direction::en_first : Direction::l_first;
}

std::string render(const PackedContext& ctx, const Tokenizer& tokenizer) {
    std::string out;
    for (const auto& s : ctx.segments) {
        out += s.text;
        out += kParagraphDelimiter;
    }
    out += tokenizer.split_text();
    return out;
}

std::vector<TokenId> context_ids(const PackedContext& ctx, const Tokenizer& tokenizer) {
    std::vector<TokenId> ids;
    ids.reserve(ctx.token_len);
    std::string buf;
    for (const auto& s : ctx.segments) {
        buf.assign(s.text);
        buf.append(kParagraphDelimiter);
        tokenizer.encode_append(buf, ids);
    }
    ids.push_back(tokenizer.split_id());
    return ids;
}

namespace {

std::vector<PackedContext> pack_one(const ArticlePair& pair, const Tokenizer& tokenizer, const PackConfig& cfg,
                                    Tally* tally) {
    if (cfg.layout == Layout::monolingual) return pack_monolingual(pair, tokenizer, cfg, tally);
    return pack_pair(pair, tokenizer, cfg, choose_direction(cfg, pair.pair), tally);
}

}  // namespace

void pack_corpus_serial(std::span<const ArticlePair> pairs, const Tokenizer& tokenizer, const PackConfig& cfg,
                        const ContextSink& sink, Tally* tally) {
    for (const auto& pair : pairs) {
        for (auto& ctx : pack_one(pair, tokenizer, cfg, tally)) sink(std::move(ctx));
    }
}

void pack_corpus(std::span<const ArticlePair> pairs, const Tokenizer& tokenizer, const PackConfig& cfg,
                 const ContextSink& sink, Tally* tally) {
    std::vector<std::vector<PackedContext>> results(pairs.size());
    std::vector<Tally> tallies(static_cast<std::size_t>(omp_get_max_threads()));
    const auto n = static_cast<std::int64_t>(pairs.size());
#pragma omp parallel
    {
        Tally& local = tallies[static_cast<std::size_t>(omp_get_thread_num())];
#pragma omp for schedule(dynamic, 16)
        for (std::int64_t k = 0; k < n; ++k) {
            const auto idx = static_cast<std::size_t>(k);
            results[idx] = pack_one(pairs[idx], tokenizer, cfg, &local);
        }
    }
    if (tally) {
        for (const auto& t : tallies) tally->merge(t);
    }
    for (auto& group : results) {
        for (auto& ctx : group) sink(std::move(ctx));
    }
}

}  // namespace xlpack
