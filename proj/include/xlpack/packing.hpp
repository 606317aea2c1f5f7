#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xlpack/alignment.hpp"
#include "xlpack/tokenizer.hpp"

namespace xlpack {

/// Delimiter placed after every segment of a rendered context.
inline constexpr std::string_view kParagraphDelimiter = "\n\n";

enum class Direction { en_first, l_first };
enum class DirectionPolicy { en_first, l_first, mix };
enum class SegmentKind { title, paragraph };
enum class Layout { cross_lingual, monolingual };

std::string_view to_string(Direction d);
std::string_view to_string(DirectionPolicy p);
std::string_view to_string(SegmentKind k);
std::string_view to_string(Layout l);
std::optional<Direction> parse_direction(std::string_view s);
std::optional<DirectionPolicy> parse_direction_policy(std::string_view s);
std::optional<SegmentKind> parse_segment_kind(std::string_view s);
std::optional<Layout> parse_layout(std::string_view s);

/// Relative weights of en_first and l_first under the mix policy.
struct MixRatio {
    std::uint64_t en_first = 1;
    std::uint64_t l_first = 1;
};

struct PackConfig {
    std::size_t n_budget = 4096;
    DirectionPolicy direction_policy = DirectionPolicy::en_first;
    MixRatio mix_ratio;
    std::uint64_t seed = 32;
    bool repeat_titles = true;
    bool truncate_oversize = true;
    Layout layout = Layout::cross_lingual;
};

struct Paragraph {
    std::string text;
    std::size_t tokens = 0;  // count(text + "\n\n")
};

struct ParagraphizedArticle {
    std::string title;
    std::size_t title_tokens = 0;
    std::vector<Paragraph> paragraphs;
    std::string lang;
};

struct Segment {
    std::string lang;
    SegmentKind kind = SegmentKind::paragraph;
    std::string text;
    std::size_t tokens = 0;
    bool truncated = false;

    bool operator==(const Segment&) const = default;
};

struct PackedContext {
    std::vector<Segment> segments;
    std::size_t token_len = 0;  // includes the terminal split token
    Direction direction = Direction::en_first;
    PairId pair;
    std::uint32_t seq_index = 0;
    Provenance provenance = Provenance::wikipedia;

    bool operator==(const PackedContext&) const = default;
};

/// Splits on "\n\n", trims each piece and drops the empty ones.
std::vector<std::string> split_paragraphs(std::string_view text);

ParagraphizedArticle paragraphize(std::string_view title, std::string_view text, std::string_view lang,
                                  const Tokenizer& tokenizer);

/// Packs one bilingual pair into budget-bounded contexts.
///
/// Paragraphs are taken pairwise from the two articles while the pair still
/// fits; once one side runs out, the other continues alone. A context is
/// closed when nothing more fits, and a new one picks up at the cursors.
/// When not even one paragraph fits a fresh context, the next paragraph is
/// either cut at a token boundary (`truncate_oversize`) or the whole pair is
/// dropped. Tallies: `truncated_paragraphs`, `oversize_pairs_skipped`.
std::vector<PackedContext> pack_pair(const ArticlePair& pair, const Tokenizer& tokenizer, const PackConfig& cfg,
                                     Direction direction, Tally* tally = nullptr);

/// Each article packed on its own with the same budget rules (the
/// no-concatenation baseline layout). English article first.
std::vector<PackedContext> pack_monolingual(const ArticlePair& pair, const Tokenizer& tokenizer,
                                            const PackConfig& cfg, Tally* tally = nullptr);

/// Direction for one pair; under `mix` a coin keyed by (seed, id_l, id_en).
Direction choose_direction(const PackConfig& cfg, const PairId& pair);

/// Segments joined by "\n\n" followed by the split text.
std::string render(const PackedContext& ctx, const Tokenizer& tokenizer);

/// Token ids of the rendered context; size equals `ctx.token_len`.
std::vector<TokenId> context_ids(const PackedContext& ctx, const Tokenizer& tokenizer);

using ContextSink = std::function<void(PackedContext&&)>;

/// Packs a batch of pairs with OpenMP; contexts reach `sink` in pair order,
/// then seq_index order, whatever the thread count.
void pack_corpus(std::span<const ArticlePair> pairs, const Tokenizer& tokenizer, const PackConfig& cfg,
                 const ContextSink& sink, Tally* tally = nullptr);

/// Single-threaded reference for pack_corpus.
void pack_corpus_serial(std::span<const ArticlePair> pairs, const Tokenizer& tokenizer, const PackConfig& cfg,
                        const ContextSink& sink, Tally* tally = nullptr);

}  // namespace xlpack
