#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "xlpack/common.hpp"

namespace xlpack {

enum class TokenizerKind { whitespace, byte, external };

std::string_view to_string(TokenizerKind kind);
std::optional<TokenizerKind> parse_tokenizer_kind(std::string_view name);

struct TokenizerSpec {
    TokenizerKind kind = TokenizerKind::whitespace;
    std::optional<std::filesystem::path> vocab_source;
    std::string split_token_text = "[SPLIT]";
    TokenId split_token_id = 0;
};

struct TokenSeq {
    std::vector<TokenId> ids;
    std::size_t source_len_chars = 0;
};

/// Pure, deterministic text -> token id mapping with one reserved delimiter id.
///
/// Every literal occurrence of the split text encodes to exactly the split id,
/// and no other text ever produces it. `count(s) == encode(s).ids.size()` for
/// all inputs.
class Tokenizer {
public:
    explicit Tokenizer(TokenizerSpec spec) : spec_(std::move(spec)) {}
    virtual ~Tokenizer() = default;

    TokenSeq encode(std::string_view text) const;
    void encode_append(std::string_view text, std::vector<TokenId>& out) const;
    std::size_t count(std::string_view text) const;

    /// Byte length of the longest prefix of `text` that ends on a token
    /// boundary and holds at most `max_tokens` tokens.
    std::size_t prefix_bytes(std::string_view text, std::size_t max_tokens) const;

    /// Runs the id-assignment side effects of encoding without producing ids.
    /// Only the whitespace tokenizer has any; calling it over the corpus in a
    /// fixed order before parallel encoding makes ids order-independent.
    virtual void warm_up(std::string_view text) const { (void)text; }

    TokenId split_id() const { return spec_.split_token_id; }
    const std::string& split_text() const { return spec_.split_token_text; }
    TokenizerKind kind() const { return spec_.kind; }
    /// Stable identity string recorded in manifests.
    virtual std::string identity() const { return std::string(to_string(spec_.kind)); }

protected:
    /// Encodes text that contains no split literal. `ends`, when given,
    /// receives the end offset (relative to `piece`) of every token.
    virtual void encode_piece(std::string_view piece, std::vector<TokenId>& ids,
                              std::vector<std::size_t>* ends) const = 0;
    virtual std::size_t count_piece(std::string_view piece) const;

    template <typename OnPiece, typename OnSplit>
    void for_each_piece(std::string_view text, OnPiece&& on_piece, OnSplit&& on_split) const {
        const std::string& split = spec_.split_token_text;
        std::size_t pos = 0;
        while (!split.empty()) {
            std::size_t hit = text.find(split, pos);
            if (hit == std::string_view::npos) break;
            if (hit > pos) on_piece(text.substr(pos, hit - pos), pos);
            on_split(hit + split.size());
            pos = hit + split.size();
        }
        if (pos < text.size()) on_piece(text.substr(pos), pos);
    }

    TokenizerSpec spec_;
};

/// Builds a tokenizer. Throws InputError naming the file when an external
/// vocabulary cannot be read or parsed.
std::unique_ptr<Tokenizer> make_tokenizer(const TokenizerSpec& spec);

}  // namespace xlpack
