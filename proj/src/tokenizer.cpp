#include "xlpack/tokenizer.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <mutex>
#include <shared_mutex>
#include <unordered_map>

namespace xlpack {

std::string_view to_string(TokenizerKind kind) {
    switch (kind) {
        case TokenizerKind::whitespace: return "whitespace";
        case TokenizerKind::byte: return "byte";
        case TokenizerKind::external: return "external";
    }
    return "unknown";
}

std::optional<TokenizerKind> parse_tokenizer_kind(std::string_view name) {
    if (name == "whitespace") return TokenizerKind::whitespace;
    if (name == "byte") return TokenizerKind::byte;
    if (name == "external") return TokenizerKind::external;
    return std::nullopt;
}

TokenSeq Tokenizer::encode(std::string_view text) const {
    TokenSeq seq;
    seq.source_len_chars = text.size();
    encode_append(text, seq.ids);
    return seq;
}

void Tokenizer::encode_append(std::string_view text, std::vector<TokenId>& out) const {
    for_each_piece(
        text, [&](std::string_view piece, std::size_t) { encode_piece(piece, out, nullptr); },
        [&](std::size_t) { out.push_back(spec_.split_token_id); });
}

std::size_t Tokenizer::count(std::string_view text) const {
    std::size_t n = 0;
    for_each_piece(
        text, [&](std::string_view piece, std::size_t) { n += count_piece(piece); },
        [&](std::size_t) { ++n; });
    return n;
}

std::size_t Tokenizer::count_piece(std::string_view piece) const {
    std::vector<TokenId> ids;
    encode_piece(piece, ids, nullptr);
    return ids.size();
}

std::size_t Tokenizer::prefix_bytes(std::string_view text, std::size_t max_tokens) const {
    std::size_t used = 0;
    std::size_t boundary = 0;
    bool full = false;
    std::vector<TokenId> ids;
    std::vector<std::size_t> ends;
    for_each_piece(
        text,
        [&](std::string_view piece, std::size_t offset) {
            if (full) return;
            ids.clear();
            ends.clear();
            encode_piece(piece, ids, &ends);
            for (std::size_t e : ends) {
                if (used == max_tokens) {
                    full = true;
                    return;
                }
                ++used;
                boundary = offset + e;
            }
        },
        [&](std::size_t end) {
            if (full) return;
            if (used == max_tokens) {
                full = true;
                return;
            }
            ++used;
            boundary = end;
        });
    return full ? boundary : text.size();
}

namespace {

struct StringHash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
};

template <typename F>
void for_each_word(std::string_view s, F&& f) {
    std::size_t i = 0;
    const std::size_t n = s.size();
    while (i < n) {
        while (i < n && is_space(s[i])) ++i;
        if (i == n) break;
        std::size_t start = i;
        while (i < n && !is_space(s[i])) ++i;
        f(s.substr(start, i - start), i);
    }
}

std::size_t count_words(std::string_view s) {
    std::size_t n = 0;
    bool in_word = false;
    for (char c : s) {
        bool sp = is_space(c);
        n += (!sp && !in_word) ? 1 : 0;
        in_word = !sp;
    }
    return n;
}

// Maximal non-whitespace runs; ids assigned in order of first occurrence.
class WhitespaceTokenizer final : public Tokenizer {
public:
    using Tokenizer::Tokenizer;

    void warm_up(std::string_view text) const override {
        std::unique_lock lock(mutex_);
        for_each_piece(
            text,
            [&](std::string_view piece, std::size_t) {
                for_each_word(piece, [&](std::string_view w, std::size_t) { intern_locked(w); });
            },
            [](std::size_t) {});
    }

protected:
    void encode_piece(std::string_view piece, std::vector<TokenId>& ids,
                      std::vector<std::size_t>* ends) const override {
        const std::size_t first = ids.size();
        bool missing = false;
        {
            std::shared_lock lock(mutex_);
            for_each_word(piece, [&](std::string_view w, std::size_t end) {
                auto it = vocab_.find(w);
                if (it == vocab_.end()) {
                    missing = true;
                    ids.push_back(spec_.split_token_id);  // placeholder
                } else {
                    ids.push_back(it->second);
                }
                if (ends) ends->push_back(end);
            });
        }
        if (!missing) return;
        std::unique_lock lock(mutex_);
        std::size_t k = first;
        for_each_word(piece, [&](std::string_view w, std::size_t) { ids[k++] = intern_locked(w); });
    }

    std::size_t count_piece(std::string_view piece) const override { return count_words(piece); }

private:
    TokenId intern_locked(std::string_view w) const {
        auto it = vocab_.find(w);
        if (it != vocab_.end()) return it->second;
        if (next_id_ == spec_.split_token_id) ++next_id_;
        TokenId id = next_id_++;
        vocab_.emplace(std::string(w), id);
        return id;
    }

    mutable std::shared_mutex mutex_;
    mutable std::unordered_map<std::string, TokenId, StringHash, std::equal_to<>> vocab_;
    mutable TokenId next_id_ = 1;
};

// Byte b -> id b + 1.
class ByteTokenizer final : public Tokenizer {
public:
    explicit ByteTokenizer(TokenizerSpec spec) : Tokenizer(std::move(spec)) {
        if (spec_.split_token_id >= 1 && spec_.split_token_id <= 256) {
            throw std::invalid_argument("byte tokenizer reserves ids 1..256; split id " +
                                        std::to_string(spec_.split_token_id) + " collides");
        }
    }

protected:
    void encode_piece(std::string_view piece, std::vector<TokenId>& ids,
                      std::vector<std::size_t>* ends) const override {
        for (std::size_t i = 0; i < piece.size(); ++i) {
            ids.push_back(static_cast<TokenId>(static_cast<unsigned char>(piece[i])) + 1);
            if (ends) ends->push_back(i + 1);
        }
    }
    std::size_t count_piece(std::string_view piece) const override { return piece.size(); }
};

std::size_t utf8_len(unsigned char lead) {
    if (lead < 0x80) return 1;
    if ((lead >> 5) == 0x6) return 2;
    if ((lead >> 4) == 0xe) return 3;
    if ((lead >> 3) == 0x1e) return 4;
    return 1;
}

// Vocabulary-driven subword tokenizer. Words are whitespace runs. With a
// merges section, each word is byte-pair merged starting from UTF-8
// characters; otherwise the longest vocabulary prefix is taken greedily.
class ExternalTokenizer final : public Tokenizer {
public:
    explicit ExternalTokenizer(TokenizerSpec spec) : Tokenizer(std::move(spec)) { load(); }

    std::string identity() const override { return "external:" + digest_; }

protected:
    void encode_piece(std::string_view piece, std::vector<TokenId>& ids,
                      std::vector<std::size_t>* ends) const override {
        for_each_word(piece, [&](std::string_view w, std::size_t end) {
            const std::size_t start = end - w.size();
            if (merges_.empty()) {
                encode_greedy(w, start, ids, ends);
            } else {
                encode_bpe(w, start, ids, ends);
            }
        });
    }

private:
    void load() {
        const auto& path = *spec_.vocab_source;
        std::ifstream in(path, std::ios::binary);
        if (!in) throw InputError("cannot read vocabulary file " + path.string());
        std::string line;
        std::size_t lineno = 0;
        bool in_merges = false;
        bool uses_zero = false;
        std::uint64_t h = 0xcbf29ce484222325ULL;
        std::vector<std::pair<std::string, TokenId>> entries;
        while (std::getline(in, line)) {
            ++lineno;
            h = mix64(h ^ fnv1a64(line));
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            if (line == "#merges") {
                in_merges = true;
                continue;
            }
            auto bad = [&](const char* why) {
                return InputError(path.string() + ":" + std::to_string(lineno) + ": " + why);
            };
            if (in_merges) {
                auto sp = line.find(' ');
                if (sp == std::string::npos || sp == 0 || sp + 1 == line.size())
                    throw bad("merge line must be '<left> <right>'");
                auto rank = static_cast<std::uint32_t>(merges_.size());
                merges_.emplace(line.substr(0, sp) + '\x01' + line.substr(sp + 1), rank);
                continue;
            }
            auto tab = line.rfind('\t');
            if (tab == std::string::npos || tab == 0) throw bad("vocabulary line must be '<token>\\t<id>'");
            TokenId id = 0;
            auto [ptr, ec] = std::from_chars(line.data() + tab + 1, line.data() + line.size(), id);
            if (ec != std::errc() || ptr != line.data() + line.size()) throw bad("invalid token id");
            uses_zero |= id == spec_.split_token_id;
            entries.emplace_back(line.substr(0, tab), id);
        }
        if (entries.empty()) throw InputError("vocabulary file " + path.string() + " has no entries");
        TokenId max_id = 0;
        for (auto& [tok, id] : entries) {
            if (uses_zero && id >= spec_.split_token_id) ++id;
            max_id = std::max(max_id, id);
            max_len_ = std::max(max_len_, tok.size());
            vocab_.emplace(std::move(tok), id);
        }
        unk_id_ = max_id + 1;
        if (unk_id_ == spec_.split_token_id) ++unk_id_;
        for (const char* unk : {"[UNK]", "<unk>"}) {
            if (auto it = vocab_.find(std::string_view(unk)); it != vocab_.end()) {
                unk_id_ = it->second;
                break;
            }
        }
        char buf[17];
        auto r = std::to_chars(buf, buf + 16, h, 16);
        digest_.assign(buf, r.ptr);
    }

    TokenId lookup(std::string_view tok) const {
        auto it = vocab_.find(tok);
        return it == vocab_.end() ? unk_id_ : it->second;
    }

    void encode_greedy(std::string_view w, std::size_t start, std::vector<TokenId>& ids,
                       std::vector<std::size_t>* ends) const {
        std::size_t i = 0;
        while (i < w.size()) {
            std::size_t best = 0;
            TokenId best_id = unk_id_;
            for (std::size_t len = std::min(max_len_, w.size() - i); len > 0; --len) {
                auto it = vocab_.find(w.substr(i, len));
                if (it != vocab_.end()) {
                    best = len;
                    best_id = it->second;
                    break;
                }
            }
            if (best == 0) best = std::min(utf8_len(static_cast<unsigned char>(w[i])), w.size() - i);
            ids.push_back(best_id);
            i += best;
            if (ends) ends->push_back(start + i);
        }
    }

    void encode_bpe(std::string_view w, std::size_t start, std::vector<TokenId>& ids,
                    std::vector<std::size_t>* ends) const {
        std::vector<std::string_view> sym;
        for (std::size_t i = 0; i < w.size();) {
            std::size_t len = std::min(utf8_len(static_cast<unsigned char>(w[i])), w.size() - i);
            sym.push_back(w.substr(i, len));
            i += len;
        }
        std::string key;
        while (sym.size() > 1) {
            std::uint32_t best_rank = UINT32_MAX;
            std::size_t best_at = 0;
            for (std::size_t k = 0; k + 1 < sym.size(); ++k) {
                key.assign(sym[k]);
                key.push_back('\x01');
                key.append(sym[k + 1]);
                auto it = merges_.find(key);
                if (it != merges_.end() && it->second < best_rank) {
                    best_rank = it->second;
                    best_at = k;
                }
            }
            if (best_rank == UINT32_MAX) break;
            // Symbols are contiguous views into `w`, so a merge is a widening.
            sym[best_at] = std::string_view(sym[best_at].data(), sym[best_at].size() + sym[best_at + 1].size());
            sym.erase(sym.begin() + static_cast<std::ptrdiff_t>(best_at) + 1);
        }
        for (auto s : sym) {
            ids.push_back(lookup(s));
            if (ends) ends->push_back(start + static_cast<std::size_t>(s.data() + s.size() - w.data()));
        }
    }

    std::unordered_map<std::string, TokenId, StringHash, std::equal_to<>> vocab_;
    std::unordered_map<std::string, std::uint32_t> merges_;
    std::size_t max_len_ = 1;
    TokenId unk_id_ = 0;
    std::string digest_;
};

}  // namespace

std::unique_ptr<Tokenizer> make_tokenizer(const TokenizerSpec& spec) {
    switch (spec.kind) {
        case TokenizerKind::whitespace: return std::make_unique<WhitespaceTokenizer>(spec);
        case TokenizerKind::byte: return std::make_unique<ByteTokenizer>(spec);
        case TokenizerKind::external:
            if (!spec.vocab_source) throw InputError("external tokenizer requires a vocab_source");
            return std::make_unique<ExternalTokenizer>(spec);
    }
    throw std::invalid_argument("unknown tokenizer kind");
}

}  // namespace xlpack
