#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "xlpack/common.hpp"

namespace xlpack {

enum class SlideKind { optimized, standard };

std::string_view to_string(SlideKind k);
std::optional<SlideKind> parse_slide_kind(std::string_view s);

struct SlidePolicy {
    SlideKind kind = SlideKind::optimized;
    std::size_t n_budget = 4096;
    bool keep_final_partial = true;  // standard only
    bool discard_tails = false;      // optimized only: drop cut contexts instead of deferring them
};

struct WindowShard {
    std::vector<TokenId> ids;
    std::size_t dropped_from_raw_span = 0;
    std::uint64_t first_context = 0;  // index of the context holding ids.front()
    std::uint64_t last_context = 0;   // index of the context holding ids.back()
    std::uint64_t window_index = 0;

    bool operator==(const WindowShard&) const = default;
};

using WindowSink = std::function<void(WindowShard&&)>;

/// Thrown when a context handed to the optimized slider is longer than the
/// window or does not end with the split id.
class ContextViolation : public std::runtime_error {
public:
    ContextViolation(std::uint64_t context_index, const std::string& what)
        : std::runtime_error(what), context_index_(context_index) {}
    std::uint64_t context_index() const { return context_index_; }

private:
    std::uint64_t context_index_;
};

/// Window boundaries follow the split tokens: each raw window [s, s+n) is cut
/// back to its last split token p, and the next window starts at p+1. Tokens
/// between p and s+n are deferred to the next window (or, with
/// `discard_tails`, the context they belong to is dropped).
class OptimizedSlider {
public:
    OptimizedSlider(std::size_t n, TokenId split_id, bool discard_tails = false);

    void push(std::span<const TokenId> context, const WindowSink& sink);
    void finish(const WindowSink& sink);

    std::uint64_t discarded_tokens() const { return discarded_tokens_; }

private:
    void emit_full_windows(const WindowSink& sink, bool at_end);

    std::size_t n_;
    TokenId split_;
    bool discard_tails_;
    std::vector<TokenId> pending_;               // stream tokens from the window start on
    std::deque<std::pair<std::uint64_t, std::size_t>> ends_;  // (context index, end offset in pending_)
    std::uint64_t next_context_ = 0;
    std::uint64_t next_window_ = 0;
    std::uint64_t discarded_tokens_ = 0;
};

/// Fixed-stride partition of the concatenated stream into windows of n.
class StandardSlider {
public:
    StandardSlider(std::size_t n, bool keep_final_partial);

    void push(std::span<const TokenId> context, const WindowSink& sink);
    void finish(const WindowSink& sink);

private:
    std::size_t n_;
    bool keep_partial_;
    WindowShard current_;
    bool has_first_ = false;
    std::uint64_t next_context_ = 0;
    std::uint64_t next_window_ = 0;
};

std::vector<WindowShard> slide_optimized(std::span<const std::vector<TokenId>> contexts, std::size_t n,
                                         TokenId split_id, bool discard_tails = false);

std::vector<WindowShard> slide_standard(std::span<const std::vector<TokenId>> contexts, std::size_t n,
                                        bool keep_final_partial = true);

}  // namespace xlpack
