#include "xlpack/sliding.hpp"

#include <algorithm>
#include <string>

namespace xlpack {

std::string_view to_string(SlideKind k) { return k == SlideKind::optimized ? "optimized" : "standard"; }

std::optional<SlideKind> parse_slide_kind(std::string_view s) {
    if (s == "optimized") return SlideKind::optimized;
    if (s == "standard") return SlideKind::standard;
    return std::nullopt;
}

OptimizedSlider::OptimizedSlider(std::size_t n, TokenId split_id, bool discard_tails)
    : n_(n), split_(split_id), discard_tails_(discard_tails) {
    if (n_ == 0) throw std::invalid_argument("window length must be positive");
    pending_.reserve(2 * n_);
}

void OptimizedSlider::push(std::span<const TokenId> context, const WindowSink& sink) {
    const std::uint64_t idx = next_context_++;
    if (context.empty() || context.back() != split_) {
        throw ContextViolation(idx, "context " + std::to_string(idx) + " does not end with the split token");
    }
    if (context.size() > n_) {
        throw ContextViolation(idx, "context " + std::to_string(idx) + " has " + std::to_string(context.size()) +
                                        " tokens, more than the window length " + std::to_string(n_));
    }
    pending_.insert(pending_.end(), context.begin(), context.end());
    ends_.emplace_back(idx, pending_.size());
    emit_full_windows(sink, false);
}

void OptimizedSlider::finish(const WindowSink& sink) { emit_full_windows(sink, true); }

void OptimizedSlider::emit_full_windows(const WindowSink& sink, bool at_end) {
    while (!pending_.empty() && (pending_.size() >= n_ || at_end)) {
        const std::size_t raw_end = std::min(n_, pending_.size());
        // Last split token inside the raw window [0, raw_end).
        std::size_t p = raw_end;
        while (p > 0 && pending_[p - 1] != split_) --p;
        // p is one past the split; every context fits the window, so p > 0.
        WindowShard w;
        w.ids.assign(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(p));
        w.dropped_from_raw_span = raw_end - p;
        w.window_index = next_window_++;
        w.first_context = ends_.front().first;
        while (!ends_.empty() && ends_.front().second <= p) {
            w.last_context = ends_.front().first;
            ends_.pop_front();
        }

        std::size_t erase = p;
        if (discard_tails_ && w.dropped_from_raw_span > 0) {
            // The context cut by the raw boundary goes with its head.
            erase = ends_.front().second;
            discarded_tokens_ += erase - p;
            ends_.pop_front();
        }
        pending_.erase(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(erase));
        for (auto& e : ends_) e.second -= erase;
        sink(std::move(w));
    }
}

StandardSlider::StandardSlider(std::size_t n, bool keep_final_partial) : n_(n), keep_partial_(keep_final_partial) {
    if (n_ == 0) throw std::invalid_argument("window length must be positive");
}

void StandardSlider::push(std::span<const TokenId> context, const WindowSink& sink) {
    const std::uint64_t idx = next_context_++;
    std::size_t pos = 0;
    while (pos < context.size()) {
        if (current_.ids.empty()) current_.first_context = idx;
        std::size_t take = std::min(n_ - current_.ids.size(), context.size() - pos);
        current_.ids.insert(current_.ids.end(), context.begin() + static_cast<std::ptrdiff_t>(pos),
                            context.begin() + static_cast<std::ptrdiff_t>(pos + take));
        current_.last_context = idx;
        pos += take;
        if (current_.ids.size() == n_) {
            current_.window_index = next_window_++;
            sink(std::move(current_));
            current_ = WindowShard{};
        }
    }
}

void StandardSlider::finish(const WindowSink& sink) {
    if (!current_.ids.empty() && keep_partial_) {
        current_.window_index = next_window_++;
        sink(std::move(current_));
    }
    current_ = WindowShard{};
}

std::vector<WindowShard> slide_optimized(std::span<const std::vector<TokenId>> contexts, std::size_t n,
                                         TokenId split_id, bool discard_tails) {
    std::vector<WindowShard> out;
    auto sink = [&out](WindowShard&& w) { out.push_back(std::move(w)); };
    OptimizedSlider slider(n, split_id, discard_tails);
    for (const auto& c : contexts) slider.push(c, sink);
    slider.finish(sink);
    return out;
}

std::vector<WindowShard> slide_standard(std::span<const std::vector<TokenId>> contexts, std::size_t n,
                                        bool keep_final_partial) {
    std::vector<WindowShard> out;
    auto sink = [&out](WindowShard&& w) { out.push_back(std::move(w)); };
    StandardSlider slider(n, keep_final_partial);
    for (const auto& c : contexts) slider.push(c, sink);
    slider.finish(sink);
    return out;
}

}  // namespace xlpack
