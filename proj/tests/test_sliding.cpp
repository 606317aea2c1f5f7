#include <doctest.h>

#include <random>

#include "support/oracles.hpp"
#include "xlpack/sliding.hpp"

using namespace xlpack;
using Ids = std::vector<TokenId>;

namespace {

constexpr TokenId kSplit = 0;

// Context k of length len: ids 100k+1 .. then the split.
std::vector<Ids> contexts_of(std::initializer_list<std::size_t> lens) {
    std::vector<Ids> out;
    TokenId k = 0;
    for (auto len : lens) {
        Ids c;
        for (std::size_t i = 0; i + 1 < len; ++i) c.push_back(100 * (k + 1) + static_cast<TokenId>(i));
        c.push_back(kSplit);
        out.push_back(std::move(c));
        ++k;
    }
    return out;
}

std::vector<std::size_t> lengths(const std::vector<WindowShard>& ws) {
    std::vector<std::size_t> out;
    for (const auto& w : ws) out.push_back(w.ids.size());
    return out;
}

std::vector<Ids> ids_of(const std::vector<WindowShard>& ws) {
    std::vector<Ids> out;
    for (const auto& w : ws) out.push_back(w.ids);
    return out;
}

std::vector<Ids> random_stream(std::mt19937_64& rng, std::size_t n, std::size_t count) {
    std::vector<Ids> out;
    for (std::size_t c = 0; c < count; ++c) {
        const std::size_t len = 1 + rng() % n;
        Ids ctx;
        for (std::size_t i = 0; i + 1 < len; ++i) ctx.push_back(1 + static_cast<TokenId>(rng() % 50000));
        ctx.push_back(kSplit);
        out.push_back(std::move(ctx));
    }
    return out;
}

}  // namespace

TEST_CASE("optimized: [5,5,5] at n=8 gives one context per window") {
    auto ws = slide_optimized(contexts_of({5, 5, 5}), 8, kSplit);
    CHECK(lengths(ws) == std::vector<std::size_t>{5, 5, 5});
    CHECK(ws[0].dropped_from_raw_span == 3);
    CHECK(ws[1].first_context == 1);
    CHECK(ws[2].window_index == 2);
}

TEST_CASE("optimized: [3,4,5] at n=8 gives [7,5]") {
    const auto ctxs = contexts_of({3, 4, 5});
    auto ws = slide_optimized(ctxs, 8, kSplit);
    REQUIRE(lengths(ws) == std::vector<std::size_t>{7, 5});
    CHECK(ws[0].first_context == 0);
    CHECK(ws[0].last_context == 1);
    CHECK(ws[0].dropped_from_raw_span == 1);
    CHECK(ws[1].ids == ctxs[2]);
}

TEST_CASE("optimized: a context of exactly n is one window") {
    auto ws = slide_optimized(contexts_of({8}), 8, kSplit);
    CHECK(lengths(ws) == std::vector<std::size_t>{8});
    CHECK(ws[0].dropped_from_raw_span == 0);
}

TEST_CASE("optimized: violations name the context") {
    OptimizedSlider s(8, kSplit);
    auto sink = [](WindowShard&&) {};
    s.push(contexts_of({3})[0], sink);
    try {
        s.push(Ids{1, 2, 3}, sink);
        FAIL("expected a violation");
    } catch (const ContextViolation& e) {
        CHECK(e.context_index() == 1);
    }
    OptimizedSlider s2(4, kSplit);
    CHECK_THROWS_AS(s2.push(contexts_of({5})[0], sink), ContextViolation);
    CHECK_THROWS_AS(s2.push(Ids{}, sink), ContextViolation);
}

TEST_CASE("optimized: empty stream emits nothing") {
    CHECK(slide_optimized(std::vector<Ids>{}, 8, kSplit).empty());
}

TEST_CASE("optimized: discard_tails drops the cut context") {
    OptimizedSlider s(8, kSplit, true);
    std::vector<WindowShard> out;
    auto sink = [&](WindowShard&& w) { out.push_back(std::move(w)); };
    for (const auto& c : contexts_of({3, 4, 5, 2})) s.push(c, sink);
    s.finish(sink);
    // ctx2 straddles the first raw boundary and is discarded whole.
    REQUIRE(lengths(out) == std::vector<std::size_t>{7, 2});
    CHECK(out[1].first_context == 3);
    CHECK(s.discarded_tokens() == 5);
}

TEST_CASE("optimized: streaming push equals the batch wrapper") {
    std::mt19937_64 rng(12);
    auto ctxs = random_stream(rng, 16, 300);
    std::vector<WindowShard> streamed;
    OptimizedSlider s(16, kSplit);
    for (const auto& c : ctxs) s.push(c, [&](WindowShard&& w) { streamed.push_back(std::move(w)); });
    s.finish([&](WindowShard&& w) { streamed.push_back(std::move(w)); });
    CHECK(streamed == slide_optimized(ctxs, 16, kSplit));
}

TEST_CASE("optimized: matches the greedy and positional oracles") {
    std::mt19937_64 rng(77);
    for (int round = 0; round < 300; ++round) {
        const std::size_t n = 1 + rng() % 40;
        const auto ctxs = random_stream(rng, n, rng() % 60);
        const auto ws = slide_optimized(ctxs, n, kSplit);
        const auto got = ids_of(ws);
        CHECK(got == oracle::slide_greedy(ctxs, n));
        CHECK(got == oracle::slide_positional(ctxs, n, kSplit));

        Ids flat_in;
        Ids flat_out;
        for (const auto& c : ctxs) flat_in.insert(flat_in.end(), c.begin(), c.end());
        for (const auto& w : ws) {
            REQUIRE_FALSE(w.ids.empty());
            CHECK(w.ids.back() == kSplit);
            CHECK(w.ids.size() <= n);
            flat_out.insert(flat_out.end(), w.ids.begin(), w.ids.end());
        }
        CHECK(flat_in == flat_out);
        for (std::size_t k = 0; k + 1 < ws.size(); ++k) {
            // Greedy maximality: the next context would not have fit.
            CHECK(ws[k].ids.size() + ctxs[ws[k + 1].first_context].size() > n);
            CHECK(ws[k + 1].first_context == ws[k].last_context + 1);
        }
    }
}

TEST_CASE("standard: [3,4,5] at n=8 gives [8,4]") {
    const auto ctxs = contexts_of({3, 4, 5});
    auto ws = slide_standard(ctxs, 8);
    REQUIRE(lengths(ws) == std::vector<std::size_t>{8, 4});
    CHECK(ws[0].ids.back() == ctxs[2].front());
    CHECK(ws[0].last_context == 2);
    CHECK(ws[1].first_context == 2);
}

TEST_CASE("standard: exact partitions and the final remainder") {
    CHECK(lengths(slide_standard(contexts_of({6, 10}), 8)) == std::vector<std::size_t>{8, 8});
    CHECK(slide_standard(contexts_of({5}), 8, false).empty());
    CHECK(lengths(slide_standard(contexts_of({5}), 8, true)) == std::vector<std::size_t>{5});
    std::mt19937_64 rng(5);
    for (int round = 0; round < 200; ++round) {
        const std::size_t n = 1 + rng() % 30;
        const auto ctxs = random_stream(rng, 2 * n, rng() % 40);
        const bool keep = rng() % 2 == 0;
        CHECK(ids_of(slide_standard(ctxs, n, keep)) == oracle::slide_fixed(ctxs, n, keep));
    }
}

TEST_CASE("slide kind names") {
    CHECK(parse_slide_kind("optimized") == SlideKind::optimized);
    CHECK(parse_slide_kind(to_string(SlideKind::standard)) == SlideKind::standard);
    CHECK_FALSE(parse_slide_kind("fixed"));
}
