// Parallel kernels against their serial references. Threads follow
// OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include <random>

#include "support/synth.hpp"
#include "xlpack/export.hpp"
#include "xlpack/packing.hpp"
#include "xlpack/vector_index.hpp"

using namespace xlpack;

namespace {

const std::vector<ArticlePair>& pairs() {
    static const auto data = [] {
        std::mt19937_64 rng(1);
        std::vector<ArticlePair> out;
        for (PageId i = 0; i < 2000; ++i) {
            ArticlePair p;
            p.pair = {i, 100000 + i};
            p.title_en = "Topic " + std::to_string(i);
            p.title_l = "Tema " + std::to_string(i);
            for (int k = 0; k < 20; ++k) {
                p.text_en += xlpack::testing::random_words(rng, 1 + rng() % 60) + "\n\n";
                p.text_l += xlpack::testing::random_words(rng, 1 + rng() % 60) + "\n\n";
            }
            p.lang_l = "xx";
            out.push_back(std::move(p));
        }
        return out;
    }();
    return data;
}

const std::vector<PackedContext>& contexts() {
    static const auto data = [] {
        auto tok = make_tokenizer(TokenizerSpec{});
        PackConfig cfg;
        cfg.n_budget = 512;
        std::vector<PackedContext> out;
        pack_corpus_serial(pairs(), *tok, cfg, [&](PackedContext&& c) { out.push_back(std::move(c)); });
        return out;
    }();
    return data;
}

const FlatIndex& index() {
    static const auto data = [] {
        std::mt19937_64 rng(2);
        std::normal_distribution<double> g;
        FlatIndex idx;
        for (int i = 0; i < 50000; ++i) {
            std::vector<double> v(64);
            for (auto& x : v) x = g(rng);
            idx.add("doc" + std::to_string(i), EmbeddingVector::normalized(std::move(v)));
        }
        return idx;
    }();
    return data;
}

EmbeddingVector query() {
    std::vector<double> v(64, 0.0);
    v[0] = 1.0;
    v[5] = 0.5;
    return EmbeddingVector::normalized(std::move(v));
}

template <bool Parallel>
void BM_pack_corpus(benchmark::State& state) {
    pairs();  // build the fixture outside the timed loop
    auto tok = make_tokenizer(TokenizerSpec{});
    PackConfig cfg;
    cfg.n_budget = static_cast<std::size_t>(state.range(0));
    std::size_t n = 0;
    for (auto _ : state) {
        auto sink = [&](PackedContext&& c) { n += c.token_len; };
        if constexpr (Parallel) {
            pack_corpus(pairs(), *tok, cfg, sink);
        } else {
            pack_corpus_serial(pairs(), *tok, cfg, sink);
        }
    }
    benchmark::DoNotOptimize(n);
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(pairs().size()));
}

template <bool Parallel>
void BM_flat_search(benchmark::State& state) {
    index();
    const auto q = query();
    const auto k = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) {
        auto hits = Parallel ? index().search(q, k) : index().search_serial(q, k);
        benchmark::DoNotOptimize(hits);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(index().size()));
}

template <bool Parallel>
void BM_compute_stats(benchmark::State& state) {
    contexts();
    auto tok = make_tokenizer(TokenizerSpec{});
    for (auto _ : state) {
        auto s = Parallel ? compute_stats(contexts(), *tok) : compute_stats_serial(contexts(), *tok);
        benchmark::DoNotOptimize(s);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(contexts().size()));
}

}  // namespace

BENCHMARK(BM_pack_corpus<false>)->Name("pack_corpus/serial")->Arg(512)->Arg(4096)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_pack_corpus<true>)->Name("pack_corpus/parallel")->Arg(512)->Arg(4096)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_flat_search<false>)->Name("flat_search/serial")->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_flat_search<true>)->Name("flat_search/parallel")->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_compute_stats<false>)->Name("compute_stats/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_compute_stats<true>)->Name("compute_stats/parallel")->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
