#include <doctest.h>

#include <atomic>
#include <cmath>
#include <random>
#include <set>
#include <thread>

#include "httplib.h"
#include "support/synth.hpp"
#include "xlpack/retrieval.hpp"

using namespace xlpack;
using xlpack::testing::TempDir;

namespace {

EmbeddingVector vec(std::vector<double> v) { return EmbeddingVector::normalized(std::move(v)); }

FlatIndex index_of(std::vector<std::pair<std::string, std::vector<double>>> docs) {
    FlatIndex idx;
    for (auto& [id, v] : docs) idx.add(id, vec(v));
    return idx;
}

EmbeddingVector random_unit(std::mt19937_64& rng, std::size_t dim) {
    std::normal_distribution<double> g;
    std::vector<double> v(dim);
    for (auto& x : v) x = g(rng);
    return vec(std::move(v));
}

std::vector<SearchHit> brute_force(const std::vector<std::pair<std::string, EmbeddingVector>>& docs,
                                   const EmbeddingVector& q, std::size_t k) {
    std::vector<SearchHit> all;
    for (const auto& [id, v] : docs) {
        double s = 0;
        for (std::size_t i = 0; i < q.dim(); ++i) s += q.components()[i] * v.components()[i];
        all.push_back({id, s});
    }
    std::sort(all.begin(), all.end(), hit_before);
    if (all.size() > k) all.resize(k);
    return all;
}

// Maps fixed strings to fixed vectors; anything else is an error.
class TableProvider final : public EmbeddingProvider {
public:
    explicit TableProvider(std::map<std::string, EmbeddingVector> t) : t_(std::move(t)) {}
    std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override {
        std::vector<EmbeddingVector> out;
        for (const auto& s : texts) out.push_back(t_.at(s));
        return out;
    }
    std::string name() const override { return "table"; }

private:
    std::map<std::string, EmbeddingVector> t_;
};

}  // namespace

TEST_CASE("keywords: frequency ranking through the title map") {
    TitleMap map{{"Gato", "Cat"}, {"Perro", "Dog"}, {"Raton", "Mouse"}};
    RawArticle a{1, "Raton", "El [[Gato]] y el [[Perro|perro]] y otro [[Gato]], [[Xyz]].", "es"};
    auto ks = extract_keywords(a, map);
    CHECK(ks.title_keyword == "Mouse");
    CHECK(ks.content_keywords == std::vector<std::string>{"Cat", "Dog"});
    CHECK(full_query_text(ks) == "Mouse Cat Dog");
    CHECK(query_texts(ks) == std::pair<std::string, std::string>{"Mouse", "Mouse Cat Dog"});
}

TEST_CASE("keywords: cap of ten and the unmapped title fallback") {
    TitleMap map;
    std::string text;
    for (int i = 0; i < 12; ++i) {
        map["L" + std::to_string(i)] = "E" + std::to_string(i);
        text += "[[L" + std::to_string(i) + "]] ";
    }
    Tally t;
    auto ks = extract_keywords({1, "Nada", text, "es"}, map, RetrievalConfig{}.max_keywords, &t);
    CHECK(ks.content_keywords.size() == 10);
    CHECK(ks.content_keywords.front() == "E0");
    CHECK(ks.title_keyword == "Nada");
    CHECK(t.get("unmapped_titles") == 1);
}

TEST_CASE("link targets: anchors, fragments, underscores") {
    CHECK(extract_link_targets("[[a_b#Sec|x]] [[ c ]] [[]] [[bad [[Good]]") ==
          std::vector<std::string>{"A b", "C", "Good"});
}

TEST_CASE("title map keeps the smallest English target") {
    std::vector<LangLink> links{{1, "en", "Zeta"}, {1, "en", "Alpha"}, {2, "en", "B"}};
    std::vector<PageRecord> pages{{1, 0, "Uno", false}, {2, 4, "Dos", false}};
    auto map = build_title_map(links, pages);
    CHECK(map.size() == 1);
    CHECK(map.at("Uno") == "Alpha");
}

TEST_CASE("retrieval defaults") {
    RetrievalConfig cfg;
    CHECK(cfg.threshold == 0.75);
    CHECK(cfg.max_results == 3);
    CHECK(cfg.max_keywords == 10);
}

TEST_CASE("mock embeddings are unit length and deterministic") {
    MockEmbeddingProvider p(32, 7);
    const std::vector<std::string> texts{"the cat", "the cat", "a dog", ""};
    auto v = p.embed(texts);
    REQUIRE(v.size() == 4);
    CHECK(v[0] == v[1]);
    for (const auto& e : v) CHECK(std::abs(e.dot(e) - 1.0) < 1e-6);
    CHECK(v[0].dot(v[2]) < 0.999);
    CHECK(MockEmbeddingProvider(32, 8).embed_one("the cat") != v[0]);
    CHECK_THROWS_AS(EmbeddingVector::normalized({0.0, 0.0}), std::invalid_argument);
}

TEST_CASE("file provider and cache round trip") {
    TempDir dir("cache");
    std::vector<std::pair<std::string, EmbeddingVector>> entries{{"alpha", vec({1, 2, 2})}, {"beta", vec({0, 0, 1})}};
    write_embedding_cache(dir / "c.bin", entries);
    FileEmbeddingProvider p(dir / "c.bin");
    CHECK(p.entries().size() == 2);
    const std::vector<std::string> ok{"beta"};
    CHECK(std::abs(p.embed(ok)[0].components()[2] - 1.0) < 1e-6);
    const std::vector<std::string> bad{"alpha", "gamma", "delta"};
    try {
        p.embed(bad);
        FAIL("expected an error");
    } catch (const EmbeddingError& e) {
        const std::string what = e.what();
        CHECK(what.find("gamma") != std::string::npos);
        CHECK(what.find("delta") != std::string::npos);
    }
    xlpack::testing::write_file(dir / "trunc.bin", std::string("\x05\x00\x00\x00ab", 6));
    CHECK_THROWS_AS(read_embedding_cache(dir / "trunc.bin"), InputError);
}

TEST_CASE("flat index: fixed examples") {
    CHECK(FlatIndex{}.search(vec({1, 0}), 3).empty());

    auto idx = index_of({{"d1", {1, 0}}, {"d2", {0, 1}}});
    auto hits = idx.search(vec({1, 0}), 2);
    REQUIRE(hits.size() == 2);
    CHECK(hits[0].doc_id == "d1");
    CHECK(hits[0].score == doctest::Approx(1.0));
    CHECK(hits[1].doc_id == "d2");
    CHECK(std::abs(hits[1].score) < 1e-12);

    auto tie = index_of({{"b", {1, 1}}, {"a", {1, 1}}});
    CHECK(tie.search(vec({1, 0}), 1).at(0).doc_id == "a");

    auto one = index_of({{"x", {0.8, 0.6}}});
    CHECK(std::abs(one.search(vec({0.6, 0.8}), 5).at(0).score - 0.96) < 1e-12);
    CHECK(one.search(vec({0.8, 0.6}), 1).at(0).score == doctest::Approx(1.0));

    FlatIndex dup;
    dup.add("x", vec({1, 0}));
    CHECK_THROWS_AS(dup.add("x", vec({0, 1})), std::invalid_argument);
    try {
        dup.add("odd", vec({1, 0, 0}));
        FAIL("expected an error");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("odd") != std::string::npos);
    }
}

TEST_CASE("flat index: parallel search equals the serial scan and brute force") {
    std::mt19937_64 rng(99);
    std::vector<std::pair<std::string, EmbeddingVector>> docs;
    FlatIndex idx;
    for (int i = 0; i < 3000; ++i) {
        docs.emplace_back("doc" + std::to_string(i), random_unit(rng, 16));
        idx.add(docs.back().first, docs.back().second);
    }
    // Duplicated vectors exercise the tie rule.
    for (int i = 0; i < 5; ++i) {
        docs.emplace_back("dup" + std::to_string(i), docs[0].second);
        idx.add(docs.back().first, docs.back().second);
    }
    for (int round = 0; round < 20; ++round) {
        const auto q = round == 0 ? docs[0].second : random_unit(rng, 16);
        for (std::size_t k : {1, 7, 100, 5000}) {
            const auto got = idx.search(q, k);
            CHECK(got == idx.search_serial(q, k));
            const auto ref = brute_force(docs, q, k);
            REQUIRE(got.size() == ref.size());
            for (std::size_t i = 0; i < got.size(); ++i) {
                CHECK(got[i].doc_id == ref[i].doc_id);
                CHECK(std::abs(got[i].score - ref[i].score) < 1e-12);
            }
        }
    }
}

TEST_CASE("two-step scoring: dimension-2 fixture") {
    auto idx = index_of({{"d1", {1, 0}}, {"d2", {0, 1}}, {"d3", {0.8, 0.6}}});
    auto res = rescore_candidates(vec({1, 0}), vec({0.6, 0.8}), idx, RetrievalConfig{});
    REQUIRE(res.size() == 2);
    CHECK(res[0].doc_id == "d3");
    CHECK(std::abs(res[0].s_final - 0.88) < 1e-9);
    CHECK(std::abs(res[0].s_title - 0.8) < 1e-9);
    CHECK(std::abs(res[0].s_full - 0.96) < 1e-9);
    CHECK(res[1].doc_id == "d1");
    CHECK(std::abs(res[1].s_final - 0.8) < 1e-9);

    RetrievalConfig open;
    open.threshold = 0.0;
    auto all = rescore_candidates(vec({1, 0}), vec({0.6, 0.8}), idx, open);
    REQUIRE(all.size() == 3);
    CHECK(all[2].doc_id == "d2");
    CHECK(std::abs(all[2].s_final - 0.4) < 1e-9);

    TableProvider p({{"Cat", vec({1, 0})}, {"Cat Dog", vec({0.6, 0.8})}});
    auto via = two_step_retrieve(KeywordSet{"Cat", {"Dog"}}, idx, p, RetrievalConfig{});
    REQUIRE(via.size() == 2);
    CHECK(via[0].doc_id == "d3");

    Tally t;
    CHECK(two_step_retrieve(KeywordSet{}, idx, p, RetrievalConfig{}, &t).empty());
    CHECK(t.get("empty_keyword_sets") == 1);
}

TEST_CASE("two-step scoring: threshold, cap, mean identity and pool monotonicity") {
    std::mt19937_64 rng(4);
    FlatIndex idx;
    for (int i = 0; i < 600; ++i) idx.add("d" + std::to_string(i), random_unit(rng, 4));
    for (int round = 0; round < 40; ++round) {
        const auto qt = random_unit(rng, 4);
        const auto qf = random_unit(rng, 4);
        RetrievalConfig capped;
        capped.threshold = 0.3;
        capped.candidate_pool_k = 5;
        auto res = rescore_candidates(qt, qf, idx, capped);
        CHECK(res.size() <= 3);
        for (const auto& r : res) {
            CHECK(r.s_final >= 0.3);
            CHECK(std::abs(r.s_final - (r.s_title + r.s_full) / 2) <= 1e-9);
            CHECK(std::abs(r.s_title) <= 1.0 + 1e-12);
        }

        // Without the cap a larger pool only adds results.
        RetrievalConfig small = capped;
        small.max_results = 1u << 20;
        RetrievalConfig large = small;
        large.candidate_pool_k = 50;
        const auto a = rescore_candidates(qt, qf, idx, small);
        const auto b = rescore_candidates(qt, qf, idx, large);
        std::set<std::string> in_b;
        for (const auto& r : b) in_b.insert(r.doc_id);
        for (const auto& r : a) CHECK(in_b.count(r.doc_id) == 1);
    }
}

TEST_CASE("augmented pairs fan out over retained results") {
    RawArticle art{7, "Gato", "texto", "es"};
    std::unordered_map<std::string, std::string> corpus{
        {"w1", "Cats\nCats are small."}, {"w2", "single line"}, {"w3", "   "}};
    std::vector<RetrievalResult> res{{"w1", 1, 1, 1}, {"w2", 1, 1, 1}, {"w3", 1, 1, 1}, {"w4", 1, 1, 1}};
    Tally t;
    auto pairs = build_augmented_pairs(art, res, corpus, &t);
    REQUIRE(pairs.size() == 2);
    CHECK(pairs[0].title_en == "Cats");
    CHECK(pairs[0].text_en == "Cats are small.");
    CHECK(pairs[1].title_en == "w2");
    CHECK(pairs[1].text_en == "single line");
    for (const auto& p : pairs) {
        CHECK(p.title_l == "Gato");
        CHECK(p.text_l == "texto");
        CHECK(p.provenance == Provenance::retrieved);
        CHECK(p.pair.id_l == 7);
    }
    CHECK(pairs[0].pair.id_en == pseudo_page_id("w1"));
    CHECK(t.get("retrieved_docs_missing_text") == 2);
    CHECK(build_augmented_pairs(art, {}, corpus).empty());
}

TEST_CASE("corpus reader") {
    TempDir dir("corpus");
    xlpack::testing::write_file(dir / "c.jsonl", "{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":3,\"text\":\"y\"}\nnope\n\n");
    Tally t;
    auto docs = read_corpus(dir / "c.jsonl", &t);
    REQUIRE(docs.size() == 2);
    CHECK(docs[1].id == "3");
    CHECK(t.get("corpus_parse_errors") == 1);
}

TEST_CASE("wire provider: batching, bearer auth and retry on overload") {
    httplib::Server server;
    std::atomic<int> calls{0};
    std::atomic<int> unauthorized{0};
    server.Post("/embed", [&](const httplib::Request& req, httplib::Response& res) {
        const int n = ++calls;
        if (req.get_header_value("Authorization") != "Bearer s3cret") ++unauthorized;
        if (n == 1) {
            res.status = 503;
            return;
        }
        if (n == 2) {
            res.status = 429;
            return;
        }
        auto body = nlohmann::json::parse(req.body);
        nlohmann::json vecs = nlohmann::json::array();
        for (const auto& t : body["texts"]) vecs.push_back({static_cast<double>(t.get<std::string>().size()), 1.0});
        res.set_content(nlohmann::json{{"vectors", vecs}}.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    WireConfig cfg;
    cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/embed";
    cfg.auth_token = "s3cret";
    cfg.batch_size = 2;
    cfg.initial_backoff = std::chrono::milliseconds(1);
    cfg.max_backoff = std::chrono::milliseconds(4);
    WireEmbeddingProvider p(cfg);
    const std::vector<std::string> texts{"a", "bbb", "cc"};
    auto out = p.embed(texts);
    REQUIRE(out.size() == 3);
    CHECK(out[1].components()[0] == doctest::Approx(3 / std::sqrt(10.0)));
    CHECK(calls == 4);  // two refusals, then two batches
    CHECK(unauthorized == 0);

    cfg.max_retries = 0;
    cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/missing";
    WireEmbeddingProvider bad(cfg);
    CHECK_THROWS_AS(bad.embed(texts), EmbeddingError);

    server.stop();
    th.join();
}
