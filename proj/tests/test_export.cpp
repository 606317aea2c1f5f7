#include <doctest.h>

#include <random>

#include "support/oracles.hpp"
#include "support/synth.hpp"
#include "xlpack/export.hpp"

using namespace xlpack;
using xlpack::testing::TempDir;

namespace {

std::vector<WindowShard> random_windows(std::mt19937_64& rng, std::size_t count) {
    std::vector<WindowShard> out;
    for (std::size_t w = 0; w < count; ++w) {
        WindowShard s;
        const std::size_t len = rng() % 40;
        for (std::size_t i = 0; i < len; ++i) s.ids.push_back(static_cast<TokenId>(rng()));
        s.window_index = w;
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<std::vector<TokenId>> ids(const std::vector<WindowShard>& ws) {
    std::vector<std::vector<TokenId>> out;
    for (const auto& w : ws) out.push_back(w.ids);
    return out;
}

PackedContext context(std::vector<std::pair<std::string, std::string>> segs, Provenance prov = Provenance::wikipedia) {
    PackedContext c;
    for (auto& [lang, text] : segs) c.segments.push_back({lang, SegmentKind::paragraph, text, 0, false});
    c.provenance = prov;
    return c;
}

}  // namespace

TEST_CASE("fraction parsing") {
    auto f = parse_fraction("0.001");
    REQUIRE(f);
    CHECK(f->num == 1);
    CHECK(f->den == 1000);
    CHECK(parse_fraction(" 3 / 7 ")->str() == "3/7");
    CHECK(parse_fraction("0")->num == 0);
    CHECK_FALSE(parse_fraction("1/0"));
    CHECK_FALSE(parse_fraction("abc"));
    CHECK_FALSE(parse_fraction(""));
}

TEST_CASE("split: 10,000 contexts at 0.001 give 10, matching the reference shuffle") {
    SplitConfig cfg;
    auto s = split_validation(10000, cfg);
    CHECK(s.validation.size() == 10);
    CHECK(s.train.size() == 9990);
    const auto member = oracle::validation_members(10000, 1, 1000, 32);
    for (auto v : s.validation) CHECK(member[v]);
    CHECK(std::is_sorted(s.train.begin(), s.train.end()));
    CHECK(std::is_sorted(s.validation.begin(), s.validation.end()));
    CHECK(split_validation(10000, cfg).validation == s.validation);
}

TEST_CASE("split: sizes, disjointness and membership over many shapes") {
    std::mt19937_64 rng(3);
    for (int round = 0; round < 200; ++round) {
        const std::size_t count = rng() % 3000;
        SplitConfig cfg{{rng() % 50, 50 + rng() % 100}, rng()};
        auto s = split_validation(count, cfg);
        CHECK(s.validation.size() == count * cfg.validation_fraction.num / cfg.validation_fraction.den);
        CHECK(s.train.size() + s.validation.size() == count);
        const auto member = oracle::validation_members(count, cfg.validation_fraction.num,
                                                       cfg.validation_fraction.den, cfg.seed);
        for (auto v : s.validation) CHECK(member[v]);
        for (auto t : s.train) CHECK_FALSE(member[t]);
    }
    SplitConfig none{{0, 1}, 32};
    auto [train, val] = split_validation(std::vector<int>{1, 2, 3}, none);
    CHECK(train == std::vector<int>{1, 2, 3});
    CHECK(val.empty());
}

TEST_CASE("record encoding") {
    std::string out;
    encode_record(std::vector<TokenId>{0}, out);
    CHECK(out == std::string("\x01\x00\x00\x00\x00\x00\x00\x00", 8));
    out.clear();
    encode_record(std::vector<TokenId>{0x04030201u}, out);
    CHECK(out == std::string("\x01\x00\x00\x00\x01\x02\x03\x04", 8));
    CHECK(shard_file_name(3) == "windows-00003.bin");
}

TEST_CASE("shards: empty stream") {
    TempDir dir("shards");
    auto m = write_shards({}, dir / "out", 1024, {});
    CHECK(m.window_count == 0);
    CHECK(m.shards.empty());
    CHECK(m.complete);
    CHECK(read_shards(dir / "out").empty());
    std::size_t files = 0;
    for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir / "out")) ++files;
    CHECK(files == 1);
}

TEST_CASE("shards: round trip across size-capped files") {
    TempDir dir("shards");
    std::mt19937_64 rng(10);
    for (std::uint64_t cap : {8ull, 100ull, 1ull << 20}) {
        const auto ws = random_windows(rng, 200);
        const auto out = dir / ("cap" + std::to_string(cap));
        ShardManifest base;
        base.config_digest = "abc";
        auto m = write_shards(ws, out, cap, base);
        CHECK(m.window_count == 200);
        std::uint64_t tokens = 0;
        for (const auto& w : ws) tokens += w.ids.size();
        CHECK(m.token_total == tokens);
        std::uint64_t sum = 0;
        for (const auto& f : m.shards) {
            sum += f.tokens;
            CHECK(std::filesystem::file_size(out / f.file) == f.bytes);
        }
        CHECK(sum == tokens);
        if (cap == 100) CHECK(m.shards.size() > 1);
        CHECK(ids(read_shards(out)) == ids(ws));
        CHECK(read_manifest(out).config_digest == "abc");
    }
}

TEST_CASE("shards: identical input gives identical bytes") {
    TempDir dir("shards");
    std::mt19937_64 rng(1);
    const auto ws = random_windows(rng, 50);
    ShardManifest base;
    base.created_at = "2020-01-01T00:00:00Z";
    write_shards(ws, dir / "a", 256, base);
    write_shards(ws, dir / "b", 256, base);
    for (const auto& e : std::filesystem::directory_iterator(dir / "a")) {
        CHECK(xlpack::testing::read_file(e.path()) ==
              xlpack::testing::read_file(dir / "b" / e.path().filename()));
    }
}

TEST_CASE("shards: inconsistencies are reported with file and offset") {
    TempDir dir("shards");
    std::mt19937_64 rng(2);
    const auto ws = random_windows(rng, 10);
    write_shards(ws, dir / "s", 1 << 20, {});

    auto j = nlohmann::json::parse(xlpack::testing::read_file(dir / "s" / kManifestFile));
    j["window_count"] = 11;
    xlpack::testing::write_file(dir / "s" / kManifestFile, j.dump());
    CHECK_THROWS_AS(read_shards(dir / "s"), InputError);

    write_shards(ws, dir / "t", 1 << 20, {});
    const auto shard = dir / "t" / shard_file_name(0);
    std::string bytes = xlpack::testing::read_file(shard);
    bytes.resize(bytes.size() - 2);
    xlpack::testing::write_file(shard, bytes);
    try {
        read_shards(dir / "t");
        FAIL("expected an error");
    } catch (const InputError& e) {
        const std::string what = e.what();
        CHECK(what.find("windows-00000.bin") != std::string::npos);
        CHECK(what.find("offset") != std::string::npos);
    }

    std::filesystem::remove(dir / "t" / kManifestFile);
    CHECK_THROWS_AS(read_shards(dir / "t"), InputError);
}

TEST_CASE("stats: per-language attribution, split counted apart") {
    auto tok = make_tokenizer(TokenizerSpec{});
    std::vector<PackedContext> ctxs{context({{"en", "Cat"}, {"en", "a b c d e"}, {"xx", "Gato"}, {"xx", "x y z"}})};
    auto s = compute_stats(ctxs, *tok);
    CHECK(s.wikipedia.tokens_by_lang.at("en") == 6);
    CHECK(s.wikipedia.tokens_by_lang.at("xx") == 4);
    CHECK(s.wikipedia.control_tokens == 1);
    CHECK(s.retrieved == SourceStats{});
    CHECK(compute_stats({}, *tok) == CorpusStats{});

    auto j = stats_to_json(s, "xx");
    REQUIRE(j["rows"].size() == 4);
    CHECK(j["rows"][0]["source"] == "W");
    CHECK(j["rows"][0]["tokens"] == 6);
    CHECK(j["rows"][1]["language"] == "L");
    CHECK(j["rows"][1]["tokens"] == 4);
    CHECK(j["rows"][3]["tokens"] == 0);
}

TEST_CASE("stats: parallel reduction equals the serial count") {
    auto tok = make_tokenizer(TokenizerSpec{});
    std::mt19937_64 rng(6);
    std::vector<PackedContext> ctxs;
    for (int i = 0; i < 5000; ++i) {
        ctxs.push_back(context({{"en", xlpack::testing::random_words(rng, rng() % 30)},
                                {i % 3 ? "xx" : "yy", xlpack::testing::random_words(rng, rng() % 30)}},
                               i % 4 ? Provenance::wikipedia : Provenance::retrieved));
    }
    CHECK(compute_stats(ctxs, *tok) == compute_stats_serial(ctxs, *tok));
}

TEST_CASE("token count display") {
    CHECK(format_token_count(1'530'000'000) == "1.53B");
    CHECK(format_token_count(670'000'000) == "670.00M");
    CHECK(format_token_count(980) == "980");
    CHECK(format_token_count(12'400) == "12.40K");
}
