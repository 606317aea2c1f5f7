#include <doctest.h>

#include <sstream>

#include "cli.hpp"
#include "support/synth.hpp"
#include "xlpack/config.hpp"
#include "xlpack/pipeline.hpp"

using namespace xlpack;
using xlpack::testing::TempDir;
using nlohmann::json;

namespace {

bool names_field(const ConfigError& e, const std::string& field) {
    for (const auto& d : e.diagnostics()) {
        if (d.field.find(field) != std::string::npos) return true;
    }
    return false;
}

struct CliResult {
    int code;
    std::string out;
    std::string err;
};

CliResult cli(std::vector<std::string> args) {
    args.insert(args.begin(), "xlpack");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out;
    std::ostringstream err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::vector<json> report_events(const std::filesystem::path& out_dir) {
    std::vector<json> events;
    std::istringstream in(xlpack::testing::read_file(out_dir / artifact::kRunReport));
    std::string line;
    while (std::getline(in, line)) events.push_back(json::parse(line));
    return events;
}

// The two-context packing fixture as a pair map plus article files.
std::filesystem::path write_pack_fixture(const TempDir& dir) {
    xlpack::testing::write_file(dir / "pairs.tsv", "1\t5\n");
    xlpack::testing::write_file(dir / "en" / "a.jsonl", xlpack::testing::article_line(5, "Cat", "a b c\n\nd e"));
    xlpack::testing::write_file(dir / "l" / "a.jsonl", xlpack::testing::article_line(1, "Gato", "x y z w\n\nv u"));
    json cfg{{"language_l", "xx"},
             {"paths", {{"pair_map", "pairs.tsv"}, {"articles_en", "en"}, {"articles_l", "l"}, {"output_dir", "out"}}},
             {"tokenizer", {{"kind", "whitespace"}}},
             {"pack", {{"n_budget", 10}}},
             {"slide", {{"n_budget", 10}}}};
    xlpack::testing::write_file(dir / "config.json", cfg.dump(2));
    return dir / "config.json";
}

}  // namespace

TEST_CASE("config: minimal document validates with the defaults") {
    auto cfg = validate_config(json{{"language_l", "xx"}}, ".");
    CHECK(cfg.pack.n_budget == 4096);
    CHECK(cfg.slide.n_budget == 4096);
    CHECK(cfg.split.validation_fraction.num == 1);
    CHECK(cfg.split.validation_fraction.den == 1000);
    CHECK(cfg.split.seed == 32);
    CHECK_FALSE(cfg.retrieval);
}

TEST_CASE("config: mismatched budgets name both fields") {
    try {
        validate_config(json{{"language_l", "xx"}, {"pack", {{"n_budget", 4096}}}, {"slide", {{"n_budget", 2048}}}},
                        ".");
        FAIL("expected a diagnostic");
    } catch (const ConfigError& e) {
        CHECK(names_field(e, "pack.n_budget"));
        CHECK(names_field(e, "slide.n_budget"));
    }
}

TEST_CASE("config: range, type and unknown-field diagnostics are all collected") {
    try {
        validate_config(json{{"language_l", "xx"},
                             {"retrieval", {{"threshold", 1.5}}},
                             {"split", {{"validation_fraction", "3/2"}}},
                             {"pack", {{"n_budget", "big"}, {"colour", 1}}}},
                        ".");
        FAIL("expected diagnostics");
    } catch (const ConfigError& e) {
        CHECK(names_field(e, "retrieval.threshold"));
        CHECK(names_field(e, "split.validation_fraction"));
        CHECK(names_field(e, "pack.n_budget"));
        CHECK(names_field(e, "pack.colour"));
    }
    CHECK_THROWS_AS(validate_config(json{{"language_l", "en"}}, "."), ConfigError);
    CHECK_THROWS_AS(validate_config(json::object(), "."), ConfigError);
}

TEST_CASE("config: missing inputs are their own error") {
    TempDir dir("cfg");
    try {
        validate_config(json{{"language_l", "xx"}, {"paths", {{"pages_en", "nope.sql"}}}}, dir.path());
        FAIL("expected an error");
    } catch (const MissingInputError& e) {
        CHECK(names_field(e, "paths.pages_en"));
    }
    auto cfg = validate_config(json{{"language_l", "xx"}, {"paths", {{"pages_en", "nope.sql"}}}}, dir.path(), false);
    CHECK(*cfg.paths.pages_en == dir.path() / "nope.sql");
    CHECK(cfg.paths.output_dir == dir.path() / "out");
}

TEST_CASE("config: dotted overrides and the digest") {
    json doc{{"language_l", "xx"}};
    apply_override(doc, "pack.n_budget=64");
    apply_override(doc, "slide.n_budget=64");
    apply_override(doc, "pack.direction_policy=mix");
    CHECK(doc["pack"]["n_budget"] == 64);
    CHECK(doc["pack"]["direction_policy"] == "mix");
    auto a = validate_config(doc, "/tmp/a", false);
    auto b = validate_config(doc, "/tmp/b", false);
    CHECK(a.pack.direction_policy == DirectionPolicy::mix);
    CHECK(config_digest(a) == config_digest(b));
    CHECK(config_digest(a).size() == 16);
    apply_override(doc, "pack.seed=5");
    CHECK(config_digest(validate_config(doc, "/tmp/a", false)) != config_digest(a));
    CHECK_THROWS_AS(apply_override(doc, "novalue"), ConfigError);
}

TEST_CASE("cli: help and usage errors") {
    auto help = cli({"--help"});
    CHECK(help.code == 0);
    CHECK(help.out.find("--config") != std::string::npos);
    CHECK(cli({"pack", "--config", "/nonexistent/config.json"}).code == 1);
    CHECK(cli({"pack", "--bogus"}).code != 0);
}

TEST_CASE("cli: pack on the two-context fixture reports two contexts") {
    TempDir dir("cli");
    const auto config = write_pack_fixture(dir);
    auto r = cli({"pack", "--config", config.string(), "--emit-text"});
    INFO(r.err);
    REQUIRE(r.code == 0);
    const auto events = report_events(dir / "out");
    bool found = false;
    for (const auto& e : events) {
        if (e.value("event", "") == "stage_end" && e.value("stage", "") == "pack") {
            CHECK(e["counts"]["context_count"] == 2);
            found = true;
        }
    }
    CHECK(found);
    CHECK(std::filesystem::exists(dir / "out" / artifact::kContextText));
}

TEST_CASE("cli: stages run in isolation from artifacts on disk") {
    TempDir dir("cli");
    const auto config = write_pack_fixture(dir);
    REQUIRE(cli({"pack", "--config", config.string()}).code == 0);
    REQUIRE(cli({"slide", "--config", config.string()}).code == 0);
    REQUIRE(cli({"stats", "--config", config.string()}).code == 0);
    REQUIRE(cli({"export", "--config", config.string()}).code == 0);
    const auto m = read_manifest(dir / "out" / artifact::kExport / "train");
    CHECK(m.window_count == 2);
    CHECK(m.token_total == 17);
    auto stats = json::parse(xlpack::testing::read_file(dir / "out" / artifact::kStats));
    CHECK(stats["rows"][0]["tokens"] == 7);
}

TEST_CASE("cli: exit codes for config, input and stage failures") {
    TempDir dir("cli");
    const auto config = write_pack_fixture(dir);
    CHECK(cli({"pack", "--config", config.string(), "--set", "slide.n_budget=11"}).code == 1);
    CHECK(cli({"slide", "--config", config.string(), "--set", "paths.output_dir=empty"}).code == 2);
    xlpack::testing::write_file(dir / "pairs.tsv", "garbage\n");
    CHECK(cli({"pack", "--config", config.string()}).code == 2);
    const auto events = report_events(dir / "out");
    REQUIRE_FALSE(events.empty());
    CHECK(events.back().value("event", "") == "stage_failed");
    CHECK(events.back()["exit_code"] == 2);
}

TEST_CASE("cli: all with retrieval packs pseudo pairs next to Wikipedia pairs") {
    TempDir dir("cli");
    xlpack::testing::WikiShape shape;
    shape.pairs = 30;
    auto fx = xlpack::testing::write_synthetic_wiki(dir.path(), shape);
    std::string corpus;
    for (int i = 0; i < 40; ++i) {
        json doc{{"id", "web" + std::to_string(i)},
                 {"text", "Topic " + std::to_string(i) + "\nAbout topic " + std::to_string(i) + " and more."}};
        corpus += doc.dump() + "\n";
    }
    xlpack::testing::write_file(dir / "corpus.jsonl", corpus);
    auto doc = fx.config_doc;
    doc["paths"]["corpus"] = "corpus.jsonl";
    doc["retrieval"] = {{"threshold", 0.2}, {"provider", {{"kind", "mock"}, {"dim", 64}}}};
    xlpack::testing::write_file(fx.config, doc.dump(2));

    auto r = cli({"all", "--config", fx.config.string()});
    INFO(r.err);
    REQUIRE(r.code == 0);
    const auto pseudo = xlpack::testing::read_file(dir / "out" / artifact::kPseudoPairs);
    CHECK_FALSE(pseudo.empty());
    auto first = json::parse(pseudo.substr(0, pseudo.find('\n')));
    CHECK(first.contains("s_final"));
    CHECK(first["s_final"].get<double>() >= 0.2);
    auto stats = json::parse(xlpack::testing::read_file(dir / "out" / artifact::kStats));
    CHECK(stats["contexts"]["W"].get<int>() > 0);
    CHECK(stats["contexts"]["F"].get<int>() > 0);
}
