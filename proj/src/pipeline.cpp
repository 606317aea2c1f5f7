#include "xlpack/pipeline.hpp"

#include <omp.h>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <deque>
#include <exception>
#include <mutex>

#include "xlpack/vector_index.hpp"

namespace xlpack {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string_view to_string(Stage s) {
    switch (s) {
        case Stage::align: return "align";
        case Stage::retrieve: return "retrieve";
        case Stage::pack: return "pack";
        case Stage::slide: return "slide";
        case Stage::stats: return "stats";
        case Stage::export_shards: return "export";
        case Stage::all: return "all";
    }
    return "?";
}

std::optional<Stage> parse_stage(std::string_view s) {
    for (Stage st : {Stage::align, Stage::retrieve, Stage::pack, Stage::slide, Stage::stats, Stage::export_shards,
                     Stage::all}) {
        if (to_string(st) == s) return st;
    }
    return std::nullopt;
}

RunReport::RunReport(const fs::path& path) {
    fs::create_directories(path.parent_path());
    out_.open(path, std::ios::binary | std::ios::app);
    if (!out_) throw InputError("cannot open run report " + path.string());
}

void RunReport::event(json e) {
    out_ << e.dump() << '\n';
    out_.flush();
}

json context_to_json(const PackedContext& ctx) {
    json segs = json::array();
    for (const auto& s : ctx.segments) {
        segs.push_back({{"lang", s.lang},
                        {"kind", std::string(to_string(s.kind))},
                        {"text", s.text},
                        {"tokens", s.tokens},
                        {"truncated", s.truncated}});
    }
    return {{"pair", {ctx.pair.id_l, ctx.pair.id_en}},
            {"seq_index", ctx.seq_index},
            {"direction", std::string(to_string(ctx.direction))},
            {"provenance", ctx.provenance == Provenance::wikipedia ? "wikipedia" : "retrieved"},
            {"token_len", ctx.token_len},
            {"segments", std::move(segs)}};
}

PackedContext context_from_json(const json& j) {
    PackedContext ctx;
    ctx.pair = {j.at("pair").at(0).get<PageId>(), j.at("pair").at(1).get<PageId>()};
    ctx.seq_index = j.at("seq_index").get<std::uint32_t>();
    auto dir = parse_direction(j.at("direction").get<std::string>());
    if (!dir) throw InputError("unknown direction " + j.at("direction").dump());
    ctx.direction = *dir;
    ctx.provenance = j.at("provenance").get<std::string>() == "retrieved" ? Provenance::retrieved
                                                                          : Provenance::wikipedia;
    ctx.token_len = j.at("token_len").get<std::size_t>();
    for (const auto& s : j.at("segments")) {
        Segment seg;
        seg.lang = s.at("lang").get<std::string>();
        auto kind = parse_segment_kind(s.at("kind").get<std::string>());
        if (!kind) throw InputError("unknown segment kind " + s.at("kind").dump());
        seg.kind = *kind;
        seg.text = s.at("text").get<std::string>();
        seg.tokens = s.at("tokens").get<std::size_t>();
        seg.truncated = s.value("truncated", false);
        ctx.segments.push_back(std::move(seg));
    }
    return ctx;
}

json pair_to_json(const ArticlePair& p) {
    return {{"pair", {p.pair.id_l, p.pair.id_en}},
            {"title_en", p.title_en},
            {"title_l", p.title_l},
            {"text_en", p.text_en},
            {"text_l", p.text_l},
            {"lang_l", p.lang_l},
            {"provenance", p.provenance == Provenance::wikipedia ? "wikipedia" : "retrieved"},
            {"en_doc_id", p.en_doc_id}};
}

ArticlePair pair_from_json(const json& j) {
    ArticlePair p;
    p.pair = {j.at("pair").at(0).get<PageId>(), j.at("pair").at(1).get<PageId>()};
    p.title_en = j.at("title_en").get<std::string>();
    p.title_l = j.at("title_l").get<std::string>();
    p.text_en = j.at("text_en").get<std::string>();
    p.text_l = j.at("text_l").get<std::string>();
    p.lang_l = j.at("lang_l").get<std::string>();
    p.provenance = j.value("provenance", std::string("retrieved")) == "wikipedia" ? Provenance::wikipedia
                                                                                   : Provenance::retrieved;
    p.en_doc_id = j.value("en_doc_id", std::string{});
    return p;
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const MissingInputError*>(&e)) return 2;
    if (dynamic_cast<const ConfigError*>(&e)) return 1;
    if (dynamic_cast<const InputError*>(&e) || dynamic_cast<const TruncatedInput*>(&e)) return 2;
    return 3;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Reproducible-build convention: SOURCE_DATE_EPOCH pins the timestamp.
std::string manifest_timestamp() {
    std::time_t t = std::time(nullptr);
    if (const char* env = std::getenv("SOURCE_DATE_EPOCH"); env && *env) {
        t = static_cast<std::time_t>(std::strtoll(env, nullptr, 10));
    }
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

fs::path partial_path(const fs::path& p) { return fs::path(p.string() + ".partial"); }

// Output file written under a temporary name and renamed into place on commit.
class AtomicFile {
public:
    explicit AtomicFile(fs::path final_path) : final_(std::move(final_path)), tmp_(partial_path(final_)) {
        fs::create_directories(final_.parent_path());
        out_.open(tmp_, std::ios::binary | std::ios::trunc);
        if (!out_) throw StageError("output", "cannot create " + tmp_.string());
    }
    ~AtomicFile() {
        if (!committed_) {
            out_.close();
            std::error_code ec;
            fs::remove(tmp_, ec);
        }
    }
    std::ofstream& stream() { return out_; }
    void commit() {
        out_.close();
        if (!out_) throw StageError("output", "write failed for " + tmp_.string());
        fs::rename(tmp_, final_);
        committed_ = true;
    }

private:
    fs::path final_;
    fs::path tmp_;
    std::ofstream out_;
    bool committed_ = false;
};

// Directory built under a temporary name; replaces the old one on commit.
class AtomicDir {
public:
    explicit AtomicDir(fs::path final_path) : final_(std::move(final_path)), tmp_(partial_path(final_)) {
        fs::remove_all(tmp_);
        fs::create_directories(tmp_);
    }
    ~AtomicDir() {
        if (!committed_) {
            std::error_code ec;
            fs::remove_all(tmp_, ec);
        }
    }
    const fs::path& path() const { return tmp_; }
    void commit() {
        fs::remove_all(final_);
        fs::rename(tmp_, final_);
        committed_ = true;
    }

private:
    fs::path final_;
    fs::path tmp_;
    bool committed_ = false;
};

void merge_prefixed(Tally& into, const Tally& from, const std::string& prefix) {
    for (const auto& [k, v] : from.counts()) into.add(prefix + "." + k, v);
}

const fs::path& require_path(const std::optional<fs::path>& p, const char* field, Stage stage) {
    if (!p) {
        throw ConfigError(std::vector<ConfigDiagnostic>{
            {std::string("paths.") + field, "required by the " + std::string(to_string(stage)) + " stage"}});
    }
    return *p;
}

void require_file(const fs::path& p, const std::string& hint) {
    if (!fs::exists(p)) throw InputError("missing " + p.string() + " (" + hint + ")");
}

bool is_gzip_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    unsigned char magic[2] = {0, 0};
    in.read(reinterpret_cast<char*>(magic), 2);
    return in.gcount() == 2 && magic[0] == 0x1f && magic[1] == 0x8b;
}

std::unique_ptr<ArticleLookup> open_articles(const fs::path& path, const std::string& lang, Tally* tally) {
    for (const auto& f : list_article_files(path)) {
        if (is_gzip_file(f)) return std::make_unique<InMemoryArticles>(read_articles(path, lang, tally), tally);
    }
    return std::make_unique<IndexedArticleStore>(path, lang, tally);
}

// Runs `body(i)` for i in [0, n) under OpenMP and rethrows the first failure.
template <typename F>
void parallel_for(std::size_t n, F&& body) {
    std::exception_ptr err;
    std::mutex mu;
    const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic, 16)
    for (std::int64_t i = 0; i < count; ++i) {
        try {
            body(static_cast<std::size_t>(i));
        } catch (...) {
            std::lock_guard lock(mu);
            if (!err) err = std::current_exception();
        }
    }
    if (err) std::rethrow_exception(err);
}

// Reads contexts.jsonl in batches, parsing lines in parallel.
class ContextStream {
public:
    explicit ContextStream(const fs::path& path) : path_(path), reader_(std::make_unique<FileSource>(path)) {}

    bool next_batch(std::vector<PackedContext>& out, std::size_t max) {
        lines_.clear();
        std::string line;
        while (lines_.size() < max && reader_.getline(line)) {
            ++line_no_;
            if (trim(line).empty()) continue;
            lines_.emplace_back(line_no_, line);
        }
        out.assign(lines_.size(), PackedContext{});
        parallel_for(lines_.size(), [&](std::size_t i) {
            const auto& [no, text] = lines_[i];
            auto j = json::parse(text, nullptr, false);
            if (j.is_discarded()) {
                throw InputError(path_.string() + ":" + std::to_string(no) + ": not valid JSON");
            }
            try {
                out[i] = context_from_json(j);
            } catch (const json::exception& e) {
                throw InputError(path_.string() + ":" + std::to_string(no) + ": " + e.what());
            }
        });
        return !out.empty();
    }

private:
    fs::path path_;
    BufferedReader reader_;
    std::vector<std::pair<std::uint64_t, std::string>> lines_;
    std::uint64_t line_no_ = 0;
};

constexpr std::size_t kContextBatch = 2048;

struct StageResult {
    json counts = json::object();
    Tally tally;
};

// ---------------------------------------------------------------- align

StageResult stage_align(const PipelineConfig& cfg, const RunOptions& opts) {
    StageResult r;
    const auto& p = cfg.paths;
    const auto& f_ll = require_path(p.langlinks_l, "langlinks_l", Stage::align);
    const auto& f_pe = require_path(p.pages_en, "pages_en", Stage::align);
    const auto& f_le = require_path(p.langlinks_en, "langlinks_en", Stage::align);
    const auto& f_pl = require_path(p.pages_l, "pages_l", Stage::align);

    Tally t;
    auto links_l = read_langlinks(std::make_unique<FileSource>(f_ll), "en", &t);
    merge_prefixed(r.tally, t, "langlinks_l");
    t = {};
    auto pages_en = read_pages(std::make_unique<FileSource>(f_pe), cfg.page_columns, &t);
    merge_prefixed(r.tally, t, "pages_en");
    t = {};
    auto links_en = read_langlinks(std::make_unique<FileSource>(f_le), cfg.language_l, &t);
    merge_prefixed(r.tally, t, "langlinks_en");
    t = {};
    auto pages_l = read_pages(std::make_unique<FileSource>(f_pl), cfg.page_columns, &t);
    merge_prefixed(r.tally, t, "pages_l");

    auto pairs = build_pair_map(links_l, pages_en, links_en, pages_l, cfg.align, &r.tally);

    const fs::path out = cfg.paths.output_dir / artifact::kPairs;
    {
        const fs::path tmp = partial_path(out);
        try {
            write_pair_map(tmp, pairs);
            fs::rename(tmp, out);
        } catch (...) {
            std::error_code ec;
            fs::remove(tmp, ec);
            throw;
        }
    }

    if (opts.dump_tsv) {
        const fs::path dbg = cfg.paths.output_dir / artifact::kDebug;
        auto dump = [&](const char* name, const auto& records) {
            AtomicFile f(dbg / name);
            for (const auto& rec : records) f.stream() << to_tsv(rec) << '\n';
            f.commit();
        };
        dump("langlinks_l.tsv", links_l);
        dump("pages_en.tsv", pages_en);
        dump("langlinks_en.tsv", links_en);
        dump("pages_l.tsv", pages_l);
    }

    r.counts = {{"langlinks_l", links_l.size()},
                {"pages_en", pages_en.size()},
                {"langlinks_en", links_en.size()},
                {"pages_l", pages_l.size()},
                {"pair_count", pairs.size()}};
    return r;
}

// ---------------------------------------------------------------- retrieve

std::unique_ptr<EmbeddingProvider> make_provider(const ProviderConfig& pc) {
    if (pc.kind == "file") return std::make_unique<FileEmbeddingProvider>(*pc.cache);
    if (pc.kind == "wire") return std::make_unique<WireEmbeddingProvider>(pc.wire);
    return std::make_unique<MockEmbeddingProvider>(pc.dim, pc.seed);
}

StageResult stage_retrieve(const PipelineConfig& cfg, const RunOptions&) {
    StageResult r;
    if (!cfg.retrieval) {
        throw ConfigError(std::vector<ConfigDiagnostic>{{"retrieval", "required by the retrieve stage"}});
    }
    const auto& rs = *cfg.retrieval;
    const auto& p = cfg.paths;
    const auto& f_corpus = require_path(p.corpus, "corpus", Stage::retrieve);
    const auto& f_articles = require_path(p.articles_l, "articles_l", Stage::retrieve);
    const auto& f_ll = require_path(p.langlinks_l, "langlinks_l", Stage::retrieve);
    const auto& f_pl = require_path(p.pages_l, "pages_l", Stage::retrieve);

    Tally t;
    auto links_l = read_langlinks(std::make_unique<FileSource>(f_ll), "en", &t);
    merge_prefixed(r.tally, t, "langlinks_l");
    t = {};
    auto pages_l = read_pages(std::make_unique<FileSource>(f_pl), cfg.page_columns, &t);
    merge_prefixed(r.tally, t, "pages_l");
    const TitleMap title_map = build_title_map(links_l, pages_l);

    auto docs = read_corpus(f_corpus, &r.tally);
    auto provider = make_provider(rs.provider);

    std::vector<CandidateDoc> candidates;
    candidates.reserve(docs.size());
    if (p.corpus_embeddings) {
        auto cache = read_embedding_cache(*p.corpus_embeddings);
        std::vector<std::string> missing;
        for (const auto& d : docs) {
            auto it = cache.find(d.id);
            if (it == cache.end()) {
                missing.push_back(d.id);
                continue;
            }
            candidates.push_back({d.id, d.text, it->second});
        }
        if (!missing.empty()) {
            std::string list;
            for (std::size_t i = 0; i < missing.size() && i < 5; ++i) list += (i ? ", " : "") + missing[i];
            throw InputError(p.corpus_embeddings->string() + " lacks vectors for " + std::to_string(missing.size()) +
                             " corpus documents (" + list + (missing.size() > 5 ? ", ..." : "") + ")");
        }
    } else {
        constexpr std::size_t kEmbedBatch = 256;
        std::vector<std::string> texts;
        for (std::size_t base = 0; base < docs.size(); base += kEmbedBatch) {
            texts.clear();
            const std::size_t end = std::min(docs.size(), base + kEmbedBatch);
            for (std::size_t i = base; i < end; ++i) texts.push_back(docs[i].text);
            auto vecs = provider->embed(texts);
            if (vecs.size() != texts.size()) throw EmbeddingError("provider returned a short batch");
            for (std::size_t i = base; i < end; ++i) candidates.push_back({docs[i].id, docs[i].text, vecs[i - base]});
        }
    }
    const FlatIndex index = FlatIndex::build(candidates);
    candidates.clear();

    std::unordered_map<std::string, std::string> corpus_texts;
    for (auto& d : docs) corpus_texts.emplace(std::move(d.id), std::move(d.text));
    docs.clear();

    AtomicFile out(p.output_dir / artifact::kPseudoPairs);
    ArticleReader articles(f_articles, cfg.language_l);
    std::uint64_t articles_seen = 0;
    std::uint64_t pseudo_pairs = 0;
    constexpr std::size_t kQueryBatch = 256;
    std::vector<RawArticle> batch;
    bool more = true;
    while (more) {
        batch.clear();
        while (batch.size() < kQueryBatch) {
            auto a = articles.next();
            if (!a) {
                more = false;
                break;
            }
            batch.push_back(std::move(*a));
        }
        articles_seen += batch.size();

        std::vector<std::size_t> active;
        std::vector<std::string> queries;
        for (std::size_t i = 0; i < batch.size(); ++i) {
            auto ks = extract_keywords(batch[i], title_map, rs.params.max_keywords, &r.tally);
            if (ks.empty()) {
                r.tally.add("empty_keyword_sets");
                continue;
            }
            auto [tq, fq] = query_texts(ks);
            queries.push_back(std::move(tq));
            queries.push_back(std::move(fq));
            active.push_back(i);
        }
        if (active.empty() || index.size() == 0) continue;
        auto vecs = provider->embed(queries);
        if (vecs.size() != queries.size()) throw EmbeddingError("provider returned a short batch");

        std::vector<std::vector<RetrievalResult>> results(active.size());
        parallel_for(active.size(), [&](std::size_t k) {
            results[k] = rescore_candidates(vecs[2 * k], vecs[2 * k + 1], index, rs.params);
        });
        for (std::size_t k = 0; k < active.size(); ++k) {
            const auto& article = batch[active[k]];
            for (const auto& pair : build_augmented_pairs(article, results[k], corpus_texts, &r.tally)) {
                json j = pair_to_json(pair);
                for (const auto& res : results[k]) {
                    if (res.doc_id != pair.en_doc_id) continue;
                    j["s_title"] = res.s_title;
                    j["s_full"] = res.s_full;
                    j["s_final"] = res.s_final;
                }
                out.stream() << j.dump() << '\n';
                ++pseudo_pairs;
            }
        }
    }
    r.tally.merge(articles.tally());
    out.commit();
    r.counts = {{"corpus_docs", index.size()},
                {"articles_l", articles_seen},
                {"pseudo_pair_count", pseudo_pairs},
                {"provider", provider->name()}};
    return r;
}

// ---------------------------------------------------------------- pack

StageResult stage_pack(const PipelineConfig& cfg, const RunOptions& opts) {
    StageResult r;
    const auto& p = cfg.paths;
    const fs::path pair_file = p.pair_map ? *p.pair_map : p.output_dir / artifact::kPairs;
    require_file(pair_file, "run the align stage or set paths.pair_map");
    const auto& f_en = require_path(p.articles_en, "articles_en", Stage::pack);
    const auto& f_l = require_path(p.articles_l, "articles_l", Stage::pack);

    const auto tok = make_tokenizer(cfg.tokenizer);
    const auto pair_ids = read_pair_map(pair_file);

    AtomicFile out(p.output_dir / artifact::kContexts);
    std::optional<AtomicFile> text_out;
    if (opts.emit_text) text_out.emplace(p.output_dir / artifact::kContextText);

    std::uint64_t contexts = 0;
    std::uint64_t tokens = 0;
    std::uint64_t en_first = 0;
    std::uint64_t wiki_pairs = 0;
    std::uint64_t pseudo_pairs = 0;
    std::uint64_t truncated_segments = 0;
    const ContextSink sink = [&](PackedContext&& ctx) {
        ++contexts;
        tokens += ctx.token_len;
        if (ctx.direction == Direction::en_first) ++en_first;
        for (const auto& s : ctx.segments) truncated_segments += s.truncated ? 1 : 0;
        out.stream() << context_to_json(ctx).dump() << '\n';
        if (text_out) {
            json t = {{"pair", {ctx.pair.id_l, ctx.pair.id_en}},
                      {"seq_index", ctx.seq_index},
                      {"direction", std::string(to_string(ctx.direction))},
                      {"token_len", ctx.token_len},
                      {"text", render(ctx, *tok)}};
            text_out->stream() << t.dump() << '\n';
        }
    };

    std::vector<ArticlePair> batch;
    auto flush = [&] {
        if (batch.empty()) return;
        pack_corpus(batch, *tok, cfg.pack, sink, &r.tally);
        batch.clear();
    };

    {
        auto en = open_articles(f_en, "en", &r.tally);
        auto l = open_articles(f_l, cfg.language_l, &r.tally);
        join_articles(
            pair_ids, *en, *l, cfg.language_l,
            [&](ArticlePair&& pair) {
                ++wiki_pairs;
                batch.push_back(std::move(pair));
                if (batch.size() >= cfg.batch_pairs) flush();
            },
            &r.tally);
        flush();
    }

    if (cfg.retrieval) {
        const fs::path pseudo = p.output_dir / artifact::kPseudoPairs;
        require_file(pseudo, "run the retrieve stage");
        BufferedReader reader(std::make_unique<FileSource>(pseudo));
        std::string line;
        std::uint64_t line_no = 0;
        while (reader.getline(line)) {
            ++line_no;
            if (trim(line).empty()) continue;
            auto j = json::parse(line, nullptr, false);
            try {
                if (j.is_discarded()) throw InputError("not valid JSON");
                batch.push_back(pair_from_json(j));
            } catch (const std::exception& e) {
                throw InputError(pseudo.string() + ":" + std::to_string(line_no) + ": " + e.what());
            }
            ++pseudo_pairs;
            if (batch.size() >= cfg.batch_pairs) flush();
        }
        flush();
    }

    out.commit();
    if (text_out) text_out->commit();
    r.counts = {{"pair_count", pair_ids.size()},
                {"joined_pairs", wiki_pairs},
                {"pseudo_pairs", pseudo_pairs},
                {"context_count", contexts},
                {"context_tokens", tokens},
                {"en_first_contexts", en_first},
                {"truncated_segments", truncated_segments}};
    return r;
}

// ---------------------------------------------------------------- slide

// One output split: its slider, writer and the coverage bookkeeping that
// attributes window tokens back to languages.
struct SplitSink {
    struct Pending {
        std::uint64_t index;
        std::map<std::string, std::uint64_t> lang;
    };

    SplitSink(const fs::path& dir, const PipelineConfig& cfg, TokenId split_id)
        : writer(dir, cfg.shard_max_bytes) {
        if (cfg.slide.kind == SlideKind::optimized) {
            optimized.emplace(cfg.slide.n_budget, split_id, cfg.slide.discard_tails);
        } else {
            standard.emplace(cfg.slide.n_budget, cfg.slide.keep_final_partial);
        }
        sink = [this](WindowShard&& w) { on_window(std::move(w)); };
    }

    void push(const PackedContext& ctx, std::span<const TokenId> ids) {
        Pending p{pushed++, {}};
        for (const auto& s : ctx.segments) p.lang[s.lang] += s.tokens;
        pending.push_back(std::move(p));
        if (optimized) {
            optimized->push(ids, sink);
        } else {
            standard->push(ids, sink);
        }
    }

    void finish() {
        if (optimized) {
            optimized->finish(sink);
        } else {
            standard->finish(sink);
        }
    }

    void on_window(WindowShard&& w) {
        writer.write(w.ids);
        while (!pending.empty() && pending.front().index < w.first_context) pending.pop_front();
        while (!pending.empty() && pending.front().index <= w.last_context) {
            for (const auto& [k, v] : pending.front().lang) lang[k] += v;
            ++control;
            pending.pop_front();
        }
    }

    ShardWriter writer;
    std::optional<OptimizedSlider> optimized;
    std::optional<StandardSlider> standard;
    WindowSink sink;
    std::deque<Pending> pending;
    std::uint64_t pushed = 0;
    std::map<std::string, std::uint64_t> lang;
    std::uint64_t control = 0;
};

ShardManifest base_manifest(const PipelineConfig& cfg, const Tokenizer& tok, const std::string& split) {
    ShardManifest m;
    m.config_digest = config_digest(cfg);
    m.tokenizer_kind = tok.identity();
    m.n_budget = cfg.slide.n_budget;
    m.seed = cfg.split.seed;
    m.split = split;
    m.created_at = manifest_timestamp();
    m.slide_kind = std::string(to_string(cfg.slide.kind));
    return m;
}

StageResult stage_slide(const PipelineConfig& cfg, const RunOptions&) {
    StageResult r;
    const fs::path contexts_file = cfg.paths.output_dir / artifact::kContexts;
    require_file(contexts_file, "run the pack stage");

    std::uint64_t count = 0;
    {
        BufferedReader reader(std::make_unique<FileSource>(contexts_file));
        std::string line;
        while (reader.getline(line)) count += trim(line).empty() ? 0 : 1;
    }
    const auto split = split_validation(count, cfg.split);
    std::vector<unsigned char> is_validation(count, 0);
    for (auto i : split.validation) is_validation[i] = 1;

    const auto tok = make_tokenizer(cfg.tokenizer);
    AtomicDir dir(cfg.paths.output_dir / artifact::kWindows);
    SplitSink train(dir.path() / "train", cfg, tok->split_id());
    SplitSink validation(dir.path() / "validation", cfg, tok->split_id());

    ContextStream stream(contexts_file);
    std::vector<PackedContext> batch;
    std::vector<std::vector<TokenId>> ids;
    std::uint64_t index = 0;
    std::uint64_t tokens = 0;
    std::string buf;
    while (stream.next_batch(batch, kContextBatch)) {
        // Ids are assigned serially in file order so they do not depend on threads.
        for (const auto& ctx : batch) {
            for (const auto& s : ctx.segments) {
                buf.assign(s.text);
                buf.append(kParagraphDelimiter);
                tok->warm_up(buf);
            }
        }
        ids.assign(batch.size(), {});
        parallel_for(batch.size(), [&](std::size_t i) { ids[i] = context_ids(batch[i], *tok); });
        for (std::size_t i = 0; i < batch.size(); ++i, ++index) {
            if (index >= count) throw InputError(contexts_file.string() + " changed while sliding");
            if (ids[i].size() != batch[i].token_len) {
                r.tally.add("token_len_mismatches");
            }
            tokens += ids[i].size();
            try {
                (is_validation[index] ? validation : train).push(batch[i], ids[i]);
            } catch (const ContextViolation& e) {
                throw StageError("slide", "context " + std::to_string(index) + ": " + e.what());
            }
        }
    }
    train.finish();
    validation.finish();

    json summary = json::object();
    for (auto* s : {&train, &validation}) {
        const std::string name = s == &train ? "train" : "validation";
        auto base = base_manifest(cfg, *tok, name);
        base.per_language_tokens = s->lang;
        base.control_tokens = s->control;
        auto m = s->writer.finish(std::move(base));
        summary[name] = {{"contexts", s->pushed}, {"windows", m.window_count}, {"tokens", m.token_total}};
        if (s->optimized) r.tally.add("discarded_tail_tokens", s->optimized->discarded_tokens());
    }
    dir.commit();
    r.counts = {{"context_count", count}, {"context_tokens", tokens}, {"splits", summary}};
    return r;
}

// ---------------------------------------------------------------- stats

StageResult stage_stats(const PipelineConfig& cfg, const RunOptions&) {
    StageResult r;
    const fs::path contexts_file = cfg.paths.output_dir / artifact::kContexts;
    require_file(contexts_file, "run the pack stage");
    const auto tok = make_tokenizer(cfg.tokenizer);

    CorpusStats total;
    auto add = [](SourceStats& into, const SourceStats& from) {
        for (const auto& [k, v] : from.tokens_by_lang) into.tokens_by_lang[k] += v;
        into.control_tokens += from.control_tokens;
        into.contexts += from.contexts;
    };
    ContextStream stream(contexts_file);
    std::vector<PackedContext> batch;
    while (stream.next_batch(batch, kContextBatch)) {
        auto s = compute_stats(batch, *tok);
        add(total.wikipedia, s.wikipedia);
        add(total.retrieved, s.retrieved);
    }
    AtomicFile out(cfg.paths.output_dir / artifact::kStats);
    out.stream() << stats_to_json(total, cfg.language_l).dump(2) << '\n';
    out.commit();
    r.counts = {{"contexts_wikipedia", total.wikipedia.contexts}, {"contexts_retrieved", total.retrieved.contexts}};
    return r;
}

// ---------------------------------------------------------------- export

StageResult stage_export(const PipelineConfig& cfg, const RunOptions&) {
    StageResult r;
    const fs::path windows = cfg.paths.output_dir / artifact::kWindows;
    AtomicDir dir(cfg.paths.output_dir / artifact::kExport);
    json summary = json::object();
    for (const char* split : {"train", "validation"}) {
        const fs::path src = windows / split;
        require_file(src / kManifestFile, "run the slide stage");
        ShardReader reader(src);
        ShardWriter writer(dir.path() / split, cfg.shard_max_bytes);
        while (auto w = reader.next()) writer.write(w->ids);
        ShardManifest base = reader.manifest();
        base.shards.clear();
        base.config_digest = config_digest(cfg);
        base.created_at = manifest_timestamp();
        auto m = writer.finish(std::move(base));
        summary[split] = {{"windows", m.window_count}, {"tokens", m.token_total}, {"shards", m.shards.size()}};
    }
    dir.commit();
    r.counts = summary;
    return r;
}

StageResult dispatch(Stage s, const PipelineConfig& cfg, const RunOptions& opts) {
    switch (s) {
        case Stage::align: return stage_align(cfg, opts);
        case Stage::retrieve: return stage_retrieve(cfg, opts);
        case Stage::pack: return stage_pack(cfg, opts);
        case Stage::slide: return stage_slide(cfg, opts);
        case Stage::stats: return stage_stats(cfg, opts);
        case Stage::export_shards: return stage_export(cfg, opts);
        case Stage::all: break;
    }
    throw std::logic_error("dispatch on all");
}

json tally_json(const Tally& t) {
    json j = json::object();
    for (const auto& [k, v] : t.counts()) j[k] = v;
    return j;
}

}  // namespace

void run_stage(Stage stage, const PipelineConfig& cfg, const RunOptions& opts) {
    if (opts.workers > 0) omp_set_num_threads(opts.workers);
    fs::create_directories(cfg.paths.output_dir);
    RunReport report(cfg.paths.output_dir / artifact::kRunReport);

    std::vector<Stage> stages;
    if (stage == Stage::all) {
        const auto& p = cfg.paths;
        const bool have_dumps = p.langlinks_l && p.pages_en && p.langlinks_en && p.pages_l;
        if (have_dumps || !p.pair_map) stages.push_back(Stage::align);
        if (cfg.retrieval) stages.push_back(Stage::retrieve);
        for (Stage s : {Stage::pack, Stage::slide, Stage::stats, Stage::export_shards}) stages.push_back(s);
    } else {
        stages.push_back(stage);
    }

    report.event({{"event", "run_start"},
                  {"command", std::string(to_string(stage))},
                  {"config_digest", config_digest(cfg)},
                  {"workers", omp_get_max_threads()}});
    const auto run_t0 = Clock::now();
    std::uint64_t pairs = 0;
    std::uint64_t tokens = 0;
    for (Stage s : stages) {
        const std::string name(to_string(s));
        report.event({{"event", "stage_start"}, {"stage", name}});
        const auto t0 = Clock::now();
        StageResult res;
        try {
            res = dispatch(s, cfg, opts);
        } catch (const std::exception& e) {
            report.event({{"event", "stage_failed"},
                          {"stage", name},
                          {"error", e.what()},
                          {"exit_code", exit_code_for(e)},
                          {"seconds", seconds_since(t0)}});
            throw;
        }
        const double secs = seconds_since(t0);
        json ev = {{"event", "stage_end"},
                   {"stage", name},
                   {"seconds", secs},
                   {"counts", res.counts},
                   {"tallies", tally_json(res.tally)}};
        if (s == Stage::pack) {
            pairs = res.counts.value("joined_pairs", std::uint64_t{0}) + res.counts.value("pseudo_pairs", std::uint64_t{0});
            tokens = res.counts.value("context_tokens", std::uint64_t{0});
            const double d = secs > 0 ? secs : 1e-9;
            ev["throughput"] = {{"pairs_per_second", static_cast<double>(pairs) / d},
                                {"tokens_per_second", static_cast<double>(tokens) / d}};
        }
        report.event(std::move(ev));
    }
    const double total = seconds_since(run_t0);
    json end = {{"event", "run_end"}, {"command", std::string(to_string(stage))}, {"status", "ok"}, {"seconds", total}};
    if (pairs > 0 || tokens > 0) {
        const double d = total > 0 ? total : 1e-9;
        end["throughput"] = {{"pairs", pairs},
                             {"tokens", tokens},
                             {"pairs_per_second", static_cast<double>(pairs) / d},
                             {"tokens_per_second", static_cast<double>(tokens) / d}};
    }
    report.event(std::move(end));
}

}  // namespace xlpack
