#include "xlpack/config.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <set>

namespace xlpack {

namespace {

std::string join_diagnostics(const std::vector<ConfigDiagnostic>& diags) {
    std::string s;
    for (const auto& d : diags) {
        if (!s.empty()) s += '\n';
        s += d.field + ": " + d.message;
    }
    return s;
}

using json = nlohmann::json;

// Walks one JSON object, recording a diagnostic for every bad or unknown field.
class Section {
public:
    Section(const json& doc, std::string name, std::vector<ConfigDiagnostic>& diags, std::set<std::string> known)
        : name_(std::move(name)), diags_(diags), known_(std::move(known)) {
        if (name_.empty()) {
            obj_ = &doc;
        } else if (auto it = doc.find(name_); it != doc.end() && !it->is_null()) {
            if (it->is_object()) {
                obj_ = &*it;
            } else {
                diags_.push_back({name_, "expected an object"});
            }
        }
        if (obj_ == nullptr) return;
        for (const auto& [k, v] : obj_->items()) {
            if (!known_.count(k)) diags_.push_back({field(k), "unknown field"});
        }
    }

    bool present() const { return obj_ != nullptr; }
    bool has(const std::string& key) const { return obj_ && obj_->contains(key) && !obj_->at(key).is_null(); }
    std::string field(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }
    void error(const std::string& key, const std::string& msg) { diags_.push_back({field(key), msg}); }
    const json* raw(const std::string& key) const { return has(key) ? &obj_->at(key) : nullptr; }

    template <typename U>
    void get_uint(const std::string& key, U& out) {
        if (!has(key)) return;
        const auto& v = obj_->at(key);
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
            error(key, "expected a non-negative integer");
            return;
        }
        out = static_cast<U>(v.get<std::uint64_t>());
    }
    void get_double(const std::string& key, double& out) {
        if (!has(key)) return;
        const auto& v = obj_->at(key);
        if (!v.is_number()) {
            error(key, "expected a number");
            return;
        }
        out = v.get<double>();
    }
    void get_bool(const std::string& key, bool& out) {
        if (!has(key)) return;
        const auto& v = obj_->at(key);
        if (!v.is_boolean()) {
            error(key, "expected true or false");
            return;
        }
        out = v.get<bool>();
    }
    void get_string(const std::string& key, std::string& out) {
        if (!has(key)) return;
        const auto& v = obj_->at(key);
        if (!v.is_string()) {
            error(key, "expected a string");
            return;
        }
        out = v.get<std::string>();
    }
    void get_path(const std::string& key, std::optional<std::filesystem::path>& out,
                  const std::filesystem::path& base) {
        std::string s;
        if (!has(key)) return;
        get_string(key, s);
        if (s.empty()) return;
        std::filesystem::path p(s);
        out = p.is_absolute() ? p : base / p;
    }

private:
    std::string name_;
    std::vector<ConfigDiagnostic>& diags_;
    std::set<std::string> known_;
    const json* obj_ = nullptr;
};

}  // namespace

ConfigError::ConfigError(std::vector<ConfigDiagnostic> diags)
    : std::runtime_error(join_diagnostics(diags)), diags_(std::move(diags)) {}

json load_config_json(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(std::vector<ConfigDiagnostic>{{"<config>", "cannot read config file " + path.string()}});
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw ConfigError(std::vector<ConfigDiagnostic>{{"<config>", "config file " + path.string() + " is not valid JSON"}});
    if (!doc.is_object()) throw ConfigError(std::vector<ConfigDiagnostic>{{"<config>", "config root must be a JSON object"}});
    return doc;
}

void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError(std::vector<ConfigDiagnostic>{{assignment, "override must look like field.path=value"}});
    }
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;

    json* node = &doc;
    std::size_t start = 0;
    for (;;) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ConfigError(std::vector<ConfigDiagnostic>{{key, "empty path component"}});
        if (!node->is_object()) throw ConfigError(std::vector<ConfigDiagnostic>{{key, "cannot descend into a non-object"}});
        if (dot == std::string::npos) {
            (*node)[part] = value;
            return;
        }
        node = &(*node)[part];
        if (node->is_null()) *node = json::object();
        start = dot + 1;
    }
}

PipelineConfig validate_config(const json& doc, const std::filesystem::path& base_dir, bool check_paths) {
    std::vector<ConfigDiagnostic> diags;
    PipelineConfig cfg;
    cfg.effective = doc;

    Section root(doc, "", diags,
                 {"language_l", "paths", "tokenizer", "pack", "slide", "retrieval", "split", "align", "export"});
    root.get_string("language_l", cfg.language_l);
    if (cfg.language_l.empty()) {
        root.error("language_l", "required: target language code");
    } else {
        for (char c : cfg.language_l) {
            if (!(std::islower(static_cast<unsigned char>(c)) || c == '-' || std::isdigit(static_cast<unsigned char>(c)))) {
                root.error("language_l", "must be a lowercase language code");
                break;
            }
        }
        if (cfg.language_l == "en") root.error("language_l", "must differ from en");
    }

    // paths
    Section paths(doc, "paths", diags,
                  {"langlinks_l", "pages_en", "langlinks_en", "pages_l", "articles_en", "articles_l", "corpus",
                   "corpus_embeddings", "pair_map", "output_dir"});
    auto& p = cfg.paths;
    paths.get_path("langlinks_l", p.langlinks_l, base_dir);
    paths.get_path("pages_en", p.pages_en, base_dir);
    paths.get_path("langlinks_en", p.langlinks_en, base_dir);
    paths.get_path("pages_l", p.pages_l, base_dir);
    paths.get_path("articles_en", p.articles_en, base_dir);
    paths.get_path("articles_l", p.articles_l, base_dir);
    paths.get_path("corpus", p.corpus, base_dir);
    paths.get_path("corpus_embeddings", p.corpus_embeddings, base_dir);
    paths.get_path("pair_map", p.pair_map, base_dir);
    std::optional<std::filesystem::path> out;
    paths.get_path("output_dir", out, base_dir);
    p.output_dir = out ? *out : base_dir / "out";

    std::vector<ConfigDiagnostic> missing;
    if (check_paths) {
        const std::pair<const char*, const std::optional<std::filesystem::path>*> inputs[] = {
            {"langlinks_l", &p.langlinks_l}, {"pages_en", &p.pages_en},   {"langlinks_en", &p.langlinks_en},
            {"pages_l", &p.pages_l},         {"articles_en", &p.articles_en}, {"articles_l", &p.articles_l},
            {"corpus", &p.corpus},           {"corpus_embeddings", &p.corpus_embeddings}, {"pair_map", &p.pair_map}};
        for (const auto& [name, path] : inputs) {
            if (*path && !std::filesystem::exists(**path)) {
                missing.push_back({std::string("paths.") + name, "does not exist: " + (*path)->string()});
            }
        }
    }

    // tokenizer
    Section tok(doc, "tokenizer", diags, {"kind", "vocab_source", "split_token_text", "split_token_id"});
    std::string kind = "whitespace";
    tok.get_string("kind", kind);
    if (auto k = parse_tokenizer_kind(kind)) {
        cfg.tokenizer.kind = *k;
    } else {
        tok.error("kind", "expected whitespace, byte or external");
    }
    tok.get_path("vocab_source", cfg.tokenizer.vocab_source, base_dir);
    tok.get_string("split_token_text", cfg.tokenizer.split_token_text);
    tok.get_uint("split_token_id", cfg.tokenizer.split_token_id);
    if (cfg.tokenizer.split_token_text.empty()) tok.error("split_token_text", "must not be empty");
    if (cfg.tokenizer.kind == TokenizerKind::external) {
        if (!cfg.tokenizer.vocab_source) {
            tok.error("vocab_source", "required for the external tokenizer");
        } else if (check_paths && !std::filesystem::exists(*cfg.tokenizer.vocab_source)) {
            missing.push_back({"tokenizer.vocab_source", "does not exist: " + cfg.tokenizer.vocab_source->string()});
        }
    }
    if (cfg.tokenizer.kind == TokenizerKind::byte && cfg.tokenizer.split_token_id >= 1 &&
        cfg.tokenizer.split_token_id <= 256) {
        tok.error("split_token_id", "collides with byte ids 1..256");
    }

    // pack
    Section pack(doc, "pack", diags,
                 {"n_budget", "direction_policy", "mix_ratio", "seed", "repeat_titles", "truncate_oversize", "layout"});
    pack.get_uint("n_budget", cfg.pack.n_budget);
    if (cfg.pack.n_budget < 4) pack.error("n_budget", "must be at least 4");
    std::string policy = "en_first";
    pack.get_string("direction_policy", policy);
    if (auto d = parse_direction_policy(policy)) {
        cfg.pack.direction_policy = *d;
    } else {
        pack.error("direction_policy", "expected en_first, l_first or mix");
    }
    if (const json* r = pack.raw("mix_ratio")) {
        bool ok = false;
        if (r->is_string()) {
            const auto s = r->get<std::string>();
            const auto colon = s.find(':');
            if (colon != std::string::npos) {
                try {
                    std::size_t used_a = 0;
                    std::size_t used_b = 0;
                    const std::string a = s.substr(0, colon);
                    const std::string b = s.substr(colon + 1);
                    cfg.pack.mix_ratio.en_first = std::stoull(a, &used_a);
                    cfg.pack.mix_ratio.l_first = std::stoull(b, &used_b);
                    ok = used_a == a.size() && used_b == b.size();
                } catch (const std::exception&) {
                    ok = false;
                }
            }
        } else if (r->is_array() && r->size() == 2 && (*r)[0].is_number_unsigned() && (*r)[1].is_number_unsigned()) {
            cfg.pack.mix_ratio = {(*r)[0].get<std::uint64_t>(), (*r)[1].get<std::uint64_t>()};
            ok = true;
        }
        if (!ok || cfg.pack.mix_ratio.en_first + cfg.pack.mix_ratio.l_first == 0) {
            pack.error("mix_ratio", "expected \"a:b\" or [a, b] with a + b > 0");
        }
    }
    pack.get_uint("seed", cfg.pack.seed);
    pack.get_bool("repeat_titles", cfg.pack.repeat_titles);
    pack.get_bool("truncate_oversize", cfg.pack.truncate_oversize);
    std::string layout = "cross_lingual";
    pack.get_string("layout", layout);
    if (auto l = parse_layout(layout)) {
        cfg.pack.layout = *l;
    } else {
        pack.error("layout", "expected cross_lingual or monolingual");
    }

    // slide
    Section slide(doc, "slide", diags, {"kind", "n_budget", "keep_final_partial", "discard_tails"});
    std::string skind = "optimized";
    slide.get_string("kind", skind);
    if (auto k = parse_slide_kind(skind)) {
        cfg.slide.kind = *k;
    } else {
        slide.error("kind", "expected optimized or standard");
    }
    cfg.slide.n_budget = cfg.pack.n_budget;
    slide.get_uint("n_budget", cfg.slide.n_budget);
    slide.get_bool("keep_final_partial", cfg.slide.keep_final_partial);
    slide.get_bool("discard_tails", cfg.slide.discard_tails);
    if (cfg.slide.n_budget != cfg.pack.n_budget) {
        diags.push_back({"pack.n_budget, slide.n_budget",
                         "window lengths differ (" + std::to_string(cfg.pack.n_budget) + " vs " +
                             std::to_string(cfg.slide.n_budget) + ")"});
    }

    // retrieval
    Section ret(doc, "retrieval", diags, {"threshold", "max_results", "candidate_pool_k", "max_keywords", "provider"});
    if (ret.present()) {
        RetrievalSettings rs;
        ret.get_double("threshold", rs.params.threshold);
        if (!(rs.params.threshold >= 0.0 && rs.params.threshold <= 1.0)) ret.error("threshold", "must be within [0, 1]");
        ret.get_uint("max_results", rs.params.max_results);
        if (rs.params.max_results < 1) ret.error("max_results", "must be at least 1");
        ret.get_uint("candidate_pool_k", rs.params.candidate_pool_k);
        if (rs.params.candidate_pool_k < 1) ret.error("candidate_pool_k", "must be at least 1");
        ret.get_uint("max_keywords", rs.params.max_keywords);

        Section prov(ret.raw("provider") ? *ret.raw("provider") : json::object(), "", diags,
                     {"kind", "dim", "seed", "cache", "endpoint", "auth_token", "timeout_ms", "batch_size",
                      "max_retries", "initial_backoff_ms", "max_backoff_ms"});
        auto& pc = rs.provider;
        prov.get_string("kind", pc.kind);
        prov.get_uint("dim", pc.dim);
        prov.get_uint("seed", pc.seed);
        prov.get_path("cache", pc.cache, base_dir);
        prov.get_string("endpoint", pc.wire.endpoint);
        prov.get_string("auth_token", pc.wire.auth_token);
        std::uint64_t ms = static_cast<std::uint64_t>(pc.wire.timeout.count());
        prov.get_uint("timeout_ms", ms);
        pc.wire.timeout = std::chrono::milliseconds(ms);
        prov.get_uint("batch_size", pc.wire.batch_size);
        prov.get_uint("max_retries", pc.wire.max_retries);
        ms = static_cast<std::uint64_t>(pc.wire.initial_backoff.count());
        prov.get_uint("initial_backoff_ms", ms);
        pc.wire.initial_backoff = std::chrono::milliseconds(ms);
        ms = static_cast<std::uint64_t>(pc.wire.max_backoff.count());
        prov.get_uint("max_backoff_ms", ms);
        pc.wire.max_backoff = std::chrono::milliseconds(ms);
        if (pc.kind == "mock") {
            if (pc.dim == 0) diags.push_back({"retrieval.provider.dim", "must be positive"});
        } else if (pc.kind == "file") {
            if (!pc.cache) {
                diags.push_back({"retrieval.provider.cache", "required for the file provider"});
            } else if (check_paths && !std::filesystem::exists(*pc.cache)) {
                missing.push_back({"retrieval.provider.cache", "does not exist: " + pc.cache->string()});
            }
        } else if (pc.kind == "wire") {
            if (pc.wire.endpoint.find("://") == std::string::npos) {
                diags.push_back({"retrieval.provider.endpoint", "required for the wire provider (scheme://host[:port]/path)"});
            }
        } else {
            diags.push_back({"retrieval.provider.kind", "expected mock, file or wire"});
        }
        cfg.retrieval = rs;
    }

    // split
    Section split(doc, "split", diags, {"validation_fraction", "seed"});
    if (const json* f = split.raw("validation_fraction")) {
        std::optional<Fraction> fr;
        if (f->is_string()) fr = parse_fraction(f->get<std::string>());
        if (f->is_number()) fr = parse_fraction(f->dump());
        if (!fr) {
            split.error("validation_fraction", "expected a number or \"a/b\"");
        } else if (fr->num >= fr->den) {
            split.error("validation_fraction", "must be within [0, 1)");
        } else {
            cfg.split.validation_fraction = *fr;
        }
    }
    split.get_uint("seed", cfg.split.seed);

    // align
    Section align(doc, "align", diags,
                  {"drop_blank", "require_article_namespace", "drop_redirects", "page_columns"});
    align.get_bool("drop_blank", cfg.align.drop_blank);
    align.get_bool("require_article_namespace", cfg.align.require_article_namespace);
    align.get_bool("drop_redirects", cfg.align.drop_redirects);
    if (const json* pcols = align.raw("page_columns")) {
        Section cols(*pcols, "", diags, {"id", "namespace", "title", "is_redirect"});
        cols.get_uint("id", cfg.page_columns.id);
        cols.get_uint("namespace", cfg.page_columns.namespace_id);
        cols.get_uint("title", cfg.page_columns.title);
        cols.get_uint("is_redirect", cfg.page_columns.is_redirect);
    }

    Section exp(doc, "export", diags, {"shard_max_bytes", "batch_pairs"});
    exp.get_uint("shard_max_bytes", cfg.shard_max_bytes);
    if (cfg.shard_max_bytes < 8) exp.error("shard_max_bytes", "must be at least 8");
    exp.get_uint("batch_pairs", cfg.batch_pairs);
    if (cfg.batch_pairs == 0) exp.error("batch_pairs", "must be positive");

    if (!diags.empty()) {
        diags.insert(diags.end(), missing.begin(), missing.end());
        throw ConfigError(std::move(diags));
    }
    if (!missing.empty()) throw MissingInputError(std::move(missing));
    return cfg;
}

std::string config_digest(const PipelineConfig& cfg) {
    json canon;
    canon["language_l"] = cfg.language_l;
    canon["tokenizer"] = {{"kind", to_string(cfg.tokenizer.kind)},
                          {"split_token_text", cfg.tokenizer.split_token_text},
                          {"split_token_id", cfg.tokenizer.split_token_id}};
    canon["pack"] = {{"n_budget", cfg.pack.n_budget},
                     {"direction_policy", to_string(cfg.pack.direction_policy)},
                     {"mix_ratio", {cfg.pack.mix_ratio.en_first, cfg.pack.mix_ratio.l_first}},
                     {"seed", cfg.pack.seed},
                     {"repeat_titles", cfg.pack.repeat_titles},
                     {"truncate_oversize", cfg.pack.truncate_oversize},
                     {"layout", to_string(cfg.pack.layout)}};
    canon["slide"] = {{"kind", to_string(cfg.slide.kind)},
                      {"n_budget", cfg.slide.n_budget},
                      {"keep_final_partial", cfg.slide.keep_final_partial},
                      {"discard_tails", cfg.slide.discard_tails}};
    canon["split"] = {{"validation_fraction", cfg.split.validation_fraction.str()}, {"seed", cfg.split.seed}};
    canon["align"] = {{"drop_blank", cfg.align.drop_blank},
                      {"require_article_namespace", cfg.align.require_article_namespace},
                      {"drop_redirects", cfg.align.drop_redirects},
                      {"page_columns",
                       {cfg.page_columns.id, cfg.page_columns.namespace_id, cfg.page_columns.title,
                        cfg.page_columns.is_redirect}}};
    if (cfg.retrieval) {
        const auto& r = *cfg.retrieval;
        canon["retrieval"] = {{"threshold", r.params.threshold},
                              {"max_results", r.params.max_results},
                              {"candidate_pool_k", r.params.candidate_pool_k},
                              {"max_keywords", r.params.max_keywords},
                              {"provider", {{"kind", r.provider.kind}, {"dim", r.provider.dim}, {"seed", r.provider.seed}}}};
    }
    const std::string text = canon.dump();
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(text)));
    return buf;
}

}  // namespace xlpack
