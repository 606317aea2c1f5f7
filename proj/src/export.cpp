#include "xlpack/export.hpp"

#include <omp.h>

#include <charconv>
#include <cstdio>
#include <numeric>
#include <random>

namespace xlpack {

std::optional<Fraction> parse_fraction(std::string_view text) {
    text = trim(text);
    auto parse_u64 = [](std::string_view s, std::uint64_t& out) {
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
        return !s.empty() && ec == std::errc() && p == s.data() + s.size();
    };
    Fraction f;
    if (auto slash = text.find('/'); slash != std::string_view::npos) {
        if (!parse_u64(trim(text.substr(0, slash)), f.num) || !parse_u64(trim(text.substr(slash + 1)), f.den))
            return std::nullopt;
    } else {
        auto dot = text.find('.');
        std::string digits(text.substr(0, dot));
        std::string_view frac = dot == std::string_view::npos ? std::string_view{} : text.substr(dot + 1);
        if (frac.size() > 18) return std::nullopt;
        digits += frac;
        if (digits.empty() || !parse_u64(digits, f.num)) return std::nullopt;
        f.den = 1;
        for (std::size_t i = 0; i < frac.size(); ++i) f.den *= 10;
        const auto g = std::gcd(f.num, f.den);
        if (g > 1) {
            f.num /= g;
            f.den /= g;
        }
    }
    if (f.den == 0) return std::nullopt;
    return f;
}

SplitIndices split_validation(std::size_t count, const SplitConfig& cfg) {
    const auto& fr = cfg.validation_fraction;
    const auto n_val = static_cast<std::size_t>(static_cast<unsigned __int128>(count) * fr.num / fr.den);

    std::vector<std::size_t> perm(count);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    // mt19937_64 output is fixed by the standard; the bounded draw below is
    // ours, so the permutation is the same on every platform.
    std::mt19937_64 rng(cfg.seed);
    for (std::size_t i = count; i > 1; --i) {
        const std::uint64_t bound = i;
        const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
        std::uint64_t r;
        do {
            r = rng();
        } while (r >= limit);
        std::swap(perm[i - 1], perm[static_cast<std::size_t>(r % bound)]);
    }

    std::vector<char> is_val(count, 0);
    for (std::size_t k = 0; k < n_val; ++k) is_val[perm[k]] = 1;
    SplitIndices out;
    out.validation.reserve(n_val);
    out.train.reserve(count - n_val);
    for (std::size_t i = 0; i < count; ++i) (is_val[i] ? out.validation : out.train).push_back(i);
    return out;
}

// ---------------------------------------------------------------------------

nlohmann::json ShardManifest::to_json() const {
    nlohmann::json j;
    j["config_digest"] = config_digest;
    j["tokenizer_kind"] = tokenizer_kind;
    j["n_budget"] = n_budget;
    j["window_count"] = window_count;
    j["token_total"] = token_total;
    j["per_language_tokens"] = per_language_tokens;
    j["control_tokens"] = control_tokens;
    j["seed"] = seed;
    j["split"] = split;
    j["created_at"] = created_at;
    j["slide_kind"] = slide_kind;
    j["complete"] = complete;
    auto& arr = j["shards"] = nlohmann::json::array();
    for (const auto& s : shards) {
        arr.push_back({{"file", s.file}, {"windows", s.windows}, {"tokens", s.tokens}, {"bytes", s.bytes}});
    }
    return j;
}

ShardManifest ShardManifest::from_json(const nlohmann::json& j) {
    ShardManifest m;
    m.config_digest = j.at("config_digest").get<std::string>();
    m.tokenizer_kind = j.at("tokenizer_kind").get<std::string>();
    m.n_budget = j.at("n_budget").get<std::size_t>();
    m.window_count = j.at("window_count").get<std::uint64_t>();
    m.token_total = j.at("token_total").get<std::uint64_t>();
    m.per_language_tokens = j.at("per_language_tokens").get<std::map<std::string, std::uint64_t>>();
    m.control_tokens = j.value("control_tokens", std::uint64_t{0});
    m.seed = j.at("seed").get<std::uint64_t>();
    m.split = j.at("split").get<std::string>();
    m.created_at = j.value("created_at", std::string{});
    m.slide_kind = j.value("slide_kind", std::string{});
    m.complete = j.value("complete", false);
    for (const auto& s : j.at("shards")) {
        m.shards.push_back({s.at("file").get<std::string>(), s.at("windows").get<std::uint64_t>(),
                            s.at("tokens").get<std::uint64_t>(), s.at("bytes").get<std::uint64_t>()});
    }
    return m;
}

std::string shard_file_name(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "windows-%05zu.bin", index);
    return buf;
}

void encode_record(std::span<const TokenId> ids, std::string& out) {
    auto put = [&out](std::uint32_t v) {
        char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
        out.append(b, 4);
    };
    put(static_cast<std::uint32_t>(ids.size()));
    for (TokenId id : ids) put(id);
}

ShardWriter::ShardWriter(std::filesystem::path dir, std::uint64_t shard_max_bytes)
    : dir_(std::move(dir)), max_bytes_(shard_max_bytes) {
    std::filesystem::create_directories(dir_);
    // Stale shards from an earlier run would otherwise survive next to ours.
    for (std::size_t i = 0; std::filesystem::exists(dir_ / shard_file_name(i)); ++i) {
        std::filesystem::remove(dir_ / shard_file_name(i));
    }
    std::filesystem::remove(dir_ / kManifestFile);
}

ShardWriter::~ShardWriter() {
    if (!finished_) fail_current();
}

void ShardWriter::open_next() {
    current_path_ = dir_ / shard_file_name(files_.size());
    out_.open(current_path_, std::ios::binary | std::ios::trunc);
    if (!out_) throw std::runtime_error("cannot create shard " + current_path_.string());
    files_.push_back({current_path_.filename().string(), 0, 0, 0});
}

void ShardWriter::close_current() {
    if (!out_.is_open()) return;
    out_.flush();
    out_.close();
    if (!out_) {
        fail_current();
        throw std::runtime_error("failed writing shard " + current_path_.string());
    }
}

void ShardWriter::fail_current() {
    if (out_.is_open()) out_.close();
    if (!current_path_.empty()) {
        std::error_code ec;
        std::filesystem::remove(current_path_, ec);
    }
}

void ShardWriter::write(std::span<const TokenId> ids) {
    scratch_.clear();
    encode_record(ids, scratch_);
    if (!out_.is_open() || (files_.back().bytes > 0 && files_.back().bytes + scratch_.size() > max_bytes_)) {
        close_current();
        open_next();
    }
    out_.write(scratch_.data(), static_cast<std::streamsize>(scratch_.size()));
    if (!out_) {
        fail_current();
        throw std::runtime_error("failed writing shard " + current_path_.string());
    }
    auto& f = files_.back();
    f.windows += 1;
    f.tokens += ids.size();
    f.bytes += scratch_.size();
}

ShardManifest ShardWriter::finish(ShardManifest base) {
    close_current();
    finished_ = true;
    base.shards = files_;
    base.window_count = 0;
    base.token_total = 0;
    for (const auto& f : files_) {
        base.window_count += f.windows;
        base.token_total += f.tokens;
    }
    base.complete = true;
    const auto path = dir_ / kManifestFile;
    std::ofstream m(path, std::ios::binary | std::ios::trunc);
    m << base.to_json().dump(2) << '\n';
    m.close();
    if (!m) throw std::runtime_error("cannot write manifest " + path.string());
    return base;
}

ShardManifest write_shards(std::span<const WindowShard> windows, const std::filesystem::path& dir,
                           std::uint64_t shard_max_bytes, ShardManifest base) {
    ShardWriter writer(dir, shard_max_bytes);
    for (const auto& w : windows) writer.write(w.ids);
    return writer.finish(std::move(base));
}

ShardManifest read_manifest(const std::filesystem::path& dir) {
    const auto path = dir / kManifestFile;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("missing manifest " + path.string());
    auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw InputError("unparseable manifest " + path.string());
    try {
        return ShardManifest::from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw InputError("malformed manifest " + path.string() + ": " + e.what());
    }
}

ShardReader::ShardReader(const std::filesystem::path& dir) : dir_(dir), manifest_(read_manifest(dir)) {}

void ShardReader::fail(const std::string& what) const {
    throw InputError(current_ + " at offset " + std::to_string(offset_) + ": " + what);
}

bool ShardReader::open_next_file() {
    if (file_index_ == manifest_.shards.size()) return false;
    current_ = (dir_ / manifest_.shards[file_index_].file).string();
    in_ = std::ifstream(current_, std::ios::binary);
    if (!in_) throw InputError("missing shard file " + current_);
    offset_ = 0;
    file_windows_ = 0;
    file_tokens_ = 0;
    open_ = true;
    return true;
}

std::optional<WindowShard> ShardReader::next() {
    for (;;) {
        if (!open_ && !open_next_file()) {
            if (windows_ != manifest_.window_count || tokens_ != manifest_.token_total) {
                throw InputError("shards in " + dir_.string() + " hold " + std::to_string(windows_) + " windows / " +
                                 std::to_string(tokens_) + " tokens, manifest says " +
                                 std::to_string(manifest_.window_count) + " / " +
                                 std::to_string(manifest_.token_total));
            }
            return std::nullopt;
        }
        unsigned char head[4];
        in_.read(reinterpret_cast<char*>(head), 4);
        const auto got = static_cast<std::size_t>(in_.gcount());
        if (got == 0) {
            const auto& info = manifest_.shards[file_index_];
            if (file_windows_ != info.windows || file_tokens_ != info.tokens) {
                fail("file holds " + std::to_string(file_windows_) + " windows, manifest says " +
                     std::to_string(info.windows));
            }
            open_ = false;
            ++file_index_;
            continue;
        }
        if (got < 4) fail("truncated record header");
        const std::uint32_t count = head[0] | (head[1] << 8) | (head[2] << 16) | (static_cast<std::uint32_t>(head[3]) << 24);
        std::vector<unsigned char> body(static_cast<std::size_t>(count) * 4);
        in_.read(reinterpret_cast<char*>(body.data()), static_cast<std::streamsize>(body.size()));
        if (static_cast<std::size_t>(in_.gcount()) != body.size()) fail("truncated record body");
        WindowShard w;
        w.ids.resize(count);
        for (std::uint32_t i = 0; i < count; ++i) {
            const unsigned char* p = body.data() + 4 * i;
            w.ids[i] = p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
        }
        w.window_index = windows_;
        offset_ += 4 + body.size();
        ++file_windows_;
        file_tokens_ += count;
        ++windows_;
        tokens_ += count;
        return w;
    }
}

std::vector<WindowShard> read_shards(const std::filesystem::path& dir) {
    ShardReader reader(dir);
    std::vector<WindowShard> out;
    while (auto w = reader.next()) out.push_back(std::move(*w));
    return out;
}

// ---------------------------------------------------------------------------

namespace {

void count_context(const PackedContext& ctx, const Tokenizer& tok, SourceStats& s, std::string& buf) {
    for (const auto& seg : ctx.segments) {
        buf.assign(seg.text);
        buf.append(kParagraphDelimiter);
        s.tokens_by_lang[seg.lang] += tok.count(buf);
    }
    s.control_tokens += 1;
    s.contexts += 1;
}

void merge_into(SourceStats& dst, const SourceStats& src) {
    for (const auto& [lang, n] : src.tokens_by_lang) dst.tokens_by_lang[lang] += n;
    dst.control_tokens += src.control_tokens;
    dst.contexts += src.contexts;
}

}  // namespace

CorpusStats compute_stats_serial(std::span<const PackedContext> contexts, const Tokenizer& tokenizer) {
    CorpusStats stats;
    std::string buf;
    for (const auto& ctx : contexts) {
        count_context(ctx, tokenizer, ctx.provenance == Provenance::wikipedia ? stats.wikipedia : stats.retrieved,
                      buf);
    }
    return stats;
}

CorpusStats compute_stats(std::span<const PackedContext> contexts, const Tokenizer& tokenizer) {
    std::vector<CorpusStats> partial(static_cast<std::size_t>(omp_get_max_threads()));
    const auto n = static_cast<std::int64_t>(contexts.size());
#pragma omp parallel
    {
        CorpusStats& local = partial[static_cast<std::size_t>(omp_get_thread_num())];
        std::string buf;
#pragma omp for schedule(static)
        for (std::int64_t k = 0; k < n; ++k) {
            const auto& ctx = contexts[static_cast<std::size_t>(k)];
            count_context(ctx, tokenizer, ctx.provenance == Provenance::wikipedia ? local.wikipedia : local.retrieved,
                          buf);
        }
    }
    CorpusStats total;
    for (const auto& p : partial) {
        merge_into(total.wikipedia, p.wikipedia);
        merge_into(total.retrieved, p.retrieved);
    }
    return total;
}

CorpusStats compute_pair_stats(std::span<const ArticlePair> pairs, const Tokenizer& tokenizer) {
    CorpusStats stats;
    for (const auto& p : pairs) {
        auto& s = p.provenance == Provenance::wikipedia ? stats.wikipedia : stats.retrieved;
        for (const auto& art : {paragraphize(p.title_en, p.text_en, "en", tokenizer),
                                paragraphize(p.title_l, p.text_l, p.lang_l, tokenizer)}) {
            std::uint64_t total = art.title_tokens;
            for (const auto& para : art.paragraphs) total += para.tokens;
            s.tokens_by_lang[art.lang] += total;
        }
        s.contexts += 1;
    }
    return stats;
}

std::string format_token_count(std::uint64_t n) {
    char buf[32];
    if (n >= 1'000'000'000ULL) {
        std::snprintf(buf, sizeof buf, "%.2fB", static_cast<double>(n) / 1e9);
    } else if (n >= 1'000'000ULL) {
        std::snprintf(buf, sizeof buf, "%.2fM", static_cast<double>(n) / 1e6);
    } else if (n >= 1'000ULL) {
        std::snprintf(buf, sizeof buf, "%.2fK", static_cast<double>(n) / 1e3);
    } else {
        std::snprintf(buf, sizeof buf, "%llu", static_cast<unsigned long long>(n));
    }
    return buf;
}

nlohmann::json stats_to_json(const CorpusStats& stats, const std::string& lang_l) {
    nlohmann::json j;
    j["language_l"] = lang_l;
    auto& rows = j["rows"] = nlohmann::json::array();
    auto add_source = [&](const char* source, const SourceStats& s) {
        for (const auto& [label, code] : {std::pair<std::string, std::string>{"en", "en"}, {"L", lang_l}}) {
            auto it = s.tokens_by_lang.find(code);
            const std::uint64_t n = it == s.tokens_by_lang.end() ? 0 : it->second;
            rows.push_back({{"source", source},
                            {"language", label},
                            {"lang_code", code},
                            {"tokens", n},
                            {"display", format_token_count(n)}});
        }
        j["control_tokens"][source] = s.control_tokens;
        j["contexts"][source] = s.contexts;
    };
    add_source("W", stats.wikipedia);
    add_source("F", stats.retrieved);
    return j;
}

}  // namespace xlpack
