#include "xlpack/embedding.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "xlpack/common.hpp"

namespace xlpack {

EmbeddingVector EmbeddingVector::normalized(std::vector<double> components) {
    double sq = 0.0;
    for (double x : components) sq += x * x;
    if (components.empty() || !(sq > 0.0) || !std::isfinite(sq)) {
        throw std::invalid_argument("cannot normalize an empty, zero or non-finite vector");
    }
    const double inv = 1.0 / std::sqrt(sq);
    for (double& x : components) x *= inv;
    EmbeddingVector v;
    v.v_ = std::move(components);
    return v;
}

double EmbeddingVector::dot(const EmbeddingVector& other) const {
    if (other.v_.size() != v_.size()) throw std::invalid_argument("embedding dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < v_.size(); ++i) s += v_[i] * other.v_[i];
    return s;
}

// ---------------------------------------------------------------------------

MockEmbeddingProvider::MockEmbeddingProvider(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
    if (dim_ == 0) throw std::invalid_argument("mock embedding dimension must be positive");
}

EmbeddingVector MockEmbeddingProvider::embed_one(std::string_view text) const {
    std::vector<double> acc(dim_, 0.0);
    std::string word;
    auto add_word = [&](std::string_view w) {
        const std::uint64_t h = mix64(seed_ ^ fnv1a64(w));
        for (std::size_t d = 0; d < dim_; ++d) {
            // Top 53 bits to a double in [-1, 1).
            acc[d] += static_cast<double>(mix64(h + d) >> 11) * 0x1.0p-52 - 1.0;
        }
    };
    bool any = false;
    for (std::size_t i = 0; i <= text.size(); ++i) {
        if (i == text.size() || is_space(text[i])) {
            if (!word.empty()) {
                add_word(word);
                any = true;
                word.clear();
            }
        } else {
            word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[i]))));
        }
    }
    if (!any) add_word("");
    double sq = 0.0;
    for (double x : acc) sq += x * x;
    if (!(sq > 0.0)) acc[0] = 1.0;
    return EmbeddingVector::normalized(std::move(acc));
}

std::vector<EmbeddingVector> MockEmbeddingProvider::embed(std::span<const std::string> texts) {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed_one(t));
    return out;
}

// ---------------------------------------------------------------------------

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

std::unordered_map<std::string, EmbeddingVector> read_embedding_cache(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open embedding cache " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
    std::unordered_map<std::string, EmbeddingVector> out;
    std::size_t pos = 0;
    auto need = [&](std::size_t n) {
        if (bytes.size() - pos < n) {
            throw InputError("truncated embedding cache " + path.string() + " at offset " + std::to_string(pos));
        }
    };
    while (pos < bytes.size()) {
        need(4);
        std::uint32_t id_len = get_u32(data + pos);
        pos += 4;
        need(id_len);
        std::string id(bytes.data() + pos, id_len);
        pos += id_len;
        need(4);
        std::uint32_t dim = get_u32(data + pos);
        pos += 4;
        need(static_cast<std::size_t>(dim) * 4);
        std::vector<double> v(dim);
        for (std::uint32_t d = 0; d < dim; ++d) {
            v[d] = static_cast<double>(std::bit_cast<float>(get_u32(data + pos)));
            pos += 4;
        }
        try {
            out.insert_or_assign(std::move(id), EmbeddingVector::normalized(std::move(v)));
        } catch (const std::invalid_argument&) {
            throw InputError("zero vector in embedding cache " + path.string());
        }
    }
    return out;
}

void write_embedding_cache(const std::filesystem::path& path,
                           std::span<const std::pair<std::string, EmbeddingVector>> entries) {
    std::string out;
    for (const auto& [id, vec] : entries) {
        put_u32(out, static_cast<std::uint32_t>(id.size()));
        out += id;
        put_u32(out, static_cast<std::uint32_t>(vec.dim()));
        for (double x : vec.components()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("cannot write embedding cache " + path.string());
}

FileEmbeddingProvider::FileEmbeddingProvider(const std::filesystem::path& path)
    : cache_(read_embedding_cache(path)) {}

std::vector<EmbeddingVector> FileEmbeddingProvider::embed(std::span<const std::string> texts) {
    std::vector<EmbeddingVector> out;
    std::string missing;
    for (const auto& t : texts) {
        auto it = cache_.find(t);
        if (it == cache_.end()) {
            missing += missing.empty() ? "" : ", ";
            missing += '"' + t + '"';
        } else {
            out.push_back(it->second);
        }
    }
    if (!missing.empty()) throw EmbeddingError("embedding cache has no entry for: " + missing);
    return out;
}

// ---------------------------------------------------------------------------

WireEmbeddingProvider::WireEmbeddingProvider(WireConfig cfg) : cfg_(std::move(cfg)) {
    const auto scheme = cfg_.endpoint.find("://");
    if (scheme == std::string::npos) throw std::invalid_argument("embedding endpoint needs a scheme: " + cfg_.endpoint);
    const auto slash = cfg_.endpoint.find('/', scheme + 3);
    base_ = cfg_.endpoint.substr(0, slash);
    path_ = slash == std::string::npos ? "/" : cfg_.endpoint.substr(slash);
    if (cfg_.batch_size == 0) cfg_.batch_size = 1;
}

std::vector<EmbeddingVector> WireEmbeddingProvider::embed_batch(std::span<const std::string> texts) {
    httplib::Client cli(base_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg_.timeout - secs);
    cli.set_connection_timeout(secs.count(), usecs.count());
    cli.set_read_timeout(secs.count(), usecs.count());
    cli.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    if (!cfg_.auth_token.empty()) headers.emplace("Authorization", "Bearer " + cfg_.auth_token);

    nlohmann::json req;
    req["texts"] = texts;
    ++attempts_;
    auto res = cli.Post(path_, headers, req.dump(), "application/json");
    if (!res) throw TransientEmbeddingError("request failed: " + httplib::to_string(res.error()));
    if (res->status == 429 || res->status >= 500) {
        throw TransientEmbeddingError("server returned HTTP " + std::to_string(res->status));
    }
    if (res->status != 200) throw EmbeddingError("server returned HTTP " + std::to_string(res->status));

    auto body = nlohmann::json::parse(res->body, nullptr, false);
    if (body.is_discarded() || !body.contains("vectors") || !body["vectors"].is_array()) {
        throw EmbeddingError("response is not {\"vectors\": [...]}");
    }
    const auto& vecs = body["vectors"];
    if (vecs.size() != texts.size()) {
        throw EmbeddingError("response has " + std::to_string(vecs.size()) + " vectors for " +
                             std::to_string(texts.size()) + " texts");
    }
    std::vector<EmbeddingVector> out;
    out.reserve(vecs.size());
    for (const auto& v : vecs) {
        try {
            out.push_back(EmbeddingVector::normalized(v.get<std::vector<double>>()));
        } catch (const std::exception& e) {
            throw EmbeddingError(std::string("bad vector in response: ") + e.what());
        }
    }
    return out;
}

std::vector<EmbeddingVector> WireEmbeddingProvider::embed(std::span<const std::string> texts) {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (std::size_t start = 0; start < texts.size(); start += cfg_.batch_size) {
        const std::size_t count = std::min(cfg_.batch_size, texts.size() - start);
        auto batch = texts.subspan(start, count);
        auto backoff = cfg_.initial_backoff;
        for (std::size_t attempt = 0;; ++attempt) {
            try {
                auto part = embed_batch(batch);
                std::move(part.begin(), part.end(), std::back_inserter(out));
                break;
            } catch (const TransientEmbeddingError& e) {
                if (attempt >= cfg_.max_retries) {
                    throw EmbeddingError("embedding batch [" + std::to_string(start) + ", " +
                                         std::to_string(start + count) + ") failed after " +
                                         std::to_string(attempt + 1) + " attempts: " + e.what());
                }
                std::this_thread::sleep_for(backoff);
                backoff = std::min(backoff * 2, cfg_.max_backoff);
            } catch (const EmbeddingError& e) {
                throw EmbeddingError("embedding batch [" + std::to_string(start) + ", " +
                                     std::to_string(start + count) + "): " + e.what());
            }
        }
    }
    return out;
}

}  // namespace xlpack
