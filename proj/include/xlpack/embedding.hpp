#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace xlpack {

/// Unit-length real vector. Construction always normalizes.
class EmbeddingVector {
public:
    EmbeddingVector() = default;

    /// Throws std::invalid_argument for an empty or all-zero input.
    static EmbeddingVector normalized(std::vector<double> components);

    std::span<const double> components() const { return v_; }
    std::size_t dim() const { return v_.size(); }
    double dot(const EmbeddingVector& other) const;

    bool operator==(const EmbeddingVector&) const = default;

private:
    std::vector<double> v_;
};

class EmbeddingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Failure worth retrying (network error, overload, server error).
class TransientEmbeddingError : public EmbeddingError {
public:
    using EmbeddingError::EmbeddingError;
};

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::vector<EmbeddingVector> embed(std::span<const std::string> texts) = 0;
    virtual std::string name() const = 0;
};

/// Deterministic stand-in for a real encoder: every lowercased whitespace
/// token is hashed (with the seed) to a pseudo-random direction, the
/// directions are summed and the sum normalized. Identical texts give
/// identical vectors and texts sharing words point the same way.
class MockEmbeddingProvider final : public EmbeddingProvider {
public:
    MockEmbeddingProvider(std::size_t dim, std::uint64_t seed);
    std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override;
    EmbeddingVector embed_one(std::string_view text) const;
    std::string name() const override { return "mock"; }

private:
    std::size_t dim_;
    std::uint64_t seed_;
};

/// Binary cache: repeated (u32 id length, id bytes, u32 dimension,
/// dimension x f32 components), all little-endian.
std::unordered_map<std::string, EmbeddingVector> read_embedding_cache(const std::filesystem::path& path);
void write_embedding_cache(const std::filesystem::path& path,
                           std::span<const std::pair<std::string, EmbeddingVector>> entries);

/// Looks texts up in a precomputed cache keyed by the text itself.
class FileEmbeddingProvider final : public EmbeddingProvider {
public:
    explicit FileEmbeddingProvider(const std::filesystem::path& path);
    explicit FileEmbeddingProvider(std::unordered_map<std::string, EmbeddingVector> cache)
        : cache_(std::move(cache)) {}

    /// Throws EmbeddingError listing every missing key.
    std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override;
    std::string name() const override { return "file"; }
    const std::unordered_map<std::string, EmbeddingVector>& entries() const { return cache_; }

private:
    std::unordered_map<std::string, EmbeddingVector> cache_;
};

struct WireConfig {
    std::string endpoint;  // e.g. http://127.0.0.1:8080/embed
    std::string auth_token;
    std::chrono::milliseconds timeout{30000};
    std::size_t batch_size = 64;
    std::size_t max_retries = 4;
    std::chrono::milliseconds initial_backoff{200};
    std::chrono::milliseconds max_backoff{5000};
};

/// POSTs {"texts": [...]} and expects {"vectors": [[...], ...]} back.
/// Transient failures are retried with exponential backoff up to
/// `max_retries`, after which an EmbeddingError names the failing batch.
class WireEmbeddingProvider final : public EmbeddingProvider {
public:
    explicit WireEmbeddingProvider(WireConfig cfg);
    std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override;
    std::string name() const override { return "wire"; }

    std::uint64_t attempts() const { return attempts_; }

private:
    std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts);

    WireConfig cfg_;
    std::string base_;
    std::string path_;
    std::uint64_t attempts_ = 0;
};

}  // namespace xlpack
