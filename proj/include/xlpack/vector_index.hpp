#pragma once

#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "xlpack/embedding.hpp"

namespace xlpack {

struct CandidateDoc {
    std::string doc_id;
    std::string text;
    EmbeddingVector vector;
};

struct SearchHit {
    std::string doc_id;
    double score = 0.0;

    bool operator==(const SearchHit&) const = default;
};

/// Descending score, ties by ascending doc id.
inline bool hit_before(const SearchHit& a, const SearchHit& b) {
    return a.score > b.score || (a.score == b.score && a.doc_id < b.doc_id);
}

/// Exact inner-product index over unit vectors stored row-major.
/// Immutable once built; concurrent searches are safe.
class FlatIndex {
public:
    FlatIndex() = default;

    /// Throws std::invalid_argument naming the doc id on a dimension mismatch
    /// or a duplicate id.
    void add(const std::string& doc_id, const EmbeddingVector& v);
    static FlatIndex build(std::span<const CandidateDoc> docs);

    /// Exact top-k, rows scanned in parallel with per-thread heaps.
    std::vector<SearchHit> search(const EmbeddingVector& query, std::size_t k) const;
    /// Reference: score every row, sort, truncate.
    std::vector<SearchHit> search_serial(const EmbeddingVector& query, std::size_t k) const;

    /// Inner product of the query with one stored document.
    std::optional<double> score(const std::string& doc_id, const EmbeddingVector& query) const;

    std::size_t size() const { return ids_.size(); }
    std::size_t dim() const { return dim_; }

private:
    double row_dot(std::size_t row, std::span<const double> q) const;
    void check_query(const EmbeddingVector& q) const;

    std::size_t dim_ = 0;
    std::vector<double> data_;
    std::vector<std::string> ids_;
    std::unordered_map<std::string, std::size_t> rows_;
};

}  // namespace xlpack
