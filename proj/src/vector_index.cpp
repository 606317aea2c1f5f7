#include "xlpack/vector_index.hpp"

#include <omp.h>

#include <algorithm>
#include <numeric>
#include <queue>

namespace xlpack {

void FlatIndex::add(const std::string& doc_id, const EmbeddingVector& v) {
    if (ids_.empty() && dim_ == 0) dim_ = v.dim();
    if (v.dim() != dim_) {
        throw std::invalid_argument("document " + doc_id + " has dimension " + std::to_string(v.dim()) +
                                    ", index has " + std::to_string(dim_));
    }
    if (!rows_.emplace(doc_id, ids_.size()).second) {
        throw std::invalid_argument("duplicate document id " + doc_id);
    }
    ids_.push_back(doc_id);
    auto c = v.components();
    data_.insert(data_.end(), c.begin(), c.end());
}

FlatIndex FlatIndex::build(std::span<const CandidateDoc> docs) {
    FlatIndex index;
    for (const auto& d : docs) index.add(d.doc_id, d.vector);
    return index;
}

double FlatIndex::row_dot(std::size_t row, std::span<const double> q) const {
    const double* r = data_.data() + row * dim_;
    double s = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) s += r[i] * q[i];
    return s;
}

void FlatIndex::check_query(const EmbeddingVector& q) const {
    if (!ids_.empty() && q.dim() != dim_) {
        throw std::invalid_argument("query dimension " + std::to_string(q.dim()) + " does not match index dimension " +
                                    std::to_string(dim_));
    }
}

std::vector<SearchHit> FlatIndex::search_serial(const EmbeddingVector& query, std::size_t k) const {
    check_query(query);
    std::vector<SearchHit> all;
    all.reserve(ids_.size());
    for (std::size_t r = 0; r < ids_.size(); ++r) all.push_back({ids_[r], row_dot(r, query.components())});
    std::sort(all.begin(), all.end(), hit_before);
    if (all.size() > k) all.resize(k);
    return all;
}

std::vector<SearchHit> FlatIndex::search(const EmbeddingVector& query, std::size_t k) const {
    check_query(query);
    if (k == 0 || ids_.empty()) return {};
    const auto q = query.components();

    struct Entry {
        double score;
        std::size_t row;
    };
    // With `better` as the ordering, the heap top is the worst retained entry.
    auto better = [this](const Entry& a, const Entry& b) {
        return a.score > b.score || (a.score == b.score && ids_[a.row] < ids_[b.row]);
    };
    std::vector<Entry> merged;
    const auto n = static_cast<std::int64_t>(ids_.size());
#pragma omp parallel
    {
        std::priority_queue<Entry, std::vector<Entry>, decltype(better)> heap(better);
#pragma omp for schedule(static) nowait
        for (std::int64_t r = 0; r < n; ++r) {
            Entry e{row_dot(static_cast<std::size_t>(r), q), static_cast<std::size_t>(r)};
            if (heap.size() < k) {
                heap.push(e);
            } else if (better(e, heap.top())) {
                heap.pop();
                heap.push(e);
            }
        }
#pragma omp critical(xlpack_topk_merge)
        while (!heap.empty()) {
            merged.push_back(heap.top());
            heap.pop();
        }
    }
    std::sort(merged.begin(), merged.end(), better);
    if (merged.size() > k) merged.resize(k);
    std::vector<SearchHit> out;
    out.reserve(merged.size());
    for (const auto& e : merged) out.push_back({ids_[e.row], e.score});
    return out;
}

std::optional<double> FlatIndex::score(const std::string& doc_id, const EmbeddingVector& query) const {
    check_query(query);
    auto it = rows_.find(doc_id);
    if (it == rows_.end()) return std::nullopt;
    return row_dot(it->second, query.components());
}

}  // namespace xlpack
