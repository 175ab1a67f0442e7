#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <queue>
#include <span>
#include <vector>

namespace pulseaudit {

/// Static KD-tree over row-major points under the max-norm (Chebyshev)
/// metric: k-nearest-neighbour radii and strict range counts.
class ChebyshevTree {
public:
    ChebyshevTree(std::span<const double> points, std::size_t dim, std::size_t leaf_size = 16)
        : pts_(points.begin(), points.end()), dim_(dim), leaf_size_(std::max<std::size_t>(1, leaf_size)) {
        n_ = dim_ == 0 ? 0 : pts_.size() / dim_;
        idx_.resize(n_);
        std::iota(idx_.begin(), idx_.end(), std::size_t{0});
        if (n_ > 0) build(0, n_);
        pos_.resize(n_);
        for (std::size_t t = 0; t < n_; ++t) pos_[idx_[t]] = t;
    }

    std::size_t size() const { return n_; }
    std::size_t dim() const { return dim_; }
    const double* point(std::size_t i) const { return pts_.data() + i * dim_; }

    /// Distance from point `self` to its k-th nearest other point.
    double kth_neighbor_distance(std::size_t self, std::size_t k) const {
        std::priority_queue<double> heap;  // k smallest distances seen
        knn(0, point(self), self, k, heap);
        return heap.size() < k ? std::numeric_limits<double>::infinity() : heap.top();
    }

    /// Number of points other than `self` strictly closer than r.
    std::size_t count_within(std::size_t self, double r) const { return count(0, point(self), self, r); }

private:
    struct Node {
        std::size_t begin, end;  // range in idx_
        std::size_t left = 0, right = 0;  // child node ids, 0 for leaf
        std::vector<double> lo, hi;  // bounding box
    };

    std::size_t build(std::size_t begin, std::size_t end) {
        const std::size_t id = nodes_.size();
        nodes_.push_back({begin, end, 0, 0, std::vector<double>(dim_, std::numeric_limits<double>::infinity()),
                          std::vector<double>(dim_, -std::numeric_limits<double>::infinity())});
        for (std::size_t t = begin; t < end; ++t)
            for (std::size_t d = 0; d < dim_; ++d) {
                const double v = point(idx_[t])[d];
                nodes_[id].lo[d] = std::min(nodes_[id].lo[d], v);
                nodes_[id].hi[d] = std::max(nodes_[id].hi[d], v);
            }
        if (end - begin <= leaf_size_) return id;
        std::size_t axis = 0;
        double widest = -1.0;
        for (std::size_t d = 0; d < dim_; ++d) {
            const double w = nodes_[id].hi[d] - nodes_[id].lo[d];
            if (w > widest) {
                widest = w;
                axis = d;
            }
        }
        if (!(widest > 0.0)) return id;
        const std::size_t mid = begin + (end - begin) / 2;
        std::nth_element(idx_.begin() + static_cast<std::ptrdiff_t>(begin),
                         idx_.begin() + static_cast<std::ptrdiff_t>(mid),
                         idx_.begin() + static_cast<std::ptrdiff_t>(end),
                         [&](std::size_t a, std::size_t b) { return point(a)[axis] < point(b)[axis]; });
        const std::size_t l = build(begin, mid);
        const std::size_t r = build(mid, end);
        nodes_[id].left = l;
        nodes_[id].right = r;
        return id;
    }

    double box_distance(const Node& nd, const double* q) const {
        double d = 0.0;
        for (std::size_t k = 0; k < dim_; ++k) {
            if (q[k] < nd.lo[k]) d = std::max(d, nd.lo[k] - q[k]);
            else if (q[k] > nd.hi[k]) d = std::max(d, q[k] - nd.hi[k]);
        }
        return d;
    }

    double dist(const double* a, const double* b) const {
        double d = 0.0;
        for (std::size_t k = 0; k < dim_; ++k) d = std::max(d, std::abs(a[k] - b[k]));
        return d;
    }

    void knn(std::size_t id, const double* q, std::size_t self, std::size_t k, std::priority_queue<double>& heap) const {
        const Node& nd = nodes_[id];
        if (heap.size() == k && box_distance(nd, q) > heap.top()) return;
        if (nd.left == 0) {
            for (std::size_t t = nd.begin; t < nd.end; ++t) {
                if (idx_[t] == self) continue;
                const double d = dist(q, point(idx_[t]));
                if (heap.size() < k) heap.push(d);
                else if (d < heap.top()) {
                    heap.pop();
                    heap.push(d);
                }
            }
            return;
        }
        const double dl = box_distance(nodes_[nd.left], q);
        const double dr = box_distance(nodes_[nd.right], q);
        if (dl <= dr) {
            knn(nd.left, q, self, k, heap);
            knn(nd.right, q, self, k, heap);
        } else {
            knn(nd.right, q, self, k, heap);
            knn(nd.left, q, self, k, heap);
        }
    }

    // Largest max-norm distance from q to any point of the box.
    double box_far(const Node& nd, const double* q) const {
        double d = 0.0;
        for (std::size_t k = 0; k < dim_; ++k) d = std::max({d, std::abs(q[k] - nd.lo[k]), std::abs(q[k] - nd.hi[k])});
        return d;
    }

    std::size_t count(std::size_t id, const double* q, std::size_t self, double r) const {
        const Node& nd = nodes_[id];
        if (box_distance(nd, q) >= r) return 0;
        if (box_far(nd, q) < r) {
            const bool has_self = self < n_ && pos_[self] >= nd.begin && pos_[self] < nd.end;
            return nd.end - nd.begin - (has_self ? 1 : 0);
        }
        if (nd.left == 0) {
            std::size_t c = 0;
            for (std::size_t t = nd.begin; t < nd.end; ++t)
                if (idx_[t] != self && dist(q, point(idx_[t])) < r) ++c;
            return c;
        }
        return count(nd.left, q, self, r) + count(nd.right, q, self, r);
    }

    std::vector<double> pts_;
    std::size_t dim_;
    std::size_t leaf_size_;
    std::size_t n_ = 0;
    std::vector<std::size_t> idx_;
    std::vector<std::size_t> pos_;  // inverse of idx_
    std::vector<Node> nodes_;
};

}  // namespace pulseaudit
