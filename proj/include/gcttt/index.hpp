#pragma once

#include <cstdint>
#include <vector>

#include "gcttt/datagen.hpp"

namespace gcttt::data {

/// A (trajectory, start offset) pair: the start of a candidate sub-trajectory.
struct WindowRef {
    std::uint32_t traj = 0;
    std::uint32_t offset = 0;
    friend auto operator<=>(const WindowRef&, const WindowRef&) = default;
};

/// Uniform spatial hash over every dataset state (all trajectories, all
/// offsets), bucketed on a square grid of edge `bucket_edge`.
class WindowIndex {
public:
    WindowIndex(const OfflineDataset& ds, double bucket_edge);

    /// Exactly {(i, t) : d(s, states[i][t]) < eps}, sorted by (traj, offset).
    std::vector<WindowRef> query_ball(const State& s, double eps) const;

    std::size_t size() const { return size_; }
    double bucket_edge() const { return edge_; }

private:
    std::size_t bucket_of(long bx, long by) const {
        return static_cast<std::size_t>(by - min_by_) * static_cast<std::size_t>(nbx_) +
               static_cast<std::size_t>(bx - min_bx_);
    }

    struct Entry {
        State pos;
        WindowRef ref;
    };

    double edge_;
    long min_bx_ = 0, min_by_ = 0, nbx_ = 0, nby_ = 0;
    std::vector<std::vector<Entry>> buckets_;
    std::size_t size_ = 0;
};

}  // namespace gcttt::data
