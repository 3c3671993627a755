#include "gcttt/index.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gcttt/errors.hpp"

namespace gcttt::data {

WindowIndex::WindowIndex(const OfflineDataset& ds, double bucket_edge) : edge_(bucket_edge) {
    if (!(bucket_edge > 0.0)) throw ConfigError("WindowIndex: bucket edge must be > 0");
    long max_bx = std::numeric_limits<long>::min();
    long max_by = std::numeric_limits<long>::min();
    min_bx_ = std::numeric_limits<long>::max();
    min_by_ = std::numeric_limits<long>::max();
    for (const auto& t : ds.trajectories) {
        for (const auto& s : t.states) {
            const long bx = static_cast<long>(std::floor(s.x / edge_));
            const long by = static_cast<long>(std::floor(s.y / edge_));
            min_bx_ = std::min(min_bx_, bx);
            min_by_ = std::min(min_by_, by);
            max_bx = std::max(max_bx, bx);
            max_by = std::max(max_by, by);
        }
    }
    if (ds.trajectories.empty()) {
        min_bx_ = min_by_ = 0;
        max_bx = max_by = 0;
    }
    nbx_ = max_bx - min_bx_ + 1;
    nby_ = max_by - min_by_ + 1;
    buckets_.resize(static_cast<std::size_t>(nbx_ * nby_));
    for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
        const auto& states = ds.trajectories[i].states;
        for (std::size_t t = 0; t < states.size(); ++t) {
            const long bx = static_cast<long>(std::floor(states[t].x / edge_));
            const long by = static_cast<long>(std::floor(states[t].y / edge_));
            buckets_[bucket_of(bx, by)].push_back(
                {states[t], {static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(t)}});
            ++size_;
        }
    }
}

std::vector<WindowRef> WindowIndex::query_ball(const State& s, double eps) const {
    std::vector<WindowRef> out;
    if (!(eps > 0.0) || size_ == 0) return out;
    // Bucket range of the eps-box, widened by one bucket against rounding; clamped to the grid.
    const double lo_x = std::floor((s.x - eps) / edge_) - 1.0;
    const double hi_x = std::floor((s.x + eps) / edge_) + 1.0;
    const double lo_y = std::floor((s.y - eps) / edge_) - 1.0;
    const double hi_y = std::floor((s.y + eps) / edge_) + 1.0;
    const auto clampb = [](double v, long lo, long hi) {
        if (v < static_cast<double>(lo)) return lo;
        if (v > static_cast<double>(hi)) return hi;
        return static_cast<long>(v);
    };
    const long bx0 = clampb(lo_x, min_bx_, min_bx_ + nbx_ - 1);
    const long bx1 = clampb(hi_x, min_bx_, min_bx_ + nbx_ - 1);
    const long by0 = clampb(lo_y, min_by_, min_by_ + nby_ - 1);
    const long by1 = clampb(hi_y, min_by_, min_by_ + nby_ - 1);
    if (hi_x < static_cast<double>(min_bx_) || lo_x > static_cast<double>(min_bx_ + nbx_ - 1) ||
        hi_y < static_cast<double>(min_by_) || lo_y > static_cast<double>(min_by_ + nby_ - 1)) {
        return out;
    }
    for (long by = by0; by <= by1; ++by) {
        for (long bx = bx0; bx <= bx1; ++bx) {
            for (const Entry& e : buckets_[bucket_of(bx, by)]) {
                if (env::distance(s, e.pos) < eps) out.push_back(e.ref);
            }
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace gcttt::data
