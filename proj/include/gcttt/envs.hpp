#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace gcttt::env {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const Vec2&, const Vec2&) = default;
};

/// States and goals share one representation (goal space = state space):
/// a position in maze coordinates. x grows with the column index, y with the row.
using State = Vec2;
using Action = Vec2;

struct Cell {
    int r = 0;
    int c = 0;
    friend bool operator==(const Cell&, const Cell&) = default;
};

inline double distance(const Vec2& a, const Vec2& b) {
    const double dx = a.x - b.x;
    const double dy = a.y - b.y;
    return std::sqrt(dx * dx + dy * dy);
}

/// Sparse goal reward: -1 while d(s, g) >= eps, 0 once strictly inside the ball.
inline double reward(const State& s, const State& goal, double eps) { return distance(s, goal) >= eps ? -1.0 : 0.0; }
inline bool is_success(const State& s, const State& goal, double eps) { return reward(s, goal, eps) == 0.0; }

/// Static wall grid plus annotated start cells and evaluation goals.
///
/// Text format (row-major, one line per row after the header):
///
///   gcttt-maze v1 <rows> <cols> <cell_size>
///   '#' wall, '.' free, 'S' start cell, 'G' evaluation goal
struct MazeLayout {
    std::string name;
    int rows = 0;
    int cols = 0;
    double cell_size = 1.0;
    std::vector<std::uint8_t> walls;  // rows * cols, 1 = wall
    std::vector<Cell> starts;
    std::vector<Cell> goals;

    bool in_bounds(int r, int c) const { return r >= 0 && c >= 0 && r < rows && c < cols; }
    bool is_wall(int r, int c) const { return !in_bounds(r, c) || walls[static_cast<std::size_t>(r * cols + c)] != 0; }
    bool is_wall(Cell c) const { return is_wall(c.r, c.c); }
    std::size_t cell_index(Cell c) const { return static_cast<std::size_t>(c.r * cols + c.c); }

    std::vector<Cell> free_cells() const;
    Cell cell_of(const Vec2& p) const;
    Vec2 center(Cell c) const;
    bool in_free_space(const Vec2& p) const;

    /// Border walls, >= 2 free cells, connected free region, annotations on free cells.
    void validate() const;
};

MazeLayout parse_layout(std::string_view text, std::string name);
MazeLayout load_layout(const std::string& path);
std::string format_layout(const MazeLayout& layout);

/// Shipped layouts: "medium" (aliases "grid-medium", "point-medium").
MazeLayout builtin_layout(std::string_view name);
/// Builtin name, or a path to a layout file.
MazeLayout resolve_layout(const std::string& name_or_path);

/// BFS step distances from `from` over the 4-neighbourhood; -1 = unreachable / wall.
std::vector<int> bfs_distances(const MazeLayout& layout, Cell from);

/// Cell sequence of one shortest path, both endpoints included.
std::vector<Cell> shortest_path(const MazeLayout& layout, Cell from, Cell to);

enum class EnvKind : std::uint8_t { grid = 0, point = 1 };

EnvKind parse_env_kind(std::string_view s);
std::string_view to_string(EnvKind k);

struct GoalSpec {
    State goal;
    double eps = 0.5;
};

/// Grid moves, as action vectors in cell units.
enum class GridMove : std::uint8_t { stay = 0, north, east, south, west };
inline constexpr std::array<Vec2, 5> kGridMoves{{{0, 0}, {0, -1}, {1, 0}, {0, 1}, {-1, 0}}};
inline Action grid_action(GridMove m) { return kGridMoves[static_cast<std::size_t>(m)]; }
/// Nearest move prototype to a continuous action (ties: lowest enumerator).
GridMove decode_grid_action(const Action& a);

struct EnvParams {
    EnvKind kind = EnvKind::point;
    double a_max = 0.2;           // per-axis action bound, maze units (point)
    double contact_margin = 0.05; // clearance kept from wall faces (point)
    double start_jitter = 0.25;   // reset jitter half-width, fraction of cell_size (point)
    int episode_cap = 300;
};

struct StepStats {
    std::uint64_t steps = 0;
    std::uint64_t clipped = 0;
};

/// Deterministic goal-reaching environment over a MazeLayout.
class MazeEnv {
public:
    MazeEnv(MazeLayout layout, EnvParams params);

    const MazeLayout& layout() const { return layout_; }
    const EnvParams& params() const { return params_; }
    EnvKind kind() const { return params_.kind; }

    /// Success radius: 0.5 for GridMaze (same cell), 0.5 * cell_size for PointMaze.
    double eps() const;

    /// Uniform over start cells; PointMaze adds uniform jitter inside the cell.
    State reset(std::uint64_t seed) const;

    /// Pure transition. Out-of-range actions are clipped and counted in `stats`.
    State step(const State& s, const Action& a, StepStats* stats = nullptr) const;

    /// The layout's 4 annotated evaluation goals.
    std::vector<GoalSpec> eval_goals() const;

    /// Action bound per axis (1 cell for GridMaze).
    double action_bound() const;

private:
    double move_axis_x(double x, double y, double dx) const;
    double move_axis_y(double x, double y, double dy) const;

    MazeLayout layout_;
    EnvParams params_;
};

}  // namespace gcttt::env
