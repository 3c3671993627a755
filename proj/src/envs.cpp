#include "gcttt/envs.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <sstream>

#include "gcttt/errors.hpp"
#include "gcttt/rng.hpp"

namespace gcttt::env {

namespace {

constexpr std::array<Cell, 4> kNeighbourDelta{{{-1, 0}, {0, 1}, {1, 0}, {0, -1}}};

// 11x11, corridor-and-room pattern; single start in the top-left corner and
// four evaluation goals at increasing path distance (10, 18, 20, 22 cells).
constexpr std::string_view kMediumMaze =
    "gcttt-maze v1 11 11 1.0\n"
    "###########\n"
    "#S..#.....#\n"
    "#.#.#.###.#\n"
    "#.#...#...#\n"
    "#.#####.#.#\n"
    "#...#.G.#.#\n"
    "###.#.###.#\n"
    "#G..#.#...#\n"
    "#.###.#.#.#\n"
    "#.....#G#G#\n"
    "###########\n";

}  // namespace

std::vector<Cell> MazeLayout::free_cells() const {
    std::vector<Cell> out;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            if (!is_wall(r, c)) out.push_back({r, c});
        }
    }
    return out;
}

Cell MazeLayout::cell_of(const Vec2& p) const {
    return {static_cast<int>(std::floor(p.y / cell_size)), static_cast<int>(std::floor(p.x / cell_size))};
}

Vec2 MazeLayout::center(Cell c) const { return {(c.c + 0.5) * cell_size, (c.r + 0.5) * cell_size}; }

bool MazeLayout::in_free_space(const Vec2& p) const {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) return false;
    return !is_wall(cell_of(p));
}

void MazeLayout::validate() const {
    if (rows < 3 || cols < 3) throw ConfigError("layout '" + name + "': needs at least 3x3 cells");
    if (!(cell_size > 0.0)) throw ConfigError("layout '" + name + "': cell_size must be > 0");
    if (walls.size() != static_cast<std::size_t>(rows * cols)) throw ConfigError("layout '" + name + "': bad grid size");
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const bool border = r == 0 || c == 0 || r == rows - 1 || c == cols - 1;
            if (border && !is_wall(r, c)) throw ConfigError("layout '" + name + "': border cells must be walls");
        }
    }
    const auto free = free_cells();
    if (free.size() < 2) throw ConfigError("layout '" + name + "': needs at least 2 free cells");
    const auto dist = bfs_distances(*this, free.front());
    for (Cell c : free) {
        if (dist[cell_index(c)] < 0) throw ConfigError("layout '" + name + "': free region is not connected");
    }
    for (Cell c : starts) {
        if (is_wall(c)) throw ConfigError("layout '" + name + "': start cell inside a wall");
    }
    for (Cell c : goals) {
        if (is_wall(c)) throw ConfigError("layout '" + name + "': goal cell inside a wall");
    }
}

MazeLayout parse_layout(std::string_view text, std::string name) {
    std::istringstream in{std::string(text)};
    std::string magic, version;
    MazeLayout m;
    m.name = std::move(name);
    if (!(in >> magic >> version >> m.rows >> m.cols >> m.cell_size) || magic != "gcttt-maze" || version != "v1") {
        throw ConfigError("layout '" + m.name + "': bad header (expected 'gcttt-maze v1 rows cols cell_size')");
    }
    if (m.rows <= 0 || m.cols <= 0 || m.rows > 4096 || m.cols > 4096) {
        throw ConfigError("layout '" + m.name + "': implausible dimensions");
    }
    std::string line;
    std::getline(in, line);  // rest of header
    m.walls.assign(static_cast<std::size_t>(m.rows * m.cols), 1);
    for (int r = 0; r < m.rows; ++r) {
        if (!std::getline(in, line)) throw ConfigError("layout '" + m.name + "': missing grid rows");
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (static_cast<int>(line.size()) != m.cols) {
            throw ConfigError("layout '" + m.name + "': row " + std::to_string(r) + " has wrong width");
        }
        for (int c = 0; c < m.cols; ++c) {
            const char ch = line[static_cast<std::size_t>(c)];
            auto& cell = m.walls[static_cast<std::size_t>(r * m.cols + c)];
            switch (ch) {
                case '#': cell = 1; break;
                case '.': cell = 0; break;
                case 'S': cell = 0; m.starts.push_back({r, c}); break;
                case 'G': cell = 0; m.goals.push_back({r, c}); break;
                default: throw ConfigError("layout '" + m.name + "': unexpected character '" + std::string(1, ch) + "'");
            }
        }
    }
    if (m.starts.empty()) throw ConfigError("layout '" + m.name + "': no start cell ('S')");
    m.validate();
    return m;
}

MazeLayout load_layout(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open layout file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    std::string name = path;
    if (const auto slash = name.find_last_of('/'); slash != std::string::npos) name = name.substr(slash + 1);
    if (const auto dot = name.find_last_of('.'); dot != std::string::npos) name = name.substr(0, dot);
    return parse_layout(ss.str(), name);
}

std::string format_layout(const MazeLayout& m) {
    std::ostringstream out;
    out << "gcttt-maze v1 " << m.rows << ' ' << m.cols << ' ' << m.cell_size << '\n';
    for (int r = 0; r < m.rows; ++r) {
        for (int c = 0; c < m.cols; ++c) {
            char ch = m.is_wall(r, c) ? '#' : '.';
            if (std::find(m.starts.begin(), m.starts.end(), Cell{r, c}) != m.starts.end()) ch = 'S';
            if (std::find(m.goals.begin(), m.goals.end(), Cell{r, c}) != m.goals.end()) ch = 'G';
            out << ch;
        }
        out << '\n';
    }
    return out.str();
}

MazeLayout builtin_layout(std::string_view name) {
    if (name == "medium" || name == "grid-medium" || name == "point-medium") {
        return parse_layout(kMediumMaze, std::string(name));
    }
    throw ConfigError("unknown builtin layout '" + std::string(name) + "'");
}

MazeLayout resolve_layout(const std::string& name_or_path) {
    if (name_or_path.find('/') != std::string::npos || name_or_path.ends_with(".maze")) return load_layout(name_or_path);
    return builtin_layout(name_or_path);
}

std::vector<int> bfs_distances(const MazeLayout& layout, Cell from) {
    std::vector<int> dist(static_cast<std::size_t>(layout.rows * layout.cols), -1);
    if (layout.is_wall(from)) return dist;
    std::deque<Cell> queue{from};
    dist[layout.cell_index(from)] = 0;
    while (!queue.empty()) {
        const Cell cur = queue.front();
        queue.pop_front();
        for (Cell d : kNeighbourDelta) {
            const Cell n{cur.r + d.r, cur.c + d.c};
            if (layout.is_wall(n) || dist[layout.cell_index(n)] >= 0) continue;
            dist[layout.cell_index(n)] = dist[layout.cell_index(cur)] + 1;
            queue.push_back(n);
        }
    }
    return dist;
}

std::vector<Cell> shortest_path(const MazeLayout& layout, Cell from, Cell to) {
    const auto dist = bfs_distances(layout, to);
    if (layout.is_wall(from) || dist[layout.cell_index(from)] < 0) return {};
    std::vector<Cell> path{from};
    Cell cur = from;
    while (!(cur == to)) {
        // Neighbour order N, E, S, W makes the path deterministic.
        for (Cell d : kNeighbourDelta) {
            const Cell n{cur.r + d.r, cur.c + d.c};
            if (!layout.is_wall(n) && dist[layout.cell_index(n)] == dist[layout.cell_index(cur)] - 1) {
                cur = n;
                break;
            }
        }
        path.push_back(cur);
    }
    return path;
}

EnvKind parse_env_kind(std::string_view s) {
    if (s == "grid") return EnvKind::grid;
    if (s == "point") return EnvKind::point;
    throw ConfigError("unknown environment kind '" + std::string(s) + "' (expected grid|point)");
}

std::string_view to_string(EnvKind k) { return k == EnvKind::grid ? "grid" : "point"; }

GridMove decode_grid_action(const Action& a) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < kGridMoves.size(); ++i) {
        const double d = distance(a, kGridMoves[i]);
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return static_cast<GridMove>(best);
}

MazeEnv::MazeEnv(MazeLayout layout, EnvParams params) : layout_(std::move(layout)), params_(params) {
    layout_.validate();
    if (params_.episode_cap < 1) throw ConfigError("env: episode_cap must be >= 1");
    if (params_.kind == EnvKind::point) {
        const double cs = layout_.cell_size;
        if (!(params_.a_max > 0.0) || params_.a_max >= cs - 2.0 * params_.contact_margin) {
            throw ConfigError("env: a_max must lie in (0, cell_size - 2 * contact_margin)");
        }
        if (params_.contact_margin < 0.0 || params_.contact_margin >= 0.25 * cs) {
            throw ConfigError("env: contact_margin must lie in [0, cell_size / 4)");
        }
        if (params_.start_jitter < 0.0 || params_.start_jitter * cs > 0.5 * cs - params_.contact_margin) {
            throw ConfigError("env: start_jitter leaves the start cell");
        }
    }
}

double MazeEnv::eps() const { return 0.5 * layout_.cell_size; }

double MazeEnv::action_bound() const { return params_.kind == EnvKind::grid ? 1.0 : params_.a_max; }

State MazeEnv::reset(std::uint64_t seed) const {
    Rng rng(derive_seed(seed, "env.reset"));
    const Cell start = layout_.starts[uniform_index(rng, layout_.starts.size())];
    State s = layout_.center(start);
    if (params_.kind == EnvKind::point && params_.start_jitter > 0.0) {
        const double j = params_.start_jitter * layout_.cell_size;
        s.x += uniform(rng, -j, j);
        s.y += uniform(rng, -j, j);
    }
    return s;
}

double MazeEnv::move_axis_x(double x, double y, double dx) const {
    const double cs = layout_.cell_size;
    const double m = params_.contact_margin;
    const int r = static_cast<int>(std::floor(y / cs));
    const int c = static_cast<int>(std::floor(x / cs));
    const double target = x + dx;
    if (dx > 0.0) {
        for (int cc = c + 1; cc * cs < target + m; ++cc) {
            if (layout_.is_wall(r, cc)) return std::min(target, std::max(cc * cs - m, x));
        }
    } else if (dx < 0.0) {
        for (int cc = c - 1; (cc + 1) * cs > target - m; --cc) {
            if (layout_.is_wall(r, cc)) return std::max(target, std::min((cc + 1) * cs + m, x));
        }
    }
    return target;
}

double MazeEnv::move_axis_y(double x, double y, double dy) const {
    const double cs = layout_.cell_size;
    const double m = params_.contact_margin;
    const int r = static_cast<int>(std::floor(y / cs));
    const int c = static_cast<int>(std::floor(x / cs));
    const double target = y + dy;
    if (dy > 0.0) {
        for (int rr = r + 1; rr * cs < target + m; ++rr) {
            if (layout_.is_wall(rr, c)) return std::min(target, std::max(rr * cs - m, y));
        }
    } else if (dy < 0.0) {
        for (int rr = r - 1; (rr + 1) * cs > target - m; --rr) {
            if (layout_.is_wall(rr, c)) return std::max(target, std::min((rr + 1) * cs + m, y));
        }
    }
    return target;
}

State MazeEnv::step(const State& s, const Action& a, StepStats* stats) const {
    const double bound = action_bound();
    bool clipped = false;
    auto clip = [&](double v) {
        if (std::isnan(v)) {
            clipped = true;
            return 0.0;
        }
        if (v > bound) {
            clipped = true;
            return bound;
        }
        if (v < -bound) {
            clipped = true;
            return -bound;
        }
        return v;
    };
    const Action ca{clip(a.x), clip(a.y)};
    if (stats != nullptr) {
        stats->steps += 1;
        stats->clipped += clipped ? 1 : 0;
    }

    if (params_.kind == EnvKind::grid) {
        const Vec2 d = kGridMoves[static_cast<std::size_t>(decode_grid_action(ca))];
        const Cell cur = layout_.cell_of(s);
        const Cell next{cur.r + static_cast<int>(d.y), cur.c + static_cast<int>(d.x)};
        return layout_.is_wall(next) ? s : layout_.center(next);
    }

    // Axis-separated collision: resolve x, then y from the updated x.
    State out = s;
    out.x = move_axis_x(s.x, s.y, ca.x);
    out.y = move_axis_y(out.x, s.y, ca.y);
    return out;
}

std::vector<GoalSpec> MazeEnv::eval_goals() const {
    if (layout_.goals.size() != 4) {
        throw ConfigError("layout '" + layout_.name + "': expected 4 annotated evaluation goals, found " +
                          std::to_string(layout_.goals.size()));
    }
    std::vector<GoalSpec> out;
    for (Cell g : layout_.goals) out.push_back({layout_.center(g), eps()});
    return out;
}

}  // namespace gcttt::env
