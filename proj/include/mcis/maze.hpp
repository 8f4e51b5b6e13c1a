#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <utility>

#include "mcis/rng.hpp"
#include "mcis/tape.hpp"

namespace mcis {

using Vec2 = Eigen::Vector2d;
using Vec4 = Eigen::Vector4d;

struct Cell {
  int x = 0;
  int y = 0;
  bool operator==(const Cell&) const = default;
};

// 5x5 occupancy grid, cell size 1.0 world unit, border cells are walls.
// Cell (cx, cy) covers [cx, cx+1) x [cy, cy+1); its center is (cx+.5, cy+.5).
struct MazeSpec {
  std::array<std::array<bool, 5>, 5> walls{};  // walls[y][x], true = wall
  Cell start;
  Cell goal;

  bool wall(int cx, int cy) const {
    if (cx < 0 || cx >= 5 || cy < 0 || cy >= 5) return true;
    return walls[static_cast<std::size_t>(cy)][static_cast<std::size_t>(cx)];
  }
  bool wall_at(double wx, double wy) const {
    return wall(static_cast<int>(std::floor(wx)), static_cast<int>(std::floor(wy)));
  }
  Vec2 cell_center(Cell c) const { return {c.x + 0.5, c.y + 0.5}; }
  Vec2 goal_center() const { return cell_center(goal); }
};

// The two fixed layouts. The original is a U: the column above the start is
// blocked at (1,2) and the detour runs through (3,2). The modified layout
// frees (1,2) and walls (3,2) instead.
MazeSpec original_maze();
MazeSpec modified_maze();
void validate_maze(const MazeSpec& maze);

struct EnvState {
  Vec2 pos = Vec2::Zero();
  Vec2 vel = Vec2::Zero();

  Vec4 as_vec() const { return {pos.x(), pos.y(), vel.x(), vel.y()}; }
  static EnvState from_vec(const Vec4& v) { return {{v[0], v[1]}, {v[2], v[3]}}; }
};

// Point-mass integration constants. dt and v_max are sized so the noiseless
// waypoint controller crosses a cell in a couple of steps; see the premise
// checks in tests/ for the measured policy value gap these support.
struct EnvConfig {
  double dt = 0.25;
  double damping = 0.6;
  double action_gain = 1.0;
  double v_max = 4.0;  // safety bound; damping keeps |v| <= 2.5, so the
                       // velocity law stays linear and learnable
  double start_margin = 0.1;
};

// reward = -(|px - gx| + |py - gy|) at the post-step position
double manhattan_reward(const MazeSpec& maze, const Vec2& pos);

// v' = clamp(damping*v + gain*a, v_max), p' = p + v'*dt, collisions resolved
// per axis: a blocked axis zeroes that velocity component and leaves the
// position at the wall face.
std::pair<EnvState, double> env_step(const MazeSpec& maze, const EnvConfig& cfg,
                                     const EnvState& s, Vec2 a);

// position uniform inside the start cell with start_margin, velocity zero
EnvState env_reset(const MazeSpec& maze, const EnvConfig& cfg, Rng& rng);

struct Transition {
  Vec4 s;
  Vec2 a;
  Vec4 delta;
};

// Column layout: s (n,4), a (n,2), delta (n,4) with delta = s' - s.
struct Dataset {
  Mat s;
  Mat a;
  Mat delta;
  std::int64_t size() const { return s.rows(); }
};

// Random exploration: actions uniform in [-1,1]^2, each held for a repeat
// count uniform in {1..repeat_max}; every step is recorded. Trajectories use
// independent derived streams and are concatenated in index order.
Dataset collect_dataset(const MazeSpec& maze, const EnvConfig& cfg,
                        std::uint64_t seed, int n_trajectories, int traj_len,
                        int repeat_max);

// Flat binary dataset: magic "MZDS", version u32, count u64, then count
// records of 10 little-endian f64 (s[4], a[2], delta[4]).
void save_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace mcis
