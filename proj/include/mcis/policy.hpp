#pragma once

#include <vector>

#include "mcis/maze.hpp"

namespace mcis {

// 4-connected shortest path, first = start, last = goal.
struct GridPath {
  std::vector<Cell> cells;
  int moves() const { return static_cast<int>(cells.size()) - 1; }
};

// Ties broken by fixed neighbor order: up, right, down, left.
GridPath bfs_shortest_path(const MazeSpec& maze, Cell start, Cell goal);

// kp/capture_radius sized with the EnvConfig constants so the noiseless
// controller crosses a cell in a few steps and the noisy one does not stall
// at waypoints; see the measured policy-ordering margins in tests/.
struct ControllerConfig {
  double kp = 2.0;
  double kd = 0.5;
  double capture_radius = 0.5;
};

// Per-rollout waypoint progression; advances to the cell after the furthest
// path cell whose center is within the capture radius. Never retreats.
class WaypointCursor {
 public:
  void advance(const GridPath& path, const ControllerConfig& cfg, const Vec2& pos);
  std::size_t index() const { return index_; }

 private:
  std::size_t index_ = 0;
};

// clamp(kp * (waypoint - pos) - kd * vel, [-1,1]^2), noise-free
Vec2 waypoint_action(const GridPath& path, const ControllerConfig& cfg,
                     WaypointCursor& cursor, const EnvState& s);

// Action rule plus noise scale. Waypoint policies follow a grid path; the
// uniform-random kind ignores the state (used for visitation densities).
struct Policy {
  enum class Kind { kWaypoint, kUniformRandom };
  Kind kind = Kind::kWaypoint;
  GridPath path;
  ControllerConfig ctrl;
  double sigma = 0.3;
};

Policy make_noisy_waypoint_policy(GridPath path, ControllerConfig ctrl, double sigma);
Policy make_uniform_random_policy();

// pi_star follows the BFS path of the original maze; pi_sub follows the BFS
// path of the modified maze, so in the original maze it runs into the wall
// at (1,2).
std::pair<Policy, Policy> build_policy_pair(double sigma, ControllerConfig ctrl = {});

// One noisy action: clamp(base + sigma * eps, [-1,1]^2). Draw order per call
// is fixed: eps_x then eps_y (uniform components for the random kind).
Vec2 policy_action(const Policy& policy, WaypointCursor& cursor, const EnvState& s,
                   Rng& rng);

// Fixed-horizon returns of one policy in the real environment.
std::vector<double> evaluate_policy_env(const MazeSpec& maze, const EnvConfig& cfg,
                                        const Policy& policy, int episodes,
                                        int horizon, std::uint64_t seed);

}  // namespace mcis
