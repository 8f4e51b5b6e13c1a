#include "mcis/policy.hpp"

#include <algorithm>
#include <deque>

#include "mcis/common.hpp"

namespace mcis {

GridPath bfs_shortest_path(const MazeSpec& maze, Cell start, Cell goal) {
  if (maze.wall(start.x, start.y) || maze.wall(goal.x, goal.y))
    throw ConfigError("bfs: start and goal must be free cells");
  std::array<std::array<Cell, 5>, 5> parent{};
  std::array<std::array<bool, 5>, 5> seen{};
  auto seen_at = [&](Cell c) -> bool& {
    return seen[static_cast<std::size_t>(c.y)][static_cast<std::size_t>(c.x)];
  };
  auto parent_at = [&](Cell c) -> Cell& {
    return parent[static_cast<std::size_t>(c.y)][static_cast<std::size_t>(c.x)];
  };

  std::deque<Cell> queue{start};
  seen_at(start) = true;
  bool found = (start == goal);
  while (!queue.empty() && !found) {
    const Cell c = queue.front();
    queue.pop_front();
    const Cell nbrs[4] = {{c.x, c.y + 1}, {c.x + 1, c.y}, {c.x, c.y - 1}, {c.x - 1, c.y}};
    for (const Cell& n : nbrs) {
      if (maze.wall(n.x, n.y) || seen_at(n)) continue;
      seen_at(n) = true;
      parent_at(n) = c;
      if (n == goal) {
        found = true;
        break;
      }
      queue.push_back(n);
    }
  }
  if (!found) throw NoPathError("bfs: goal unreachable from start");

  GridPath path;
  for (Cell c = goal; !(c == start); c = parent_at(c)) path.cells.push_back(c);
  path.cells.push_back(start);
  std::reverse(path.cells.begin(), path.cells.end());
  return path;
}

void WaypointCursor::advance(const GridPath& path, const ControllerConfig& cfg,
                             const Vec2& pos) {
  const std::size_t last = path.cells.size() - 1;
  std::size_t furthest = index_;
  bool captured = false;
  for (std::size_t i = index_; i < path.cells.size(); ++i) {
    const Vec2 center{path.cells[i].x + 0.5, path.cells[i].y + 0.5};
    if ((pos - center).norm() <= cfg.capture_radius) {
      furthest = i;
      captured = true;
    }
  }
  if (captured) index_ = std::min(furthest + 1, last);
}

Vec2 waypoint_action(const GridPath& path, const ControllerConfig& cfg,
                     WaypointCursor& cursor, const EnvState& s) {
  if (path.cells.empty()) throw ConfigError("waypoint_action: empty path");
  cursor.advance(path, cfg, s.pos);
  const Cell w = path.cells[cursor.index()];
  const Vec2 center{w.x + 0.5, w.y + 0.5};
  const Vec2 raw = cfg.kp * (center - s.pos) - cfg.kd * s.vel;
  return raw.cwiseMax(-1.0).cwiseMin(1.0);
}

Policy make_noisy_waypoint_policy(GridPath path, ControllerConfig ctrl, double sigma) {
  if (sigma < 0.0) throw ConfigError("policy: sigma must be >= 0");
  Policy p;
  p.kind = Policy::Kind::kWaypoint;
  p.path = std::move(path);
  p.ctrl = ctrl;
  p.sigma = sigma;
  return p;
}

Policy make_uniform_random_policy() {
  Policy p;
  p.kind = Policy::Kind::kUniformRandom;
  p.sigma = 0.0;
  return p;
}

std::pair<Policy, Policy> build_policy_pair(double sigma, ControllerConfig ctrl) {
  const MazeSpec original = original_maze();
  const MazeSpec modified = modified_maze();
  GridPath star = bfs_shortest_path(original, original.start, original.goal);
  GridPath sub = bfs_shortest_path(modified, modified.start, modified.goal);
  return {make_noisy_waypoint_policy(std::move(star), ctrl, sigma),
          make_noisy_waypoint_policy(std::move(sub), ctrl, sigma)};
}

Vec2 policy_action(const Policy& policy, WaypointCursor& cursor, const EnvState& s,
                   Rng& rng) {
  if (policy.kind == Policy::Kind::kUniformRandom) {
    const double ax = rng.uniform(-1.0, 1.0);
    const double ay = rng.uniform(-1.0, 1.0);
    return {ax, ay};
  }
  const Vec2 base = waypoint_action(policy.path, policy.ctrl, cursor, s);
  const double ex = rng.normal();
  const double ey = rng.normal();
  const Vec2 noisy = base + policy.sigma * Vec2{ex, ey};
  return noisy.cwiseMax(-1.0).cwiseMin(1.0);
}

std::vector<double> evaluate_policy_env(const MazeSpec& maze, const EnvConfig& cfg,
                                        const Policy& policy, int episodes,
                                        int horizon, std::uint64_t seed) {
  std::vector<double> returns(static_cast<std::size_t>(episodes));
  for (int e = 0; e < episodes; ++e) {
    Rng rng(derive_seed(seed, "env-episode", static_cast<std::uint64_t>(e)));
    EnvState s = env_reset(maze, cfg, rng);
    WaypointCursor cursor;
    double total = 0.0;
    for (int t = 0; t < horizon; ++t) {
      const Vec2 a = policy_action(policy, cursor, s, rng);
      auto [next, reward] = env_step(maze, cfg, s, a);
      total += reward;
      s = next;
    }
    returns[static_cast<std::size_t>(e)] = total;
  }
  return returns;
}

}  // namespace mcis
