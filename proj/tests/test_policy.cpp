#include <doctest.h>

#include <array>

#include "mcis/policy.hpp"
#include "mcis/stats.hpp"

using namespace mcis;

TEST_CASE("bfs paths match the two reference routes") {
  const MazeSpec orig = original_maze();
  const GridPath p = bfs_shortest_path(orig, orig.start, orig.goal);
  const std::vector<Cell> expected_orig = {{1, 1}, {2, 1}, {3, 1}, {3, 2},
                                           {3, 3}, {2, 3}, {1, 3}};
  CHECK(p.moves() == 6);
  CHECK(p.cells == expected_orig);

  const MazeSpec mod = modified_maze();
  const GridPath q = bfs_shortest_path(mod, mod.start, mod.goal);
  const std::vector<Cell> expected_mod = {{1, 1}, {1, 2}, {1, 3}};
  CHECK(q.moves() == 2);
  CHECK(q.cells == expected_mod);

  const GridPath single = bfs_shortest_path(orig, orig.start, orig.start);
  CHECK(single.moves() == 0);
  CHECK(single.cells.size() == 1);
}

TEST_CASE("bfs errors when the goal is unreachable") {
  MazeSpec m = original_maze();
  // wall off the goal entirely
  m.walls[3][1] = false;  // keep goal free
  m.walls[3][2] = true;
  m.walls[2][3] = true;   // (3,2) blocked
  CHECK_THROWS_AS(bfs_shortest_path(m, m.start, m.goal), NoPathError);
}

namespace {

// Independent oracle: all-pairs shortest paths by Floyd-Warshall on the
// free-cell adjacency graph.
int floyd_warshall_distance(const MazeSpec& m, Cell start, Cell goal) {
  constexpr int kInf = 1'000'000;
  std::array<std::array<int, 25>, 25> dist{};
  for (auto& row : dist) row.fill(kInf);
  auto id = [](int x, int y) { return y * 5 + x; };
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x) {
      if (m.wall(x, y)) continue;
      dist[id(x, y)][id(x, y)] = 0;
      if (!m.wall(x + 1, y)) dist[id(x, y)][id(x + 1, y)] = 1;
      if (!m.wall(x - 1, y)) dist[id(x, y)][id(x - 1, y)] = 1;
      if (!m.wall(x, y + 1)) dist[id(x, y)][id(x, y + 1)] = 1;
      if (!m.wall(x, y - 1)) dist[id(x, y)][id(x, y - 1)] = 1;
    }
  for (int k = 0; k < 25; ++k)
    for (int i = 0; i < 25; ++i)
      for (int j = 0; j < 25; ++j)
        if (dist[i][k] + dist[k][j] < dist[i][j]) dist[i][j] = dist[i][k] + dist[k][j];
  return dist[id(start.x, start.y)][id(goal.x, goal.y)];
}

}  // namespace

TEST_CASE("bfs length equals the exhaustive shortest path on all interior layouts") {
  // border fixed to walls; every configuration of the 3x3 interior
  for (int mask = 0; mask < (1 << 9); ++mask) {
    MazeSpec m;
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 5; ++x)
        m.walls[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)] = true;
    std::vector<Cell> free;
    for (int i = 0; i < 9; ++i) {
      if (mask & (1 << i)) continue;
      const Cell c{1 + i % 3, 1 + i / 3};
      m.walls[static_cast<std::size_t>(c.y)][static_cast<std::size_t>(c.x)] = false;
      free.push_back(c);
    }
    for (const Cell& s : free)
      for (const Cell& g : free) {
        const int oracle = floyd_warshall_distance(m, s, g);
        if (oracle >= 1'000'000) {
          CHECK_THROWS_AS(bfs_shortest_path(m, s, g), NoPathError);
        } else {
          CHECK(bfs_shortest_path(m, s, g).moves() == oracle);
        }
      }
  }
}

TEST_CASE("waypoint_action: stationary at the final waypoint, saturates far away") {
  GridPath path;
  path.cells = {{1, 1}, {1, 2}};
  const ControllerConfig cfg;

  WaypointCursor at_end;
  EnvState s;
  s.pos = {1.5, 2.5};  // final waypoint center
  s.vel = Vec2::Zero();
  const Vec2 a = waypoint_action(path, cfg, at_end, s);
  CHECK(a.norm() == doctest::Approx(0.0).epsilon(1e-12));

  WaypointCursor below;
  EnvState far;
  far.pos = {1.5, 0.2};  // well below the first waypoint
  far.vel = Vec2::Zero();
  const Vec2 up = waypoint_action(path, cfg, below, far);
  CHECK(up.x() == doctest::Approx(0.0));
  CHECK(up.y() == doctest::Approx(1.0));

  // odd symmetry of the proportional law
  WaypointCursor c1, c2;
  EnvState left, right;
  left.pos = {1.2, 1.5};
  right.pos = {1.8, 1.5};
  const Vec2 al = waypoint_action(path, cfg, c1, left);
  const Vec2 ar = waypoint_action(path, cfg, c2, right);
  CHECK(al.x() == doctest::Approx(-ar.x()).epsilon(1e-12));
}

TEST_CASE("noisy policy: sigma 0 is the base, outputs clamped, mean matches MC") {
  const MazeSpec orig = original_maze();
  const GridPath path = bfs_shortest_path(orig, orig.start, orig.goal);
  const ControllerConfig ctrl;
  const Policy noiseless = make_noisy_waypoint_policy(path, ctrl, 0.0);

  EnvState s;
  s.pos = {1.4, 1.3};
  s.vel = {0.2, -0.1};
  Rng rng(1);
  WaypointCursor c1, c2;
  const Vec2 a1 = policy_action(noiseless, c1, s, rng);
  const Vec2 base = waypoint_action(path, ctrl, c2, s);
  CHECK(a1 == base);

  const Policy noisy = make_noisy_waypoint_policy(path, ctrl, 0.7);
  // empirical mean of clamp(base + eps) over many draws, vs direct MC with
  // the same estimator on an independent stream
  const int n = 100'000;
  Vec2 sum = Vec2::Zero();
  Mat draws(n, 2);
  for (int i = 0; i < n; ++i) {
    WaypointCursor c;
    const Vec2 a = policy_action(noisy, c, s, rng);
    CHECK(a.x() >= -1.0);
    CHECK(a.x() <= 1.0);
    CHECK(a.y() >= -1.0);
    CHECK(a.y() <= 1.0);
    sum += a;
    draws.row(i) = a.transpose();
  }
  const Vec2 emp = sum / n;
  Rng ind(77);
  Vec2 oracle = Vec2::Zero();
  for (int i = 0; i < n; ++i) {
    Vec2 a = base + 0.7 * Vec2{ind.normal(), ind.normal()};
    oracle += a.cwiseMax(-1.0).cwiseMin(1.0);
  }
  oracle /= n;
  for (int k = 0; k < 2; ++k) {
    const double se = sample_stddev(std::vector<double>(draws.col(k).data(),
                                                        draws.col(k).data() + n)) /
                      std::sqrt(static_cast<double>(n));
    CHECK(std::abs(emp[k] - oracle[k]) <= 3.0 * se * std::sqrt(2.0));
  }

  // repeated calls at the same state differ (noise active)
  WaypointCursor ca, cb;
  CHECK(policy_action(noisy, ca, s, rng) != policy_action(noisy, cb, s, rng));
}

TEST_CASE("noiseless controller drives start -> goal in the original maze") {
  const MazeSpec maze = original_maze();
  const EnvConfig cfg;
  const GridPath path = bfs_shortest_path(maze, maze.start, maze.goal);
  const Policy policy = make_noisy_waypoint_policy(path, ControllerConfig{}, 0.0);
  Rng rng(2);
  EnvState s = env_reset(maze, cfg, rng);
  WaypointCursor cursor;
  double best = 1e9;
  for (int t = 0; t < 200; ++t) {
    const Vec2 a = policy_action(policy, cursor, s, rng);
    s = env_step(maze, cfg, s, a).first;
    best = std::min(best, (s.pos - maze.goal_center()).norm());
  }
  CHECK(best < 0.5);
}

TEST_CASE("pi_sub reaches the goal cell in the modified maze") {
  const MazeSpec mod = modified_maze();
  const EnvConfig cfg;
  auto [pi_star, pi_sub] = build_policy_pair(0.3);
  (void)pi_star;
  Rng rng(8);
  int successes = 0;
  for (int e = 0; e < 20; ++e) {
    EnvState s = env_reset(mod, cfg, rng);
    WaypointCursor cursor;
    for (int t = 0; t < 50; ++t) {
      const Vec2 a = policy_action(pi_sub, cursor, s, rng);
      s = env_step(mod, cfg, s, a).first;
      if (static_cast<int>(s.pos.x()) == mod.goal.x &&
          static_cast<int>(s.pos.y()) == mod.goal.y) {
        ++successes;
        break;
      }
    }
  }
  CHECK(successes == 20);
}

TEST_CASE("policy premise: pi_star beats pi_sub in the true original maze") {
  const MazeSpec maze = original_maze();
  const EnvConfig cfg;
  auto [pi_star, pi_sub] = build_policy_pair(0.3);
  for (const int horizon : {30, 50}) {
    const auto star = evaluate_policy_env(maze, cfg, pi_star, 256, horizon, 11);
    const auto sub = evaluate_policy_env(maze, cfg, pi_sub, 256, horizon, 12);
    CHECK(mean(star) > mean(sub));
    Rng rng(13);
    const double q01 = bootstrap_mean_diff_quantile(star, sub, 4000, 0.01, rng);
    CHECK(q01 > 0.0);  // 99% bootstrap confidence
  }
}
