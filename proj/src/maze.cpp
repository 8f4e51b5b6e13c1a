#include "mcis/maze.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>
#include <fstream>

#include "mcis/common.hpp"

namespace mcis {
namespace {

// Keeps a clamped coordinate strictly outside the wall cell so floor() stays
// in the free cell on subsequent steps.
constexpr double kWallNudge = 1e-9;

MazeSpec boxed_maze() {
  MazeSpec m;
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x)
      m.walls[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)] =
          (x == 0 || x == 4 || y == 0 || y == 4);
  m.start = {1, 1};
  m.goal = {1, 3};
  return m;
}

void set_wall(MazeSpec& m, int x, int y, bool wall) {
  m.walls[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)] = wall;
}

}  // namespace

MazeSpec original_maze() {
  MazeSpec m = boxed_maze();
  set_wall(m, 1, 2, true);
  set_wall(m, 2, 2, true);
  set_wall(m, 3, 2, false);
  return m;
}

MazeSpec modified_maze() {
  MazeSpec m = boxed_maze();
  set_wall(m, 1, 2, false);
  set_wall(m, 2, 2, true);
  set_wall(m, 3, 2, true);
  return m;
}

void validate_maze(const MazeSpec& maze) {
  for (int i = 0; i < 5; ++i) {
    if (!maze.wall(i, 0) || !maze.wall(i, 4) || !maze.wall(0, i) || !maze.wall(4, i))
      throw ConfigError("maze: border cells must be walls");
  }
  if (maze.wall(maze.start.x, maze.start.y) || maze.wall(maze.goal.x, maze.goal.y))
    throw ConfigError("maze: start and goal must be free cells");
  // goal reachable from start, 4-connected
  std::array<std::array<bool, 5>, 5> seen{};
  std::deque<Cell> queue{maze.start};
  seen[static_cast<std::size_t>(maze.start.y)][static_cast<std::size_t>(maze.start.x)] = true;
  while (!queue.empty()) {
    const Cell c = queue.front();
    queue.pop_front();
    if (c == maze.goal) return;
    const Cell nbrs[4] = {{c.x, c.y + 1}, {c.x + 1, c.y}, {c.x, c.y - 1}, {c.x - 1, c.y}};
    for (const Cell& n : nbrs) {
      if (maze.wall(n.x, n.y)) continue;
      auto& flag = seen[static_cast<std::size_t>(n.y)][static_cast<std::size_t>(n.x)];
      if (!flag) {
        flag = true;
        queue.push_back(n);
      }
    }
  }
  throw ConfigError("maze: goal not reachable from start");
}

double manhattan_reward(const MazeSpec& maze, const Vec2& pos) {
  const Vec2 g = maze.goal_center();
  return -(std::abs(pos.x() - g.x()) + std::abs(pos.y() - g.y()));
}

namespace {

// Move one axis; returns the new coordinate and zeroes v on collision.
double move_axis(const MazeSpec& maze, double from, double other, bool axis_x,
                 double delta, double& v) {
  const double target = from + delta;
  const bool blocked = axis_x ? maze.wall_at(target, other) : maze.wall_at(other, target);
  if (!blocked) return target;
  v = 0.0;
  if (delta > 0.0) {
    const double face = std::floor(target);
    return face - kWallNudge;
  }
  if (delta < 0.0) {
    const double face = std::floor(target) + 1.0;
    return face + kWallNudge;
  }
  return from;  // already in contact
}

}  // namespace

std::pair<EnvState, double> env_step(const MazeSpec& maze, const EnvConfig& cfg,
                                     const EnvState& s, Vec2 a) {
  if (!a.allFinite()) throw NumericError("env_step: non-finite action");
  a = a.cwiseMax(-1.0).cwiseMin(1.0);
  EnvState next;
  next.vel = (cfg.damping * s.vel + cfg.action_gain * a)
                 .cwiseMax(-cfg.v_max)
                 .cwiseMin(cfg.v_max);
  double vx = next.vel.x(), vy = next.vel.y();
  const double nx = move_axis(maze, s.pos.x(), s.pos.y(), true, vx * cfg.dt, vx);
  const double ny = move_axis(maze, s.pos.y(), nx, false, vy * cfg.dt, vy);
  next.vel = {vx, vy};
  next.pos = {nx, ny};
  return {next, manhattan_reward(maze, next.pos)};
}

EnvState env_reset(const MazeSpec& maze, const EnvConfig& cfg, Rng& rng) {
  EnvState s;
  const double m = cfg.start_margin;
  s.pos = {maze.start.x + rng.uniform(m, 1.0 - m),
           maze.start.y + rng.uniform(m, 1.0 - m)};
  s.vel = Vec2::Zero();
  return s;
}

Dataset collect_dataset(const MazeSpec& maze, const EnvConfig& cfg,
                        std::uint64_t seed, int n_trajectories, int traj_len,
                        int repeat_max) {
  if (n_trajectories < 1 || traj_len < 1 || repeat_max < 1)
    throw ConfigError("collect_dataset: counts must be >= 1");
  const std::int64_t total =
      static_cast<std::int64_t>(n_trajectories) * traj_len;
  Dataset data;
  data.s.resize(total, 4);
  data.a.resize(total, 2);
  data.delta.resize(total, 4);

  std::int64_t row = 0;
  for (int traj = 0; traj < n_trajectories; ++traj) {
    Rng rng(derive_seed(seed, "collect-traj", static_cast<std::uint64_t>(traj)));
    EnvState s = env_reset(maze, cfg, rng);
    Vec2 action = Vec2::Zero();
    int hold = 0;
    for (int t = 0; t < traj_len; ++t) {
      if (hold == 0) {
        action = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        hold = rng.uniform_int(1, repeat_max);
      }
      --hold;
      const auto [next, reward] = env_step(maze, cfg, s, action);
      (void)reward;
      data.s.row(row) = s.as_vec().transpose();
      data.a.row(row) = action.transpose();
      data.delta.row(row) = (next.as_vec() - s.as_vec()).transpose();
      ++row;
      s = next;
    }
  }
  return data;
}

namespace {

constexpr char kDatasetMagic[4] = {'M', 'Z', 'D', 'S'};
constexpr std::uint32_t kDatasetVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace

void save_dataset(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open dataset file for writing: " + path.string());
  out.write(kDatasetMagic, 4);
  write_pod(out, kDatasetVersion);
  write_pod(out, static_cast<std::uint64_t>(data.size()));
  for (std::int64_t i = 0; i < data.size(); ++i) {
    double rec[10];
    for (int j = 0; j < 4; ++j) rec[j] = data.s(i, j);
    for (int j = 0; j < 2; ++j) rec[4 + j] = data.a(i, j);
    for (int j = 0; j < 4; ++j) rec[6 + j] = data.delta(i, j);
    out.write(reinterpret_cast<const char*>(rec), sizeof(rec));
  }
  if (!out) throw IoError("write failed: " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset file: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kDatasetMagic, 4) != 0)
    throw IoError("bad dataset magic in " + path.string());
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kDatasetVersion)
    throw IoError("unsupported dataset version " + std::to_string(version));
  const auto count = read_pod<std::uint64_t>(in);
  Dataset data;
  data.s.resize(static_cast<std::int64_t>(count), 4);
  data.a.resize(static_cast<std::int64_t>(count), 2);
  data.delta.resize(static_cast<std::int64_t>(count), 4);
  for (std::uint64_t i = 0; i < count; ++i) {
    double rec[10];
    in.read(reinterpret_cast<char*>(rec), sizeof(rec));
    if (!in) throw IoError("truncated dataset file: " + path.string());
    const auto r = static_cast<std::int64_t>(i);
    for (int j = 0; j < 4; ++j) data.s(r, j) = rec[j];
    for (int j = 0; j < 2; ++j) data.a(r, j) = rec[4 + j];
    for (int j = 0; j < 4; ++j) data.delta(r, j) = rec[6 + j];
  }
  return data;
}

}  // namespace mcis
