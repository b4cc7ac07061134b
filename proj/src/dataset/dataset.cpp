// SPDX-License-Identifier: Apache-2.0
#include "vgjepa/dataset/dataset.hpp"

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <thread>

#include "vgjepa/common/binary_io.hpp"

namespace vgjepa::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[] = "VGJTRAJ1";
constexpr int kFormatVersion = 1;

double round_f32(double v) { return static_cast<double>(static_cast<float>(v)); }
env::Vec2 round_f32(env::Vec2 v) { return {round_f32(v.x), round_f32(v.y)}; }

void append_frame(std::vector<float>& frames, std::vector<float>& proprio,
                  const env::Observation& obs) {
  auto img = obs.image.data();
  frames.insert(frames.end(), img.begin(), img.end());
  proprio.insert(proprio.end(), obs.proprio.begin(), obs.proprio.end());
}

FrameShape frame_shape_for(const DatasetConfig& cfg) {
  if (cfg.is_maze()) return {env::MazeWorld::kChannels, cfg.maze.image_size, 2};
  return {env::WallWorld::kChannels, cfg.wall.image_size, 0};
}

void validate(const DatasetConfig& cfg) {
  if (cfg.num_trajectories == 0) throw ConfigError("dataset must not be empty");
  if (cfg.length < 2) throw ConfigError("trajectory length must be at least 2");
  if (cfg.von_mises_kappa <= 0) throw ConfigError("von Mises kappa must be > 0");
  if (cfg.crossing_fraction < 0 || cfg.crossing_fraction > 1)
    throw ConfigError("crossing_fraction must lie in [0, 1]");
  if (cfg.maze_max_action <= 0) throw ConfigError("maze_max_action must be > 0");
}

// Crossing trajectories occupy the even indices until the quota is met.
bool wants_crossing(const DatasetConfig& cfg, std::size_t index) {
  const auto quota = static_cast<std::size_t>(
      std::llround(cfg.crossing_fraction * static_cast<double>(cfg.num_trajectories)));
  const std::size_t n = cfg.num_trajectories;
  if (quota * 2 <= n) return index % 2 == 0 && index / 2 < quota;
  // More than half: all even indices, then odd ones from the front.
  const std::size_t odd_needed = quota - (n + 1) / 2;
  return index % 2 == 0 || index / 2 < odd_needed;
}

std::size_t block_floats(const FrameShape& fs, std::size_t length) {
  return length * fs.image_floats() + length * fs.proprio + (length - 1) * 2 +
         length * 4;
}

void append_block(std::string& out, const TrajectoryInfo& info,
                  std::span<const float> images, std::span<const float> proprio) {
  io::append_f32(out, images);
  io::append_f32(out, proprio);
  std::vector<double> tmp;
  tmp.reserve(info.poses.size() * 4);
  for (const auto& a : info.actions) {
    tmp.push_back(a.x);
    tmp.push_back(a.y);
  }
  io::append_f32(out, std::span<const double>(tmp));
  tmp.clear();
  for (const auto& p : info.poses) {
    tmp.insert(tmp.end(), {p.x, p.y, p.vx, p.vy});
  }
  io::append_f32(out, std::span<const double>(tmp));
}

json trajectory_json(const TrajectoryInfo& info) {
  json j;
  j["world"] = info.world;
  j["crossed_door"] = info.crossed_door;
  j["base_direction"] = info.base_direction;
  j["layout_id"] = info.layout_id;
  return j;
}

std::string header_bytes(std::size_t count, std::size_t block_bytes) {
  std::string out(kMagic, 8);
  io::append_u64(out, count);
  const std::size_t first = 16 + 16 * count;
  for (std::size_t i = 0; i < count; ++i) {
    io::append_u64(out, first + i * block_bytes);
    io::append_u64(out, block_bytes);
  }
  return out;
}

void write_manifest(const fs::path& dir, const json& manifest) {
  io::write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

class MappedFile {
 public:
  explicit MappedFile(const fs::path& path) {
    fd_ = ::open(path.c_str(), O_RDONLY);
    if (fd_ < 0) throw DataError("cannot open " + path.string());
    struct stat st {};
    if (::fstat(fd_, &st) != 0) {
      ::close(fd_);
      throw DataError("cannot stat " + path.string());
    }
    size_ = static_cast<std::size_t>(st.st_size);
    if (size_ > 0) {
      void* p = ::mmap(nullptr, size_, PROT_READ, MAP_PRIVATE, fd_, 0);
      if (p == MAP_FAILED) {
        ::close(fd_);
        throw DataError("cannot map " + path.string());
      }
      data_ = static_cast<const char*>(p);
    }
  }
  ~MappedFile() {
    if (data_) ::munmap(const_cast<char*>(data_), size_);
    if (fd_ >= 0) ::close(fd_);
  }
  MappedFile(const MappedFile&) = delete;
  MappedFile& operator=(const MappedFile&) = delete;

  std::string_view bytes() const { return {data_, size_}; }
  const char* data() const { return data_; }

 private:
  int fd_ = -1;
  const char* data_ = nullptr;
  std::size_t size_ = 0;
};

struct OwnedFrames {
  std::vector<std::vector<float>> images;
  std::vector<std::vector<float>> proprio;
};

}  // namespace

std::string to_string(Regime r) {
  switch (r) {
    case Regime::kWS: return "WS";
    case Regime::kWB: return "WB";
    case Regime::kMaze: return "MAZE";
  }
  return "?";
}

Regime parse_regime(const std::string& s) {
  std::string u = s;
  std::transform(u.begin(), u.end(), u.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (u == "WS") return Regime::kWS;
  if (u == "WB") return Regime::kWB;
  if (u == "MAZE") return Regime::kMaze;
  throw ConfigError("unknown regime '" + s + "' (expected ws, wb or maze)");
}

NormDistribution wall_norms(Regime r) {
  switch (r) {
    case Regime::kWS: return {1.0, 0.4, 0.2, 1.8};
    case Regime::kWB: return {2.0, 0.8, 0.4, 3.6};
    case Regime::kMaze: break;
  }
  throw ConfigError("maze regime has no wall norm distribution");
}

DatasetConfig DatasetConfig::defaults(Regime r) {
  DatasetConfig c;
  c.regime = r;
  c.num_trajectories = 1000;
  c.length = r == Regime::kMaze ? 101 : 64;
  return c;
}

void to_json(json& j, const DatasetConfig& c) {
  j = json{{"regime", to_string(c.regime)},
           {"num_trajectories", c.num_trajectories},
           {"length", c.length},
           {"von_mises_kappa", c.von_mises_kappa},
           {"crossing_fraction", c.crossing_fraction},
           {"max_attempts_per_trajectory", c.max_attempts_per_trajectory},
           {"maze_max_action", c.maze_max_action},
           {"wall", c.wall},
           {"maze", c.maze}};
}

void from_json(const json& j, DatasetConfig& c) {
  DatasetConfig d = DatasetConfig::defaults(
      parse_regime(j.value("regime", std::string("WS"))));
  d.num_trajectories = j.value("num_trajectories", d.num_trajectories);
  d.length = j.value("length", d.length);
  d.von_mises_kappa = j.value("von_mises_kappa", d.von_mises_kappa);
  d.crossing_fraction = j.value("crossing_fraction", d.crossing_fraction);
  d.max_attempts_per_trajectory =
      j.value("max_attempts_per_trajectory", d.max_attempts_per_trajectory);
  d.maze_max_action = j.value("maze_max_action", d.maze_max_action);
  if (j.contains("wall")) d.wall = j.at("wall").get<env::WallConfig>();
  if (j.contains("maze")) d.maze = j.at("maze").get<env::MazeConfig>();
  c = d;
}

TrajectoryDataset::TrajectoryDataset(json manifest, FrameShape shape,
                                     std::vector<TrajectoryInfo> infos,
                                     std::vector<FramePointers> frames,
                                     std::shared_ptr<const void> storage)
    : manifest_(std::move(manifest)),
      shape_(shape),
      infos_(std::move(infos)),
      length_(0),
      frames_(std::move(frames)),
      storage_(std::move(storage)) {
  if (infos_.empty()) throw DataError("dataset is empty");
  if (frames_.size() != infos_.size())
    throw DataError("frame table does not match trajectory count");
  length_ = infos_.front().poses.size();
  for (const auto& info : infos_) {
    if (info.poses.size() != length_ || info.actions.size() + 1 != length_)
      throw DataError("inconsistent trajectory lengths");
  }
}

Regime TrajectoryDataset::regime() const {
  return parse_regime(manifest_.at("regime").get<std::string>());
}

std::span<const float> TrajectoryDataset::image(std::size_t traj, std::size_t t) const {
  if (traj >= infos_.size() || t >= length_) throw DataError("frame index out of range");
  const std::size_t n = shape_.image_floats();
  return {frames_[traj].images + t * n, n};
}

std::span<const float> TrajectoryDataset::proprio(std::size_t traj, std::size_t t) const {
  if (traj >= infos_.size() || t >= length_) throw DataError("frame index out of range");
  return {frames_[traj].proprio + t * shape_.proprio, shape_.proprio};
}

env::Observation TrajectoryDataset::observation(std::size_t traj, std::size_t t) const {
  env::Observation obs;
  obs.image = ad::Tensor<float>({shape_.channels, shape_.resolution, shape_.resolution});
  auto src = image(traj, t);
  std::copy(src.begin(), src.end(), obs.image.ptr());
  auto p = proprio(traj, t);
  obs.proprio.assign(p.begin(), p.end());
  return obs;
}

double sample_von_mises(double kappa, Rng& rng) {
  if (kappa <= 0) throw ConfigError("von Mises kappa must be > 0");
  const double tau = 1.0 + std::sqrt(1.0 + 4.0 * kappa * kappa);
  const double rho = (tau - std::sqrt(2.0 * tau)) / (2.0 * kappa);
  const double r = (1.0 + rho * rho) / (2.0 * rho);
  for (;;) {
    const double u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    const double u3 = uniform01(rng);
    const double z = std::cos(std::numbers::pi * u1);
    const double f = (1.0 + r * z) / (r + z);
    const double c = kappa * (r - f);
    if (u2 <= 0.0) continue;
    if (c * (2.0 - c) - u2 > 0.0 || std::log(c / u2) + 1.0 - c >= 0.0) {
      const double theta = std::acos(std::clamp(f, -1.0, 1.0));
      return u3 < 0.5 ? -theta : theta;
    }
  }
}

GeneratedTrajectory generate_wall_trajectory(const DatasetConfig& cfg,
                                             std::uint64_t seed, std::size_t index,
                                             bool want_crossing) {
  const NormDistribution norms = wall_norms(cfg.regime);
  const std::size_t steps = cfg.length - 1;
  for (std::size_t attempt = 0; attempt < cfg.max_attempts_per_trajectory; ++attempt) {
    const std::uint64_t s = derive_seed(seed, index, attempt);
    const env::WallWorld world = env::sample_wall_world(cfg.wall, derive_seed(s, 1));
    Rng rng = make_rng(derive_seed(s, 2));
    env::Vec2 pos;
    do {
      pos = round_f32(env::sample_wall_position(world, rng));
    } while (!world.legal(pos));
    const double base = uniform(rng, 0.0, 2.0 * std::numbers::pi);

    GeneratedTrajectory out;
    out.info.base_direction = base;
    out.info.actions.reserve(steps);
    out.info.poses.reserve(cfg.length);
    out.info.poses.push_back({pos.x, pos.y, 0.0, 0.0});
    const int start_side = world.side_of(pos);
    bool crossed = false;
    for (std::size_t t = 0; t < steps; ++t) {
      const double dir = base + sample_von_mises(cfg.von_mises_kappa, rng);
      const double norm = std::clamp(norms.mean + norms.sd * standard_normal(rng),
                                     norms.lo, norms.hi);
      const env::Vec2 a = round_f32(env::Vec2{norm * std::cos(dir), norm * std::sin(dir)});
      pos = world.step(pos, a);
      crossed = crossed || world.side_of(pos) != start_side;
      out.info.actions.push_back(a);
      out.info.poses.push_back({pos.x, pos.y, 0.0, 0.0});
    }
    if (crossed != want_crossing) continue;

    out.info.crossed_door = crossed;
    out.info.world = world.to_json();
    const FrameShape fs = frame_shape_for(cfg);
    out.frames.reserve(cfg.length * fs.image_floats());
    for (const auto& p : out.info.poses) append_frame(out.frames, out.proprio, world.render(p.pos()));
    return out;
  }
  throw DataError("door-crossing quota unreachable for trajectory " +
                  std::to_string(index) + " within " +
                  std::to_string(cfg.max_attempts_per_trajectory) + " attempts");
}

GeneratedTrajectory generate_maze_trajectory(const DatasetConfig& cfg,
                                             std::uint64_t seed, std::size_t index) {
  static thread_local std::pair<json, std::vector<env::MazeLayout>> cache;
  const json key = cfg.maze;
  if (cache.first != key) cache = {key, env::training_layouts(cfg.maze)};
  const auto& layouts = cache.second;

  const int layout_id = static_cast<int>(index % layouts.size());
  const std::uint64_t s = derive_seed(seed, index);
  const env::MazeWorld world(cfg.maze, layouts[static_cast<std::size_t>(layout_id)],
                             derive_seed(s, 1), layout_id);
  Rng rng = make_rng(derive_seed(s, 2));
  env::MazeState st;
  do {
    st = env::sample_maze_state(world, rng);
    st.pos = round_f32(st.pos);
  } while (!world.legal(st.pos));
  st.vel = {0.0, 0.0};

  GeneratedTrajectory out;
  out.info.layout_id = layout_id;
  out.info.world = world.to_json();
  out.info.poses.push_back({st.pos.x, st.pos.y, st.vel.x, st.vel.y});
  // Strictly inside the open disc even after rounding to float.
  const double max_norm = cfg.maze_max_action * (1.0 - 1e-6);
  const FrameShape fs = frame_shape_for(cfg);
  out.frames.reserve(cfg.length * fs.image_floats());
  append_frame(out.frames, out.proprio, world.render(st));
  for (std::size_t t = 0; t + 1 < cfg.length; ++t) {
    const double dir = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double norm = max_norm * uniform01(rng);
    const env::Vec2 a = round_f32(env::Vec2{norm * std::cos(dir), norm * std::sin(dir)});
    st = world.step(st, a);
    out.info.actions.push_back(a);
    out.info.poses.push_back({st.pos.x, st.pos.y, st.vel.x, st.vel.y});
    append_frame(out.frames, out.proprio, world.render(st));
  }
  return out;
}

json generate(const DatasetConfig& cfg, std::uint64_t seed, const TrajectorySink& sink,
              unsigned threads) {
  validate(cfg);
  const std::size_t n = cfg.num_trajectories;
  auto make_one = [&](std::size_t i) {
    return cfg.is_maze() ? generate_maze_trajectory(cfg, seed, i)
                         : generate_wall_trajectory(cfg, seed, i, wants_crossing(cfg, i));
  };

  json trajectories = json::array();
  std::size_t crossing = 0;
  auto emit = [&](std::size_t i, GeneratedTrajectory&& g) {
    crossing += g.info.crossed_door ? 1 : 0;
    trajectories.push_back(trajectory_json(g.info));
    sink(i, std::move(g));
  };

  threads = std::max(1u, threads);
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) emit(i, make_one(i));
  } else {
    // Chunks of `threads` trajectories generated concurrently, emitted in order.
    for (std::size_t lo = 0; lo < n; lo += threads) {
      const std::size_t hi = std::min(n, lo + threads);
      std::vector<GeneratedTrajectory> chunk(hi - lo);
      std::vector<std::exception_ptr> errors(hi - lo);
      std::vector<std::thread> pool;
      for (std::size_t i = lo; i < hi; ++i) {
        pool.emplace_back([&, i] {
          try {
            chunk[i - lo] = make_one(i);
          } catch (...) {
            errors[i - lo] = std::current_exception();
          }
        });
      }
      for (auto& t : pool) t.join();
      for (auto& e : errors)
        if (e) std::rethrow_exception(e);
      for (std::size_t i = lo; i < hi; ++i) emit(i, std::move(chunk[i - lo]));
    }
  }

  const FrameShape fs = frame_shape_for(cfg);
  json m;
  m["format"] = "vgjepa-trajectories";
  m["version"] = kFormatVersion;
  m["env"] = cfg.is_maze() ? "maze" : "wall";
  m["regime"] = to_string(cfg.regime);
  m["seed"] = seed;
  m["config"] = cfg;
  m["frame"] = {{"channels", fs.channels}, {"resolution", fs.resolution},
                {"proprio", fs.proprio}};
  json counts = {{"trajectories", n}, {"length", cfg.length},
                 {"actions_per_trajectory", cfg.length - 1}};
  if (cfg.is_maze()) {
    json layouts = json::array();
    for (const auto& l : env::training_layouts(cfg.maze)) layouts.push_back(l.open);
    m["layouts"] = layouts;
    counts["layouts"] = layouts.size();
  } else {
    counts["crossing"] = crossing;
  }
  m["counts"] = counts;
  m["trajectories"] = std::move(trajectories);
  return m;
}

TrajectoryDataset generate_dataset(const DatasetConfig& cfg, std::uint64_t seed,
                                   unsigned threads) {
  auto owned = std::make_shared<OwnedFrames>();
  std::vector<TrajectoryInfo> infos;
  json manifest = generate(
      cfg, seed,
      [&](std::size_t, GeneratedTrajectory&& g) {
        infos.push_back(std::move(g.info));
        owned->images.push_back(std::move(g.frames));
        owned->proprio.push_back(std::move(g.proprio));
      },
      threads);
  std::vector<TrajectoryDataset::FramePointers> ptrs;
  for (std::size_t i = 0; i < infos.size(); ++i)
    ptrs.push_back({owned->images[i].data(), owned->proprio[i].data()});
  return TrajectoryDataset(std::move(manifest), frame_shape_for(cfg), std::move(infos),
                           std::move(ptrs), owned);
}

TrajectoryDataset generate_wall_dataset(Regime regime, std::uint64_t seed) {
  if (regime == Regime::kMaze) throw ConfigError("wall dataset needs regime WS or WB");
  return generate_dataset(DatasetConfig::defaults(regime), seed);
}

TrajectoryDataset generate_maze_dataset(std::uint64_t seed) {
  return generate_dataset(DatasetConfig::defaults(Regime::kMaze), seed);
}

void write_dataset(const TrajectoryDataset& ds, const fs::path& dir) {
  fs::create_directories(dir);
  const FrameShape& fs = ds.frame_shape();
  const std::size_t block_bytes = block_floats(fs, ds.length()) * sizeof(float);
  std::string bytes = header_bytes(ds.size(), block_bytes);
  bytes.reserve(bytes.size() + ds.size() * block_bytes);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const float* img = ds.image(i, 0).data();
    const float* pro = ds.proprio(i, 0).data();
    append_block(bytes, ds.info(i),
                 std::span<const float>(img, ds.length() * fs.image_floats()),
                 std::span<const float>(pro, ds.length() * fs.proprio));
  }
  io::write_file(dir / "trajectories.bin", bytes);
  write_manifest(dir, ds.manifest());
}

json generate_to_disk(const DatasetConfig& cfg, std::uint64_t seed, const fs::path& dir,
                      unsigned threads) {
  validate(cfg);
  fs::create_directories(dir);
  const FrameShape shape = frame_shape_for(cfg);
  const std::size_t block_bytes = block_floats(shape, cfg.length) * sizeof(float);
  const fs::path tmp = dir / "trajectories.bin.partial";
  std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + tmp.string());
  const std::string head = header_bytes(cfg.num_trajectories, block_bytes);
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  std::string block;
  json manifest = generate(
      cfg, seed,
      [&](std::size_t, GeneratedTrajectory&& g) {
        block.clear();
        append_block(block, g.info, g.frames, g.proprio);
        out.write(block.data(), static_cast<std::streamsize>(block.size()));
      },
      threads);
  out.close();
  if (!out) throw DataError("short write to " + tmp.string());
  fs::rename(tmp, dir / "trajectories.bin");
  write_manifest(dir, manifest);
  return manifest;
}

TrajectoryDataset read_dataset(const fs::path& dir) {
  json manifest;
  try {
    manifest = json::parse(io::read_file(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw DataError("malformed manifest in " + dir.string() + ": " + e.what());
  }
  if (manifest.value("format", std::string()) != "vgjepa-trajectories" ||
      manifest.value("version", 0) != kFormatVersion)
    throw DataError("unsupported dataset format in " + dir.string());

  FrameShape fs;
  const json& fr = manifest.at("frame");
  fs.channels = fr.at("channels").get<std::size_t>();
  fs.resolution = fr.at("resolution").get<std::size_t>();
  fs.proprio = fr.at("proprio").get<std::size_t>();
  const std::size_t length = manifest.at("counts").at("length").get<std::size_t>();
  const json& traj = manifest.at("trajectories");

  auto file = std::make_shared<MappedFile>(dir / "trajectories.bin");
  io::Reader r(file->bytes());
  if (r.take(8) != std::string_view(kMagic, 8)) throw DataError("bad dataset magic");
  const std::size_t count = r.u64();
  if (count != traj.size()) throw DataError("index table does not match manifest");
  const std::size_t expect = block_floats(fs, length) * sizeof(float);

  std::vector<TrajectoryInfo> infos(count);
  std::vector<TrajectoryDataset::FramePointers> ptrs(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t offset = r.u64();
    const std::size_t bytes = r.u64();
    if (bytes != expect || offset % alignof(float) != 0 ||
        offset + bytes > file->bytes().size())
      throw DataError("corrupt index entry " + std::to_string(i));
    const auto* base = reinterpret_cast<const float*>(file->data() + offset);
    ptrs[i].images = base;
    ptrs[i].proprio = base + length * fs.image_floats();
    const float* acts = ptrs[i].proprio + length * fs.proprio;
    const float* poses = acts + (length - 1) * 2;

    TrajectoryInfo& info = infos[i];
    const json& tj = traj.at(i);
    info.world = tj.at("world");
    info.crossed_door = tj.at("crossed_door").get<bool>();
    info.base_direction = tj.at("base_direction").get<double>();
    info.layout_id = tj.at("layout_id").get<int>();
    info.actions.resize(length - 1);
    for (std::size_t t = 0; t + 1 < length; ++t)
      info.actions[t] = {acts[2 * t], acts[2 * t + 1]};
    info.poses.resize(length);
    for (std::size_t t = 0; t < length; ++t)
      info.poses[t] = {poses[4 * t], poses[4 * t + 1], poses[4 * t + 2], poses[4 * t + 3]};
  }
  return TrajectoryDataset(std::move(manifest), fs, std::move(infos), std::move(ptrs),
                           file);
}

}  // namespace vgjepa::data
