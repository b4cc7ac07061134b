// SPDX-License-Identifier: Apache-2.0
#include "vgjepa/dataset/batch.hpp"

#include <algorithm>

namespace vgjepa::data {

Batch sample_batch(const TrajectoryDataset& ds, std::size_t batch_size, Rng& rng,
                   std::size_t length) {
  if (ds.size() == 0) throw DataError("cannot sample from an empty dataset");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (length < 2 || ds.length() < length)
    throw DataError("trajectories shorter than the segment length " +
                    std::to_string(length));
  Batch b;
  b.length = length;
  const std::size_t starts = ds.length() - length + 1;
  b.segments.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) {
    const std::size_t traj = uniform_index(rng, ds.size());
    b.segments.push_back({traj, uniform_index(rng, starts)});
  }
  b.goal_candidates.reserve(2 * batch_size);
  for (const auto& s : b.segments) b.goal_candidates.push_back({s.traj, ds.length() - 1});
  b.num_final_goals = batch_size;
  for (std::size_t i = 0; i < batch_size; ++i) {
    const Segment& s = b.segments[uniform_index(rng, batch_size)];
    b.goal_candidates.push_back(s.state(uniform_index(rng, length)));
  }
  return b;
}

ad::Tensor<float> gather_images(const TrajectoryDataset& ds,
                                const std::vector<StateRef>& states) {
  const FrameShape& fs = ds.frame_shape();
  ad::Tensor<float> out({states.size(), fs.channels, fs.resolution, fs.resolution});
  float* dst = out.ptr();
  for (const auto& s : states) {
    auto src = ds.image(s.traj, s.t);
    dst = std::copy(src.begin(), src.end(), dst);
  }
  return out;
}

ad::Tensor<float> gather_proprio(const TrajectoryDataset& ds,
                                 const std::vector<StateRef>& states) {
  const std::size_t p = ds.frame_shape().proprio;
  ad::Tensor<float> out({states.size(), p});
  float* dst = out.ptr();
  for (const auto& s : states) {
    auto src = ds.proprio(s.traj, s.t);
    dst = std::copy(src.begin(), src.end(), dst);
  }
  return out;
}

std::vector<StateRef> segment_states(const Batch& batch) {
  std::vector<StateRef> out;
  out.reserve(batch.segments.size() * batch.length);
  for (const auto& s : batch.segments)
    for (std::size_t t = 0; t < batch.length; ++t) out.push_back(s.state(t));
  return out;
}

ad::Tensor<float> segment_actions(const TrajectoryDataset& ds, const Batch& batch) {
  const std::size_t steps = batch.length - 1;
  ad::Tensor<float> out({batch.segments.size() * steps, 2});
  std::size_t row = 0;
  for (const auto& s : batch.segments) {
    const auto& acts = ds.info(s.traj).actions;
    for (std::size_t t = 0; t < steps; ++t, ++row) {
      out[row * 2] = static_cast<float>(acts.at(s.start + t).x);
      out[row * 2 + 1] = static_cast<float>(acts.at(s.start + t).y);
    }
  }
  return out;
}

}  // namespace vgjepa::data
