// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "vgjepa/autodiff/tensor.hpp"
#include "vgjepa/dataset/dataset.hpp"

namespace vgjepa::data {

inline constexpr std::size_t kSegmentLength = 16;

// A dataset state, identified by trajectory and time index.
struct StateRef {
  std::size_t traj = 0;
  std::size_t t = 0;
  friend bool operator==(const StateRef&, const StateRef&) = default;
};

// Window of `length` consecutive observations (and length - 1 actions).
struct Segment {
  std::size_t traj = 0;
  std::size_t start = 0;
  StateRef state(std::size_t offset) const { return {traj, start + offset}; }
};

struct Batch {
  std::size_t length = kSegmentLength;
  std::vector<Segment> segments;
  // First half: the final state of each segment's trajectory, in segment
  // order. Second half: uniform random states from the batch segments.
  std::vector<StateRef> goal_candidates;
  std::size_t num_final_goals = 0;
};

Batch sample_batch(const TrajectoryDataset& ds, std::size_t batch_size, Rng& rng,
                   std::size_t length = kSegmentLength);

// Images for a list of states: [n, C, H, W].
ad::Tensor<float> gather_images(const TrajectoryDataset& ds,
                                const std::vector<StateRef>& states);
// Proprioception for a list of states: [n, P] (P may be 0).
ad::Tensor<float> gather_proprio(const TrajectoryDataset& ds,
                                 const std::vector<StateRef>& states);

// Every state of every segment, segment-major: row b * length + t.
std::vector<StateRef> segment_states(const Batch& batch);
// Actions of every segment, segment-major: [B * (length - 1), 2].
ad::Tensor<float> segment_actions(const TrajectoryDataset& ds, const Batch& batch);

}  // namespace vgjepa::data
