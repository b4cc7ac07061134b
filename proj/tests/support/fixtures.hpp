// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "vgjepa/dataset/batch.hpp"
#include "vgjepa/model/model.hpp"

namespace vgjepa::fixtures {

// A few hundred parameters: small enough for exhaustive finite differences.
inline model::ModelConfig tiny_config(model::HeadKind head = model::HeadKind::kEuclidean,
                                      std::size_t proprio = 0) {
  model::ModelConfig c;
  c.encoder.in_channels = 2;
  c.encoder.resolution = 6;
  c.encoder.widths = {2, 3};
  c.encoder.residual_blocks = {0, 1};
  c.encoder.pool = "flatten";
  c.encoder.hidden = 0;
  c.encoder.latent_dim = 4;
  c.encoder.proprio_dim = proprio;
  c.encoder.proprio_hidden = 3;
  c.predictor.hidden = {5};
  c.head.kind = head;
  c.head.components = 2;
  c.head.component_dim = 2;
  return c;
}

template <class T>
ad::Tensor<T> random_tensor(ad::Shape s, std::uint64_t seed, double lo = 0.0,
                            double hi = 1.0) {
  ad::Tensor<T> t(std::move(s));
  Rng rng = make_rng(seed);
  for (auto& x : t.data()) x = static_cast<T>(uniform(rng, lo, hi));
  return t;
}

// Batch of `segments` windows drawn from distinct trajectories of length
// `traj_len`, with final-state goals plus one in-batch goal per segment.
inline data::Batch synthetic_batch(std::size_t segments, std::size_t length,
                                   std::size_t traj_len) {
  data::Batch b;
  b.length = length;
  for (std::size_t s = 0; s < segments; ++s)
    b.segments.push_back({s, (s * 3) % (traj_len - length + 1)});
  for (std::size_t s = 0; s < segments; ++s) b.goal_candidates.push_back({s, traj_len - 1});
  b.num_final_goals = segments;
  for (std::size_t s = 0; s < segments; ++s)
    b.goal_candidates.push_back(b.segments[(s + 1) % segments].state(s % length));
  return b;
}

}  // namespace vgjepa::fixtures
