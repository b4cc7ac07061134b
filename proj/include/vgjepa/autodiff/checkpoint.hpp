// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <json.hpp>

#include "vgjepa/autodiff/params.hpp"

namespace vgjepa::ad {

// Checkpoint layout:
//   "VGJCKPT1" | u64 LE header length | JSON header | raw LE payloads
// The header lists {name, shape, offset, count} per tensor in payload order,
// plus dtype, step counter and a caller-supplied `meta` object.
struct Checkpoint {
  ParamSet<float> params;
  nlohmann::json meta;
};

void save_checkpoint(const std::filesystem::path& path,
                     const ParamSet<float>& params, const nlohmann::json& meta);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Serialized bytes of a checkpoint; used for byte-level equality checks.
std::string checkpoint_bytes(const ParamSet<float>& params,
                             const nlohmann::json& meta);

}  // namespace vgjepa::ad
