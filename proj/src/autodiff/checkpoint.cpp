// SPDX-License-Identifier: Apache-2.0
#include "vgjepa/autodiff/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "vgjepa/common/binary_io.hpp"

namespace vgjepa::ad {
namespace {

constexpr char kMagic[8] = {'V', 'G', 'J', 'C', 'K', 'P', 'T', '1'};

}  // namespace

std::string checkpoint_bytes(const ParamSet<float>& params,
                             const nlohmann::json& meta) {
  nlohmann::json header;
  header["dtype"] = "float32";
  header["step"] = params.step();
  header["meta"] = meta;
  nlohmann::json tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& e : params.entries()) {
    tensors.push_back({{"name", e.name},
                       {"shape", e.value.shape()},
                       {"offset", offset},
                       {"count", e.value.size()}});
    offset += e.value.size();
  }
  header["tensors"] = tensors;
  const std::string text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  io::append_u64(out, text.size());
  out += text;
  for (const auto& e : params.entries()) io::append_f32(out, e.value.data());
  return out;
}

void save_checkpoint(const std::filesystem::path& path,
                     const ParamSet<float>& params, const nlohmann::json& meta) {
  io::write_file(path, checkpoint_bytes(params, meta));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = io::read_file(path);
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw DataError("not a checkpoint file: " + path.string());
  }
  io::Reader r(bytes, 8);
  const std::uint64_t hlen = r.u64();
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.take(hlen));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt checkpoint header in " + path.string() + ": " +
                    e.what());
  }
  if (header.value("dtype", "") != "float32") {
    throw DataError("unsupported checkpoint dtype in " + path.string());
  }
  Checkpoint ck;
  ck.meta = header.value("meta", nlohmann::json::object());
  for (const auto& t : header.at("tensors")) {
    Shape shape = t.at("shape").get<Shape>();
    const std::size_t count = t.at("count").get<std::size_t>();
    if (shape_size(shape) != count) {
      throw DataError("checkpoint tensor " + t.at("name").get<std::string>() +
                      " has inconsistent shape");
    }
    std::vector<float> data(count);
    r.f32(data);
    ck.params.add(t.at("name").get<std::string>(),
                  Tensor<float>(std::move(shape), std::move(data)));
  }
  ck.params.set_step(header.value("step", std::uint64_t{0}));
  return ck;
}

}  // namespace vgjepa::ad
