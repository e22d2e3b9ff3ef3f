/*
 * Copyright (c) 2026, The i2i-lab Authors. All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "i2i/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "i2i/digest.hpp"

namespace i2i {

namespace {

constexpr char kMagic[8] = {'I', '2', 'I', 'C', 'K', 'P', 'T', '\0'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  std::uint64_t uint(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(width);
    return v;
  }

  std::string text(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint truncated");
  }
  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const CheckpointBlock& Checkpoint::block(const std::string& name) const {
  for (const auto& b : blocks)
    if (b.name == name) return b;
  throw CheckpointError("checkpoint has no block '" + name + "'");
}

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& b : blocks)
    if (b.name == name) return true;
  return false;
}

std::vector<CheckpointBlock> Checkpoint::with_prefix(const std::string& prefix) const {
  std::vector<CheckpointBlock> out;
  for (const auto& b : blocks)
    if (b.name.compare(0, prefix.size(), prefix) == 0)
      out.push_back({b.name.substr(prefix.size()), b.shape, b.data});
  return out;
}

std::vector<CheckpointBlock> to_blocks(const std::vector<NamedTensor>& tensors,
                                       const std::string& prefix) {
  std::vector<CheckpointBlock> out;
  out.reserve(tensors.size());
  for (const auto& nt : tensors) {
    const auto values = nt.tensor.data();
    out.push_back({prefix + nt.name, nt.tensor.shape(), {values.begin(), values.end()}});
  }
  return out;
}

void load_blocks(const std::vector<CheckpointBlock>& blocks,
                 const std::vector<NamedTensor>& tensors, const std::string& prefix) {
  for (const auto& nt : tensors) {
    const std::string name = prefix + nt.name;
    const CheckpointBlock* found = nullptr;
    for (const auto& b : blocks)
      if (b.name == name) found = &b;
    if (found == nullptr) throw CheckpointError("missing block '" + name + "'");
    if (found->shape != nt.tensor.shape())
      throw CheckpointError("block '" + name + "' has shape " + shape_str(found->shape) +
                            ", expected " + shape_str(nt.tensor.shape()));
    Tensor t = nt.tensor;
    std::copy(found->data.begin(), found->data.end(), t.mutable_data().begin());
  }
}

void write_checkpoint(const std::filesystem::path& path, const std::string& config_digest,
                      const std::vector<CheckpointBlock>& blocks) {
  std::string out(kMagic, sizeof(kMagic));
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(config_digest.size()));
  out += config_digest;
  put_u64(out, blocks.size());
  for (const auto& b : blocks) {
    if (shape_size(b.shape) != b.data.size())
      throw CheckpointError("block '" + b.name + "' shape does not match its data");
    put_u32(out, static_cast<std::uint32_t>(b.name.size()));
    out += b.name;
    put_u32(out, static_cast<std::uint32_t>(b.shape.size()));
    for (std::size_t d : b.shape) put_u64(out, d);
    for (double v : b.data) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw CheckpointError("cannot open " + path.string() + " for writing");
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw CheckpointError("write failed: " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw CheckpointError("cannot open " + path.string());
  Reader r(std::string(std::istreambuf_iterator<char>(file), {}));
  if (r.text(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic)))
    throw CheckpointError(path.string() + " is not a checkpoint");
  Checkpoint ckpt;
  ckpt.version = static_cast<std::uint32_t>(r.uint(4));
  if (ckpt.version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(ckpt.version));
  ckpt.config_digest = r.text(r.uint(4));
  const std::uint64_t count = r.uint(8);
  for (std::uint64_t i = 0; i < count; ++i) {
    CheckpointBlock b;
    b.name = r.text(r.uint(4));
    const std::uint64_t rank = r.uint(4);
    for (std::uint64_t d = 0; d < rank; ++d) b.shape.push_back(r.uint(8));
    b.data.resize(shape_size(b.shape));
    for (double& v : b.data) v = std::bit_cast<double>(r.uint(8));
    ckpt.blocks.push_back(std::move(b));
  }
  if (!r.done()) throw CheckpointError("trailing bytes in " + path.string());
  return ckpt;
}

std::string params_digest(const std::vector<NamedTensor>& tensors) {
  Fnv1a h;
  for (const auto& nt : tensors) {
    h.update(nt.name);
    for (std::size_t d : nt.tensor.shape()) h.update_u64(d);
    h.update(nt.tensor.data());
  }
  return h.hex();
}

void save_backbone(const std::filesystem::path& path, const BackboneParams& backbone,
                   const TaskHead& psi0) {
  auto blocks = to_blocks(backbone.named_parameters(), "backbone/");
  for (auto& b : to_blocks(psi0.named_parameters(), "psi0/")) blocks.push_back(std::move(b));
  write_checkpoint(path, backbone.config.digest(), blocks);
}

std::pair<BackboneParams, TaskHead> load_backbone(const std::filesystem::path& path,
                                                  const BackboneConfig& config) {
  const Checkpoint ckpt = read_checkpoint(path);
  if (ckpt.config_digest != config.digest())
    throw CheckpointError("checkpoint config digest " + ckpt.config_digest +
                          " does not match config digest " + config.digest());
  Rng shape_only(0);
  BackboneParams m = init_backbone(config, shape_only);
  TaskHead psi0 = init_task_head(config, shape_only);
  load_blocks(ckpt.blocks, m.named_parameters(), "backbone/");
  load_blocks(ckpt.blocks, psi0.named_parameters(), "psi0/");
  m.freeze();
  psi0.freeze();
  return {std::move(m), std::move(psi0)};
}

}  // namespace i2i
