// Copyright 2026 The dsgg Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "dsgg/numerics/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dsgg::numerics {

namespace {

std::uint64_t to_little(std::uint64_t x) {
  if constexpr (std::endian::native == std::endian::little) return x;
  std::uint64_t out = 0;
  for (int i = 0; i < 8; ++i) out |= ((x >> (8 * i)) & 0xFF) << (8 * (7 - i));
  return out;
}

void append_u64(std::string& out, std::uint64_t x) {
  x = to_little(x);
  char buf[8];
  std::memcpy(buf, &x, 8);
  out.append(buf, 8);
}

std::uint64_t read_u64(const std::string& in, std::size_t offset) {
  std::uint64_t x = 0;
  std::memcpy(&x, in.data() + offset, 8);
  return to_little(x);
}

}  // namespace

void Checkpoint::put(std::string name, Tensor t) {
  for (auto& [n, v] : tensors) {
    if (n == name) {
      v = std::move(t);
      return;
    }
  }
  tensors.emplace_back(std::move(name), std::move(t));
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& [n, v] : tensors)
    if (n == name) return true;
  return false;
}

const Tensor& Checkpoint::get(const std::string& name) const {
  for (const auto& [n, v] : tensors)
    if (n == name) return v;
  throw std::runtime_error("checkpoint: missing tensor '" + name + "'");
}

void Checkpoint::put_params(const std::string& prefix, const ParameterList& params) {
  for (const auto* p : params) put(prefix + p->name, p->value);
}

void Checkpoint::get_params(const std::string& prefix, const ParameterList& params) const {
  for (auto* p : params) {
    const Tensor& t = get(prefix + p->name);
    if (t.shape() != p->value.shape()) {
      throw std::runtime_error("checkpoint: tensor '" + prefix + p->name + "' has shape " +
                               shape_string(t.shape()) + ", model expects " +
                               shape_string(p->value.shape()));
    }
    p->value = t;
    p->zero_grad();
  }
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json header;
  header["dtype"] = "f64";
  header["seed"] = ckpt.seed;
  header["config_hash"] = ckpt.config_hash;
  header["meta"] = ckpt.meta;
  header["tensors"] = nlohmann::json::array();
  for (const auto& [name, t] : ckpt.tensors) {
    header["tensors"].push_back({{"name", name}, {"shape", t.shape()}});
  }
  const std::string text = header.dump();
  std::string out(kCheckpointMagic, 8);
  append_u64(out, text.size());
  out += text;
  for (const auto& [name, t] : ckpt.tensors) {
    for (double v : t.values()) append_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) {
    throw std::runtime_error("checkpoint: bad magic");
  }
  const std::uint64_t header_len = read_u64(bytes, 8);
  if (16 + header_len > bytes.size()) throw std::runtime_error("checkpoint: truncated header");
  const auto header = nlohmann::json::parse(bytes.substr(16, header_len));
  if (header.value("dtype", "") != "f64") throw std::runtime_error("checkpoint: unsupported dtype");
  Checkpoint ckpt;
  ckpt.seed = header.at("seed").get<std::uint64_t>();
  ckpt.config_hash = header.at("config_hash").get<std::string>();
  ckpt.meta = header.at("meta");
  std::size_t offset = 16 + header_len;
  for (const auto& entry : header.at("tensors")) {
    Shape shape = entry.at("shape").get<Shape>();
    const std::size_t n = shape_product(shape);
    if (offset + 8 * n > bytes.size()) throw std::runtime_error("checkpoint: truncated payload");
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i) {
      data[i] = std::bit_cast<double>(read_u64(bytes, offset));
      offset += 8;
    }
    ckpt.tensors.emplace_back(entry.at("name").get<std::string>(),
                              Tensor(std::move(shape), std::move(data)));
  }
  if (offset != bytes.size()) throw std::runtime_error("checkpoint: trailing bytes");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path.string());
  const std::string bytes = serialize_checkpoint(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace dsgg::numerics
