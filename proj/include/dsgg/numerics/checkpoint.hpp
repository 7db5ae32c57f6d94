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

// Binary checkpoint container.
//
//   bytes 0..7   magic "SLLMCKPT"
//   bytes 8..15  header length N, unsigned little-endian
//   next N bytes UTF-8 JSON header:
//                {"dtype":"f64","seed":S,"config_hash":H,"meta":{...},
//                 "tensors":[{"name":..,"shape":[..]}, ...]}
//   payload      every tensor's values as little-endian IEEE-754 doubles,
//                in header order, no padding.

#ifndef DSGG_NUMERICS_CHECKPOINT_HPP_
#define DSGG_NUMERICS_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dsgg/numerics/autodiff.hpp"
#include "dsgg/numerics/tensor.hpp"

namespace dsgg::numerics {

inline constexpr char kCheckpointMagic[8] = {'S', 'L', 'L', 'M', 'C', 'K', 'P', 'T'};

struct Checkpoint {
  std::uint64_t seed = 0;
  std::string config_hash;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;

  void put(std::string name, Tensor t);
  bool has(const std::string& name) const;
  const Tensor& get(const std::string& name) const;

  // Stores each parameter under prefix + parameter name.
  void put_params(const std::string& prefix, const ParameterList& params);
  // Restores values by name; throws on missing names or shape mismatch.
  void get_params(const std::string& prefix, const ParameterList& params) const;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dsgg::numerics

#endif  // DSGG_NUMERICS_CHECKPOINT_HPP_
