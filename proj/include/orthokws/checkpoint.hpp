// Copyright 2026 The orthokws Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Checkpoint container.
//
// A checkpoint is one file: a UTF-8 text manifest followed by a binary
// payload.
//
//   orthokws-checkpoint 1
//   meta <key> <value...>            zero or more
//   array <name> <d0> <d1> ...       one per array, payload order
//   end
//   <payload>
//
// The payload starts immediately after the newline of `end` and is the
// concatenation of every array's elements as IEEE-754 binary64,
// little-endian, row-major, in manifest order. No padding or trailer.

#ifndef ORTHOKWS_CHECKPOINT_HPP_
#define ORTHOKWS_CHECKPOINT_HPP_

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "orthokws/models.hpp"

namespace orthokws {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Tensor>> arrays;

  const Tensor* find(const std::string& name) const {
    for (const auto& [n, t] : arrays) {
      if (n == name) return &t;
    }
    return nullptr;
  }
};

namespace detail {

inline void put_f64(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

inline double get_f64(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | p[i];
  return std::bit_cast<double>(bits);
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ostringstream head;
  head << "orthokws-checkpoint 1\n";
  for (const auto& [k, v] : ck.meta) {
    if (k.find_first_of(" \n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw CheckpointError("meta entry '" + k + "' contains a space or newline");
    }
    head << "meta " << k << ' ' << v << '\n';
  }
  std::size_t total = 0;
  for (const auto& [name, t] : ck.arrays) {
    head << "array " << name;
    for (std::size_t d : t.shape()) head << ' ' << d;
    head << '\n';
    total += t.numel();
  }
  head << "end\n";
  std::string out = head.str();
  out.reserve(out.size() + 8 * total);
  for (const auto& [name, t] : ck.arrays) {
    for (double v : t.data()) detail::put_f64(out, v);
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError("cannot write " + tmp);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw CheckpointError("short write to " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw CheckpointError("cannot rename to " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint " + path);
  std::string line;
  if (!std::getline(f, line) || line != "orthokws-checkpoint 1") {
    throw CheckpointError(path + ": not an orthokws checkpoint");
  }
  Checkpoint ck;
  std::vector<std::pair<std::string, Shape>> layout;
  bool ended = false;
  while (std::getline(f, line)) {
    if (line == "end") {
      ended = true;
      break;
    }
    std::istringstream ls(line);
    std::string kind, name;
    ls >> kind >> name;
    if (kind == "meta") {
      std::string value;
      std::getline(ls >> std::ws, value);
      ck.meta[name] = value;
    } else if (kind == "array") {
      Shape s;
      std::size_t d;
      while (ls >> d) s.push_back(d);
      layout.emplace_back(name, s);
    } else {
      throw CheckpointError(path + ": bad manifest line '" + line + "'");
    }
  }
  if (!ended) throw CheckpointError(path + ": manifest has no end line");
  std::vector<unsigned char> buf(8);
  for (auto& [name, shape] : layout) {
    std::vector<double> data(numel_of(shape));
    for (double& v : data) {
      if (!f.read(reinterpret_cast<char*>(buf.data()), 8)) {
        throw CheckpointError(path + ": payload truncated in '" + name + "'");
      }
      v = detail::get_f64(buf.data());
    }
    ck.arrays.emplace_back(name, Tensor(shape, std::move(data)));
  }
  if (f.peek() != std::char_traits<char>::eof()) {
    throw CheckpointError(path + ": trailing bytes after payload");
  }
  return ck;
}

inline Checkpoint model_checkpoint(const KwsModel& model, bool inference_only = false) {
  Checkpoint ck;
  for (const auto& p : model.parameters(inference_only)) {
    ck.arrays.emplace_back(p.name, p.value.detach());
  }
  return ck;
}

/// Copies arrays into the model's parameters. Every parameter except the
/// embedding branch must be present with a matching shape; extra arrays
/// are rejected unless they belong to that branch.
inline void load_weights(KwsModel& model, const Checkpoint& ck) {
  std::map<std::string, const Tensor*> byname;
  for (const auto& [n, t] : ck.arrays) byname[n] = &t;
  for (auto& p : model.parameters()) {
    auto it = byname.find(p.name);
    if (it == byname.end()) {
      if (p.name.starts_with("embed.")) continue;
      throw CheckpointError("checkpoint lacks '" + p.name + "'");
    }
    if (it->second->shape() != p.value.shape()) {
      throw CheckpointError("'" + p.name + "' has shape " + shape_str(it->second->shape()) +
                            ", model expects " + shape_str(p.value.shape()));
    }
    auto dst = p.value.mutable_data();
    auto src = it->second->data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
  for (const auto& [n, t] : byname) {
    bool known = false;
    for (const auto& p : model.parameters()) known = known || p.name == n;
    if (!known && !n.starts_with("embed.")) {
      throw CheckpointError("checkpoint has unexpected array '" + n + "'");
    }
  }
}

}  // namespace orthokws

#endif  // ORTHOKWS_CHECKPOINT_HPP_
