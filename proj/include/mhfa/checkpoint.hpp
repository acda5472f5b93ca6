// mhfa/checkpoint.hpp
//
// Copyright 2026  The mhfa-lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Checkpoint container: a text manifest of "key=value" lines closed by a
// line "end", followed by named tensors
//
//   u64 name length, name bytes, tensor record
//
// repeated "tensors" times (a manifest key).

#pragma once

#include <filesystem>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mhfa/error.hpp"
#include "mhfa/io.hpp"
#include "mhfa/tensor.hpp"

namespace mhfa {

class Checkpoint {
 public:
  static constexpr const char* kMagic = "mhfa-checkpoint 1";

  void set(const std::string& key, const std::string& value) {
    if (key.empty() || key.find_first_of("=\n") != std::string::npos || key == "end")
      throw ContractError("bad manifest key '" + key + "'");
    if (value.find('\n') != std::string::npos)
      throw ContractError("manifest value for '" + key + "' spans lines");
    for (auto& kv : manifest_)
      if (kv.first == key) {
        kv.second = value;
        return;
      }
    manifest_.emplace_back(key, value);
  }

  const std::string& get(const std::string& key) const {
    for (const auto& kv : manifest_)
      if (kv.first == key) return kv.second;
    throw ConsistencyError("checkpoint manifest has no key '" + key + "'");
  }

  bool has(const std::string& key) const {
    for (const auto& kv : manifest_)
      if (kv.first == key) return true;
    return false;
  }

  void add(const std::string& name, const Tensor& t) {
    if (has_tensor(name)) throw ConsistencyError("duplicate checkpoint tensor '" + name + "'");
    tensors_.emplace_back(name, t);
  }

  const Tensor& tensor(const std::string& name) const {
    for (const auto& kv : tensors_)
      if (kv.first == name) return kv.second;
    throw ConsistencyError("checkpoint has no tensor '" + name + "'");
  }

  bool has_tensor(const std::string& name) const {
    for (const auto& kv : tensors_)
      if (kv.first == name) return true;
    return false;
  }

  const std::vector<std::pair<std::string, std::string>>& manifest() const { return manifest_; }
  const std::vector<std::pair<std::string, Tensor>>& tensors() const { return tensors_; }

  std::string serialize() const {
    std::ostringstream os(std::ios::binary);
    os << kMagic << "\n";
    for (const auto& [k, v] : manifest_) os << k << "=" << v << "\n";
    os << "tensors=" << tensors_.size() << "\n" << "end\n";
    for (const auto& [name, t] : tensors_) {
      detail::put_u64(os, name.size());
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      write_tensor(os, t);
    }
    return os.str();
  }

  static Checkpoint parse(const std::string& bytes, const std::string& origin = "checkpoint") {
    std::istringstream is(bytes, std::ios::binary);
    std::string line;
    if (!std::getline(is, line) || line != kMagic)
      throw IoError("'" + origin + "' is not a checkpoint file");
    Checkpoint c;
    std::size_t n_tensors = 0;
    bool closed = false;
    for (std::size_t n = 2; std::getline(is, line); ++n) {
      if (line == "end") {
        closed = true;
        break;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos || eq == 0)
        throw IoError("malformed manifest line " + std::to_string(n) + " in '" + origin + "'");
      const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
      if (key == "tensors")
        n_tensors = static_cast<std::size_t>(std::stoull(value));
      else
        c.manifest_.emplace_back(key, value);
    }
    if (!closed) throw IoError("truncated manifest in '" + origin + "'");
    try {
      for (std::size_t i = 0; i < n_tensors; ++i) {
        const std::uint64_t len = detail::get_u64(is);
        if (len > (1u << 16)) throw IoError("implausible tensor name length");
        std::string name(len, '\0');
        is.read(name.data(), static_cast<std::streamsize>(len));
        if (!is) throw IoError("truncated tensor name");
        c.tensors_.emplace_back(std::move(name), read_tensor(is));
      }
    } catch (const Error& e) {
      throw IoError("'" + origin + "': " + e.what());
    }
    if (is.peek() != std::char_traits<char>::eof())
      throw IoError("'" + origin + "' has trailing bytes after the last tensor");
    return c;
  }

  void save(const std::filesystem::path& path) const {
    auto os = open_out(path, true);
    const std::string bytes = serialize();
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("write failed on '" + path.string() + "'");
  }

  static Checkpoint load(const std::filesystem::path& path) {
    auto is = open_in(path, true);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse(ss.str(), path.string());
  }

 private:
  std::vector<std::pair<std::string, std::string>> manifest_;
  std::vector<std::pair<std::string, Tensor>> tensors_;
};

}  // namespace mhfa
