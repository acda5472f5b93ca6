// mhfa/io.hpp
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

// On-disk corpus, trial, score and report files.
//
//   utterance   tensor record, one file per utterance
//   manifest    "path speaker_id" per line
//   trials      "label enroll_path test_path" per line, label in {1,0}
//   scores      "label score" per line
//
// Relative paths inside a list file are resolved against the directory
// holding that file.

#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mhfa/config.hpp"
#include "mhfa/metrics.hpp"
#include "mhfa/synth.hpp"
#include "mhfa/tensor.hpp"

namespace mhfa {

namespace fs = std::filesystem;

inline std::ofstream open_out(const fs::path& path, bool binary = false) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream os(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!os) throw IoError("cannot write '" + path.string() + "'");
  return os;
}

inline std::ifstream open_in(const fs::path& path, bool binary = false) {
  std::ifstream is(path, binary ? std::ios::binary : std::ios::in);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  return is;
}

inline void write_text(const fs::path& path, const std::string& text) {
  auto os = open_out(path);
  os << text;
  if (!os) throw IoError("write failed on '" + path.string() + "'");
}

inline std::string read_text(const fs::path& path) {
  auto is = open_in(path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void save_tensor(const fs::path& path, const Tensor& t) {
  auto os = open_out(path, true);
  write_tensor(os, t);
  if (!os) throw IoError("write failed on '" + path.string() + "'");
}

inline Tensor load_tensor(const fs::path& path) {
  auto is = open_in(path, true);
  try {
    return read_tensor(is);
  } catch (const Error& e) {
    throw IoError("'" + path.string() + "': " + e.what());
  }
}

/// Shortest round-trip decimal form of a double.
inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct ManifestEntry {
  std::string path;
  std::size_t speaker_id = 0;
};

struct TrialEntry {
  bool is_target = false;
  std::string enroll;
  std::string test;
};

namespace detail {

inline std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  for (std::string tok; ss >> tok;) out.push_back(tok);
  return out;
}

inline std::string where(const fs::path& file, std::size_t line) {
  return "'" + file.string() + "' line " + std::to_string(line);
}

inline bool parse_label(const std::string& s, bool& out) {
  if (s == "1") return out = true, true;
  if (s == "0") return out = false, true;
  return false;
}

/// Calls fn(fields, line_number) for every non-blank line.
template <class Fn>
void for_each_record(const fs::path& file, Fn&& fn) {
  auto is = open_in(file);
  std::string line;
  for (std::size_t n = 1; std::getline(is, line); ++n) {
    auto fields = split_ws(line);
    if (fields.empty()) continue;
    fn(fields, n);
  }
}

}  // namespace detail

inline fs::path resolve(const fs::path& base_dir, const std::string& p) {
  fs::path q(p);
  return q.is_absolute() ? q : base_dir / q;
}

inline void write_manifest(const fs::path& file, const std::vector<ManifestEntry>& entries) {
  std::string text;
  for (const auto& e : entries) text += e.path + " " + std::to_string(e.speaker_id) + "\n";
  write_text(file, text);
}

inline std::vector<ManifestEntry> read_manifest(const fs::path& file) {
  std::vector<ManifestEntry> out;
  detail::for_each_record(file, [&](const std::vector<std::string>& f, std::size_t n) {
    std::size_t pos = 0;
    unsigned long long id = 0;
    bool ok = f.size() == 2;
    if (ok) {
      try {
        id = std::stoull(f[1], &pos);
      } catch (const std::exception&) {
        ok = false;
      }
      ok = ok && pos == f[1].size() && f[1][0] != '-';
    }
    if (!ok)
      throw IoError("malformed manifest entry at " + detail::where(file, n) +
                    ": expected 'path speaker_id'");
    out.push_back(ManifestEntry{f[0], static_cast<std::size_t>(id)});
  });
  return out;
}

inline void write_trials(const fs::path& file, const std::vector<TrialEntry>& trials) {
  std::string text;
  for (const auto& t : trials)
    text += std::string(t.is_target ? "1" : "0") + " " + t.enroll + " " + t.test + "\n";
  write_text(file, text);
}

inline std::vector<TrialEntry> read_trials(const fs::path& file) {
  std::vector<TrialEntry> out;
  detail::for_each_record(file, [&](const std::vector<std::string>& f, std::size_t n) {
    TrialEntry t;
    if (f.size() != 3 || !detail::parse_label(f[0], t.is_target))
      throw IoError("malformed trial at " + detail::where(file, n) +
                    ": expected 'label enroll_path test_path' with label 1 or 0");
    t.enroll = f[1];
    t.test = f[2];
    out.push_back(std::move(t));
  });
  return out;
}

inline void write_scores(const fs::path& file, const TrialScoreSet& set) {
  std::string text;
  for (const auto& s : set.scores)
    text += std::string(s.is_target ? "1" : "0") + " " + fmt_double(s.score) + "\n";
  write_text(file, text);
}

inline TrialScoreSet read_scores(const fs::path& file) {
  TrialScoreSet set;
  detail::for_each_record(file, [&](const std::vector<std::string>& f, std::size_t n) {
    ScoredTrial s;
    bool ok = f.size() == 2 && detail::parse_label(f[0], s.is_target);
    if (ok) {
      std::size_t pos = 0;
      try {
        s.score = std::stod(f[1], &pos);
      } catch (const std::exception&) {
        ok = false;
      }
      ok = ok && pos == f[1].size();
    }
    if (!ok)
      throw IoError("malformed score at " + detail::where(file, n) + ": expected 'label score'");
    set.scores.push_back(s);
  });
  return set;
}

inline Json metrics_json(const MetricsReport& r) {
  return Json{{"eer", r.eer},
              {"dcf1", r.dcf1},
              {"dcf5", r.dcf5},
              {"n_target", r.n_target},
              {"n_nontarget", r.n_nontarget}};
}

/// Utterances listed in a manifest. Keys are the file stems.
inline Corpus load_corpus(const fs::path& manifest) {
  const fs::path base = manifest.parent_path();
  Corpus c;
  for (const auto& e : read_manifest(manifest)) {
    Utterance u;
    u.key = fs::path(e.path).stem().string();
    u.frames = load_tensor(resolve(base, e.path));
    if (u.frames.rank() != 2)
      throw IoError("'" + e.path + "' does not hold a [T x F] frame matrix");
    u.speaker_id = e.speaker_id;
    c.push_back(std::move(u));
  }
  return c;
}

}  // namespace mhfa
