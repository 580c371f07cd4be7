// Copyright 2026 The prosparse Authors
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

#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "prosparse/config.hpp"
#include "prosparse/error.hpp"
#include "prosparse/model.hpp"
#include "prosparse/text.hpp"

namespace prosparse {

// Checkpoint directory layout:
//   config.txt    model configuration (key = value)
//   words.txt     input vocabulary, one item per line
//   symbols.txt   output vocabulary, one item per line
//   manifest.txt  "# prosparse-checkpoint <version>" then name, rows, cols,
//                 offset (in doubles) per parameter
//   params.bin    8-byte magic, uint32 version, uint64 count, then the raw
//                 little-endian doubles in manifest order

inline constexpr char kCheckpointMagic[8] = {'P', 'R', 'S', 'P', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void write_lines(const std::filesystem::path& p, const std::vector<std::string>& items) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  for (const auto& s : items) out << s << '\n';
}

inline std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

}  // namespace detail

inline void save_model(const Seq2SeqParser& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream cfg(dir / "config.txt");
    model.config().to_kv().write(cfg);
  }
  detail::write_lines(dir / "words.txt", model.words().items());
  detail::write_lines(dir / "symbols.txt", model.symbols().items());

  std::ofstream manifest(dir / "manifest.txt");
  std::ofstream bin(dir / "params.bin", std::ios::binary);
  if (!manifest || !bin) throw std::runtime_error("cannot write checkpoint in " + dir.string());
  manifest << "# prosparse-checkpoint " << kCheckpointVersion << '\n';
  std::uint64_t total = model.params().total_size();
  bin.write(kCheckpointMagic, sizeof kCheckpointMagic);
  bin.write(reinterpret_cast<const char*>(&kCheckpointVersion), sizeof kCheckpointVersion);
  bin.write(reinterpret_cast<const char*>(&total), sizeof total);
  std::uint64_t offset = 0;
  for (const auto& [name, t] : model.params().entries()) {
    manifest << name << '\t' << t.rows() << '\t' << t.cols() << '\t' << offset << '\n';
    auto v = t.values();
    bin.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    offset += v.size();
  }
}

inline Seq2SeqParser load_model(const std::filesystem::path& dir) {
  ModelConfig config = ModelConfig::from(KeyValueConfig::load((dir / "config.txt").string()));
  Seq2SeqParser model(config, Vocabulary(detail::read_lines(dir / "words.txt")),
                      Vocabulary(detail::read_lines(dir / "symbols.txt")));

  std::ifstream bin(dir / "params.bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot read " + (dir / "params.bin").string());
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t total = 0;
  bin.read(magic, sizeof magic);
  bin.read(reinterpret_cast<char*>(&version), sizeof version);
  bin.read(reinterpret_cast<char*>(&total), sizeof total);
  if (!bin || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw FormatError("not a prosparse checkpoint: " + dir.string());
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  if (total != model.params().total_size()) throw FormatError("checkpoint size does not match its configuration");
  std::vector<double> values(total);
  bin.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(total * sizeof(double)));
  if (!bin) throw FormatError("truncated checkpoint " + dir.string());

  auto lines = detail::read_lines(dir / "manifest.txt");
  if (lines.empty() || lines.front() != "# prosparse-checkpoint " + std::to_string(kCheckpointVersion))
    throw FormatError("bad manifest header in " + dir.string());
  if (lines.size() - 1 != model.params().count()) throw FormatError("manifest lists the wrong parameter count");
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto f = text::split(lines[i], '\t');
    if (f.size() != 4) throw FormatError("bad manifest line " + std::to_string(i + 1));
    std::string name(f[0]);
    Tensor t = model.params().get(name);
    std::size_t rows = text::to_size(f[1], "manifest"), cols = text::to_size(f[2], "manifest");
    std::size_t offset = text::to_size(f[3], "manifest");
    if (rows != t.rows() || cols != t.cols() || offset + t.size() > values.size())
      throw FormatError("manifest shape mismatch for " + name);
    std::copy(values.begin() + static_cast<std::ptrdiff_t>(offset),
              values.begin() + static_cast<std::ptrdiff_t>(offset + t.size()), t.values().begin());
  }
  return model;
}

}  // namespace prosparse
