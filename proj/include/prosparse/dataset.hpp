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

#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "prosparse/corpus.hpp"
#include "prosparse/error.hpp"
#include "prosparse/text.hpp"

// A data directory holds, per split, <split>.trees, <split>.align,
// <split>.frames and optionally <split>.attach, plus a shared lexicon.tsv.

namespace prosparse {

using AttachmentTable = std::map<std::string, AttachmentSite>;

/// Lines: `id \t object_start \t pp_start \t pp_end \t high|low`.
inline AttachmentTable read_attachments(std::istream& in) {
  AttachmentTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto view = text::trim(line);
    if (view.empty()) continue;
    auto f = text::split(view, '\t');
    const std::string where = "attachment line " + std::to_string(lineno);
    if (f.size() != 5 || (f[4] != "high" && f[4] != "low")) throw FormatError("malformed " + where);
    AttachmentSite s{text::to_size(f[1], where), text::to_size(f[2], where), text::to_size(f[3], where), f[4] == "high"};
    if (!(s.object_start < s.pp_start && s.pp_start < s.pp_end)) throw DataError("inconsistent offsets in " + where);
    table[std::string(f[0])] = s;
  }
  return table;
}

inline void write_attachment(std::ostream& out, const std::string& id, const AttachmentSite& s) {
  out << id << '\t' << s.object_start << '\t' << s.pp_start << '\t' << s.pp_end << '\t' << (s.high ? "high" : "low")
      << '\n';
}

inline std::filesystem::path split_file(const std::filesystem::path& dir, const std::string& split,
                                        const std::string& ext) {
  return dir / (split + "." + ext);
}

inline void write_split(const std::filesystem::path& dir, const std::string& split, std::span<const Example> examples) {
  std::filesystem::create_directories(dir);
  std::ofstream trees(split_file(dir, split, "trees")), align(split_file(dir, split, "align")),
      frames(split_file(dir, split, "frames")), attach(split_file(dir, split, "attach"));
  if (!trees || !align || !frames || !attach) throw std::runtime_error("cannot write split " + split + " in " + dir.string());
  for (const auto& ex : examples) {
    trees << ex.utterance.id << '\t' << to_bracketed(ex.gold) << '\n';
    if (ex.utterance.alignments) write_alignments(align, ex.utterance.id, *ex.utterance.alignments);
    if (ex.utterance.frames) write_frame_records(frames, ex.utterance.id, *ex.utterance.frames);
    if (ex.attachment) write_attachment(attach, ex.utterance.id, *ex.attachment);
  }
}

/// Loads one split. Missing alignment, frame or attachment files mean
/// none of those records exist.
inline std::vector<Example> load_split(const std::filesystem::path& dir, const std::string& split) {
  auto trees = load_treebank(split_file(dir, split, "trees").string());
  AlignmentTable align;
  FrameTable frames;
  AttachmentTable attach;
  if (auto p = split_file(dir, split, "align"); std::filesystem::exists(p)) align = load_alignments(p.string());
  if (auto p = split_file(dir, split, "frames"); std::filesystem::exists(p)) frames = load_frames(p.string());
  if (auto p = split_file(dir, split, "attach"); std::filesystem::exists(p)) {
    std::ifstream in(p);
    attach = read_attachments(in);
  }
  auto examples = assemble_examples(trees, align, frames);
  for (auto& ex : examples)
    if (auto it = attach.find(ex.utterance.id); it != attach.end()) ex.attachment = it->second;
  return examples;
}

inline bool has_split(const std::filesystem::path& dir, const std::string& split) {
  return std::filesystem::exists(split_file(dir, split, "trees"));
}

}  // namespace prosparse
