// fusebench/io.hpp

// Copyright 2026  fusebench contributors
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

// Tab-separated text formats for embeddings, trial scores, keys and trial
// lists.  All formats are line-oriented; '#'-prefixed lines (other than the
// embedding header) are comments.  Floats are written with 17 significant
// digits so that save/load round-trips bit-for-bit.
//
//   score file:     enroll<TAB>test<TAB>system<TAB>score[<TAB>q_enroll<TAB>q_test]
//   key file:       enroll<TAB>test<TAB>target|nontarget
//   trial list:     enroll<TAB>test
//   embedding file: header '#dim<TAB>D<TAB>modality', then
//                   id[<TAB>identity]<TAB>v1<TAB>...<TAB>vD

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "fusebench/text.hpp"
#include "fusebench/types.hpp"

namespace fusebench {

namespace detail {

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  return in;
}

inline double parse_double_field(const std::filesystem::path& path, int line,
                                 std::string_view field, const char* what) {
  double v = 0.0;
  if (!try_parse_double(field, &v))
    throw ParseError(path.string(), line,
                     std::string("unparsable ") + what + " '" +
                         std::string(field) + "'");
  return v;
}

}  // namespace detail

struct KeyEntry {
  std::string enroll_id;
  std::string test_id;
  TrialLabel label = TrialLabel::kNontarget;
};

inline std::vector<KeyEntry> load_key(const std::filesystem::path& path) {
  std::ifstream in = detail::open_input(path);
  std::vector<KeyEntry> out;
  std::set<std::pair<std::string, std::string>> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (is_comment_or_blank(line)) continue;
    auto f = split_tabs(line);
    if (f.size() != 3)
      throw ParseError(path.string(), lineno,
                       "expected 3 tab-separated fields, got " +
                           std::to_string(f.size()));
    KeyEntry e;
    e.enroll_id = std::string(f[0]);
    e.test_id = std::string(f[1]);
    if (f[2] == "target")
      e.label = TrialLabel::kTarget;
    else if (f[2] == "nontarget")
      e.label = TrialLabel::kNontarget;
    else
      throw ParseError(path.string(), lineno,
                       "label must be target|nontarget, got '" +
                           std::string(f[2]) + "'");
    if (!seen.emplace(e.enroll_id, e.test_id).second)
      throw ParseError(path.string(), lineno,
                       "duplicate trial (" + e.enroll_id + ", " + e.test_id +
                           ") in key");
    out.push_back(std::move(e));
  }
  return out;
}

// Loads a score file, optionally merging labels from a key file.  Trials
// present in the key but absent from the scores are an error; scored trials
// without a key row keep label == nullopt.
inline ScoreTable load_score_table(
    const std::filesystem::path& path,
    const std::optional<std::filesystem::path>& key_path = std::nullopt) {
  std::ifstream in = detail::open_input(path);
  ScoreTable table;
  std::map<std::pair<std::string, std::string>, size_t> index;
  std::set<std::string> roster;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (is_comment_or_blank(line)) continue;
    auto f = split_tabs(line);
    if (f.size() != 4 && f.size() != 6)
      throw ParseError(path.string(), lineno,
                       "expected 4 or 6 tab-separated fields, got " +
                           std::to_string(f.size()));
    std::string enroll(f[0]), test(f[1]), system(f[2]);
    if (enroll.empty() || test.empty() || system.empty())
      throw ParseError(path.string(), lineno, "empty id or system field");
    SystemEntry entry;
    entry.score = detail::parse_double_field(path, lineno, f[3], "score");
    if (!std::isfinite(entry.score))
      throw ParseError(path.string(), lineno, "non-finite score");
    if (f.size() == 6) {
      double qe = detail::parse_double_field(path, lineno, f[4], "q_enroll");
      double qt = detail::parse_double_field(path, lineno, f[5], "q_test");
      if (!(qe >= 0.0 && qe <= 1.0) || !(qt >= 0.0 && qt <= 1.0))
        throw ParseError(path.string(), lineno,
                         "quality outside [0,1]");
      entry.q_enroll = qe;
      entry.q_test = qt;
    }
    auto key = std::make_pair(enroll, test);
    auto it = index.find(key);
    if (it == index.end()) {
      TrialRecord rec;
      rec.enroll_id = enroll;
      rec.test_id = test;
      rec.systems.emplace(system, entry);
      index.emplace(key, table.records.size());
      table.records.push_back(std::move(rec));
    } else {
      TrialRecord& rec = table.records[it->second];
      if (!rec.systems.emplace(system, entry).second)
        throw ParseError(path.string(), lineno,
                         "duplicate (" + enroll + ", " + test + ", " + system +
                             ") triple");
    }
    roster.insert(system);
  }
  table.roster.assign(roster.begin(), roster.end());

  if (key_path) {
    for (const KeyEntry& e : load_key(*key_path)) {
      auto it = index.find(std::make_pair(e.enroll_id, e.test_id));
      if (it == index.end())
        throw ValidationError("trial (" + e.enroll_id + ", " + e.test_id +
                              ") present in key " + key_path->string() +
                              " but missing from scores " + path.string());
      table.records[it->second].label = e.label;
    }
  }
  return table;
}

// Rows come out in record order, systems in roster order within a record.
inline void save_score_table(const ScoreTable& table,
                             const std::filesystem::path& path) {
  AtomicWriter writer(path);
  std::ostream& out = writer.stream();
  for (const TrialRecord& rec : table.records) {
    for (const std::string& system : table.roster) {
      auto it = rec.systems.find(system);
      if (it == rec.systems.end()) continue;
      const SystemEntry& e = it->second;
      out << rec.enroll_id << '\t' << rec.test_id << '\t' << system << '\t'
          << format_double(e.score);
      if (e.q_enroll && e.q_test)
        out << '\t' << format_double(*e.q_enroll) << '\t'
            << format_double(*e.q_test);
      out << '\n';
    }
  }
  writer.commit();
}

inline void save_key(const std::vector<KeyEntry>& key,
                     const std::filesystem::path& path) {
  AtomicWriter writer(path);
  for (const KeyEntry& e : key)
    writer.stream() << e.enroll_id << '\t' << e.test_id << '\t'
                    << (e.label == TrialLabel::kTarget ? "target"
                                                       : "nontarget")
                    << '\n';
  writer.commit();
}

inline std::vector<Embedding> load_embeddings(
    const std::filesystem::path& path) {
  std::ifstream in = detail::open_input(path);
  std::string line;
  int lineno = 0;
  // Header: '#dim<TAB>D<TAB>modality'.
  int dim = -1;
  Modality modality = Modality::kSpeaker;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = split_tabs(line);
    if (f[0] == "#dim") {
      if (f.size() != 3)
        throw ParseError(path.string(), lineno,
                         "embedding header must be '#dim<TAB>D<TAB>modality'");
      double d = detail::parse_double_field(path, lineno, f[1], "dimension");
      if (d < 1 || d != std::floor(d))
        throw ParseError(path.string(), lineno, "dimension must be >= 1");
      dim = static_cast<int>(d);
      try {
        modality = modality_from_name(std::string(f[2]));
      } catch (const ValidationError& e) {
        throw ParseError(path.string(), lineno, e.what());
      }
      break;
    }
    if (line[0] == '#') continue;  // leading comments before the header
    throw ParseError(path.string(), lineno,
                     "missing '#dim' header before first data line");
  }
  if (dim < 0) throw ParseError(path.string(), lineno, "empty embedding file");

  std::vector<Embedding> out;
  while (std::getline(in, line)) {
    ++lineno;
    if (is_comment_or_blank(line)) continue;
    auto f = split_tabs(line);
    size_t n_meta;
    if (f.size() == static_cast<size_t>(dim) + 1)
      n_meta = 1;
    else if (f.size() == static_cast<size_t>(dim) + 2)
      n_meta = 2;
    else
      throw ParseError(path.string(), lineno,
                       "expected " + std::to_string(dim) + " values, got " +
                           std::to_string(f.size()) +
                           " fields (id [identity] then values)");
    Embedding e;
    e.id = std::string(f[0]);
    if (e.id.empty())
      throw ParseError(path.string(), lineno, "empty id field");
    e.modality = modality;
    if (n_meta == 2) e.identity = std::string(f[1]);
    e.values.resize(static_cast<size_t>(dim));
    for (int k = 0; k < dim; ++k) {
      double v = detail::parse_double_field(path, lineno,
                                            f[n_meta + static_cast<size_t>(k)],
                                            "value");
      if (!std::isfinite(v))
        throw ParseError(path.string(), lineno, "non-finite embedding value");
      e.values[static_cast<size_t>(k)] = v;
    }
    out.push_back(std::move(e));
  }
  if (out.empty())
    throw ParseError(path.string(), lineno, "embedding file has no data rows");
  return out;
}

inline void save_embeddings(const std::vector<Embedding>& embeddings,
                            const std::filesystem::path& path) {
  if (embeddings.empty())
    throw ValidationError("refusing to save an empty embedding collection");
  const size_t dim = embeddings.front().values.size();
  const Modality modality = embeddings.front().modality;
  AtomicWriter writer(path);
  std::ostream& out = writer.stream();
  out << "#dim\t" << dim << '\t' << modality_name(modality) << '\n';
  for (const Embedding& e : embeddings) {
    if (e.values.size() != dim)
      throw ValidationError("embedding '" + e.id +
                            "' has dimension " +
                            std::to_string(e.values.size()) + ", expected " +
                            std::to_string(dim));
    if (e.modality != modality)
      throw ValidationError("embedding '" + e.id + "' has mixed modality");
    out << e.id;
    if (e.identity) out << '\t' << *e.identity;
    for (double v : e.values) out << '\t' << format_double(v);
    out << '\n';
  }
  writer.commit();
}

inline std::vector<std::pair<std::string, std::string>> load_trial_list(
    const std::filesystem::path& path) {
  std::ifstream in = detail::open_input(path);
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (is_comment_or_blank(line)) continue;
    auto f = split_tabs(line);
    if (f.size() != 2)
      throw ParseError(path.string(), lineno,
                       "expected 2 tab-separated fields, got " +
                           std::to_string(f.size()));
    out.emplace_back(std::string(f[0]), std::string(f[1]));
  }
  return out;
}

inline void save_trial_list(
    const std::vector<std::pair<std::string, std::string>>& trials,
    const std::filesystem::path& path) {
  AtomicWriter writer(path);
  for (const auto& [enroll, test] : trials)
    writer.stream() << enroll << '\t' << test << '\n';
  writer.commit();
}

}  // namespace fusebench
