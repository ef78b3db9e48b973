// fusebench/types.hpp

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

#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fusebench {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised on malformed input files; always carries a 1-based line number.
class ParseError : public Error {
 public:
  ParseError(const std::string& path, int line, const std::string& what)
      : Error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

enum class Modality { kSpeaker, kFace };

inline const char* modality_name(Modality m) {
  return m == Modality::kSpeaker ? "speaker" : "face";
}

inline Modality modality_from_name(const std::string& s) {
  if (s == "speaker") return Modality::kSpeaker;
  if (s == "face") return Modality::kFace;
  throw ValidationError("unknown modality '" + s + "' (expected speaker|face)");
}

// A single fixed-dimension feature vector with an id token (no whitespace).
// identity and true_noise are optional labels; true_noise is only ever set
// on synthetically generated data.
struct Embedding {
  std::string id;
  Modality modality = Modality::kSpeaker;
  std::vector<double> values;
  std::optional<std::string> identity;
  std::optional<double> true_noise;

  bool operator==(const Embedding&) const = default;
};

enum class TrialLabel { kTarget, kNontarget };

// Per-system score and optional enrollment/test qualities in [0,1].
struct SystemEntry {
  double score = 0.0;
  std::optional<double> q_enroll;
  std::optional<double> q_test;

  bool operator==(const SystemEntry&) const = default;
};

// One (enrollment, test) pair; unique within a table.
struct TrialRecord {
  std::string enroll_id;
  std::string test_id;
  std::optional<TrialLabel> label;
  std::map<std::string, SystemEntry> systems;

  bool operator==(const TrialRecord&) const = default;
};

// Ordered trial collection plus the sorted roster of system names.
// Every record's system keys are a subset of the roster.
struct ScoreTable {
  std::vector<std::string> roster;
  std::vector<TrialRecord> records;

  bool operator==(const ScoreTable&) const = default;
};

}  // namespace fusebench
