// Copyright 2026 The vsm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "vsm/audio.hpp"
#include "vsm/error.hpp"
#include "vsm/io.hpp"

namespace vsm {

enum class Split : std::uint8_t { Train, Val, Test, Unassigned };

constexpr std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "Train";
    case Split::Val: return "Val";
    case Split::Test: return "Test";
    case Split::Unassigned: return "Unassigned";
  }
  return "?";
}

inline Split split_from_string(std::string_view s) {
  for (auto v : {Split::Train, Split::Val, Split::Test, Split::Unassigned})
    if (to_string(v) == s) return v;
  fail(ErrorKind::ManifestError, "unknown split '" + std::string(s) + "'");
}

struct ManifestEntry {
  std::string clip_id;
  std::string subject_id;
  Label label = Label::Stable;
  std::string audio_path;        // relative to the manifest directory; may be empty
  std::string spectrogram_path;  // relative to the manifest directory; may be empty
  Split split = Split::Unassigned;
  bool augmented = false;
  std::optional<std::string> source_clip_id;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  std::filesystem::path base_dir;  // directory the relative paths resolve against

  std::filesystem::path resolve(const std::string& rel) const { return base_dir / rel; }

  std::vector<const ManifestEntry*> in_split(Split s, bool include_augmented = true) const {
    std::vector<const ManifestEntry*> out;
    for (const auto& e : entries)
      if (e.split == s && (include_augmented || !e.augmented)) out.push_back(&e);
    return out;
  }

  std::vector<std::string> clip_ids(Split s) const {
    std::vector<std::string> ids;
    for (const auto* e : in_split(s)) ids.push_back(e->clip_id);
    std::ranges::sort(ids);
    return ids;
  }
};

inline ManifestEntry entry_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {"clip_id", "subject_id", "label", "audio_path", "spectrogram_path",
                                              "split", "augmented", "source_clip_id"};
  require(j.is_object(), ErrorKind::ManifestError, "manifest line is not an object");
  for (const auto& [k, _] : j.items())
    require(known.contains(k), ErrorKind::ManifestError, "unknown manifest field '" + k + "'");
  for (const char* k : {"clip_id", "subject_id", "label"})
    require(j.contains(k) && j[k].is_string(), ErrorKind::ManifestError, std::string("missing field '") + k + "'");
  ManifestEntry e;
  e.clip_id = j["clip_id"].get<std::string>();
  e.subject_id = j["subject_id"].get<std::string>();
  e.label = label_from_string(j["label"].get<std::string>());
  e.audio_path = j.value("audio_path", "");
  e.spectrogram_path = j.value("spectrogram_path", "");
  e.split = split_from_string(j.value("split", "Unassigned"));
  e.augmented = j.value("augmented", false);
  if (j.contains("source_clip_id") && !j["source_clip_id"].is_null())
    e.source_clip_id = j["source_clip_id"].get<std::string>();
  require(!e.clip_id.empty() && !e.subject_id.empty(), ErrorKind::ManifestError, "empty clip or subject id");
  require(!e.augmented || e.source_clip_id.has_value(), ErrorKind::ManifestError,
          "augmented entry '" + e.clip_id + "' has no source_clip_id");
  return e;
}

/// JSON Lines, one entry per line, key order fixed so identical manifests are byte-identical.
inline std::string render_manifest(const Manifest& m) {
  std::string out;
  for (const auto& e : m.entries) {
    nlohmann::ordered_json j;
    j["clip_id"] = e.clip_id;
    j["subject_id"] = e.subject_id;
    j["label"] = std::string(to_string(e.label));
    j["audio_path"] = e.audio_path;
    j["spectrogram_path"] = e.spectrogram_path;
    j["split"] = std::string(to_string(e.split));
    j["augmented"] = e.augmented;
    j["source_clip_id"] = e.source_clip_id ? nlohmann::ordered_json(*e.source_clip_id) : nlohmann::ordered_json(nullptr);
    out += j.dump();
    out += '\n';
  }
  return out;
}

inline Manifest parse_manifest(std::string_view text, std::filesystem::path base_dir) {
  Manifest m;
  m.base_dir = std::move(base_dir);
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail(ErrorKind::ManifestError, "line " + std::to_string(lineno) + ": " + e.what());
    }
    auto e = entry_from_json(j);
    require(seen.insert(e.clip_id).second, ErrorKind::ManifestError, "duplicate clip_id '" + e.clip_id + "'");
    m.entries.push_back(std::move(e));
  }
  return m;
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  return parse_manifest(io::read_text(path), path.parent_path());
}

inline void save_manifest(const Manifest& m, const std::filesystem::path& path) {
  io::write_text_atomic(path, render_manifest(m));
}

enum class ViolationKind : std::uint8_t {
  SubjectOverlap,           // (a) one subject in several splits
  AugmentedOutsideTrain,    // (b)
  AugmentedSourceNotTrain,  // (c)
  DuplicateClipId,          // (d)
  Unassigned,               // entry without a split
};

constexpr std::string_view to_string(ViolationKind v) {
  switch (v) {
    case ViolationKind::SubjectOverlap: return "SubjectOverlap";
    case ViolationKind::AugmentedOutsideTrain: return "AugmentedOutsideTrain";
    case ViolationKind::AugmentedSourceNotTrain: return "AugmentedSourceNotTrain";
    case ViolationKind::DuplicateClipId: return "DuplicateClipId";
    case ViolationKind::Unassigned: return "Unassigned";
  }
  return "?";
}

struct Violation {
  ViolationKind kind;
  std::string clip_id;
  std::string detail;
};

struct LeakageReport {
  bool ok = true;
  std::vector<Violation> violations;

  bool has(ViolationKind k) const {
    return std::ranges::any_of(violations, [k](const Violation& v) { return v.kind == k; });
  }
};

inline LeakageReport check_leakage(const Manifest& m) {
  LeakageReport r;
  auto flag = [&](ViolationKind k, const std::string& clip, std::string detail) {
    r.violations.push_back({k, clip, std::move(detail)});
  };
  std::unordered_map<std::string, const ManifestEntry*> by_id;
  std::map<std::string, std::set<Split>> subject_splits;
  for (const auto& e : m.entries) {
    if (!by_id.emplace(e.clip_id, &e).second) flag(ViolationKind::DuplicateClipId, e.clip_id, "clip_id repeated");
    if (e.split == Split::Unassigned) flag(ViolationKind::Unassigned, e.clip_id, "no split assigned");
    subject_splits[e.subject_id].insert(e.split);
  }
  for (const auto& [subject, splits] : subject_splits) {
    if (splits.size() <= 1) continue;
    std::string names;
    for (auto s : splits) names += std::string(names.empty() ? "" : ",") + std::string(to_string(s));
    for (const auto& e : m.entries)
      if (e.subject_id == subject) {
        flag(ViolationKind::SubjectOverlap, e.clip_id, "subject " + subject + " spans " + names);
        break;
      }
  }
  for (const auto& e : m.entries) {
    if (!e.augmented) continue;
    if (e.split != Split::Train)
      flag(ViolationKind::AugmentedOutsideTrain, e.clip_id, "augmented entry in " + std::string(to_string(e.split)));
    const auto it = e.source_clip_id ? by_id.find(*e.source_clip_id) : by_id.end();
    if (it == by_id.end() || it->second->split != Split::Train || it->second->augmented)
      flag(ViolationKind::AugmentedSourceNotTrain, e.clip_id,
           "source '" + e.source_clip_id.value_or("") + "' is not a raw Train entry");
  }
  r.ok = r.violations.empty();
  return r;
}

inline void require_clean(const Manifest& m) {
  const auto report = check_leakage(m);
  if (report.ok) return;
  std::string msg = std::to_string(report.violations.size()) + " leakage violation(s); first: ";
  const auto& v = report.violations.front();
  msg += std::string(to_string(v.kind)) + " at " + v.clip_id + " (" + v.detail + ")";
  fail(ErrorKind::LeakageRefusal, msg);
}

}  // namespace vsm
