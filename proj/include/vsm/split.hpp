// Copyright 2026 The vsm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vsm/error.hpp"
#include "vsm/manifest.hpp"
#include "vsm/rng.hpp"

namespace vsm {

struct SplitSpec {
  std::array<double, 3> fractions = {0.70, 0.15, 0.15};  // train, val, test
  std::uint64_t seed = 0;
  bool stratify_by_label = true;

  void validate() const {
    const double sum = fractions[0] + fractions[1] + fractions[2];
    require(fractions[0] > 0 && fractions[1] > 0 && fractions[2] > 0 && std::abs(sum - 1.0) < 1e-9,
            ErrorKind::InvalidParam, "split fractions must be positive and sum to 1");
  }
};

/// Assigns whole subjects to Train/Val/Test so clip-count fractions approach
/// the targets. Within each stratum (label, or the whole corpus when not
/// stratifying) subjects are taken largest-first and each goes to the split
/// with the largest remaining clip deficit. Once the subjects left in a
/// stratum are only just enough to give every still-empty split one subject,
/// they are reserved for those splits. Ties are broken by the seed.
inline Manifest split_by_subject(const Manifest& manifest, const SplitSpec& spec) {
  spec.validate();
  std::map<std::string, std::size_t> clips_per_subject;
  std::map<std::string, Label> subject_label;
  for (const auto& e : manifest.entries) {
    require(e.split == Split::Unassigned && !e.augmented, ErrorKind::InvalidParam,
            "split_by_subject expects raw, unassigned entries (offending: " + e.clip_id + ")");
    ++clips_per_subject[e.subject_id];
    subject_label.emplace(e.subject_id, e.label);
  }
  require(clips_per_subject.size() >= 3, ErrorKind::InsufficientSubjects,
          "need at least 3 subjects, have " + std::to_string(clips_per_subject.size()));
  const auto total = static_cast<double>(manifest.entries.size());
  for (const auto& [s, n] : clips_per_subject)
    require(static_cast<double>(n) <= spec.fractions[0] * total + 1e-9, ErrorKind::UnsatisfiableSplit,
            "subject " + s + " holds " + std::to_string(n) + " of " + std::to_string(manifest.entries.size()) +
                " clips, more than the train fraction");

  std::map<int, std::vector<std::string>> strata;
  for (const auto& [s, _] : clips_per_subject)
    strata[spec.stratify_by_label ? static_cast<int>(subject_label[s]) : 0].push_back(s);

  std::map<std::string, Split> assignment;
  for (auto& [stratum, subjects] : strata) {
    RandomStream rng = make_stream(spec.seed, "split", static_cast<std::uint64_t>(stratum));
    rng.shuffle(subjects.begin(), subjects.end());
    std::ranges::stable_sort(subjects, [&](const std::string& a, const std::string& b) {
      return clips_per_subject[a] > clips_per_subject[b];
    });
    double stratum_total = 0;
    for (const auto& s : subjects) stratum_total += static_cast<double>(clips_per_subject[s]);

    std::array<double, 3> filled{};
    std::array<int, 3> members{};
    for (std::size_t i = 0; i < subjects.size(); ++i) {
      const std::size_t remaining = subjects.size() - i;
      const auto empty = static_cast<std::size_t>(std::ranges::count(members, 0));
      std::array<bool, 3> eligible{true, true, true};
      if (empty > 0 && remaining <= empty)
        for (int k = 0; k < 3; ++k) eligible[k] = members[k] == 0;

      double best = -1e300;
      std::vector<int> tied;
      for (int k = 0; k < 3; ++k) {
        if (!eligible[k]) continue;
        const double deficit = spec.fractions[k] * stratum_total - filled[k];
        if (deficit > best + 1e-9) {
          best = deficit;
          tied = {k};
        } else if (std::abs(deficit - best) <= 1e-9) {
          tied.push_back(k);
        }
      }
      const int pick = tied.size() == 1 ? tied[0] : tied[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(tied.size()) - 1))];
      filled[pick] += static_cast<double>(clips_per_subject[subjects[i]]);
      ++members[pick];
      assignment[subjects[i]] = static_cast<Split>(pick);
    }
  }

  Manifest out = manifest;
  for (auto& e : out.entries) e.split = assignment.at(e.subject_id);
  return out;
}

}  // namespace vsm
