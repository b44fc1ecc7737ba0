// Copyright 2026 The vsm Authors
// SPDX-License-Identifier: Apache-2.0

// .vsmc checkpoint container. Layout (all integers little-endian):
//
//   "VSMC" | u32 version
//   str graph descriptor (JSON) | str metadata (JSON)
//   u32 tensor count, then per tensor:
//     str name | u8 dtype (0 = f32) | u32 ndims | u64 dims[ndims] | u64 offset | u64 length
//   u64 payload length | payload (f32 little-endian)
//   u32 CRC-32 of every preceding byte
//
// where str = u32 byte length followed by UTF-8 bytes.

#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vsm/error.hpp"
#include "vsm/graph.hpp"
#include "vsm/io.hpp"
#include "vsm/rng.hpp"
#include "vsm/tensor.hpp"

namespace vsm::persist {

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::uint64_t kProbeSeed = 0x70726F6265ULL;

struct ProbeRecord {
  std::string input_hash;
  std::string activation_hash;
  std::string cut_point;
};

struct CheckpointMeta {
  std::string model;
  int phase = 0;
  std::uint64_t seed = 0;
  std::string created_at;
  std::string source_manifest_hash;
  std::optional<ProbeRecord> probe;  // filled in by save()
};

struct Checkpoint {
  nn::Graph<float> graph;
  CheckpointMeta meta;
};

inline std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

/// Fixed synthetic probe input [1 x input_shape], uniform in [0, 1).
inline Tensor<float> probe_input(const Shape& input_shape) {
  Shape s{1};
  s.insert(s.end(), input_shape.begin(), input_shape.end());
  Tensor<float> x(s);
  RandomStream rng = make_stream(kProbeSeed, "probe");
  for (auto& v : x.data()) v = static_cast<float>(rng.uniform());
  return x;
}

/// Inference-mode activation of the cut-point layer on the probe input.
inline Tensor<float> probe_activation(nn::Graph<float>& g, const std::string& cut_point) {
  const auto x = probe_input(g.input_shape());
  return g.forward_to(x, cut_point);
}

inline ProbeRecord make_probe(nn::Graph<float>& g, const std::string& cut_point) {
  const auto x = probe_input(g.input_shape());
  return {io::hash_values(x.data()), io::hash_values(g.forward_to(x, cut_point).data()), cut_point};
}

inline nlohmann::ordered_json meta_to_json(const CheckpointMeta& m) {
  nlohmann::ordered_json j;
  j["model"] = m.model;
  j["phase"] = m.phase;
  j["seed"] = m.seed;
  j["created_at"] = m.created_at;
  j["source_manifest_hash"] = m.source_manifest_hash;
  if (m.probe)
    j["probe"] = {{"input_hash", m.probe->input_hash},
                  {"activation_hash", m.probe->activation_hash},
                  {"cut_point", m.probe->cut_point}};
  return j;
}

inline CheckpointMeta meta_from_json(const nlohmann::json& j) {
  CheckpointMeta m;
  m.model = j.at("model").get<std::string>();
  m.phase = j.at("phase").get<int>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.created_at = j.at("created_at").get<std::string>();
  m.source_manifest_hash = j.at("source_manifest_hash").get<std::string>();
  if (j.contains("probe")) {
    const auto& p = j.at("probe");
    m.probe = ProbeRecord{p.at("input_hash").get<std::string>(), p.at("activation_hash").get<std::string>(),
                          p.at("cut_point").get<std::string>()};
  }
  return m;
}

/// Serializes a graph; the probe record is recomputed from the graph.
inline io::Bytes encode(nn::Graph<float> g, CheckpointMeta meta) {
  g.validate();
  if (!g.cut_point().empty()) meta.probe = make_probe(g, g.cut_point());
  if (meta.created_at.empty()) meta.created_at = utc_now();

  io::Writer w;
  w.raw("VSMC");
  w.u32(kFormatVersion);
  w.str(g.descriptor().dump());
  w.str(meta_to_json(meta).dump());
  const auto named = g.named_tensors();
  w.u32(static_cast<std::uint32_t>(named.size()));
  std::uint64_t offset = 0;
  for (const auto& [name, t] : named) {
    w.str(name);
    w.u8(0);
    w.u32(static_cast<std::uint32_t>(t->rank()));
    for (auto d : t->shape()) w.u64(d);
    const std::uint64_t len = t->size() * 4;
    w.u64(offset);
    w.u64(len);
    offset += len;
  }
  w.u64(offset);
  for (const auto& [_, t] : named)
    for (float v : t->data()) w.f32(v);
  w.u32(io::crc32(w.bytes()));
  return std::move(w.bytes());
}

inline void save(const nn::Graph<float>& g, const std::filesystem::path& path, const CheckpointMeta& meta) {
  const auto bytes = encode(g, meta);
  try {
    io::write_file_atomic(path, bytes);
  } catch (const std::filesystem::filesystem_error& e) {
    fail(ErrorKind::IoError, e.what());
  }
}

/// Parses and validates a checkpoint: CRC, version, tensor table coverage and
/// bounds, graph shapes, and the probe activation.
inline Checkpoint decode(const io::Bytes& b) {
  constexpr auto bad = ErrorKind::CorruptCheckpoint;
  require(b.size() >= 12, bad, "checkpoint too short");
  require(std::string(b.begin(), b.begin() + 4) == "VSMC", bad, "bad checkpoint magic");
  const std::uint32_t stored = io::Reader(b.data() + b.size() - 4, 4, bad).u32();
  require(io::crc32(b.data(), b.size() - 4) == stored, bad, "checkpoint CRC mismatch");

  io::Reader r(b.data() + 4, b.size() - 8, bad);
  const std::uint32_t version = r.u32();
  require(version == kFormatVersion, ErrorKind::UnsupportedVersion,
          "checkpoint format version " + std::to_string(version) + " is not supported");

  Checkpoint ck;
  try {
    const auto desc = nlohmann::json::parse(r.str());
    ck.graph = nn::Graph<float>::from_descriptor(desc);
    ck.meta = meta_from_json(nlohmann::json::parse(r.str()));
  } catch (const nlohmann::json::exception& e) {
    fail(bad, std::string("malformed checkpoint header: ") + e.what());
  } catch (const Error& e) {
    fail(bad, std::string("invalid graph descriptor: ") + e.what());
  }

  struct Entry {
    Shape shape;
    std::uint64_t offset, length;
  };
  std::map<std::string, Entry> table;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str();
    require(r.u8() == 0, bad, name + ": unsupported dtype");
    Entry e;
    const std::uint32_t nd = r.u32();
    require(nd <= 8, bad, name + ": implausible rank");
    for (std::uint32_t d = 0; d < nd; ++d) e.shape.push_back(r.u64());
    e.offset = r.u64();
    e.length = r.u64();
    require(table.emplace(name, e).second, bad, "duplicate tensor '" + name + "'");
  }
  const std::uint64_t payload_len = r.u64();
  require(payload_len == r.remaining(), bad, "payload length mismatch");
  const unsigned char* payload = b.data() + 4 + r.pos();

  std::vector<std::pair<std::uint64_t, std::uint64_t>> spans;
  auto named = ck.graph.named_tensors();
  require(named.size() == table.size(), bad, "tensor table does not cover the graph exactly");
  for (auto& [name, t] : named) {
    auto it = table.find(name);
    require(it != table.end(), bad, "missing tensor '" + name + "'");
    const Entry& e = it->second;
    require(e.shape == t->shape(), bad, name + ": shape mismatch");
    require(e.length == t->size() * 4 && e.offset <= payload_len && e.length <= payload_len - e.offset, bad,
            name + ": tensor out of bounds");
    spans.emplace_back(e.offset, e.length);
    io::Reader tr(payload + e.offset, e.length, bad);
    for (auto& v : t->data()) v = tr.f32();
  }
  std::ranges::sort(spans);
  for (std::size_t i = 1; i < spans.size(); ++i)
    require(spans[i - 1].first + spans[i - 1].second <= spans[i].first, bad, "overlapping tensors");

  if (ck.meta.probe) {
    const auto& p = *ck.meta.probe;
    require(ck.graph.contains(p.cut_point), bad, "probe cut point missing");
    const auto fresh = make_probe(ck.graph, p.cut_point);
    require(fresh.input_hash == p.input_hash && fresh.activation_hash == p.activation_hash, bad,
            "probe activation does not reproduce");
  }
  return ck;
}

inline Checkpoint load(const std::filesystem::path& path) {
  require(std::filesystem::exists(path), ErrorKind::MissingCheckpoint, path.string());
  return decode(io::read_file(path));
}

}  // namespace vsm::persist
