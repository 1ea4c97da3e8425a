#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "icr/errors.hpp"
#include "icr/linalg.hpp"
#include "icr/nn.hpp"

namespace icr {

// =====================================================================
//  Checkpoint file: 8-byte magic, u64 header length, JSON header
//  (names, shapes, seed, config hash, config snapshot), then the raw
//  little-endian f64 payload of every array in header order. Loads are
//  bit-exact.
// =====================================================================

constexpr char kCheckpointMagic[8] = {'I', 'C', 'R', 'C', 'K', 'P', 'T', '1'};

struct Checkpoint {
  std::map<std::string, Matrix> arrays;
  std::uint64_t seed = 0;
  std::string config_hash;
  nlohmann::json config;  // resolved config snapshot
};

inline Checkpoint checkpoint_from_store(const ParameterStore& ps, std::uint64_t seed,
                                        const std::string& config_hash,
                                        const nlohmann::json& config) {
  Checkpoint ck;
  ck.seed = seed;
  ck.config_hash = config_hash;
  ck.config = config;
  for (const auto& [name, e] : ps.params()) ck.arrays[name] = *e.param;
  for (const auto& [name, m] : ps.state()) ck.arrays[name] = *m;
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  nlohmann::json header;
  header["seed"] = ck.seed;
  header["config_hash"] = ck.config_hash;
  header["config"] = ck.config;
  nlohmann::json names = nlohmann::json::array();
  nlohmann::json shapes = nlohmann::json::array();
  for (const auto& [name, m] : ck.arrays) {
    names.push_back(name);
    shapes.push_back({m.rows, m.cols});
  }
  header["names"] = names;
  header["shapes"] = shapes;
  const std::string htext = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_checkpoint: cannot open " + path);
  out.write(kCheckpointMagic, 8);
  const std::uint64_t hlen = htext.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  for (const auto& [name, m] : ck.arrays)
    out.write(reinterpret_cast<const char*>(m.data.data()),
              static_cast<std::streamsize>(m.data.size() * sizeof(double)));
  if (!out) throw IoError("save_checkpoint: write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw ParseError("load_checkpoint: bad magic in " + path);
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!in) throw ParseError("load_checkpoint: truncated header length");
  std::string htext(hlen, '\0');
  in.read(htext.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw ParseError("load_checkpoint: truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(htext);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("load_checkpoint: header: ") + e.what());
  }

  Checkpoint ck;
  ck.seed = header.at("seed").get<std::uint64_t>();
  ck.config_hash = header.at("config_hash").get<std::string>();
  ck.config = header.value("config", nlohmann::json::object());
  const auto names = header.at("names").get<std::vector<std::string>>();
  const auto shapes = header.at("shapes").get<std::vector<std::vector<std::size_t>>>();
  if (names.size() != shapes.size()) throw ParseError("load_checkpoint: names/shapes mismatch");
  for (std::size_t i = 0; i < names.size(); ++i) {
    Matrix m(shapes[i][0], shapes[i][1]);
    in.read(reinterpret_cast<char*>(m.data.data()),
            static_cast<std::streamsize>(m.data.size() * sizeof(double)));
    if (!in) throw ParseError("load_checkpoint: truncated payload at array " + names[i]);
    ck.arrays[names[i]] = std::move(m);
  }
  return ck;
}

// Copies checkpoint arrays into live parameters/buffers; every store
// entry must be present with a matching shape.
inline void load_into_store(const Checkpoint& ck, ParameterStore& ps) {
  auto copy_into = [&](const std::string& name, Matrix& dst) {
    auto it = ck.arrays.find(name);
    if (it == ck.arrays.end())
      throw DimMismatch("checkpoint missing array " + name);
    if (!it->second.same_shape(dst))
      throw DimMismatch("checkpoint array " + name + " has shape " + shape_str(it->second) +
                        ", expected " + shape_str(dst));
    dst = it->second;
  };
  for (const auto& [name, e] : ps.params()) copy_into(name, *e.param);
  for (const auto& [name, m] : ps.state()) copy_into(name, *m);
}

}  // namespace icr
