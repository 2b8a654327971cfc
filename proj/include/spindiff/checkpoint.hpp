#pragma once

// Versioned binary model checkpoint. Layout: magic, format version,
// architecture descriptor, chain length T, flat parameters as little-endian
// doubles, trailing FNV-1a digest of everything before it. Saving the same
// model twice yields byte-identical files.

#include <array>
#include <cstdint>
#include <string>

#include "spindiff/binio.hpp"
#include "spindiff/score_net.hpp"

namespace spindiff {

inline constexpr std::array<std::uint8_t, 8> kCheckpointMagic = {'S', 'D', 'I', 'F',
                                                                 'F', 'C', 'P', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ScoreModelParams params;
  int T = 0;
};

inline void save_checkpoint(const std::string& path, const ScoreModelParams& p, int T) {
  BinWriter w(path);
  w.bytes(kCheckpointMagic);
  w.u<std::uint32_t>(kCheckpointVersion);
  w.u<std::uint32_t>(static_cast<std::uint32_t>(p.arch.d));
  w.u<std::uint32_t>(static_cast<std::uint32_t>(p.arch.num_classes));
  w.u<std::uint32_t>(static_cast<std::uint32_t>(p.arch.time_dim));
  w.u<std::uint32_t>(static_cast<std::uint32_t>(p.arch.hidden.size()));
  for (int hsz : p.arch.hidden) w.u<std::uint32_t>(static_cast<std::uint32_t>(hsz));
  w.f64(p.arch.clamp_bound);
  w.u<std::uint32_t>(static_cast<std::uint32_t>(T));
  w.u<std::uint64_t>(p.theta.size());
  w.f64_span(p.theta);
  w.finish();
}

inline Checkpoint load_checkpoint(const std::string& path) {
  BinReader r(path);
  std::array<std::uint8_t, 8> magic{};
  r.bytes(magic);
  if (magic != kCheckpointMagic) throw IoError("not a checkpoint file: " + path);
  std::uint32_t version = r.u<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version) + ": " + path);
  Checkpoint c;
  c.params.arch.d = static_cast<int>(r.u<std::uint32_t>());
  c.params.arch.num_classes = static_cast<int>(r.u<std::uint32_t>());
  c.params.arch.time_dim = static_cast<int>(r.u<std::uint32_t>());
  std::uint32_t n_hidden = r.u<std::uint32_t>();
  c.params.arch.hidden.resize(n_hidden);
  for (std::uint32_t i = 0; i < n_hidden; ++i)
    c.params.arch.hidden[i] = static_cast<int>(r.u<std::uint32_t>());
  c.params.arch.clamp_bound = r.f64();
  c.T = static_cast<int>(r.u<std::uint32_t>());
  std::uint64_t n = r.u<std::uint64_t>();
  if (n != c.params.arch.param_count())
    throw IoError("checkpoint parameter count mismatch: " + path);
  c.params.theta.resize(n);
  r.f64_span(c.params.theta);
  r.finish();
  c.params.arch.validate();
  return c;
}

}  // namespace spindiff
