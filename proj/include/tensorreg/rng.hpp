#pragma once

#include <cstdint>
#include <string_view>

namespace tensorreg {

/// Deterministic random stream: xoshiro256++ state seeded from a 64-bit seed
/// via splitmix64. The integer sequence is identical across runs and
/// platforms; floating-point variates additionally depend only on libm.
///
/// Streams are single-owner. Concurrent work must use substreams derived with
/// substream(), which mixes a key into the stream's lineage so that
/// (seed, path of keys) fully determines the sequence.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : RngStream(seed, 0) {}

  /// Child stream keyed by an integer (e.g. replicate or grid index).
  RngStream substream(std::uint64_t key) const;
  /// Child stream keyed by a name ("simulate", "fit", ...).
  RngStream substream(std::string_view name) const;

  std::uint64_t next_u64();
  /// Uniform on the open interval (0,1); never returns 0 or 1.
  double uniform();
  /// Standard normal via Box-Muller.
  double normal();

 private:
  RngStream(std::uint64_t root, std::uint64_t path);
  std::uint64_t root_;
  std::uint64_t path_;
  std::uint64_t s_[4];
};

}  // namespace tensorreg
