#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace mfckge {

using EntityId = std::int32_t;
using RelationId = std::int32_t;

// (head, relation, tail) with dense integer ids.
struct Triple {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId tail = 0;

  friend bool operator==(const Triple&, const Triple&) = default;
  friend auto operator<=>(const Triple&, const Triple&) = default;
};

struct TripleHash {
  std::size_t operator()(const Triple& t) const noexcept {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](std::uint64_t v) {
      h ^= v;
      h *= 0x100000001b3ull;
    };
    mix(static_cast<std::uint64_t>(static_cast<std::uint32_t>(t.head)));
    mix(static_cast<std::uint64_t>(static_cast<std::uint32_t>(t.relation)));
    mix(static_cast<std::uint64_t>(static_cast<std::uint32_t>(t.tail)));
    return static_cast<std::size_t>(h);
  }
};

using TripleSet = std::unordered_set<Triple, TripleHash>;

// ---------------------------------------------------------------------------
// Errors

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct EmptySnapshotError : Error { using Error::Error; };
struct InvariantViolation : Error { using Error::Error; };
struct IndexError : Error { using Error::Error; };
struct ResolutionError : Error { using Error::Error; };
struct CorruptStore : Error { using Error::Error; };
struct KeyError : Error { using Error::Error; };
struct VersionError : Error { using Error::Error; };
struct DimError : Error { using Error::Error; };
struct TooFewEntities : Error { using Error::Error; };
struct ProtocolError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct IrreversibleError : Error { using Error::Error; };

// ---------------------------------------------------------------------------
// Deterministic RNG. std::mt19937_64 has a pinned bit stream; the derived
// draws below avoid std::*_distribution so results do not depend on the
// standard library implementation.

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // [0, 1) with 53 random bits.
  double next_double() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  // [0, n)
  std::size_t uniform_index(std::size_t n) {
    return static_cast<std::size_t>(next_double() * static_cast<double>(n));
  }

  bool flip() { return (engine_() & 1ull) != 0; }

  // Box-Muller; one value per call, deterministic.
  double normal() {
    double u1 = next_double();
    double u2 = next_double();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  std::mt19937_64 engine_;
};

template <typename T>
void shuffle_inplace(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = rng.uniform_index(i);
    std::swap(v[i - 1], v[j]);
  }
}

// ---------------------------------------------------------------------------
// Vector arithmetic (float storage, double accumulation).

inline double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += double(a[i]) * double(b[i]);
  return s;
}

inline double l2_norm(std::span<const float> a) {
  double s = 0.0;
  for (float x : a) s += double(x) * double(x);
  return std::sqrt(s);
}

// Cosine similarity; 0 when either vector has zero norm. Clamped to [-1, 1].
inline double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  double na = 0.0, nb = 0.0, d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    na += double(a[i]) * double(a[i]);
    nb += double(b[i]) * double(b[i]);
    d += double(a[i]) * double(b[i]);
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  double c = d / std::sqrt(na * nb);
  if (c > 1.0) c = 1.0;
  if (c < -1.0) c = -1.0;
  return c;
}

// FNV-1a over raw bytes, for freeze checksums and manifests.
inline std::uint64_t fnv1a(const void* data, std::size_t n,
                           std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace mfckge
