#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "mfckge/common.hpp"

namespace mfckge {

// Either an explicit vector or a single-hop pointer to an earlier snapshot
// where the same entity is explicit.
struct EntityEntry {
  std::vector<float> vec;        // non-empty iff explicit
  std::int32_t target = -1;      // >= 1 iff pointer

  static EntityEntry explicit_vec(std::vector<float> v) {
    EntityEntry e;
    e.vec = std::move(v);
    return e;
  }
  static EntityEntry pointer(int snapshot) {
    EntityEntry e;
    e.target = snapshot;
    return e;
  }
  bool is_explicit() const { return target < 0; }
  bool is_pointer() const { return target >= 0; }
};

// Entity embedding space of one snapshot. Frozen once sealed; semantic
// decoupling may later replace explicit entries of the *current* snapshot
// with pointers but never rewrites earlier spaces.
struct SnapshotSpace {
  int index = 0;  // 1-based snapshot ordinal
  std::map<EntityId, EntityEntry> entries;
  // Raw vectors of dropped entries, kept only under keep_dropped so a store
  // can be recompressed upward in theta.
  std::map<EntityId, std::vector<float>> dropped_raw;
  // Explicit entries at seal time, before any decoupling (compression baseline).
  std::size_t trained_explicit_count = 0;

  std::size_t explicit_count() const {
    std::size_t n = 0;
    for (const auto& [e, entry] : entries) n += entry.is_explicit() ? 1 : 0;
    return n;
  }
};

struct RelationEntry {
  std::vector<float> vec;
  int last_updated = 0;  // snapshot that last trained this relation
};

struct EmbeddingStore {
  int dim = 0;
  bool keep_dropped = false;
  int sealed_through = 0;  // spaces 1..sealed_through are immutable
  // Loosest theta any decoupling pass has applied; 2.0 until the first pass.
  // Bounds which recompressions are possible once raw vectors are gone.
  double decoupled_theta = 2.0;
  std::vector<SnapshotSpace> spaces;              // spaces[i-1] is snapshot i
  std::map<RelationId, RelationEntry> relations;  // single latest-wins space
  std::vector<int> first_appearance;              // entity id -> first snapshot, 0 = unknown

  int space_count() const { return static_cast<int>(spaces.size()); }
  SnapshotSpace& space(int i) { return spaces.at(static_cast<std::size_t>(i - 1)); }
  const SnapshotSpace& space(int i) const { return spaces.at(static_cast<std::size_t>(i - 1)); }

  int first_appearance_of(EntityId e) const {
    if (e < 0 || static_cast<std::size_t>(e) >= first_appearance.size()) return 0;
    return first_appearance[static_cast<std::size_t>(e)];
  }
  void note_first_appearance(EntityId e, int snapshot);

  // Embedding of `entity` as seen from snapshot `i`: the explicit vector at
  // space i, a pointer target, or the nearest earlier entry. nullopt when the
  // entity is not representable at snapshot i (first appears later, or was
  // never trained anywhere up to i).
  std::optional<std::span<const float>> resolve(EntityId entity, int i) const;

  // Latest vector of a relation; KeyError if the relation was never trained.
  std::span<const float> relation_embedding(RelationId r) const;
};

// Creates space i. Inherited entities copy their resolved embedding at i-1;
// the rest are sampled uniformly in [-6/sqrt(dim), +6/sqrt(dim)]. Entities
// outside delta-D_i get no entry here (static pointers come later).
SnapshotSpace& allocate_space(EmbeddingStore& store, int i,
                              const std::vector<EntityId>& trainable_entities,
                              const std::vector<EntityId>& inherit_from_prior,
                              Rng& rng);

// Checksum over every entry of space j (explicit bytes and pointer targets);
// used to assert the freeze invariant.
std::uint64_t space_checksum(const EmbeddingStore& store, int j);

void save_checkpoint(const EmbeddingStore& store, const std::filesystem::path& dir);
EmbeddingStore load_checkpoint(const std::filesystem::path& dir);

// Content hash of a whole store (vectors, pointers, relations, metadata).
std::uint64_t store_content_hash(const EmbeddingStore& store);

}  // namespace mfckge
