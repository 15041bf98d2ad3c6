#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mfckge/kg.hpp"
#include "mfckge/store.hpp"

namespace mfckge {

struct DecouplingStats {
  int snapshot = 0;
  std::size_t examined = 0;  // explicit entries that had at least one prior explicit match
  std::size_t dropped = 0;
  std::size_t retained = 0;  // examined - dropped
  std::size_t static_pointers = 0;
  // Post/pre size over explicit vectors, cumulative through this snapshot.
  double compression_ratio = 1.0;
};

// Most similar earlier explicit embedding of `entity` (cosine), scanning
// spaces 1..i-1; pointers are never compared. Ties break toward the larger
// (more recent) snapshot; zero-norm pairs count as similarity 0. nullopt when
// the entity has no earlier explicit entry.
std::optional<std::pair<int, double>> most_similar_prior(const EmbeddingStore& store,
                                                         EntityId entity, int i);

// Replaces every explicit entry of sealed space i whose best prior similarity
// reaches theta with a pointer to that prior snapshot. Raw vectors of dropped
// entries are stashed only under keep_dropped.
DecouplingStats apply_semantic_decoupling(EmbeddingStore& store, int i, double theta);

// Gives each listed entity (embedded before i, untouched by snapshot i's
// training) a pointer at space i to its most recent explicit entry.
std::size_t assign_static_pointers(EmbeddingStore& store, int i,
                                   const std::vector<EntityId>& absent_entities);

// Entities of E_i that have an embedding history but no entry at space i.
std::vector<EntityId> static_pointer_candidates(const EmbeddingStore& store,
                                                const GrowingKG& kg, int i);

// Explicit entries remaining / explicit entries trained, over spaces 1..upto.
double cumulative_compression_ratio(const EmbeddingStore& store, int upto);

// Post-training consolidation for one snapshot: semantic decoupling (unless
// disabled) followed by static pointer assignment.
DecouplingStats consolidate_snapshot(EmbeddingStore& store, const GrowingKG& kg, int i,
                                     double theta, bool no_decoupling);

// Re-derives every snapshot's pointer decisions at theta_new, in snapshot
// order, from the originally trained vectors. Needs the dropped raw vectors
// (keep_dropped) to loosen; without them only tightening below the original
// theta is possible (IrreversibleError otherwise).
std::vector<DecouplingStats> recompress(EmbeddingStore& store, double theta_new);

std::string decoupling_stats_csv(std::span<const DecouplingStats> stats);

}  // namespace mfckge
