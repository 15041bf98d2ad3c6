#pragma once

#include <json.hpp>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "mfckge/kg.hpp"
#include "mfckge/store.hpp"
#include "mfckge/trainer.hpp"

namespace mfckge {

enum class Direction { Tail, Head };  // (h, r, ?) vs (?, r, t)

struct Query {
  Direction direction = Direction::Tail;
  EntityId anchor = 0;  // h for tail queries, t for head queries
  RelationId relation = 0;
  int snapshot = 1;  // evaluation snapshot i
};

struct ImportanceProfile {
  std::vector<double> delta;  // raw per-snapshot relevance, length i
  std::vector<double> beta;   // softmax(delta), length i
};

struct RankOutcome {
  long rank = 0;
  std::vector<std::pair<EntityId, double>> top;  // best-first aggregated scores
};

// Relations of delta-D_j triples incident to the anchor; both incidence roles
// by default, head-role only otherwise. Sorted, unique, possibly empty.
std::vector<RelationId> candidate_relations(const GrowingKG& kg, EntityId anchor, int j,
                                            bool both_roles = true);

// Cosine of each candidate relation against the query relation, in input
// order, using the latest relation vectors.
std::vector<double> relation_similarity_set(std::span<const RelationId> anchor_relations,
                                            RelationId query_relation,
                                            const EmbeddingStore& store);

// Mean of the k largest values; under-full inputs average what is there;
// empty input gives 0.
double topk_average(std::span<const double> similarities, int k);

std::vector<double> softmax(std::span<const double> values);

ImportanceProfile snapshot_importance(const Query& query, int k, const GrowingKG& kg,
                                      const EmbeddingStore& store, bool both_roles = true);

// psi^j = -||h_j + r - e_j||_p with pointer-redirected lookups; nullopt when
// anchor or candidate is unrepresentable at snapshot j.
std::optional<double> snapshot_score(const Query& query, EntityId candidate, int j,
                                     const EmbeddingStore& store, int p);

// Caches importance profiles per (anchor, relation, snapshot); pure reads
// over a sealed store. Not thread-safe: use one context per worker.
class InferenceContext {
 public:
  InferenceContext(const GrowingKG& kg, const EmbeddingStore& store, const TrainConfig& config);

  const ImportanceProfile& importance(EntityId anchor, RelationId relation, int i) const;

  // Importance-weighted score over contributing snapshots; renormalizes beta
  // over them unless configured otherwise. nullopt when nothing contributes.
  std::optional<double> aggregate_score(const Query& query, EntityId candidate,
                                        const ImportanceProfile& profile) const;

  // Filtered rank of the gold entity among E_i (pessimistic ties) plus the
  // top-m list. nullopt when the gold answer cannot be scored at all;
  // ProtocolError when gold lies outside E_i.
  std::optional<RankOutcome> rank_query(const Query& query, EntityId gold,
                                        const TripleSet& filter_set, int top_m) const;

  // Machine-readable account of one prediction: importance profile,
  // per-snapshot top-m, and the final aggregated top-m.
  nlohmann::json explain_query(const Query& query, int m) const;

  const GrowingKG& kg() const { return kg_; }
  const EmbeddingStore& store() const { return store_; }
  const TrainConfig& config() const { return config_; }

 private:
  struct ProfileKey {
    EntityId anchor;
    RelationId relation;
    int snapshot;
    bool operator==(const ProfileKey&) const = default;
  };
  struct ProfileKeyHash {
    std::size_t operator()(const ProfileKey& k) const {
      std::uint64_t h = fnv1a(&k.anchor, sizeof(k.anchor));
      h = fnv1a(&k.relation, sizeof(k.relation), h);
      h = fnv1a(&k.snapshot, sizeof(k.snapshot), h);
      return static_cast<std::size_t>(h);
    }
  };

  std::vector<RelationId> cached_candidates(EntityId anchor, int j) const;

  const GrowingKG& kg_;
  const EmbeddingStore& store_;
  TrainConfig config_;
  // snapshot j -> anchor -> sorted unique incident relations in delta-D_j
  std::vector<std::unordered_map<EntityId, std::vector<RelationId>>> incident_;
  mutable std::unordered_map<ProfileKey, ImportanceProfile, ProfileKeyHash> profile_cache_;
};

}  // namespace mfckge
