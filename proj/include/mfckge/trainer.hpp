#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mfckge/kg.hpp"
#include "mfckge/store.hpp"

namespace mfckge {

struct TrainConfig {
  int dim = 200;
  double margin = 8.0;        // gamma
  int norm_p = 1;             // 1 or 2
  double alpha = 0.1;         // relation-alignment weight
  double eta = 0.1;           // neighborhood-coherency weight
  double learning_rate = 1e-3;
  int batch_size = 1024;
  int negatives_per_positive = 1;
  int max_epochs = 200;
  int patience = 3;           // validation checks without improvement
  int eval_every = 10;        // epochs between validation checks
  std::uint64_t seed = 1;

  // consolidation / inference settings carried through the pipeline
  double theta = 0.95;
  int topk = 3;
  bool keep_dropped = false;
  bool no_decoupling = false;
  bool uniform_importance = false;
  bool renormalize = true;        // reweight beta over contributing snapshots
  bool anchor_role_both = true;   // candidate relations from both incidence roles
  bool entity_norm = true;        // project trainable entity rows to the unit sphere
  int top_m = 10;                 // entities listed by predict/explain
  int workers = 1;

  void validate() const;
};

struct TrainReport {
  int snapshot = 0;
  bool no_op = false;
  int epochs_run = 0;
  double wall_seconds = 0.0;
  std::vector<double> kge_trace;   // per-epoch loss components
  std::vector<double> ra_trace;
  std::vector<double> mae_trace;
  std::vector<double> total_trace;
  std::vector<double> valid_mrr_trace;
};

// Rows of the dense parameter block being trained for one snapshot.
struct TrainableIndex {
  std::vector<EntityId> entities;     // sorted
  std::vector<RelationId> relations;  // sorted
  std::unordered_map<EntityId, int> entity_row;
  std::unordered_map<RelationId, int> rel_row;

  static TrainableIndex build(std::vector<EntityId> entities, std::vector<RelationId> relations);
  std::optional<int> row_of_entity(EntityId e) const;
  std::optional<int> row_of_relation(RelationId r) const;
};

struct Gradients {
  int dim = 0;
  std::vector<double> entity;  // entities x dim, row-major
  std::vector<double> rel;

  Gradients(const TrainableIndex& idx, int dim);
  void clear();
  std::span<double> entity_grad(int row) {
    return {entity.data() + static_cast<std::size_t>(row) * dim, static_cast<std::size_t>(dim)};
  }
  std::span<double> rel_grad(int row) {
    return {rel.data() + static_cast<std::size_t>(row) * dim, static_cast<std::size_t>(dim)};
  }
};

// ||h + r - t||_p, p in {1, 2}. Lower scores mean more plausible triples.
double transe_score(std::span<const float> h, std::span<const float> r,
                    std::span<const float> t, int p);

// Corrupts head or tail (fair coin), uniform over `candidates`, rejecting
// corruptions found in `known_positives` for up to 50 retries.
Triple sample_negative(const Triple& positive, std::span<const EntityId> candidates,
                       const TripleSet& known_positives, Rng& rng);

// Margin ranking loss over (positive, negative) pairs. Subgradients flow only
// to parameters present in `idx`; everything else is treated as frozen.
double kge_loss(std::span<const std::pair<Triple, Triple>> batch, const EmbeddingStore& store,
                int i, const TrainConfig& config, const TrainableIndex& idx,
                Gradients* grads, double scale = 1.0);

// Sum of squared drift of currently trained relations from their frozen
// previous-snapshot anchors.
double ra_loss(const EmbeddingStore& store,
               const std::map<RelationId, std::vector<float>>& anchors,
               const TrainableIndex& idx, Gradients* grads, double scale = 1.0);

// Mean translational context of an entity over its incident delta triples:
// (t - r) where it is the head, (h + r) where it is the tail. nullopt when
// the entity has no incident triple.
std::optional<std::vector<double>> mae_reconstruct_entity(EntityId entity,
                                                          std::span<const Triple> delta_triples,
                                                          const EmbeddingStore& store, int i);

// Mean (t - h) over the delta triples using the relation; nullopt if absent.
std::optional<std::vector<double>> mae_reconstruct_relation(RelationId relation,
                                                            std::span<const Triple> delta_triples,
                                                            const EmbeddingStore& store, int i);

// Reconstruction coherency over every trainable entity and relation; entities
// and relations without a reconstruction contribute nothing.
double mae_loss(const EmbeddingStore& store, int i, std::span<const Triple> delta_triples,
                const TrainableIndex& idx, Gradients* grads, double scale = 1.0);

// Trains snapshot i from delta-D_i only, then seals space i. Earlier spaces
// must already be sealed.
TrainReport train_snapshot(EmbeddingStore& store, const GrowingKG& kg, int i,
                           const TrainConfig& config);

}  // namespace mfckge
