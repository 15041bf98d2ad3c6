#pragma once

// Reference implementations used only by tests. Everything in here recomputes
// results with plain loops and deliberately shares no logic with the engine:
// it re-walks pointer chains, re-derives importance weights, and re-scores
// candidates from scratch so the two code paths can check each other.

#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "mfckge/inference.hpp"

namespace mfckge::oracle {

// Filtered rank of `gold` for `query`, recomputed from first principles.
// Honors the same config switches as the engine (uniform_importance,
// renormalize, anchor_role_both, topk, norm_p) and the same pessimistic tie
// rule (rank = 1 + #better + #tied). Returns nullopt when the query cannot be
// scored (unembedded relation, unresolvable anchor, or unresolvable gold).
std::optional<long> brute_force_rank(const Query& query, EntityId gold,
                                     const TripleSet& filter_set, const GrowingKG& kg,
                                     const EmbeddingStore& store, const TrainConfig& config);

// Most similar prior explicit embedding of `entity` before snapshot i, found
// by a plain double loop. Ties resolve toward the larger snapshot index.
// Returns nullopt when no prior explicit embedding exists.
std::optional<std::pair<int, double>> exhaustive_most_similar(const EmbeddingStore& store,
                                                              EntityId entity, int i);

// Central-difference gradient check. Perturbs each coordinate of `params` by
// +/- epsilon, evaluates `loss`, and compares the numeric derivative with
// `analytic_grad`. Returns the maximum relative error over all coordinates,
// with the denominator floored at 1e-8.
double finite_diff_grad_check(const std::function<double(std::span<const double>)>& loss,
                              std::vector<double> params, std::span<const double> analytic_grad,
                              double epsilon = 1e-4);

}  // namespace mfckge::oracle
