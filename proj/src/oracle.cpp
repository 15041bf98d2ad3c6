#include "mfckge/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace mfckge::oracle {

namespace {

// Naive cosine over float vectors, double accumulation, clamped like any
// careful implementation to keep parallel vectors at exactly +/-1.
double naive_cosine(const std::vector<float>& a, const std::vector<float>& b) {
  double na = 0.0, nb = 0.0, d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    na += double(a[k]) * double(a[k]);
    nb += double(b[k]) * double(b[k]);
    d += double(a[k]) * double(b[k]);
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  double c = d / std::sqrt(na * nb);
  if (c > 1.0) c = 1.0;
  if (c < -1.0) c = -1.0;
  return c;
}

// Walk spaces i, i-1, ..., 1 until an entry for `entity` is found; follow a
// pointer one hop. Returns nullptr when the entity has no embedding yet.
const std::vector<float>* naive_lookup(const EmbeddingStore& store, EntityId entity, int i) {
  for (int x = std::min(i, store.space_count()); x >= 1; --x) {
    const auto& entries = store.space(x).entries;
    auto it = entries.find(entity);
    if (it == entries.end()) continue;
    if (it->second.is_explicit()) return &it->second.vec;
    const auto& target_entries = store.space(it->second.target).entries;
    auto tit = target_entries.find(entity);
    if (tit == target_entries.end() || !tit->second.is_explicit()) return nullptr;
    return &tit->second.vec;
  }
  return nullptr;
}

double naive_norm_score(const std::vector<float>& h, const std::vector<float>& r,
                        const std::vector<float>& t, int p) {
  double acc = 0.0;
  if (p == 1) {
    for (std::size_t k = 0; k < h.size(); ++k) {
      double d = double(h[k]) + double(r[k]) - double(t[k]);
      acc += std::fabs(d);
    }
    return acc;
  }
  for (std::size_t k = 0; k < h.size(); ++k) {
    double d = double(h[k]) + double(r[k]) - double(t[k]);
    acc += d * d;
  }
  return std::sqrt(acc);
}

}  // namespace

std::optional<long> brute_force_rank(const Query& query, EntityId gold,
                                     const TripleSet& filter_set, const GrowingKG& kg,
                                     const EmbeddingStore& store, const TrainConfig& config) {
  const int i = query.snapshot;
  const auto n_entities = static_cast<EntityId>(kg.entity_count(i));
  if (gold < 0 || gold >= n_entities)
    throw ProtocolError("brute_force_rank: gold entity " + std::to_string(gold) +
                        " is outside E_" + std::to_string(i));

  auto rel_it = store.relations.find(query.relation);
  if (rel_it == store.relations.end()) return std::nullopt;
  const std::vector<float>& rel_vec = rel_it->second.vec;

  // Importance weights, recomputed per snapshot.
  std::vector<double> beta;
  if (config.uniform_importance) {
    beta.assign(static_cast<std::size_t>(i), 1.0 / double(i));
  } else {
    std::vector<double> delta;
    for (int j = 1; j <= i; ++j) {
      std::set<RelationId> rels;
      for (const Triple& t : kg.delta(j).train_delta) {
        if (t.head == query.anchor) rels.insert(t.relation);
        if (config.anchor_role_both && t.tail == query.anchor) rels.insert(t.relation);
      }
      std::vector<double> sims;
      for (RelationId r : rels) {
        auto it = store.relations.find(r);
        if (it == store.relations.end())
          throw KeyError("brute_force_rank: relation " + std::to_string(r) +
                         " has no embedding");
        sims.push_back(naive_cosine(it->second.vec, rel_vec));
      }
      if (sims.empty()) {
        delta.push_back(0.0);
        continue;
      }
      std::sort(sims.begin(), sims.end(), std::greater<>());
      std::size_t take = std::min(sims.size(), static_cast<std::size_t>(config.topk));
      double sum = 0.0;
      for (std::size_t k = 0; k < take; ++k) sum += sims[k];
      delta.push_back(sum / double(take));
    }
    double max_d = delta[0];
    for (double d : delta) max_d = std::max(max_d, d);
    double z = 0.0;
    beta.resize(delta.size());
    for (std::size_t j = 0; j < delta.size(); ++j) {
      beta[j] = std::exp(delta[j] - max_d);
      z += beta[j];
    }
    for (double& b : beta) b /= z;
  }

  // Aggregate score of one candidate across all snapshots it resolves in.
  auto aggregate = [&](EntityId candidate) -> std::optional<double> {
    double weighted = 0.0, weight = 0.0;
    bool any = false;
    for (int j = 1; j <= i; ++j) {
      const std::vector<float>* anchor_vec = naive_lookup(store, query.anchor, j);
      if (!anchor_vec) continue;
      const std::vector<float>* cand_vec = naive_lookup(store, candidate, j);
      if (!cand_vec) continue;
      double psi;
      if (query.direction == Direction::Tail)
        psi = -naive_norm_score(*anchor_vec, rel_vec, *cand_vec, config.norm_p);
      else
        psi = -naive_norm_score(*cand_vec, rel_vec, *anchor_vec, config.norm_p);
      double b = beta[static_cast<std::size_t>(j - 1)];
      weighted += b * psi;
      weight += b;
      any = true;
    }
    if (!any) return std::nullopt;
    return config.renormalize ? weighted / weight : weighted;
  };

  auto gold_score = aggregate(gold);
  if (!gold_score) return std::nullopt;

  long greater = 0, ties = 0;
  for (EntityId e = 0; e < n_entities; ++e) {
    if (e == gold) continue;
    Triple filtered = query.direction == Direction::Tail
                          ? Triple{query.anchor, query.relation, e}
                          : Triple{e, query.relation, query.anchor};
    if (filter_set.find(filtered) != filter_set.end()) continue;
    auto s = aggregate(e);
    if (!s) continue;
    if (*s > *gold_score)
      ++greater;
    else if (*s == *gold_score)
      ++ties;
  }
  return 1 + greater + ties;
}

std::optional<std::pair<int, double>> exhaustive_most_similar(const EmbeddingStore& store,
                                                              EntityId entity, int i) {
  auto here = store.space(i).entries.find(entity);
  if (here == store.space(i).entries.end() || !here->second.is_explicit())
    throw InvariantViolation("exhaustive_most_similar: entity " + std::to_string(entity) +
                             " is not explicit at snapshot " + std::to_string(i));
  const std::vector<float>& current = here->second.vec;

  std::optional<std::pair<int, double>> best;
  for (int x = 1; x < i; ++x) {
    auto it = store.space(x).entries.find(entity);
    if (it == store.space(x).entries.end() || !it->second.is_explicit()) continue;
    double sim = naive_cosine(current, it->second.vec);
    if (!best || sim >= best->second) best = {x, sim};
  }
  return best;
}

double finite_diff_grad_check(const std::function<double(std::span<const double>)>& loss,
                              std::vector<double> params, std::span<const double> analytic_grad,
                              double epsilon) {
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    double saved = params[k];
    params[k] = saved + epsilon;
    double up = loss(params);
    params[k] = saved - epsilon;
    double down = loss(params);
    params[k] = saved;
    double numeric = (up - down) / (2.0 * epsilon);
    double denom = std::max(1e-8, std::max(std::fabs(numeric), std::fabs(analytic_grad[k])));
    worst = std::max(worst, std::fabs(numeric - analytic_grad[k]) / denom);
  }
  return worst;
}

}  // namespace mfckge::oracle
