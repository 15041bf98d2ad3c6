#include "mfckge/inference.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace mfckge {

std::vector<RelationId> candidate_relations(const GrowingKG& kg, EntityId anchor, int j,
                                            bool both_roles) {
  std::set<RelationId> rels;
  for (const Triple& t : kg.delta(j).train_delta) {
    if (t.head == anchor) rels.insert(t.relation);
    if (both_roles && t.tail == anchor) rels.insert(t.relation);
  }
  return {rels.begin(), rels.end()};
}

std::vector<double> relation_similarity_set(std::span<const RelationId> anchor_relations,
                                            RelationId query_relation,
                                            const EmbeddingStore& store) {
  std::vector<double> sims;
  sims.reserve(anchor_relations.size());
  auto rq = store.relation_embedding(query_relation);
  for (RelationId r : anchor_relations)
    sims.push_back(cosine_similarity(store.relation_embedding(r), rq));
  return sims;
}

double topk_average(std::span<const double> similarities, int k) {
  if (k < 1) throw ConfigError("topk_average: k must be >= 1");
  if (similarities.empty()) return 0.0;
  std::vector<double> sorted(similarities.begin(), similarities.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  std::size_t take = std::min(sorted.size(), static_cast<std::size_t>(k));
  double sum = 0.0;
  for (std::size_t i = 0; i < take; ++i) sum += sorted[i];
  return sum / static_cast<double>(take);
}

std::vector<double> softmax(std::span<const double> values) {
  std::vector<double> out(values.size());
  if (values.empty()) return out;
  double max_v = values[0];
  for (double v : values) max_v = std::max(max_v, v);
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = std::exp(values[i] - max_v);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

ImportanceProfile snapshot_importance(const Query& query, int k, const GrowingKG& kg,
                                      const EmbeddingStore& store, bool both_roles) {
  ImportanceProfile profile;
  profile.delta.reserve(static_cast<std::size_t>(query.snapshot));
  for (int j = 1; j <= query.snapshot; ++j) {
    auto rels = candidate_relations(kg, query.anchor, j, both_roles);
    auto sims = relation_similarity_set(rels, query.relation, store);
    profile.delta.push_back(topk_average(sims, k));
  }
  profile.beta = softmax(profile.delta);
  return profile;
}

std::optional<double> snapshot_score(const Query& query, EntityId candidate, int j,
                                     const EmbeddingStore& store, int p) {
  auto anchor = store.resolve(query.anchor, j);
  if (!anchor) return std::nullopt;
  auto cand = store.resolve(candidate, j);
  if (!cand) return std::nullopt;
  auto rel = store.relation_embedding(query.relation);
  if (query.direction == Direction::Tail)
    return -transe_score(*anchor, rel, *cand, p);
  return -transe_score(*cand, rel, *anchor, p);
}

InferenceContext::InferenceContext(const GrowingKG& kg, const EmbeddingStore& store,
                                   const TrainConfig& config)
    : kg_(kg), store_(store), config_(config) {
  incident_.resize(static_cast<std::size_t>(kg.snapshot_count()));
  for (int j = 1; j <= kg.snapshot_count(); ++j) {
    auto& map = incident_[static_cast<std::size_t>(j - 1)];
    for (const Triple& t : kg.delta(j).train_delta) {
      map[t.head].push_back(t.relation);
      if (config_.anchor_role_both) map[t.tail].push_back(t.relation);
    }
    for (auto& [e, rels] : map) {
      std::sort(rels.begin(), rels.end());
      rels.erase(std::unique(rels.begin(), rels.end()), rels.end());
    }
  }
}

std::vector<RelationId> InferenceContext::cached_candidates(EntityId anchor, int j) const {
  const auto& map = incident_[static_cast<std::size_t>(j - 1)];
  auto it = map.find(anchor);
  if (it == map.end()) return {};
  return it->second;
}

const ImportanceProfile& InferenceContext::importance(EntityId anchor, RelationId relation,
                                                      int i) const {
  ProfileKey key{anchor, relation, i};
  auto it = profile_cache_.find(key);
  if (it != profile_cache_.end()) return it->second;

  ImportanceProfile profile;
  if (config_.uniform_importance) {
    profile.delta.assign(static_cast<std::size_t>(i), 0.0);
    profile.beta.assign(static_cast<std::size_t>(i), 1.0 / static_cast<double>(i));
  } else {
    profile.delta.reserve(static_cast<std::size_t>(i));
    for (int j = 1; j <= i; ++j) {
      auto rels = cached_candidates(anchor, j);
      auto sims = relation_similarity_set(rels, relation, store_);
      profile.delta.push_back(topk_average(sims, config_.topk));
    }
    profile.beta = softmax(profile.delta);
  }
  return profile_cache_.emplace(key, std::move(profile)).first->second;
}

std::optional<double> InferenceContext::aggregate_score(const Query& query, EntityId candidate,
                                                        const ImportanceProfile& profile) const {
  double weighted = 0.0;
  double weight = 0.0;
  bool any = false;
  for (int j = 1; j <= query.snapshot; ++j) {
    auto psi = snapshot_score(query, candidate, j, store_, config_.norm_p);
    if (!psi) continue;
    double b = profile.beta[static_cast<std::size_t>(j - 1)];
    weighted += b * *psi;
    weight += b;
    any = true;
  }
  if (!any) return std::nullopt;
  if (!config_.renormalize) return weighted;
  return weighted / weight;
}

std::optional<RankOutcome> InferenceContext::rank_query(const Query& query, EntityId gold,
                                                        const TripleSet& filter_set,
                                                        int top_m) const {
  const auto n_entities = static_cast<EntityId>(kg_.entity_count(query.snapshot));
  if (gold < 0 || gold >= n_entities)
    throw ProtocolError("rank_query: gold entity " + std::to_string(gold) +
                        " is outside E_" + std::to_string(query.snapshot));
  if (store_.relations.find(query.relation) == store_.relations.end()) return std::nullopt;

  const ImportanceProfile& profile = importance(query.anchor, query.relation, query.snapshot);

  auto is_filtered = [&](EntityId e) {
    Triple t;
    if (query.direction == Direction::Tail)
      t = Triple{query.anchor, query.relation, e};
    else
      t = Triple{e, query.relation, query.anchor};
    return filter_set.find(t) != filter_set.end();
  };

  auto gold_score = aggregate_score(query, gold, profile);
  if (!gold_score) return std::nullopt;

  RankOutcome outcome;
  long greater = 0, ties = 0;
  std::vector<std::pair<EntityId, double>> scored;
  scored.reserve(static_cast<std::size_t>(n_entities));
  for (EntityId e = 0; e < n_entities; ++e) {
    if (e != gold && is_filtered(e)) continue;
    double psi;
    if (e == gold) {
      psi = *gold_score;
    } else {
      auto s = aggregate_score(query, e, profile);
      if (!s) continue;
      psi = *s;
      if (psi > *gold_score)
        ++greater;
      else if (psi == *gold_score)
        ++ties;
    }
    scored.emplace_back(e, psi);
  }
  outcome.rank = 1 + greater + ties;
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (static_cast<long>(scored.size()) > top_m)
    scored.resize(static_cast<std::size_t>(top_m));
  outcome.top = std::move(scored);
  return outcome;
}

nlohmann::json InferenceContext::explain_query(const Query& query, int m) const {
  const auto n_entities = static_cast<EntityId>(kg_.entity_count(query.snapshot));
  const ImportanceProfile& profile = importance(query.anchor, query.relation, query.snapshot);

  nlohmann::json record;
  record["direction"] = query.direction == Direction::Tail ? "tail" : "head";
  record["anchor"] = query.anchor;
  record["anchor_label"] = kg_.entity_label(query.anchor);
  record["relation"] = query.relation;
  record["relation_label"] = kg_.relation_label(query.relation);
  record["snapshot"] = query.snapshot;
  record["delta"] = profile.delta;
  record["beta"] = profile.beta;

  auto top_list = [&](auto&& score_of) {
    std::vector<std::pair<EntityId, double>> scored;
    for (EntityId e = 0; e < n_entities; ++e) {
      auto s = score_of(e);
      if (s) scored.emplace_back(e, *s);
    }
    std::stable_sort(scored.begin(), scored.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    if (static_cast<long>(scored.size()) > m) scored.resize(static_cast<std::size_t>(m));
    nlohmann::json list = nlohmann::json::array();
    for (const auto& [e, s] : scored) {
      list.push_back({{"entity", e}, {"label", kg_.entity_label(e)}, {"score", s}});
    }
    return list;
  };

  record["per_snapshot"] = nlohmann::json::array();
  for (int j = 1; j <= query.snapshot; ++j) {
    nlohmann::json snap;
    snap["snapshot"] = j;
    snap["beta"] = profile.beta[static_cast<std::size_t>(j - 1)];
    snap["top"] = top_list([&](EntityId e) { return snapshot_score(query, e, j, store_, config_.norm_p); });
    record["per_snapshot"].push_back(std::move(snap));
  }
  record["top"] = top_list([&](EntityId e) { return aggregate_score(query, e, profile); });
  return record;
}

}  // namespace mfckge
