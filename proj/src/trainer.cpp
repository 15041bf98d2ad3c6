#include "mfckge/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <utility>

namespace mfckge {

void TrainConfig::validate() const {
  if (dim < 1) throw ConfigError("dim must be >= 1");
  if (margin < 0.0) throw ConfigError("margin must be >= 0");
  if (norm_p != 1 && norm_p != 2) throw ConfigError("norm_p must be 1 or 2");
  if (alpha < 0.0 || eta < 0.0) throw ConfigError("alpha and eta must be >= 0");
  if (learning_rate <= 0.0) throw ConfigError("learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (negatives_per_positive < 1) throw ConfigError("negatives_per_positive must be >= 1");
  if (max_epochs < 0) throw ConfigError("max_epochs must be >= 0");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
  if (theta < 0.0 || theta > 1.0) throw ConfigError("theta must be in [0, 1]");
  if (topk < 1) throw ConfigError("topk must be >= 1");
  if (top_m < 1) throw ConfigError("top_m must be >= 1");
  if (workers < 1) throw ConfigError("workers must be >= 1");
}

TrainableIndex TrainableIndex::build(std::vector<EntityId> entities,
                                     std::vector<RelationId> relations) {
  TrainableIndex idx;
  std::sort(entities.begin(), entities.end());
  entities.erase(std::unique(entities.begin(), entities.end()), entities.end());
  std::sort(relations.begin(), relations.end());
  relations.erase(std::unique(relations.begin(), relations.end()), relations.end());
  idx.entities = std::move(entities);
  idx.relations = std::move(relations);
  for (std::size_t k = 0; k < idx.entities.size(); ++k)
    idx.entity_row[idx.entities[k]] = static_cast<int>(k);
  for (std::size_t k = 0; k < idx.relations.size(); ++k)
    idx.rel_row[idx.relations[k]] = static_cast<int>(k);
  return idx;
}

std::optional<int> TrainableIndex::row_of_entity(EntityId e) const {
  auto it = entity_row.find(e);
  if (it == entity_row.end()) return std::nullopt;
  return it->second;
}

std::optional<int> TrainableIndex::row_of_relation(RelationId r) const {
  auto it = rel_row.find(r);
  if (it == rel_row.end()) return std::nullopt;
  return it->second;
}

Gradients::Gradients(const TrainableIndex& idx, int d)
    : dim(d),
      entity(idx.entities.size() * static_cast<std::size_t>(d), 0.0),
      rel(idx.relations.size() * static_cast<std::size_t>(d), 0.0) {}

void Gradients::clear() {
  std::fill(entity.begin(), entity.end(), 0.0);
  std::fill(rel.begin(), rel.end(), 0.0);
}

double transe_score(std::span<const float> h, std::span<const float> r,
                    std::span<const float> t, int p) {
  if (h.size() != r.size() || h.size() != t.size())
    throw DimError("transe_score: mismatched embedding widths " + std::to_string(h.size()) +
                   "/" + std::to_string(r.size()) + "/" + std::to_string(t.size()));
  if (p != 1 && p != 2) throw ConfigError("transe_score: norm must be 1 or 2");
  double acc = 0.0;
  if (p == 1) {
    for (std::size_t k = 0; k < h.size(); ++k) {
      double d = static_cast<double>(h[k]) + static_cast<double>(r[k]) - static_cast<double>(t[k]);
      acc += std::fabs(d);
    }
    return acc;
  }
  for (std::size_t k = 0; k < h.size(); ++k) {
    double d = static_cast<double>(h[k]) + static_cast<double>(r[k]) - static_cast<double>(t[k]);
    acc += d * d;
  }
  return std::sqrt(acc);
}

Triple sample_negative(const Triple& positive, std::span<const EntityId> candidates,
                       const TripleSet& known_positives, Rng& rng) {
  if (candidates.size() < 2)
    throw TooFewEntities("negative sampling needs at least 2 candidate entities, have " +
                         std::to_string(candidates.size()));
  const bool corrupt_head = rng.flip();
  Triple neg = positive;
  for (int attempt = 0; attempt < 50; ++attempt) {
    EntityId c = candidates[rng.uniform_index(candidates.size())];
    if (corrupt_head)
      neg.head = c;
    else
      neg.tail = c;
    if (known_positives.find(neg) == known_positives.end()) return neg;
  }
  return neg;  // degenerate pool; accept the last corruption
}

namespace {

std::span<const float> entity_vec(const EmbeddingStore& store, EntityId e, int i) {
  auto v = store.resolve(e, i);
  if (!v)
    throw ResolutionError("entity " + std::to_string(e) + " has no embedding at snapshot " +
                          std::to_string(i));
  return *v;
}

// d = h + r - t in doubles.
void translation_residual(std::span<const float> h, std::span<const float> r,
                          std::span<const float> t, std::vector<double>& d) {
  d.resize(h.size());
  for (std::size_t k = 0; k < h.size(); ++k)
    d[k] = static_cast<double>(h[k]) + static_cast<double>(r[k]) - static_cast<double>(t[k]);
}

// Subgradient of ||d||_p with respect to d. sign(0) = 0 for p = 1; the zero
// vector maps to zero for p = 2.
void norm_subgrad(const std::vector<double>& d, int p, std::vector<double>& g) {
  g.resize(d.size());
  if (p == 1) {
    for (std::size_t k = 0; k < d.size(); ++k)
      g[k] = d[k] > 0.0 ? 1.0 : (d[k] < 0.0 ? -1.0 : 0.0);
    return;
  }
  double n = 0.0;
  for (double v : d) n += v * v;
  n = std::sqrt(n);
  if (n == 0.0) {
    std::fill(g.begin(), g.end(), 0.0);
    return;
  }
  for (std::size_t k = 0; k < d.size(); ++k) g[k] = d[k] / n;
}

void axpy_entity(Gradients& grads, const TrainableIndex& idx, EntityId e, double a,
                 const std::vector<double>& g) {
  auto row = idx.row_of_entity(e);
  if (!row) return;  // frozen parameter
  auto dst = grads.entity_grad(*row);
  for (std::size_t k = 0; k < g.size(); ++k) dst[k] += a * g[k];
}

void axpy_relation(Gradients& grads, const TrainableIndex& idx, RelationId r, double a,
                   const std::vector<double>& g) {
  auto row = idx.row_of_relation(r);
  if (!row) return;
  auto dst = grads.rel_grad(*row);
  for (std::size_t k = 0; k < g.size(); ++k) dst[k] += a * g[k];
}

}  // namespace

double kge_loss(std::span<const std::pair<Triple, Triple>> batch, const EmbeddingStore& store,
                int i, const TrainConfig& config, const TrainableIndex& idx,
                Gradients* grads, double scale) {
  double loss = 0.0;
  std::vector<double> d_pos, d_neg, g_pos, g_neg;
  for (const auto& [pos, neg] : batch) {
    auto hp = entity_vec(store, pos.head, i);
    auto tp = entity_vec(store, pos.tail, i);
    auto rp = store.relation_embedding(pos.relation);
    auto hn = entity_vec(store, neg.head, i);
    auto tn = entity_vec(store, neg.tail, i);
    auto rn = store.relation_embedding(neg.relation);
    double f_pos = transe_score(hp, rp, tp, config.norm_p);
    double f_neg = transe_score(hn, rn, tn, config.norm_p);
    double violation = f_pos - f_neg + config.margin;
    if (violation <= 0.0) continue;
    loss += violation;
    if (grads == nullptr) continue;
    translation_residual(hp, rp, tp, d_pos);
    translation_residual(hn, rn, tn, d_neg);
    norm_subgrad(d_pos, config.norm_p, g_pos);
    norm_subgrad(d_neg, config.norm_p, g_neg);
    axpy_entity(*grads, idx, pos.head, scale, g_pos);
    axpy_relation(*grads, idx, pos.relation, scale, g_pos);
    axpy_entity(*grads, idx, pos.tail, -scale, g_pos);
    axpy_entity(*grads, idx, neg.head, -scale, g_neg);
    axpy_relation(*grads, idx, neg.relation, -scale, g_neg);
    axpy_entity(*grads, idx, neg.tail, scale, g_neg);
  }
  return loss;
}

double ra_loss(const EmbeddingStore& store,
               const std::map<RelationId, std::vector<float>>& anchors,
               const TrainableIndex& idx, Gradients* grads, double scale) {
  double loss = 0.0;
  for (const auto& [r, anchor] : anchors) {
    auto cur = store.relation_embedding(r);
    if (cur.size() != anchor.size())
      throw DimError("relation " + std::to_string(r) + " anchor width mismatch");
    auto row = idx.row_of_relation(r);
    for (std::size_t k = 0; k < cur.size(); ++k) {
      double diff = static_cast<double>(cur[k]) - static_cast<double>(anchor[k]);
      loss += diff * diff;
      if (grads != nullptr && row) grads->rel_grad(*row)[k] += scale * 2.0 * diff;
    }
  }
  return loss;
}

std::optional<std::vector<double>> mae_reconstruct_entity(EntityId entity,
                                                          std::span<const Triple> delta_triples,
                                                          const EmbeddingStore& store, int i) {
  std::vector<double> sum;
  std::size_t n = 0;
  for (const Triple& t : delta_triples) {
    if (t.head == entity) {
      auto tv = entity_vec(store, t.tail, i);
      auto rv = store.relation_embedding(t.relation);
      if (sum.empty()) sum.assign(tv.size(), 0.0);
      for (std::size_t k = 0; k < tv.size(); ++k)
        sum[k] += static_cast<double>(tv[k]) - static_cast<double>(rv[k]);
      ++n;
    }
    if (t.tail == entity) {
      auto hv = entity_vec(store, t.head, i);
      auto rv = store.relation_embedding(t.relation);
      if (sum.empty()) sum.assign(hv.size(), 0.0);
      for (std::size_t k = 0; k < hv.size(); ++k)
        sum[k] += static_cast<double>(hv[k]) + static_cast<double>(rv[k]);
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  for (double& v : sum) v /= static_cast<double>(n);
  return sum;
}

std::optional<std::vector<double>> mae_reconstruct_relation(RelationId relation,
                                                            std::span<const Triple> delta_triples,
                                                            const EmbeddingStore& store, int i) {
  std::vector<double> sum;
  std::size_t n = 0;
  for (const Triple& t : delta_triples) {
    if (t.relation != relation) continue;
    auto hv = entity_vec(store, t.head, i);
    auto tv = entity_vec(store, t.tail, i);
    if (sum.empty()) sum.assign(hv.size(), 0.0);
    for (std::size_t k = 0; k < hv.size(); ++k)
      sum[k] += static_cast<double>(tv[k]) - static_cast<double>(hv[k]);
    ++n;
  }
  if (n == 0) return std::nullopt;
  for (double& v : sum) v /= static_cast<double>(n);
  return sum;
}

namespace {

// Incidence of trainable rows on the delta triples, built once per snapshot.
struct Incidence {
  // entity row -> (triple index, entity is the head)
  std::vector<std::vector<std::pair<int, bool>>> ent;
  std::vector<std::vector<int>> rel;  // relation row -> triple indices

  static Incidence build(const TrainableIndex& idx, std::span<const Triple> triples) {
    Incidence inc;
    inc.ent.resize(idx.entities.size());
    inc.rel.resize(idx.relations.size());
    for (int k = 0; k < static_cast<int>(triples.size()); ++k) {
      const Triple& t = triples[static_cast<std::size_t>(k)];
      if (auto row = idx.row_of_entity(t.head)) inc.ent[static_cast<std::size_t>(*row)].push_back({k, true});
      if (auto row = idx.row_of_entity(t.tail)) inc.ent[static_cast<std::size_t>(*row)].push_back({k, false});
      if (auto row = idx.row_of_relation(t.relation)) inc.rel[static_cast<std::size_t>(*row)].push_back(k);
    }
    return inc;
  }
};

double mae_loss_core(const EmbeddingStore& store, int i, std::span<const Triple> triples,
                     const TrainableIndex& idx, const Incidence& inc, Gradients* grads,
                     double scale) {
  const int dim = store.dim;
  double loss = 0.0;
  std::vector<double> recon(static_cast<std::size_t>(dim));
  std::vector<double> diff(static_cast<std::size_t>(dim));

  for (std::size_t row = 0; row < idx.entities.size(); ++row) {
    const auto& incident = inc.ent[row];
    if (incident.empty()) continue;
    EntityId e = idx.entities[row];
    auto center = entity_vec(store, e, i);
    std::fill(recon.begin(), recon.end(), 0.0);
    for (const auto& [k, is_head] : incident) {
      const Triple& t = triples[static_cast<std::size_t>(k)];
      auto rv = store.relation_embedding(t.relation);
      if (is_head) {
        auto tv = entity_vec(store, t.tail, i);
        for (int d = 0; d < dim; ++d)
          recon[static_cast<std::size_t>(d)] +=
              static_cast<double>(tv[static_cast<std::size_t>(d)]) - static_cast<double>(rv[static_cast<std::size_t>(d)]);
      } else {
        auto hv = entity_vec(store, t.head, i);
        for (int d = 0; d < dim; ++d)
          recon[static_cast<std::size_t>(d)] +=
              static_cast<double>(hv[static_cast<std::size_t>(d)]) + static_cast<double>(rv[static_cast<std::size_t>(d)]);
      }
    }
    const double inv_n = 1.0 / static_cast<double>(incident.size());
    for (int d = 0; d < dim; ++d) {
      recon[static_cast<std::size_t>(d)] *= inv_n;
      diff[static_cast<std::size_t>(d)] =
          static_cast<double>(center[static_cast<std::size_t>(d)]) - recon[static_cast<std::size_t>(d)];
      loss += diff[static_cast<std::size_t>(d)] * diff[static_cast<std::size_t>(d)];
    }
    if (grads == nullptr) continue;
    {
      auto dst = grads->entity_grad(static_cast<int>(row));
      for (int d = 0; d < dim; ++d) dst[static_cast<std::size_t>(d)] += scale * 2.0 * diff[static_cast<std::size_t>(d)];
    }
    const double a = scale * 2.0 * inv_n;
    for (const auto& [k, is_head] : incident) {
      const Triple& t = triples[static_cast<std::size_t>(k)];
      if (is_head) {
        // recon term (tail - relation): d recon / d tail = +1/n, d/d rel = -1/n
        if (auto trow = idx.row_of_entity(t.tail)) {
          auto dst = grads->entity_grad(*trow);
          for (int d = 0; d < dim; ++d) dst[static_cast<std::size_t>(d)] -= a * diff[static_cast<std::size_t>(d)];
        }
        if (auto rrow = idx.row_of_relation(t.relation)) {
          auto dst = grads->rel_grad(*rrow);
          for (int d = 0; d < dim; ++d) dst[static_cast<std::size_t>(d)] += a * diff[static_cast<std::size_t>(d)];
        }
      } else {
        // recon term (head + relation): both partials are +1/n
        if (auto hrow = idx.row_of_entity(t.head)) {
          auto dst = grads->entity_grad(*hrow);
          for (int d = 0; d < dim; ++d) dst[static_cast<std::size_t>(d)] -= a * diff[static_cast<std::size_t>(d)];
        }
        if (auto rrow = idx.row_of_relation(t.relation)) {
          auto dst = grads->rel_grad(*rrow);
          for (int d = 0; d < dim; ++d) dst[static_cast<std::size_t>(d)] -= a * diff[static_cast<std::size_t>(d)];
        }
      }
    }
  }

  for (std::size_t row = 0; row < idx.relations.size(); ++row) {
    const auto& incident = inc.rel[row];
    if (incident.empty()) continue;
    RelationId r = idx.relations[row];
    auto center = store.relation_embedding(r);
    std::fill(recon.begin(), recon.end(), 0.0);
    for (int k : incident) {
      const Triple& t = triples[static_cast<std::size_t>(k)];
      auto hv = entity_vec(store, t.head, i);
      auto tv = entity_vec(store, t.tail, i);
      for (int d = 0; d < dim; ++d)
        recon[static_cast<std::size_t>(d)] +=
            static_cast<double>(tv[static_cast<std::size_t>(d)]) - static_cast<double>(hv[static_cast<std::size_t>(d)]);
    }
    const double inv_n = 1.0 / static_cast<double>(incident.size());
    for (int d = 0; d < dim; ++d) {
      recon[static_cast<std::size_t>(d)] *= inv_n;
      diff[static_cast<std::size_t>(d)] =
          static_cast<double>(center[static_cast<std::size_t>(d)]) - recon[static_cast<std::size_t>(d)];
      loss += diff[static_cast<std::size_t>(d)] * diff[static_cast<std::size_t>(d)];
    }
    if (grads == nullptr) continue;
    {
      auto dst = grads->rel_grad(static_cast<int>(row));
      for (int d = 0; d < dim; ++d) dst[static_cast<std::size_t>(d)] += scale * 2.0 * diff[static_cast<std::size_t>(d)];
    }
    const double a = scale * 2.0 * inv_n;
    for (int k : incident) {
      const Triple& t = triples[static_cast<std::size_t>(k)];
      if (auto trow = idx.row_of_entity(t.tail)) {
        auto dst = grads->entity_grad(*trow);
        for (int d = 0; d < dim; ++d) dst[static_cast<std::size_t>(d)] -= a * diff[static_cast<std::size_t>(d)];
      }
      if (auto hrow = idx.row_of_entity(t.head)) {
        auto dst = grads->entity_grad(*hrow);
        for (int d = 0; d < dim; ++d) dst[static_cast<std::size_t>(d)] += a * diff[static_cast<std::size_t>(d)];
      }
    }
  }
  return loss;
}

struct Adam {
  double lr;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long t = 0;
  std::vector<double> m_ent, v_ent, m_rel, v_rel;

  Adam(double lr_, std::size_t n_ent, std::size_t n_rel)
      : lr(lr_), m_ent(n_ent, 0.0), v_ent(n_ent, 0.0), m_rel(n_rel, 0.0), v_rel(n_rel, 0.0) {}

  void step(const Gradients& grads, std::vector<float*>& ent_params,
            std::vector<float*>& rel_params, int dim) {
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    auto update = [&](const std::vector<double>& g, std::vector<double>& m, std::vector<double>& v,
                      std::vector<float*>& params) {
      for (std::size_t row = 0; row < params.size(); ++row) {
        float* p = params[row];
        const double* gr = g.data() + row * static_cast<std::size_t>(dim);
        double* mr = m.data() + row * static_cast<std::size_t>(dim);
        double* vr = v.data() + row * static_cast<std::size_t>(dim);
        for (int d = 0; d < dim; ++d) {
          mr[d] = beta1 * mr[d] + (1.0 - beta1) * gr[d];
          vr[d] = beta2 * vr[d] + (1.0 - beta2) * gr[d] * gr[d];
          double mhat = mr[d] / c1;
          double vhat = vr[d] / c2;
          p[d] = static_cast<float>(static_cast<double>(p[d]) - lr * mhat / (std::sqrt(vhat) + eps));
        }
      }
    };
    update(grads.entity, m_ent, v_ent, ent_params);
    update(grads.rel, m_rel, v_rel, rel_params);
  }
};

// Unfiltered MRR of V_i against the snapshot's trainable entities only;
// cheap progress signal for early stopping, not the reported metric.
std::optional<double> raw_validation_mrr(const EmbeddingStore& store, const GrowingKG& kg,
                                         int i, const TrainableIndex& idx, int p) {
  const auto& valid = kg.valid(i);
  if (valid.empty()) return std::nullopt;
  std::vector<std::span<const float>> cand_vecs;
  cand_vecs.reserve(idx.entities.size());
  for (EntityId e : idx.entities) {
    auto v = store.resolve(e, i);
    if (!v) return std::nullopt;  // space under construction; should not happen
    cand_vecs.push_back(*v);
  }
  double rr = 0.0;
  long n = 0;
  for (const Triple& q : valid) {
    auto hv = store.resolve(q.head, i);
    auto tv = store.resolve(q.tail, i);
    if (!hv || !tv) continue;
    if (store.relations.find(q.relation) == store.relations.end()) continue;
    auto rv = store.relation_embedding(q.relation);
    // tail direction
    {
      double f_gold = transe_score(*hv, rv, *tv, p);
      long worse = 0;
      for (std::size_t c = 0; c < cand_vecs.size(); ++c) {
        if (idx.entities[c] == q.tail) continue;
        if (transe_score(*hv, rv, cand_vecs[c], p) <= f_gold) ++worse;
      }
      rr += 1.0 / static_cast<double>(1 + worse);
      ++n;
    }
    // head direction
    {
      double f_gold = transe_score(*hv, rv, *tv, p);
      long worse = 0;
      for (std::size_t c = 0; c < cand_vecs.size(); ++c) {
        if (idx.entities[c] == q.head) continue;
        if (transe_score(cand_vecs[c], rv, *tv, p) <= f_gold) ++worse;
      }
      rr += 1.0 / static_cast<double>(1 + worse);
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return rr / static_cast<double>(n);
}

std::uint64_t snapshot_seed(std::uint64_t seed, int i) {
  std::uint64_t h = fnv1a(&seed, sizeof(seed));
  return fnv1a(&i, sizeof(i), h);
}

}  // namespace

double mae_loss(const EmbeddingStore& store, int i, std::span<const Triple> delta_triples,
                const TrainableIndex& idx, Gradients* grads, double scale) {
  Incidence inc = Incidence::build(idx, delta_triples);
  return mae_loss_core(store, i, delta_triples, idx, inc, grads, scale);
}

TrainReport train_snapshot(EmbeddingStore& store, const GrowingKG& kg, int i,
                           const TrainConfig& config) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  if (store.dim != config.dim)
    throw DimError("store dim " + std::to_string(store.dim) + " != config dim " +
                   std::to_string(config.dim));
  if (i < 1 || i > kg.snapshot_count())
    throw IndexError("snapshot " + std::to_string(i) + " out of range");
  if (store.sealed_through != i - 1 || store.space_count() != i - 1)
    throw ProtocolError("snapshot " + std::to_string(i) + " requires spaces 1.." +
                        std::to_string(i - 1) + " sealed, have sealed_through=" +
                        std::to_string(store.sealed_through) + " spaces=" +
                        std::to_string(store.space_count()));

  TrainReport report;
  report.snapshot = i;

  const SnapshotDelta& delta = kg.delta(i);
  for (EntityId e : delta.new_entities) store.note_first_appearance(e, i);

  const std::vector<Triple> triples = delta.train_delta;
  Rng rng(snapshot_seed(config.seed, i));

  // Trainable scope: entities and relations occurring in delta-D_i.
  std::set<EntityId> ent_set;
  std::set<RelationId> rel_set;
  for (const Triple& t : triples) {
    ent_set.insert(t.head);
    ent_set.insert(t.tail);
    rel_set.insert(t.relation);
  }
  std::vector<EntityId> trainable(ent_set.begin(), ent_set.end());
  std::vector<EntityId> inherited;
  if (i > 1)
    for (EntityId e : trainable)
      if (store.resolve(e, i - 1)) inherited.push_back(e);
  SnapshotSpace& space = allocate_space(store, i, trainable, inherited, rng);

  // Returning relations keep their vector but are re-trained against a frozen
  // copy; unseen relations start uniform like new entities.
  std::map<RelationId, std::vector<float>> anchors;
  const double b = 6.0 / std::sqrt(static_cast<double>(config.dim));
  for (RelationId r : rel_set) {
    auto it = store.relations.find(r);
    if (it != store.relations.end()) {
      anchors[r] = it->second.vec;
      it->second.last_updated = i;
    } else {
      RelationEntry entry;
      entry.vec.resize(static_cast<std::size_t>(config.dim));
      double n = 0.0;
      for (auto& v : entry.vec) {
        v = static_cast<float>(rng.uniform(-b, b));
        n += double(v) * double(v);
      }
      // Unit-norm init keeps relation offsets on the scale of the entity
      // sphere; without it no tail can reach h + r and ranking degenerates.
      if (n > 0.0) {
        n = std::sqrt(n);
        for (auto& v : entry.vec) v = static_cast<float>(double(v) / n);
      }
      entry.last_updated = i;
      store.relations.emplace(r, std::move(entry));
    }
  }

  auto seal = [&]() {
    space.trained_explicit_count = space.explicit_count();
    store.sealed_through = i;
  };

  if (triples.empty()) {
    report.no_op = true;
    seal();
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
  }

  TrainableIndex idx = TrainableIndex::build(trainable, {rel_set.begin(), rel_set.end()});
  Incidence inc = Incidence::build(idx, triples);
  TripleSet known_positives(triples.begin(), triples.end());

  std::vector<float*> ent_params(idx.entities.size());
  std::vector<float*> rel_params(idx.relations.size());
  for (std::size_t k = 0; k < idx.entities.size(); ++k)
    ent_params[k] = space.entries.at(idx.entities[k]).vec.data();
  for (std::size_t k = 0; k < idx.relations.size(); ++k)
    rel_params[k] = store.relations.at(idx.relations[k]).vec.data();

  // Norm discipline on trainable entity rows: project back into the L2 unit
  // ball after init and after every optimizer step. A ball (not sphere)
  // projection keeps radial structure available while preventing the norm
  // blowup that makes margin losses vacuous. Relations are free.
  auto project_entities = [&]() {
    if (!config.entity_norm) return;
    for (float* row : ent_params) {
      double n = 0.0;
      for (int d = 0; d < config.dim; ++d) n += double(row[d]) * double(row[d]);
      if (n <= 1.0) continue;
      n = std::sqrt(n);
      for (int d = 0; d < config.dim; ++d) row[d] = static_cast<float>(double(row[d]) / n);
    }
  };
  project_entities();

  Gradients grads(idx, config.dim);
  Adam adam(config.learning_rate, grads.entity.size(), grads.rel.size());

  double best_mrr = -1.0;
  int bad_checks = 0;
  const double n_total = static_cast<double>(triples.size());
  std::vector<std::pair<Triple, Triple>> pairs;
  std::vector<std::size_t> order(triples.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    shuffle_inplace(order, rng);
    double kge_sum = 0.0, ra_sum = 0.0, mae_sum = 0.0;
    for (std::size_t b0 = 0; b0 < triples.size(); b0 += static_cast<std::size_t>(config.batch_size)) {
      std::size_t b1 = std::min(triples.size(), b0 + static_cast<std::size_t>(config.batch_size));
      pairs.clear();
      for (std::size_t k = b0; k < b1; ++k) {
        const Triple& pos = triples[order[k]];
        for (int neg = 0; neg < config.negatives_per_positive; ++neg)
          pairs.emplace_back(pos, sample_negative(pos, idx.entities, known_positives, rng));
      }
      grads.clear();
      double kge = kge_loss(pairs, store, i, config, idx, &grads, 1.0);
      const double w = static_cast<double>(b1 - b0) / n_total;
      double ra = anchors.empty() ? 0.0 : ra_loss(store, anchors, idx, &grads, w * config.alpha);
      double mae = mae_loss_core(store, i, triples, idx, inc, &grads, w * config.eta);
      adam.step(grads, ent_params, rel_params, config.dim);
      project_entities();
      kge_sum += kge;
      ra_sum += w * ra;
      mae_sum += w * mae;
    }
    report.kge_trace.push_back(kge_sum);
    report.ra_trace.push_back(ra_sum);
    report.mae_trace.push_back(mae_sum);
    report.total_trace.push_back(kge_sum + config.alpha * ra_sum + config.eta * mae_sum);
    report.epochs_run = epoch;

    if (epoch % config.eval_every == 0) {
      auto mrr = raw_validation_mrr(store, kg, i, idx, config.norm_p);
      if (mrr) {
        report.valid_mrr_trace.push_back(*mrr);
        if (*mrr > best_mrr + 1e-12) {
          best_mrr = *mrr;
          bad_checks = 0;
        } else if (++bad_checks >= config.patience) {
          break;
        }
      }
    }
  }

  seal();
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace mfckge
