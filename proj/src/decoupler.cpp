#include "mfckge/decoupler.hpp"

#include <algorithm>
#include <cstdio>

namespace mfckge {

namespace {

// Best prior explicit match for a concrete vector; scans ascending so that a
// tie lands on the larger (more recent) snapshot.
std::optional<std::pair<int, double>> best_prior(const EmbeddingStore& store, EntityId e,
                                                 int before, std::span<const float> vec) {
  std::optional<std::pair<int, double>> best;
  for (int x = 1; x < before; ++x) {
    const auto& entries = store.space(x).entries;
    auto it = entries.find(e);
    if (it == entries.end() || !it->second.is_explicit()) continue;
    double sim = cosine_similarity(vec, it->second.vec);
    if (!best || sim >= best->second) best = std::make_pair(x, sim);
  }
  return best;
}

// Most recent space before `before` where the entity is explicit; 0 if none.
int nearest_explicit(const EmbeddingStore& store, EntityId e, int before) {
  for (int x = before - 1; x >= 1; --x) {
    const auto& entries = store.space(x).entries;
    auto it = entries.find(e);
    if (it != entries.end() && it->second.is_explicit()) return x;
  }
  return 0;
}

bool fully_reversible(const EmbeddingStore& store) {
  for (int j = 1; j <= store.space_count(); ++j) {
    const auto& sp = store.space(j);
    if (sp.explicit_count() + sp.dropped_raw.size() != sp.trained_explicit_count) return false;
  }
  return true;
}

}  // namespace

std::optional<std::pair<int, double>> most_similar_prior(const EmbeddingStore& store,
                                                         EntityId entity, int i) {
  if (i < 1 || i > store.space_count())
    throw IndexError("most_similar_prior: space " + std::to_string(i) + " out of range");
  const auto& entries = store.space(i).entries;
  auto it = entries.find(entity);
  if (it == entries.end() || !it->second.is_explicit())
    throw InvariantViolation("most_similar_prior: entity " + std::to_string(entity) +
                             " has no explicit entry at space " + std::to_string(i));
  return best_prior(store, entity, i, it->second.vec);
}

DecouplingStats apply_semantic_decoupling(EmbeddingStore& store, int i, double theta) {
  if (i < 1 || i > store.space_count())
    throw IndexError("apply_semantic_decoupling: space " + std::to_string(i) + " out of range");
  if (store.sealed_through < i)
    throw ProtocolError("apply_semantic_decoupling: space " + std::to_string(i) +
                        " is not sealed");
  SnapshotSpace& sp = store.space(i);
  DecouplingStats stats;
  stats.snapshot = i;
  for (auto& [e, entry] : sp.entries) {
    if (!entry.is_explicit()) continue;
    auto best = best_prior(store, e, i, entry.vec);
    if (!best) continue;
    ++stats.examined;
    if (best->second >= theta) {
      ++stats.dropped;
      if (store.keep_dropped) sp.dropped_raw[e] = std::move(entry.vec);
      entry = EntityEntry::pointer(best->first);
    }
  }
  stats.retained = stats.examined - stats.dropped;
  stats.compression_ratio = cumulative_compression_ratio(store, i);
  store.decoupled_theta = std::min(store.decoupled_theta, theta);
  return stats;
}

std::size_t assign_static_pointers(EmbeddingStore& store, int i,
                                   const std::vector<EntityId>& absent_entities) {
  if (i < 1 || i > store.space_count())
    throw IndexError("assign_static_pointers: space " + std::to_string(i) + " out of range");
  if (store.sealed_through < i)
    throw ProtocolError("assign_static_pointers: space " + std::to_string(i) + " is not sealed");
  SnapshotSpace& sp = store.space(i);
  std::size_t count = 0;
  for (EntityId e : absent_entities) {
    if (sp.entries.find(e) != sp.entries.end())
      throw InvariantViolation("assign_static_pointers: entity " + std::to_string(e) +
                               " already has an entry at space " + std::to_string(i));
    int x = nearest_explicit(store, e, i);
    if (x == 0)
      throw CorruptStore("assign_static_pointers: entity " + std::to_string(e) +
                         " has no prior explicit embedding");
    sp.entries.emplace(e, EntityEntry::pointer(x));
    ++count;
  }
  return count;
}

std::vector<EntityId> static_pointer_candidates(const EmbeddingStore& store,
                                                const GrowingKG& kg, int i) {
  std::vector<EntityId> out;
  const auto& entries = store.space(i).entries;
  for (EntityId e = 0; e < static_cast<EntityId>(kg.entity_count(i)); ++e) {
    int fa = store.first_appearance_of(e);
    if (fa < 1 || fa >= i) continue;
    if (entries.find(e) != entries.end()) continue;
    // Entities that only ever occurred in valid/test splits have a first
    // appearance but no embedding; nothing to point at.
    if (i > 1 && !store.resolve(e, i - 1)) continue;
    out.push_back(e);
  }
  return out;
}

double cumulative_compression_ratio(const EmbeddingStore& store, int upto) {
  std::size_t post = 0, pre = 0;
  for (int j = 1; j <= upto && j <= store.space_count(); ++j) {
    post += store.space(j).explicit_count();
    pre += store.space(j).trained_explicit_count;
  }
  if (pre == 0) return 1.0;
  return static_cast<double>(post) / static_cast<double>(pre);
}

DecouplingStats consolidate_snapshot(EmbeddingStore& store, const GrowingKG& kg, int i,
                                     double theta, bool no_decoupling) {
  DecouplingStats stats;
  stats.snapshot = i;
  if (!no_decoupling) stats = apply_semantic_decoupling(store, i, theta);
  stats.static_pointers = assign_static_pointers(store, i, static_pointer_candidates(store, kg, i));
  stats.compression_ratio = cumulative_compression_ratio(store, i);
  return stats;
}

std::vector<DecouplingStats> recompress(EmbeddingStore& store, double theta_new) {
  if (!(theta_new > 0.0 && theta_new <= 1.0))
    throw ConfigError("recompress: theta must lie in (0, 1]");
  if (store.space_count() == 0 || store.sealed_through != store.space_count())
    throw ProtocolError("recompress: store is not fully trained");

  std::vector<DecouplingStats> all;
  all.reserve(static_cast<std::size_t>(store.space_count()));

  if (fully_reversible(store)) {
    // Every originally trained vector is still on hand (explicit or stashed
    // raw), so replay the consolidation pipeline from scratch at theta_new.
    for (int j = 1; j <= store.space_count(); ++j) {
      SnapshotSpace& sp = store.space(j);
      std::map<EntityId, std::vector<float>> trained;
      for (auto& [e, entry] : sp.entries)
        if (entry.is_explicit()) trained.emplace(e, std::move(entry.vec));
      for (auto& [e, raw] : sp.dropped_raw) trained.emplace(e, std::move(raw));

      std::map<EntityId, EntityEntry> rebuilt;
      std::map<EntityId, std::vector<float>> stash;
      DecouplingStats stats;
      stats.snapshot = j;
      for (auto& [e, vec] : trained) {
        auto best = best_prior(store, e, j, vec);
        if (best) ++stats.examined;
        if (best && best->second >= theta_new) {
          ++stats.dropped;
          if (store.keep_dropped) stash.emplace(e, std::move(vec));
          rebuilt.emplace(e, EntityEntry::pointer(best->first));
        } else {
          rebuilt.emplace(e, EntityEntry::explicit_vec(std::move(vec)));
        }
      }
      for (const auto& [e, entry] : sp.entries) {
        if (rebuilt.find(e) != rebuilt.end()) continue;  // trained above
        int x = nearest_explicit(store, e, j);
        if (x == 0)
          throw CorruptStore("recompress: entity " + std::to_string(e) +
                             " lost every explicit embedding before space " + std::to_string(j));
        rebuilt.emplace(e, EntityEntry::pointer(x));
        ++stats.static_pointers;
      }
      sp.entries = std::move(rebuilt);
      sp.dropped_raw = std::move(stash);
      stats.retained = stats.examined - stats.dropped;
      stats.compression_ratio = cumulative_compression_ratio(store, j);
      all.push_back(stats);
    }
    store.decoupled_theta = theta_new;
    return all;
  }

  // Raw vectors of earlier drops are gone: old pointers are frozen decisions
  // and the threshold can only tighten.
  if (theta_new > store.decoupled_theta)
    throw IrreversibleError("recompress: dropped vectors were discarded; theta can only be "
                            "lowered below " + std::to_string(store.decoupled_theta));
  for (int j = 1; j <= store.space_count(); ++j) {
    SnapshotSpace& sp = store.space(j);
    DecouplingStats stats;
    stats.snapshot = j;
    for (auto& [e, entry] : sp.entries) {
      if (!entry.is_explicit()) continue;
      auto best = best_prior(store, e, j, entry.vec);
      if (!best) continue;
      ++stats.examined;
      if (best->second >= theta_new) {
        ++stats.dropped;
        if (store.keep_dropped) sp.dropped_raw[e] = std::move(entry.vec);
        entry = EntityEntry::pointer(best->first);
      }
    }
    // Pointers whose target just got consolidated away must follow it.
    for (auto& [e, entry] : sp.entries) {
      if (!entry.is_pointer()) continue;
      int x = entry.target;
      const auto& target_entries = store.space(x).entries;
      auto it = target_entries.find(e);
      if (it == target_entries.end())
        throw CorruptStore("recompress: dangling pointer for entity " + std::to_string(e));
      if (it->second.is_pointer()) entry.target = it->second.target;
    }
    stats.retained = stats.examined - stats.dropped;
    stats.compression_ratio = cumulative_compression_ratio(store, j);
    all.push_back(stats);
  }
  store.decoupled_theta = std::min(store.decoupled_theta, theta_new);
  return all;
}

std::string decoupling_stats_csv(std::span<const DecouplingStats> stats) {
  std::string out = "snapshot,examined,dropped,retained,static_pointers,compression_ratio\n";
  char buf[64];
  for (const auto& s : stats) {
    out += std::to_string(s.snapshot) + "," + std::to_string(s.examined) + "," +
           std::to_string(s.dropped) + "," + std::to_string(s.retained) + "," +
           std::to_string(s.static_pointers) + ",";
    std::snprintf(buf, sizeof(buf), "%.17g", s.compression_ratio);
    out += buf;
    out += "\n";
  }
  return out;
}

}  // namespace mfckge
