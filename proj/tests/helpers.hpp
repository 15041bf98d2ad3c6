#pragma once

// Shared builders for the test suites: temp directories, datasets written to
// disk, tiny hand-assembled stores, and randomized growing-KG + store
// instances for equivalence and property tests.

#include <unistd.h>

#include <array>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mfckge/kg.hpp"
#include "mfckge/store.hpp"
#include "mfckge/trainer.hpp"

namespace testutil {

using namespace mfckge;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Temp directories

inline fs::path fresh_temp_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  fs::path p = fs::temp_directory_path() /
               ("mfckge_test_" + tag + "_p" + std::to_string(::getpid()) + "_" +
                std::to_string(counter.fetch_add(1)));
  fs::create_directories(p);
  return p;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) : path(fresh_temp_dir(tag)) {}
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

// ---------------------------------------------------------------------------
// Dataset files

using LabelTriple = std::array<std::string, 3>;

inline void write_lines(const fs::path& file, const std::vector<std::string>& lines) {
  fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  for (const auto& l : lines) out << l << "\n";
}

inline void write_split(const fs::path& file, const std::vector<LabelTriple>& triples) {
  std::vector<std::string> lines;
  lines.reserve(triples.size());
  for (const auto& t : triples) lines.push_back(t[0] + "\t" + t[1] + "\t" + t[2]);
  write_lines(file, lines);
}

inline void write_snapshot(const fs::path& root, int zero_based_index,
                           const std::vector<LabelTriple>& train,
                           const std::vector<LabelTriple>& valid,
                           const std::vector<LabelTriple>& test) {
  fs::path dir = root / std::to_string(zero_based_index);
  write_split(dir / "train.txt", train);
  write_split(dir / "valid.txt", valid);
  write_split(dir / "test.txt", test);
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    std::vector<std::string> row;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) row.push_back(cell);
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// In-memory KGs

inline Snapshot snap(int index, std::vector<Triple> train, std::vector<Triple> valid,
                     std::vector<Triple> test, std::size_t n_entities, std::size_t n_relations) {
  Snapshot s;
  s.index = index;
  s.train = std::move(train);
  s.valid = std::move(valid);
  s.test = std::move(test);
  s.entity_count = n_entities;
  s.relation_count = n_relations;
  return s;
}

inline std::vector<std::string> numbered(const std::string& prefix, std::size_t n) {
  std::vector<std::string> v;
  v.reserve(n);
  for (std::size_t i = 0; i < n; ++i) v.push_back(prefix + std::to_string(i));
  return v;
}

// ---------------------------------------------------------------------------
// Hand-assembled stores

inline EmbeddingStore make_store(int dim, int n_spaces, int sealed_through = -1) {
  EmbeddingStore s;
  s.dim = dim;
  s.spaces.resize(static_cast<std::size_t>(n_spaces));
  for (int i = 1; i <= n_spaces; ++i) s.space(i).index = i;
  s.sealed_through = sealed_through < 0 ? n_spaces : sealed_through;
  return s;
}

inline void put_explicit(EmbeddingStore& s, int i, EntityId e, std::vector<float> v) {
  s.space(i).entries[e] = EntityEntry::explicit_vec(std::move(v));
  s.space(i).trained_explicit_count += 1;
  s.note_first_appearance(e, i);
}

inline void put_pointer(EmbeddingStore& s, int i, EntityId e, int target) {
  s.space(i).entries[e] = EntityEntry::pointer(target);
  s.note_first_appearance(e, target);
}

inline void put_relation(EmbeddingStore& s, RelationId r, std::vector<float> v,
                         int last_updated = 1) {
  s.relations[r] = RelationEntry{std::move(v), last_updated};
}

inline std::vector<float> random_vec(Rng& rng, int dim, double scale = 1.0) {
  std::vector<float> v(static_cast<std::size_t>(dim));
  for (auto& x : v) x = static_cast<float>(rng.uniform(-scale, scale));
  return v;
}

// ---------------------------------------------------------------------------
// Randomized growing-KG instances
//
// Three snapshots with monotone vocabularies, unique triples split 3:1:1.
// The companion store mirrors the shape a finished pipeline produces:
// entities of each train delta are explicit at their snapshot (sometimes
// decoupled into a pointer at a later one), previously embedded entities that
// sit out a snapshot get static pointers or rely on resolve's walk-back, and
// entities that never reach a train split stay unembedded.

struct RandomInstance {
  GrowingKG kg;
  EmbeddingStore store;
};

inline GrowingKG random_kg(Rng& rng, int max_entities = 20, int max_relations = 8) {
  auto between = [&rng](int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(rng.uniform_index(static_cast<std::size_t>(hi - lo + 1)));
  };
  int e1 = between(3, 6);
  int e2 = between(e1, std::min(12, max_entities));
  int e3 = between(e2, max_entities);
  int r1 = between(2, 3);
  int r2 = between(r1, std::min(5, max_relations));
  int r3 = between(r2, max_relations);
  std::array<int, 3> ents{e1, e2, e3};
  std::array<int, 3> rels{r1, r2, r3};

  TripleSet seen;
  std::vector<Snapshot> snapshots;
  for (int i = 0; i < 3; ++i) {
    int want = between(8, 16);
    std::vector<Triple> triples;
    int guard = 0;
    while (static_cast<int>(triples.size()) < want && guard < 1000) {
      ++guard;
      Triple t{static_cast<EntityId>(rng.uniform_index(static_cast<std::size_t>(ents[i]))),
               static_cast<RelationId>(rng.uniform_index(static_cast<std::size_t>(rels[i]))),
               static_cast<EntityId>(rng.uniform_index(static_cast<std::size_t>(ents[i])))};
      if (seen.insert(t).second) triples.push_back(t);
    }
    std::size_t n = triples.size();
    std::size_t n_train = (n * 3) / 5;
    std::size_t n_valid = n / 5;
    std::vector<Triple> train(triples.begin(), triples.begin() + n_train);
    std::vector<Triple> valid(triples.begin() + n_train, triples.begin() + n_train + n_valid);
    std::vector<Triple> test(triples.begin() + n_train + n_valid, triples.end());
    snapshots.push_back(snap(i + 1, std::move(train), std::move(valid), std::move(test),
                             static_cast<std::size_t>(ents[i]),
                             static_cast<std::size_t>(rels[i])));
  }
  return GrowingKG::from_snapshots(std::move(snapshots), numbered("e", ents[2]),
                                   numbered("r", rels[2]));
}

inline EmbeddingStore random_store(const GrowingKG& kg, Rng& rng, int dim = 4) {
  EmbeddingStore store;
  store.dim = dim;
  int n = kg.snapshot_count();
  store.spaces.resize(static_cast<std::size_t>(n));

  for (int i = 1; i <= n; ++i) {
    SnapshotSpace& sp = store.space(i);
    sp.index = i;
    for (EntityId e : kg.delta(i).new_entities) store.note_first_appearance(e, i);

    std::vector<EntityId> trainable;
    {
      std::vector<bool> mark(kg.entity_count(i), false);
      for (const Triple& t : kg.delta(i).train_delta) {
        mark[static_cast<std::size_t>(t.head)] = true;
        mark[static_cast<std::size_t>(t.tail)] = true;
      }
      for (std::size_t e = 0; e < mark.size(); ++e)
        if (mark[e]) trainable.push_back(static_cast<EntityId>(e));
    }

    auto explicit_spaces_before = [&](EntityId e) {
      std::vector<int> out;
      for (int j = 1; j < i; ++j) {
        auto it = store.space(j).entries.find(e);
        if (it != store.space(j).entries.end() && it->second.is_explicit()) out.push_back(j);
      }
      return out;
    };

    for (EntityId e : trainable) {
      auto priors = explicit_spaces_before(e);
      if (!priors.empty() && rng.next_double() < 0.3) {
        // As if semantic decoupling replaced the freshly trained vector.
        int target = priors[rng.uniform_index(priors.size())];
        sp.entries[e] = EntityEntry::pointer(target);
      } else {
        sp.entries[e] = EntityEntry::explicit_vec(random_vec(rng, dim));
      }
    }
    sp.trained_explicit_count = sp.entries.size();

    // Static pointers for embedded entities sitting this snapshot out; some
    // are left absent so resolve's walk-back also gets exercised.
    for (EntityId e = 0; e < static_cast<EntityId>(kg.entity_count(i)); ++e) {
      if (sp.entries.count(e)) continue;
      auto priors = explicit_spaces_before(e);
      if (priors.empty()) continue;
      if (rng.next_double() < 0.6) sp.entries[e] = EntityEntry::pointer(priors.back());
    }
  }

  for (RelationId r = 0; r < static_cast<RelationId>(kg.total_relations()); ++r) {
    int first = 1;
    for (int i = 1; i <= n; ++i) {
      if (static_cast<std::size_t>(r) < kg.relation_count(i)) {
        first = i;
        break;
      }
    }
    store.relations[r] = RelationEntry{random_vec(rng, dim), first};
  }

  store.sealed_through = n;
  return store;
}

inline RandomInstance random_instance(std::uint64_t seed, int dim = 4, int max_entities = 20,
                                      int max_relations = 8) {
  Rng rng(seed);
  RandomInstance inst{random_kg(rng, max_entities, max_relations), EmbeddingStore{}};
  inst.store = random_store(inst.kg, rng, dim);
  return inst;
}

inline TrainConfig inference_config(int dim, int norm_p = 1, int topk = 3) {
  TrainConfig c;
  c.dim = dim;
  c.norm_p = norm_p;
  c.topk = topk;
  c.top_m = 5;
  return c;
}

// ---------------------------------------------------------------------------
// Finite-difference wiring. Parameters are the trainable rows of one space
// (entities then relations, following the TrainableIndex layout) flattened to
// doubles; writing them back goes through the store's float storage, so the
// check covers exactly what training optimizes.

inline std::vector<double> flatten_rows(const EmbeddingStore& store, int i,
                                        const TrainableIndex& idx) {
  std::vector<double> out;
  for (EntityId e : idx.entities)
    for (float x : store.space(i).entries.at(e).vec) out.push_back(x);
  for (RelationId r : idx.relations)
    for (float x : store.relations.at(r).vec) out.push_back(x);
  return out;
}

inline void write_rows(EmbeddingStore& store, int i, const TrainableIndex& idx,
                       std::span<const double> p) {
  std::size_t k = 0;
  for (EntityId e : idx.entities)
    for (float& x : store.space(i).entries.at(e).vec) x = static_cast<float>(p[k++]);
  for (RelationId r : idx.relations)
    for (float& x : store.relations.at(r).vec) x = static_cast<float>(p[k++]);
}

inline std::vector<double> flatten_grads(const Gradients& g) {
  std::vector<double> out(g.entity.begin(), g.entity.end());
  out.insert(out.end(), g.rel.begin(), g.rel.end());
  return out;
}

// One randomized training micro-instance suitable for finite differences:
// one space, six entities, two relations, batch of two (positive, negative)
// pairs, all values inside (-0.9, 0.9) so float granularity stays well under
// the check tolerance. Instances whose scores sit near a hinge boundary or an
// L1 kink are rejected and redrawn.
struct FdInstance {
  EmbeddingStore store;
  TrainableIndex idx;
  TrainConfig cfg;
  std::vector<std::pair<Triple, Triple>> batch;
  std::map<RelationId, std::vector<float>> anchors;
  std::vector<Triple> triples;  // incident delta triples for the MAE terms
};

inline FdInstance fd_instance(std::uint64_t seed, int dim, int norm_p) {
  for (std::uint64_t attempt = 0;; ++attempt) {
    Rng rng(seed * 1000 + attempt);
    FdInstance inst;
    inst.cfg = inference_config(dim, norm_p);
    inst.cfg.margin = 0.5;
    inst.store = make_store(dim, 1);
    for (EntityId e = 0; e < 6; ++e) put_explicit(inst.store, 1, e, random_vec(rng, dim, 0.9));
    for (RelationId r = 0; r < 2; ++r) put_relation(inst.store, r, random_vec(rng, dim, 0.9), 1);
    inst.idx = TrainableIndex::build({0, 1, 2, 3, 4, 5}, {0, 1});
    inst.batch = {{Triple{0, 0, 1}, Triple{2, 0, 1}},   // corrupted head
                  {Triple{3, 1, 4}, Triple{3, 1, 5}}};  // corrupted tail
    inst.anchors[0] = random_vec(rng, dim, 0.9);        // relation 1 stays anchorless
    inst.triples = {{0, 0, 1}, {2, 0, 3}, {4, 1, 5}, {1, 1, 2}};

    auto residual_ok = [&](const Triple& t) {
      auto h = *inst.store.resolve(t.head, 1);
      auto r = inst.store.relation_embedding(t.relation);
      auto e = *inst.store.resolve(t.tail, 1);
      double norm2 = 0.0;
      for (int k = 0; k < dim; ++k) {
        double d = double(h[k]) + double(r[k]) - double(e[k]);
        if (std::fabs(d) < 1e-2) return false;  // L1 kink / tiny-gradient guard
        norm2 += d * d;
      }
      return std::sqrt(norm2) > 0.2;  // curvature guard for the L2 norm
    };
    bool ok = true;
    for (const auto& [pos, neg] : inst.batch) {
      ok = ok && residual_ok(pos) && residual_ok(neg);
      if (!ok) break;
      auto score = [&](const Triple& t) {
        return transe_score(*inst.store.resolve(t.head, 1),
                            inst.store.relation_embedding(t.relation),
                            *inst.store.resolve(t.tail, 1), norm_p);
      };
      ok = std::fabs(score(pos) - score(neg) + inst.cfg.margin) > 1e-2;  // hinge guard
    }
    if (ok) return inst;
    if (attempt > 200) throw std::runtime_error("fd_instance: no valid draw");
  }
}

}  // namespace testutil
