#include "mfckge/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "mfckge/kg.hpp"

namespace mfckge {

namespace {
// Latent dimension is deliberately low: entity points must be dense enough
// that the relation offset exceeds nearest-neighbour spacing, otherwise the
// emitted triples carry no recoverable translational signal.
constexpr int kLatentDim = 4;
constexpr int kNearest = 3;       // tails sampled among this many nearest neighbours
constexpr double kOffset = 0.8;   // latent length of every relation vector
constexpr double kNoise = 0.05;   // share of unstructured triples
constexpr double kHubBias = 0.8;  // structured heads drawn from the hub pool
constexpr double kRelationJitter = 0.10;  // spread of relation directions inside a domain
}  // namespace

GrowthPattern pattern_from_string(const std::string& name) {
  if (name == "equal") return GrowthPattern::Equal;
  if (name == "higher") return GrowthPattern::Higher;
  if (name == "lower") return GrowthPattern::Lower;
  if (name == "entity-growth") return GrowthPattern::EntityGrowth;
  if (name == "relation-growth") return GrowthPattern::RelationGrowth;
  if (name == "hybrid") return GrowthPattern::Hybrid;
  if (name == "facet") return GrowthPattern::Facet;
  throw ConfigError("unknown growth pattern '" + name + "'");
}

std::string pattern_to_string(GrowthPattern pattern) {
  switch (pattern) {
    case GrowthPattern::Equal: return "equal";
    case GrowthPattern::Higher: return "higher";
    case GrowthPattern::Lower: return "lower";
    case GrowthPattern::EntityGrowth: return "entity-growth";
    case GrowthPattern::RelationGrowth: return "relation-growth";
    case GrowthPattern::Hybrid: return "hybrid";
    case GrowthPattern::Facet: return "facet";
  }
  throw ConfigError("unknown growth pattern value");
}

void SynthSpec::validate() const {
  if (n_snapshots < 1) throw ConfigError("n_snapshots must be >= 1");
  if (n_entities < 2) throw ConfigError("n_entities must be >= 2");
  if (n_relations < 1) throw ConfigError("n_relations must be >= 1");
  if (static_cast<int>(schedule.size()) != n_snapshots)
    throw ConfigError("schedule length must equal n_snapshots");
  for (int s : schedule)
    if (s < 1) throw ConfigError("schedule entries must be >= 1");
  if (pattern == GrowthPattern::Facet) {
    if (n_domains < 1) throw ConfigError("n_domains must be >= 1");
    if (n_domains > n_relations) throw ConfigError("more domains than relations");
    if (!(hub_fraction > 0.0 && hub_fraction <= 1.0))
      throw ConfigError("hub_fraction must lie in (0, 1]");
  }
  if (!domain_schedule.empty()) {
    if (static_cast<int>(domain_schedule.size()) != n_snapshots)
      throw ConfigError("domain_schedule length must equal n_snapshots");
    for (int d : domain_schedule)
      if (d < 0 || d >= n_domains) throw ConfigError("domain_schedule entry out of range");
  }
  if (!repeat_fraction.empty()) {
    if (static_cast<int>(repeat_fraction.size()) != n_snapshots)
      throw ConfigError("repeat_fraction length must equal n_snapshots");
    for (double f : repeat_fraction)
      if (f < 0.0 || f > 1.0) throw ConfigError("repeat_fraction entry out of range");
  }
}

nlohmann::json SynthSpec::to_json() const {
  return nlohmann::json{{"n_snapshots", n_snapshots},
                        {"pattern", pattern_to_string(pattern)},
                        {"n_entities", n_entities},
                        {"n_relations", n_relations},
                        {"n_domains", n_domains},
                        {"schedule", schedule},
                        {"seed", seed},
                        {"hub_fraction", hub_fraction},
                        {"domain_schedule", domain_schedule},
                        {"repeat_fraction", repeat_fraction}};
}

SynthSpec SynthSpec::from_json(const nlohmann::json& j) {
  SynthSpec s;
  s.n_snapshots = j.value("n_snapshots", s.n_snapshots);
  if (j.contains("pattern")) s.pattern = pattern_from_string(j["pattern"].get<std::string>());
  s.n_entities = j.value("n_entities", s.n_entities);
  s.n_relations = j.value("n_relations", s.n_relations);
  s.n_domains = j.value("n_domains", s.n_domains);
  s.schedule = j.value("schedule", s.schedule);
  s.seed = j.value("seed", s.seed);
  s.hub_fraction = j.value("hub_fraction", s.hub_fraction);
  s.domain_schedule = j.value("domain_schedule", s.domain_schedule);
  s.repeat_fraction = j.value("repeat_fraction", s.repeat_fraction);
  s.validate();
  return s;
}

namespace {

using Vec = std::vector<double>;

Vec random_point(Rng& rng) {
  Vec v(kLatentDim);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

Vec random_unit(Rng& rng) {
  Vec v(kLatentDim);
  double n = 0.0;
  do {
    for (double& x : v) x = rng.normal();
    n = 0.0;
    for (double x : v) n += x * x;
  } while (n < 1e-12);
  n = std::sqrt(n);
  for (double& x : v) x /= n;
  return v;
}

struct Generator {
  const SynthSpec& spec;
  Rng rng;
  std::vector<Vec> entity_lat;
  std::vector<Vec> relation_dir;
  std::vector<int> relation_domain;
  int active_entities = 0;
  int active_relations = 0;
  std::vector<int> hub_ids;
  TripleSet seen;

  explicit Generator(const SynthSpec& s) : spec(s), rng(s.seed) {
    entity_lat.reserve(static_cast<std::size_t>(spec.n_entities));
    for (int e = 0; e < spec.n_entities; ++e) entity_lat.push_back(random_point(rng));
    const bool facet = spec.pattern == GrowthPattern::Facet;
    const int n_domains = facet ? spec.n_domains : 1;
    // Domain directions form a regular simplex (pairwise cosine -1/(D-1)),
    // the maximally spread arrangement: cross-domain relation similarity goes
    // negative, which is what lets importance weights discriminate spaces.
    std::vector<Vec> domain_dir;
    domain_dir.reserve(static_cast<std::size_t>(n_domains));
    for (int d = 0; d < n_domains; ++d) {
      Vec v = random_unit(rng);
      if (d < kLatentDim) {  // beyond the latent rank, plain random units
        for (const Vec& prev : domain_dir) {
          double proj = 0.0;
          for (int k = 0; k < kLatentDim; ++k)
            proj += v[static_cast<std::size_t>(k)] * prev[static_cast<std::size_t>(k)];
          for (int k = 0; k < kLatentDim; ++k)
            v[static_cast<std::size_t>(k)] -= proj * prev[static_cast<std::size_t>(k)];
        }
        double n = 0.0;
        for (double x : v) n += x * x;
        n = std::sqrt(n);
        if (n > 1e-9)
          for (double& x : v) x /= n;
      }
      domain_dir.push_back(std::move(v));
    }
    if (n_domains >= 2 && n_domains <= kLatentDim) {
      Vec centroid(kLatentDim, 0.0);
      for (const Vec& v : domain_dir)
        for (int k = 0; k < kLatentDim; ++k) centroid[static_cast<std::size_t>(k)] +=
            v[static_cast<std::size_t>(k)] / static_cast<double>(n_domains);
      for (Vec& v : domain_dir) {
        double n = 0.0;
        for (int k = 0; k < kLatentDim; ++k) {
          v[static_cast<std::size_t>(k)] -= centroid[static_cast<std::size_t>(k)];
          n += v[static_cast<std::size_t>(k)] * v[static_cast<std::size_t>(k)];
        }
        n = std::sqrt(n);
        for (double& x : v) x /= n;
      }
    }
    relation_dir.reserve(static_cast<std::size_t>(spec.n_relations));
    relation_domain.resize(static_cast<std::size_t>(spec.n_relations), 0);
    const int per_domain = (spec.n_relations + n_domains - 1) / n_domains;
    for (int r = 0; r < spec.n_relations; ++r) {
      Vec dir(kLatentDim);
      if (facet) {
        int d = std::min(r / per_domain, n_domains - 1);
        relation_domain[static_cast<std::size_t>(r)] = d;
        Vec jitter = random_unit(rng);
        double n = 0.0;
        // Small jitter keeps domain-mates nearly parallel; a learned model can
        // then separate domains cleanly, which is what importance weights need.
        for (int k = 0; k < kLatentDim; ++k) {
          dir[static_cast<std::size_t>(k)] = domain_dir[static_cast<std::size_t>(d)]
                                                       [static_cast<std::size_t>(k)] +
                                             kRelationJitter * jitter[static_cast<std::size_t>(k)];
          n += dir[static_cast<std::size_t>(k)] * dir[static_cast<std::size_t>(k)];
        }
        n = std::sqrt(n);
        for (double& x : dir) x = x / n * kOffset;
      } else {
        dir = random_unit(rng);
        for (double& x : dir) x *= kOffset;
      }
      relation_dir.push_back(std::move(dir));
    }
  }

  int dominant_domain(int snapshot0) const {  // 0-based snapshot
    if (!spec.domain_schedule.empty())
      return spec.domain_schedule[static_cast<std::size_t>(snapshot0)];
    const int n_domains = spec.pattern == GrowthPattern::Facet ? spec.n_domains : 1;
    return snapshot0 % n_domains;
  }

  std::vector<int> domain_relations(int d) const {
    std::vector<int> out;
    for (int r = 0; r < spec.n_relations; ++r)
      if (relation_domain[static_cast<std::size_t>(r)] == d && r < active_relations)
        out.push_back(r);
    return out;
  }

  // K nearest active entities to `point` excluding `exclude`; the (distance,
  // id) ordering makes the selection unique, hence deterministic.
  std::vector<int> nearest(const Vec& point, int exclude) const {
    std::vector<std::pair<double, int>> best;
    for (int e = 0; e < active_entities; ++e) {
      if (e == exclude) continue;
      double d2 = 0.0;
      for (int k = 0; k < kLatentDim; ++k) {
        double d = entity_lat[static_cast<std::size_t>(e)][static_cast<std::size_t>(k)] -
                   point[static_cast<std::size_t>(k)];
        d2 += d * d;
      }
      best.emplace_back(d2, e);
    }
    std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(kNearest), best.size());
    std::partial_sort(best.begin(), best.begin() + static_cast<std::ptrdiff_t>(take), best.end());
    std::vector<int> out;
    out.reserve(take);
    for (std::size_t k = 0; k < take; ++k) out.push_back(best[k].second);
    return out;
  }

  Vec translated(int head, int relation) const {
    Vec p(kLatentDim);
    for (int k = 0; k < kLatentDim; ++k)
      p[static_cast<std::size_t>(k)] =
          entity_lat[static_cast<std::size_t>(head)][static_cast<std::size_t>(k)] +
          relation_dir[static_cast<std::size_t>(relation)][static_cast<std::size_t>(k)];
    return p;
  }

  // A structured triple: latent-consistent tail for the given head+relation.
  std::optional<Triple> structured(int head, int relation) {
    auto cands = nearest(translated(head, relation), head);
    if (cands.empty()) return std::nullopt;
    int tail = cands[rng.uniform_index(cands.size())];
    return Triple{head, relation, tail};
  }

  std::optional<Triple> random_triple() {
    if (active_entities < 2 || active_relations < 1) return std::nullopt;
    int h = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(active_entities)));
    int r = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(active_relations)));
    int t = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(active_entities)));
    if (h == t) return std::nullopt;
    return Triple{h, r, t};
  }
};

struct SplitOut {
  std::vector<Triple> train, valid, test;
};

// 3:1:1 split that keeps each entity/relation of the snapshot's new facts
// represented in its train portion, so everything queried is trainable.
SplitOut split_delta(const std::vector<Triple>& delta, Rng& rng) {
  SplitOut out;
  std::map<EntityId, int> e_count;
  std::map<RelationId, int> r_count;
  for (const Triple& t : delta) {
    ++e_count[t.head];
    ++e_count[t.tail];
    ++r_count[t.relation];
  }
  std::vector<std::size_t> order(delta.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  shuffle_inplace(order, rng);

  const std::size_t quota = delta.size() / 5;
  enum class Dest { Train, Valid, Test };
  std::vector<Dest> dest(delta.size(), Dest::Train);
  std::size_t n_valid = 0, n_test = 0;
  for (std::size_t k : order) {
    if (n_valid >= quota && n_test >= quota) break;
    const Triple& t = delta[k];
    const int need_head = t.head == t.tail ? 3 : 2;
    if (e_count[t.head] < need_head || e_count[t.tail] < 2 || r_count[t.relation] < 2) continue;
    if (n_valid < quota) {
      dest[k] = Dest::Valid;
      ++n_valid;
    } else {
      dest[k] = Dest::Test;
      ++n_test;
    }
    --e_count[t.head];
    --e_count[t.tail];
    --r_count[t.relation];
  }
  for (std::size_t k = 0; k < delta.size(); ++k) {
    switch (dest[k]) {
      case Dest::Train: out.train.push_back(delta[k]); break;
      case Dest::Valid: out.valid.push_back(delta[k]); break;
      case Dest::Test: out.test.push_back(delta[k]); break;
    }
  }
  return out;
}

void write_split(const std::filesystem::path& file, const std::vector<Triple>& triples) {
  std::ofstream f(file, std::ios::binary);
  if (!f) throw IoError("cannot write " + file.string());
  for (const Triple& t : triples)
    f << "e" << t.head << "\tr" << t.relation << "\te" << t.tail << "\n";
}

}  // namespace

void synthesize_growing_kg(const SynthSpec& spec, const std::filesystem::path& out) {
  spec.validate();
  Generator gen(spec);
  const bool facet = spec.pattern == GrowthPattern::Facet;
  const int n = spec.n_snapshots;

  // Per-snapshot vocabulary inflow by pattern.
  std::vector<int> entity_inflow(static_cast<std::size_t>(n), 0);
  std::vector<int> relation_inflow(static_cast<std::size_t>(n), 0);
  auto spread = [n](int total, std::vector<int>& inflow, int first_share_pct) {
    if (n == 1) {
      inflow[0] = total;
      return;
    }
    int first = std::max(1, total * first_share_pct / 100);
    inflow[0] = first;
    int rest = total - first;
    for (int i = 1; i < n; ++i) inflow[static_cast<std::size_t>(i)] = rest / (n - 1);
    for (int i = 1; i <= rest % (n - 1); ++i) ++inflow[static_cast<std::size_t>(i)];
  };
  switch (spec.pattern) {
    case GrowthPattern::Equal:
    case GrowthPattern::Higher:
    case GrowthPattern::Lower:
      entity_inflow[0] = spec.n_entities;
      relation_inflow[0] = spec.n_relations;
      break;
    case GrowthPattern::EntityGrowth:
      spread(spec.n_entities, entity_inflow, n == 1 ? 100 : 100 / n);
      relation_inflow[0] = spec.n_relations;
      break;
    case GrowthPattern::RelationGrowth:
      entity_inflow[0] = spec.n_entities;
      spread(spec.n_relations, relation_inflow, n == 1 ? 100 : 100 / n);
      break;
    case GrowthPattern::Hybrid:
      spread(spec.n_entities, entity_inflow, n == 1 ? 100 : 100 / n);
      spread(spec.n_relations, relation_inflow, n == 1 ? 100 : 100 / n);
      break;
    case GrowthPattern::Facet:
      // Facet growth is about existing entities gaining new relation domains,
      // not about vocabulary churn: keep the entity set fixed from the start.
      entity_inflow[0] = spec.n_entities;
      relation_inflow[0] = spec.n_relations;
      break;
  }

  const int base_entities = entity_inflow[0];
  const int hub_count =
      facet ? std::max(1, static_cast<int>(std::floor(spec.hub_fraction * base_entities))) : 0;
  for (int h = 0; h < hub_count; ++h) gen.hub_ids.push_back(h);

  std::filesystem::create_directories(out);
  std::vector<int> dominant(static_cast<std::size_t>(n), 0);
  // Domain each hub emitted last snapshot; repeat-hubs stay loyal to it, so a
  // chained repeat schedule keeps the same hubs on the same facet throughout.
  std::vector<int> hub_dom(static_cast<std::size_t>(hub_count), 0);

  for (int i = 0; i < n; ++i) {
    const int target = spec.schedule[static_cast<std::size_t>(i)];
    const int new_entities = std::min(entity_inflow[static_cast<std::size_t>(i)],
                                      spec.n_entities - gen.active_entities);
    const int new_relations = std::min(relation_inflow[static_cast<std::size_t>(i)],
                                       spec.n_relations - gen.active_relations);
    gen.active_entities += new_entities;
    gen.active_relations += new_relations;
    if (gen.active_entities < 2 || gen.active_relations < 1)
      throw ConfigError("snapshot " + std::to_string(i) + " has too small a vocabulary");

    const int dom = gen.dominant_domain(i);
    dominant[static_cast<std::size_t>(i)] = dom;
    const double repeat =
        spec.repeat_fraction.empty() ? 0.0 : spec.repeat_fraction[static_cast<std::size_t>(i)];
    const int repeat_hubs = static_cast<int>(std::floor(repeat * hub_count));
    for (int h = 0; h < hub_count; ++h)
      if (i == 0 || h >= repeat_hubs) hub_dom[static_cast<std::size_t>(h)] = dom;
    auto domain_of_head = [&](int head) {
      if (!facet) return 0;
      return head < hub_count ? hub_dom[static_cast<std::size_t>(head)] : dom;
    };

    std::vector<Triple> delta;
    auto try_add = [&](const std::optional<Triple>& t) {
      if (!t) return false;
      if (gen.seen.find(*t) != gen.seen.end()) return false;
      gen.seen.insert(*t);
      delta.push_back(*t);
      return true;
    };

    // Ground every newly introduced entity in at least one structured fact.
    const int first_new_entity = gen.active_entities - new_entities;
    for (int e = first_new_entity; e < gen.active_entities && static_cast<int>(delta.size()) < target; ++e) {
      for (int attempt = 0; attempt < 64; ++attempt) {
        std::vector<int> rels = facet ? gen.domain_relations(domain_of_head(e))
                                      : gen.domain_relations(0);
        if (rels.empty()) break;
        int r = rels[gen.rng.uniform_index(rels.size())];
        if (try_add(gen.structured(e, r))) break;
      }
    }
    const int first_new_relation = gen.active_relations - new_relations;
    for (int r = first_new_relation;
         r < gen.active_relations && static_cast<int>(delta.size()) < target; ++r) {
      for (int attempt = 0; attempt < 64; ++attempt) {
        int h = static_cast<int>(gen.rng.uniform_index(static_cast<std::size_t>(gen.active_entities)));
        if (try_add(gen.structured(h, r))) break;
      }
    }

    long attempts = 0;
    const long cap = 400L * target + 4096;
    while (static_cast<int>(delta.size()) < target) {
      if (++attempts > cap)
        throw ConfigError("schedule infeasible: snapshot " + std::to_string(i) +
                          " cannot reach " + std::to_string(target) + " unique facts");
      if (gen.rng.next_double() < kNoise) {
        try_add(gen.random_triple());
        continue;
      }
      int head;
      if (facet && !gen.hub_ids.empty() && gen.rng.next_double() < kHubBias) {
        head = gen.hub_ids[gen.rng.uniform_index(gen.hub_ids.size())];
      } else {
        head = static_cast<int>(gen.rng.uniform_index(static_cast<std::size_t>(gen.active_entities)));
      }
      auto rels = gen.domain_relations(domain_of_head(head));
      if (rels.empty()) continue;
      int r = rels[gen.rng.uniform_index(rels.size())];
      try_add(gen.structured(head, r));
    }

    SplitOut split = split_delta(delta, gen.rng);
    const std::filesystem::path dir = out / std::to_string(i);
    std::filesystem::create_directories(dir);
    write_split(dir / "train.txt", split.train);
    write_split(dir / "valid.txt", split.valid);
    write_split(dir / "test.txt", split.test);
  }

  nlohmann::json side = spec.to_json();
  side["dominant_domains"] = dominant;
  side["hub_count"] = hub_count;
  {
    std::ofstream f(out / "spec.json", std::ios::binary);
    if (!f) throw IoError("cannot write " + (out / "spec.json").string());
    f << side.dump(2) << "\n";
  }
  if (facet) {
    std::ofstream f(out / "domains.csv", std::ios::binary);
    if (!f) throw IoError("cannot write " + (out / "domains.csv").string());
    f << "relation_id,domain_id\n";
    for (int r = 0; r < spec.n_relations; ++r)
      f << r << "," << gen.relation_domain[static_cast<std::size_t>(r)] << "\n";
  }
}

std::vector<StatsRow> dataset_stats(const std::filesystem::path& root) {
  GrowingKG kg = load_growing_kg(root);
  std::vector<StatsRow> rows;
  for (int i = 1; i <= kg.snapshot_count(); ++i) {
    StatsRow row;
    row.snapshot = i;
    row.n_entities = kg.entity_count(i);
    row.n_relations = kg.relation_count(i);
    row.n_new_facts = kg.delta(i).new_facts.size();
    rows.push_back(row);
  }
  return rows;
}

std::string stats_csv(std::span<const StatsRow> rows) {
  std::string out = "snapshot,n_entities,n_relations,n_new_facts\n";
  for (const StatsRow& r : rows)
    out += std::to_string(r.snapshot) + "," + std::to_string(r.n_entities) + "," +
           std::to_string(r.n_relations) + "," + std::to_string(r.n_new_facts) + "\n";
  return out;
}

}  // namespace mfckge
