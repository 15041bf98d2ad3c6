#include "mfckge/store.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <unordered_set>

#include <json.hpp>

namespace mfckge {

namespace fs = std::filesystem;
using nlohmann::json;

void EmbeddingStore::note_first_appearance(EntityId e, int snapshot) {
  auto idx = static_cast<std::size_t>(e);
  if (first_appearance.size() <= idx) first_appearance.resize(idx + 1, 0);
  if (first_appearance[idx] == 0) first_appearance[idx] = snapshot;
}

std::optional<std::span<const float>> EmbeddingStore::resolve(EntityId entity, int i) const {
  int first = first_appearance_of(entity);
  if (first == 0 || first > i) return std::nullopt;
  int upper = std::min(i, space_count());
  for (int j = upper; j >= 1; --j) {
    const auto& sp = space(j);
    auto it = sp.entries.find(entity);
    if (it == sp.entries.end()) continue;
    const EntityEntry& entry = it->second;
    if (entry.is_explicit()) return std::span<const float>(entry.vec);
    const auto& target_space = space(entry.target);
    auto tit = target_space.entries.find(entity);
    if (tit == target_space.entries.end() || !tit->second.is_explicit())
      throw CorruptStore("pointer for entity " + std::to_string(entity) + " at space " +
                         std::to_string(j) + " does not reach an explicit entry");
    return std::span<const float>(tit->second.vec);
  }
  return std::nullopt;  // in the vocabulary but never trained up to i
}

std::span<const float> EmbeddingStore::relation_embedding(RelationId r) const {
  auto it = relations.find(r);
  if (it == relations.end())
    throw KeyError("relation " + std::to_string(r) + " has no embedding");
  return std::span<const float>(it->second.vec);
}

SnapshotSpace& allocate_space(EmbeddingStore& store, int i,
                              const std::vector<EntityId>& trainable_entities,
                              const std::vector<EntityId>& inherit_from_prior,
                              Rng& rng) {
  if (store.space_count() != i - 1)
    throw ProtocolError("allocate_space(" + std::to_string(i) + ") expects exactly " +
                        std::to_string(i - 1) + " existing spaces");
  store.spaces.emplace_back();
  SnapshotSpace& sp = store.spaces.back();
  sp.index = i;

  std::unordered_set<EntityId> inherit(inherit_from_prior.begin(), inherit_from_prior.end());
  std::vector<EntityId> sorted = trainable_entities;
  std::sort(sorted.begin(), sorted.end());
  double bound = 6.0 / std::sqrt(static_cast<double>(store.dim));
  for (EntityId e : sorted) {
    if (inherit.count(e)) {
      auto prev = store.resolve(e, i - 1);
      if (!prev)
        throw ResolutionError("entity " + std::to_string(e) +
                              " cannot inherit: unresolvable at snapshot " + std::to_string(i - 1));
      sp.entries.emplace(e, EntityEntry::explicit_vec(std::vector<float>(prev->begin(), prev->end())));
    } else {
      std::vector<float> v(static_cast<std::size_t>(store.dim));
      for (auto& x : v) x = static_cast<float>(rng.uniform(-bound, bound));
      sp.entries.emplace(e, EntityEntry::explicit_vec(std::move(v)));
    }
  }
  return sp;
}

std::uint64_t space_checksum(const EmbeddingStore& store, int j) {
  const auto& sp = store.space(j);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& [e, entry] : sp.entries) {
    h = fnv1a(&e, sizeof(e), h);
    h = fnv1a(&entry.target, sizeof(entry.target), h);
    if (!entry.vec.empty())
      h = fnv1a(entry.vec.data(), entry.vec.size() * sizeof(float), h);
  }
  return h;
}

std::uint64_t store_content_hash(const EmbeddingStore& store) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  h = fnv1a(&store.dim, sizeof(store.dim), h);
  h = fnv1a(&store.sealed_through, sizeof(store.sealed_through), h);
  h = fnv1a(&store.decoupled_theta, sizeof(store.decoupled_theta), h);
  for (int j = 1; j <= store.space_count(); ++j) {
    std::uint64_t s = space_checksum(store, j);
    h = fnv1a(&s, sizeof(s), h);
    for (const auto& [e, raw] : store.space(j).dropped_raw) {
      h = fnv1a(&e, sizeof(e), h);
      h = fnv1a(raw.data(), raw.size() * sizeof(float), h);
    }
  }
  for (const auto& [r, entry] : store.relations) {
    h = fnv1a(&r, sizeof(r), h);
    h = fnv1a(&entry.last_updated, sizeof(entry.last_updated), h);
    h = fnv1a(entry.vec.data(), entry.vec.size() * sizeof(float), h);
  }
  if (!store.first_appearance.empty())
    h = fnv1a(store.first_appearance.data(),
              store.first_appearance.size() * sizeof(int), h);
  return h;
}

// ---------------------------------------------------------------------------
// Checkpoint: manifest.json plus one row-major float32 little-endian matrix
// per space (explicit rows first, then kept-dropped raw rows) and one for
// relations.

namespace {

constexpr int kCheckpointVersion = 1;

void write_matrix(const fs::path& file, const std::vector<const std::vector<float>*>& rows) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file.string());
  for (const auto* row : rows)
    out.write(reinterpret_cast<const char*>(row->data()),
              static_cast<std::streamsize>(row->size() * sizeof(float)));
}

std::vector<float> read_matrix(const fs::path& file, std::size_t expect_floats) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  std::vector<float> data(expect_floats);
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(expect_floats * sizeof(float)));
  if (static_cast<std::size_t>(in.gcount()) != expect_floats * sizeof(float))
    throw IoError("truncated matrix file " + file.string());
  char extra;
  if (in.read(&extra, 1))
    throw IoError("matrix file " + file.string() + " longer than manifest declares");
  return data;
}

}  // namespace

void save_checkpoint(const EmbeddingStore& store, const fs::path& dir) {
  fs::create_directories(dir);
  json manifest;
  manifest["format_version"] = kCheckpointVersion;
  manifest["dim"] = store.dim;
  manifest["keep_dropped"] = store.keep_dropped;
  manifest["sealed_through"] = store.sealed_through;
  manifest["decoupled_theta"] = store.decoupled_theta;
  manifest["n_snapshots"] = store.space_count();
  manifest["n_entities"] = store.first_appearance.size();
  manifest["n_relations"] = store.relations.size();
  manifest["first_appearance"] = store.first_appearance;

  json spaces = json::array();
  for (int i = 1; i <= store.space_count(); ++i) {
    const auto& sp = store.space(i);
    json entries = json::array();
    std::vector<const std::vector<float>*> rows;
    for (const auto& [e, entry] : sp.entries) {
      if (entry.is_explicit()) {
        entries.push_back({{"e", e}, {"row", rows.size()}});
        rows.push_back(&entry.vec);
      } else {
        entries.push_back({{"e", e}, {"ptr", entry.target}});
      }
    }
    json raws = json::array();
    for (const auto& [e, raw] : sp.dropped_raw) {
      raws.push_back({{"e", e}, {"row", rows.size()}});
      rows.push_back(&raw);
    }
    json js;
    js["index"] = sp.index;
    js["trained_explicit_count"] = sp.trained_explicit_count;
    js["entries"] = std::move(entries);
    js["dropped_raw"] = std::move(raws);
    js["rows"] = rows.size();
    spaces.push_back(std::move(js));
    write_matrix(dir / ("space_" + std::to_string(i) + ".bin"), rows);
  }
  manifest["spaces"] = std::move(spaces);

  json rels = json::array();
  std::vector<const std::vector<float>*> rel_rows;
  for (const auto& [r, entry] : store.relations) {
    rels.push_back({{"r", r}, {"row", rel_rows.size()}, {"last", entry.last_updated}});
    rel_rows.push_back(&entry.vec);
  }
  manifest["relations"] = std::move(rels);
  write_matrix(dir / "relations.bin", rel_rows);

  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

EmbeddingStore load_checkpoint(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("cannot open " + (dir / "manifest.json").string());
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw ParseError("manifest.json: " + std::string(e.what()));
  }
  if (!manifest.contains("format_version") ||
      manifest["format_version"].get<int>() != kCheckpointVersion)
    throw VersionError("unsupported checkpoint format version");

  EmbeddingStore store;
  store.dim = manifest["dim"].get<int>();
  if (store.dim <= 0) throw VersionError("manifest declares non-positive dim");
  store.keep_dropped = manifest["keep_dropped"].get<bool>();
  store.sealed_through = manifest["sealed_through"].get<int>();
  store.decoupled_theta = manifest.value("decoupled_theta", 2.0);
  store.first_appearance = manifest["first_appearance"].get<std::vector<int>>();

  auto dim = static_cast<std::size_t>(store.dim);
  for (const auto& js : manifest["spaces"]) {
    SnapshotSpace sp;
    sp.index = js["index"].get<int>();
    sp.trained_explicit_count = js["trained_explicit_count"].get<std::size_t>();
    auto n_rows = js["rows"].get<std::size_t>();
    auto data = read_matrix(dir / ("space_" + std::to_string(sp.index) + ".bin"), n_rows * dim);
    auto row_of = [&](std::size_t row) {
      if (row >= n_rows) throw VersionError("manifest row index out of range");
      return std::vector<float>(data.begin() + static_cast<std::ptrdiff_t>(row * dim),
                                data.begin() + static_cast<std::ptrdiff_t>((row + 1) * dim));
    };
    for (const auto& je : js["entries"]) {
      EntityId e = je["e"].get<EntityId>();
      if (je.contains("row"))
        sp.entries.emplace(e, EntityEntry::explicit_vec(row_of(je["row"].get<std::size_t>())));
      else
        sp.entries.emplace(e, EntityEntry::pointer(je["ptr"].get<int>()));
    }
    for (const auto& je : js["dropped_raw"])
      sp.dropped_raw.emplace(je["e"].get<EntityId>(), row_of(je["row"].get<std::size_t>()));
    store.spaces.push_back(std::move(sp));
  }

  auto n_rel = manifest["relations"].size();
  auto rel_data = read_matrix(dir / "relations.bin", n_rel * dim);
  for (const auto& jr : manifest["relations"]) {
    RelationEntry entry;
    auto row = jr["row"].get<std::size_t>();
    entry.vec.assign(rel_data.begin() + static_cast<std::ptrdiff_t>(row * dim),
                     rel_data.begin() + static_cast<std::ptrdiff_t>((row + 1) * dim));
    entry.last_updated = jr["last"].get<int>();
    store.relations.emplace(jr["r"].get<RelationId>(), std::move(entry));
  }
  return store;
}

}  // namespace mfckge
