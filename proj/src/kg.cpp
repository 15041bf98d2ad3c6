#include "mfckge/kg.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace mfckge {

namespace fs = std::filesystem;

std::optional<EntityId> GrowingKG::find_entity(const std::string& label) const {
  for (std::size_t i = 0; i < entity_labels_.size(); ++i)
    if (entity_labels_[i] == label) return static_cast<EntityId>(i);
  return std::nullopt;
}

std::optional<RelationId> GrowingKG::find_relation(const std::string& label) const {
  for (std::size_t i = 0; i < relation_labels_.size(); ++i)
    if (relation_labels_[i] == label) return static_cast<RelationId>(i);
  return std::nullopt;
}

int GrowingKG::first_snapshot_of_entity(EntityId e) const {
  for (int i = 1; i <= snapshot_count(); ++i)
    if (static_cast<std::size_t>(e) < entity_count(i)) return i;
  throw IndexError("entity id " + std::to_string(e) + " outside the final vocabulary");
}

namespace {

void validate_snapshots(const std::vector<Snapshot>& snaps) {
  std::size_t prev_e = 0, prev_r = 0;
  for (const auto& s : snaps) {
    if (s.entity_count < prev_e || s.relation_count < prev_r)
      throw InvariantViolation("vocabulary shrank at snapshot " + std::to_string(s.index));
    prev_e = s.entity_count;
    prev_r = s.relation_count;

    TripleSet train_set(s.train.begin(), s.train.end());
    TripleSet valid_set(s.valid.begin(), s.valid.end());
    for (const auto& t : s.valid)
      if (train_set.count(t))
        throw InvariantViolation("train/valid overlap at snapshot " + std::to_string(s.index));
    for (const auto& t : s.test)
      if (train_set.count(t) || valid_set.count(t))
        throw InvariantViolation("test overlaps train or valid at snapshot " + std::to_string(s.index));

    auto check_ids = [&s](const std::vector<Triple>& v) {
      for (const auto& t : v) {
        if (t.head < 0 || t.tail < 0 || t.relation < 0 ||
            static_cast<std::size_t>(t.head) >= s.entity_count ||
            static_cast<std::size_t>(t.tail) >= s.entity_count ||
            static_cast<std::size_t>(t.relation) >= s.relation_count)
          throw InvariantViolation("triple id outside vocabulary at snapshot " + std::to_string(s.index));
      }
    };
    check_ids(s.train);
    check_ids(s.valid);
    check_ids(s.test);
  }
}

std::vector<SnapshotDelta> deltas_from(const std::vector<Snapshot>& snaps) {
  std::vector<SnapshotDelta> out;
  out.reserve(snaps.size());
  TripleSet seen;  // every triple of snapshots 1..i-1, any split
  std::size_t prev_e = 0, prev_r = 0;
  for (const auto& s : snaps) {
    SnapshotDelta d;
    for (std::size_t e = prev_e; e < s.entity_count; ++e)
      d.new_entities.push_back(static_cast<EntityId>(e));
    for (std::size_t r = prev_r; r < s.relation_count; ++r)
      d.new_relations.push_back(static_cast<RelationId>(r));

    TripleSet in_snapshot;
    auto add_new = [&](const std::vector<Triple>& v, bool is_train) {
      for (const auto& t : v) {
        if (seen.count(t)) continue;  // static knowledge, never re-enters a delta
        if (in_snapshot.insert(t).second) d.new_facts.push_back(t);
        if (is_train) d.train_delta.push_back(t);
      }
    };
    add_new(s.train, true);
    add_new(s.valid, false);
    add_new(s.test, false);

    seen.insert(in_snapshot.begin(), in_snapshot.end());
    prev_e = s.entity_count;
    prev_r = s.relation_count;
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace

GrowingKG GrowingKG::from_snapshots(std::vector<Snapshot> snapshots,
                                    std::vector<std::string> entity_labels,
                                    std::vector<std::string> relation_labels) {
  if (snapshots.empty()) throw EmptySnapshotError("growing KG has no snapshots");
  for (std::size_t i = 0; i < snapshots.size(); ++i)
    snapshots[i].index = static_cast<int>(i + 1);
  validate_snapshots(snapshots);

  GrowingKG kg;
  if (entity_labels.empty())
    for (std::size_t e = 0; e < snapshots.back().entity_count; ++e)
      entity_labels.push_back("e" + std::to_string(e));
  if (relation_labels.empty())
    for (std::size_t r = 0; r < snapshots.back().relation_count; ++r)
      relation_labels.push_back("r" + std::to_string(r));
  kg.deltas_ = deltas_from(snapshots);
  kg.snapshots_ = std::move(snapshots);
  kg.entity_labels_ = std::move(entity_labels);
  kg.relation_labels_ = std::move(relation_labels);
  return kg;
}

namespace {

struct Interner {
  std::unordered_map<std::string, std::int32_t> ids;
  std::vector<std::string> labels;
  std::int32_t intern(const std::string& s) {
    auto it = ids.find(s);
    if (it != ids.end()) return it->second;
    auto id = static_cast<std::int32_t>(labels.size());
    ids.emplace(s, id);
    labels.push_back(s);
    return id;
  }
};

std::vector<Triple> read_triple_file(const fs::path& file, Interner& entities,
                                     Interner& relations) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  std::vector<Triple> triples;
  TripleSet dedup;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto tab1 = line.find('\t');
    auto tab2 = tab1 == std::string::npos ? std::string::npos : line.find('\t', tab1 + 1);
    if (tab1 == std::string::npos || tab2 == std::string::npos)
      throw ParseError(file.string() + ":" + std::to_string(line_no) +
                       ": expected head<TAB>relation<TAB>tail");
    std::string h = line.substr(0, tab1);
    std::string r = line.substr(tab1 + 1, tab2 - tab1 - 1);
    std::string t = line.substr(tab2 + 1);
    if (h.empty() || r.empty() || t.empty())
      throw ParseError(file.string() + ":" + std::to_string(line_no) + ": empty field");
    Triple triple{entities.intern(h), relations.intern(r), entities.intern(t)};
    if (dedup.insert(triple).second) triples.push_back(triple);
  }
  return triples;
}

}  // namespace

GrowingKG load_growing_kg(const fs::path& dataset_root) {
  if (!fs::is_directory(dataset_root))
    throw IoError("dataset root " + dataset_root.string() + " is not a directory");

  int n = 0;
  while (fs::is_directory(dataset_root / std::to_string(n))) ++n;
  if (n == 0) throw IoError("no snapshot directories under " + dataset_root.string());

  Interner entities, relations;
  std::vector<Snapshot> snaps;
  for (int i = 0; i < n; ++i) {
    fs::path dir = dataset_root / std::to_string(i);
    Snapshot s;
    s.index = i + 1;
    s.train = read_triple_file(dir / "train.txt", entities, relations);
    s.valid = read_triple_file(dir / "valid.txt", entities, relations);
    s.test = read_triple_file(dir / "test.txt", entities, relations);
    if (s.train.empty() && s.valid.empty() && s.test.empty())
      throw EmptySnapshotError("snapshot " + std::to_string(i) + " has no triples");
    s.entity_count = entities.labels.size();
    s.relation_count = relations.labels.size();
    snaps.push_back(std::move(s));
  }
  return GrowingKG::from_snapshots(std::move(snaps), std::move(entities.labels),
                                   std::move(relations.labels));
}

void save_growing_kg(const GrowingKG& kg, const fs::path& dataset_root) {
  fs::create_directories(dataset_root);
  for (int i = 1; i <= kg.snapshot_count(); ++i) {
    fs::path dir = dataset_root / std::to_string(i - 1);
    fs::create_directories(dir);
    auto write = [&](const char* name, const std::vector<Triple>& triples) {
      std::ofstream out(dir / name, std::ios::binary);
      if (!out) throw IoError("cannot write " + (dir / name).string());
      for (const auto& t : triples)
        out << kg.entity_label(t.head) << '\t' << kg.relation_label(t.relation) << '\t'
            << kg.entity_label(t.tail) << '\n';
    };
    write("train.txt", kg.train(i));
    write("valid.txt", kg.valid(i));
    write("test.txt", kg.test(i));
  }
}

std::vector<SnapshotDelta> compute_deltas(const GrowingKG& kg) {
  std::vector<Snapshot> snaps;
  for (int i = 1; i <= kg.snapshot_count(); ++i) {
    Snapshot s;
    s.index = i;
    s.train = kg.train(i);
    s.valid = kg.valid(i);
    s.test = kg.test(i);
    s.entity_count = kg.entity_count(i);
    s.relation_count = kg.relation_count(i);
    snaps.push_back(std::move(s));
  }
  std::size_t prev_e = 0, prev_r = 0;
  for (const auto& s : snaps) {
    if (s.entity_count < prev_e || s.relation_count < prev_r)
      throw InvariantViolation("vocabulary shrank at snapshot " + std::to_string(s.index));
    prev_e = s.entity_count;
    prev_r = s.relation_count;
  }
  return deltas_from(snaps);
}

TripleClass classify_triple(const Triple& t, std::size_t prior_entity_count,
                            std::size_t prior_relation_count,
                            const TripleSet& prior_facts) {
  bool head_new = static_cast<std::size_t>(t.head) >= prior_entity_count;
  bool tail_new = static_cast<std::size_t>(t.tail) >= prior_entity_count;
  bool rel_new = static_cast<std::size_t>(t.relation) >= prior_relation_count;
  if (head_new && tail_new && rel_new) return TripleClass::TotallyNew;
  if (prior_facts.count(t)) return TripleClass::Static;
  return TripleClass::PartiallyNew;
}

TripleSet accumulated_filter_set(const GrowingKG& kg, int i) {
  if (i < 1 || i > kg.snapshot_count())
    throw IndexError("filter-set snapshot index out of range");
  TripleSet out;
  for (int j = 1; j <= i; ++j) {
    for (const auto& t : kg.train(j)) out.insert(t);
    for (const auto& t : kg.valid(j)) out.insert(t);
    for (const auto& t : kg.test(j)) out.insert(t);
  }
  return out;
}

}  // namespace mfckge
