#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mfckge/common.hpp"

namespace mfckge {

// One snapshot of a growing KG. `train`/`valid`/`test` hold the *new* facts
// of this snapshot (the 3:1:1 split of delta-T_i); vocabularies are cumulative.
// Ids are dense and assigned in first-seen order across snapshots, so E_i is
// exactly the id range [0, entity_count) and likewise for relations.
struct Snapshot {
  int index = 0;  // 1-based
  std::vector<Triple> train;
  std::vector<Triple> valid;
  std::vector<Triple> test;
  std::size_t entity_count = 0;    // |E_i|
  std::size_t relation_count = 0;  // |R_i|
};

struct SnapshotDelta {
  std::vector<EntityId> new_entities;     // delta-E_i, sorted
  std::vector<RelationId> new_relations;  // delta-R_i, sorted
  std::vector<Triple> new_facts;          // delta-T_i
  std::vector<Triple> train_delta;        // delta-D_i (training triples not seen in any earlier split)
};

enum class TripleClass { TotallyNew, PartiallyNew, Static };

enum class Split { Train, Valid, Test, TrainDelta };

// Records which splits were touched, keyed by (split, snapshot index).
// Installed by tests to check the protocol isolation of training.
struct AccessLog {
  std::map<std::pair<int, int>, long> counts;  // (split as int, snapshot) -> reads
  void record(Split s, int snapshot) { ++counts[{static_cast<int>(s), snapshot}]; }
  long reads(Split s, int snapshot) const {
    auto it = counts.find({static_cast<int>(s), snapshot});
    return it == counts.end() ? 0 : it->second;
  }
  void clear() { counts.clear(); }
};

class GrowingKG {
 public:
  GrowingKG() = default;

  // Builds from in-memory snapshots; validates monotone vocabularies and
  // split disjointness, then computes deltas. Labels may be empty (synthetic).
  static GrowingKG from_snapshots(std::vector<Snapshot> snapshots,
                                  std::vector<std::string> entity_labels,
                                  std::vector<std::string> relation_labels);

  int snapshot_count() const { return static_cast<int>(snapshots_.size()); }

  const std::vector<Triple>& train(int i) const { touch(Split::Train, i); return at(i).train; }
  const std::vector<Triple>& valid(int i) const { touch(Split::Valid, i); return at(i).valid; }
  const std::vector<Triple>& test(int i) const { touch(Split::Test, i); return at(i).test; }
  const SnapshotDelta& delta(int i) const {
    touch(Split::TrainDelta, i);
    check_range(i);
    return deltas_[static_cast<std::size_t>(i - 1)];
  }

  std::size_t entity_count(int i) const { return at(i).entity_count; }
  std::size_t relation_count(int i) const { return at(i).relation_count; }
  std::size_t total_entities() const { return entity_labels_.size(); }
  std::size_t total_relations() const { return relation_labels_.size(); }

  const std::string& entity_label(EntityId e) const { return entity_labels_.at(static_cast<std::size_t>(e)); }
  const std::string& relation_label(RelationId r) const { return relation_labels_.at(static_cast<std::size_t>(r)); }
  std::optional<EntityId> find_entity(const std::string& label) const;
  std::optional<RelationId> find_relation(const std::string& label) const;

  // First snapshot index in which the entity id is part of the vocabulary.
  int first_snapshot_of_entity(EntityId e) const;

  void set_access_log(AccessLog* log) const { log_ = log; }

 private:
  const Snapshot& at(int i) const {
    check_range(i);
    return snapshots_[static_cast<std::size_t>(i - 1)];
  }
  void check_range(int i) const {
    if (i < 1 || i > snapshot_count())
      throw IndexError("snapshot index " + std::to_string(i) + " out of range [1, " +
                       std::to_string(snapshot_count()) + "]");
  }
  void touch(Split s, int i) const {
    if (log_ != nullptr) log_->record(s, i);
  }

  std::vector<Snapshot> snapshots_;
  std::vector<SnapshotDelta> deltas_;
  std::vector<std::string> entity_labels_;
  std::vector<std::string> relation_labels_;
  mutable AccessLog* log_ = nullptr;
};

// Loads `<root>/<i>/train.txt|valid.txt|test.txt` for i = 0..n-1. Lines are
// `head<TAB>relation<TAB>tail`; blank lines and lines starting with '#' are
// skipped. Labels are interned to dense ids in first-seen order.
GrowingKG load_growing_kg(const std::filesystem::path& dataset_root);

// Writes the same layout back; load(save(kg)) reproduces the structure.
void save_growing_kg(const GrowingKG& kg, const std::filesystem::path& dataset_root);

// Per-snapshot deltas recomputed from the splits (independent of the cached
// ones inside GrowingKG).
std::vector<SnapshotDelta> compute_deltas(const GrowingKG& kg);

// TotallyNew iff head, tail and relation are all outside the prior
// vocabularies; Static iff the triple already existed; else PartiallyNew.
// With dense first-seen ids, membership in the prior vocabulary is id < count.
TripleClass classify_triple(const Triple& t, std::size_t prior_entity_count,
                            std::size_t prior_relation_count,
                            const TripleSet& prior_facts);

// Union of train/valid/test over snapshots 1..i, deduplicated.
TripleSet accumulated_filter_set(const GrowingKG& kg, int i);

}  // namespace mfckge
