#pragma once

#include <filesystem>
#include <json.hpp>
#include <span>
#include <string>
#include <vector>

#include "mfckge/common.hpp"

namespace mfckge {

enum class GrowthPattern { Equal, Higher, Lower, EntityGrowth, RelationGrowth, Hybrid, Facet };

GrowthPattern pattern_from_string(const std::string& name);
std::string pattern_to_string(GrowthPattern pattern);

struct SynthSpec {
  int n_snapshots = 3;
  GrowthPattern pattern = GrowthPattern::Facet;
  int n_entities = 500;
  int n_relations = 30;
  int n_domains = 3;          // Facet only
  std::vector<int> schedule;  // new facts per snapshot
  std::uint64_t seed = 1;
  double hub_fraction = 0.5;  // Facet: share of base entities that keep gaining facets
  // Dominant domain per snapshot; empty means round-robin (i-1) mod n_domains.
  std::vector<int> domain_schedule;
  // Share of hubs whose snapshot-i triples reuse the previous snapshot's
  // dominant domain instead of the current one; empty means all zeros.
  std::vector<double> repeat_fraction;

  void validate() const;
  nlohmann::json to_json() const;
  static SynthSpec from_json(const nlohmann::json& j);
};

// Writes `<out>/<i>/{train,valid,test}.txt` for i = 0..n-1, `spec.json`, and
// (Facet) `domains.csv`. Byte-identical for identical spec + seed.
void synthesize_growing_kg(const SynthSpec& spec, const std::filesystem::path& out);

struct StatsRow {
  int snapshot = 0;        // 1-based
  std::size_t n_entities = 0;
  std::size_t n_relations = 0;
  std::size_t n_new_facts = 0;
};

std::vector<StatsRow> dataset_stats(const std::filesystem::path& root);
std::string stats_csv(std::span<const StatsRow> rows);

}  // namespace mfckge
