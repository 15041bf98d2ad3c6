#pragma once

#include <functional>
#include <json.hpp>
#include <span>
#include <string>
#include <vector>

#include "mfckge/decoupler.hpp"
#include "mfckge/inference.hpp"
#include "mfckge/kg.hpp"
#include "mfckge/store.hpp"
#include "mfckge/trainer.hpp"

namespace mfckge {

struct MetricsCell {
  int model_snapshot = 0;
  int test_snapshot = 0;  // 0 means the aggregate over all accumulated queries
  long n_queries = 0;
  double mrr = 0.0;
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;
};

struct SnapshotEvaluation {
  int model_snapshot = 0;
  std::vector<MetricsCell> cells;  // Q_1..Q_i rows, aggregate last
  long skipped = 0;                // queries not evaluable against this model

  const MetricsCell& aggregate() const { return cells.back(); }
};

struct MetricsMatrix {
  std::vector<SnapshotEvaluation> rows;  // one per model snapshot, ascending
};

struct LifelongResult {
  MetricsMatrix metrics;
  std::vector<TrainReport> train_reports;
  std::vector<DecouplingStats> decoupling;
};

// Filtered link prediction of every accumulated test fact (both query
// directions) against the model sealed through snapshot i.
SnapshotEvaluation evaluate_snapshot(const GrowingKG& kg, const EmbeddingStore& store, int i,
                                     const TrainConfig& config);

// Full continual pipeline: per snapshot, train, consolidate, evaluate.
// `on_progress` (optional) sees the partial result after each snapshot so
// callers can persist the grid before a later stage can fail.
LifelongResult lifelong_run(const GrowingKG& kg, EmbeddingStore& store, const TrainConfig& config,
                            const std::function<void(const LifelongResult&)>& on_progress = {});

std::string metrics_csv(const MetricsMatrix& matrix);

// Mean importance weight each embedding space receives, averaged over the
// queries of each accumulated test set; rows = spaces, columns = Q_j.
std::string export_importance_heatmap(const GrowingKG& kg, const EmbeddingStore& store,
                                      const TrainConfig& config);

// theta sweep on a keep-dropped store: recompress a copy, re-evaluate, report
// `theta,compression_ratio,mrr` per row.
std::string compression_report(const GrowingKG& kg, const EmbeddingStore& store,
                               const TrainConfig& config, std::span<const double> thetas);

std::uint64_t dataset_checksum(const GrowingKG& kg);

nlohmann::json config_to_json(const TrainConfig& config);
TrainConfig config_from_json(const nlohmann::json& j);

nlohmann::json run_manifest(const TrainConfig& config, std::uint64_t dataset_checksum,
                            std::uint64_t store_hash);

}  // namespace mfckge
