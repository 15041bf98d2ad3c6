#include "mfckge/evaluator.hpp"

#include <algorithm>
#include <cstdio>
#include <memory>
#include <thread>

namespace mfckge {

namespace {

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct Tally {
  long n = 0;
  double rr = 0.0;
  long h1 = 0, h3 = 0, h10 = 0;
  long skipped = 0;
};

struct PendingQuery {
  Query query;
  EntityId gold = 0;
  int test_snapshot = 0;
};

MetricsCell cell_from(const Tally& t, int model_snapshot, int test_snapshot) {
  MetricsCell c;
  c.model_snapshot = model_snapshot;
  c.test_snapshot = test_snapshot;
  c.n_queries = t.n;
  if (t.n > 0) {
    c.mrr = t.rr / static_cast<double>(t.n);
    c.hits1 = static_cast<double>(t.h1) / static_cast<double>(t.n);
    c.hits3 = static_cast<double>(t.h3) / static_cast<double>(t.n);
    c.hits10 = static_cast<double>(t.h10) / static_cast<double>(t.n);
  }
  return c;
}

}  // namespace

SnapshotEvaluation evaluate_snapshot(const GrowingKG& kg, const EmbeddingStore& store, int i,
                                     const TrainConfig& config) {
  if (i < 1 || i > kg.snapshot_count())
    throw IndexError("evaluate_snapshot: snapshot " + std::to_string(i) + " out of range");
  if (store.sealed_through < i)
    throw ProtocolError("evaluate_snapshot: store sealed through " +
                        std::to_string(store.sealed_through) + ", need " + std::to_string(i));

  const TripleSet filter = accumulated_filter_set(kg, i);
  std::vector<PendingQuery> queries;
  for (int j = 1; j <= i; ++j) {
    for (const Triple& t : kg.test(j)) {
      queries.push_back({Query{Direction::Tail, t.head, t.relation, i}, t.tail, j});
      queries.push_back({Query{Direction::Head, t.tail, t.relation, i}, t.head, j});
    }
  }

  const int workers =
      std::max(1, std::min(config.workers, static_cast<int>(queries.empty() ? 1 : queries.size())));
  std::vector<std::vector<Tally>> tallies(static_cast<std::size_t>(workers),
                                          std::vector<Tally>(static_cast<std::size_t>(i + 1)));
  std::vector<std::unique_ptr<InferenceContext>> contexts;
  contexts.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w)
    contexts.push_back(std::make_unique<InferenceContext>(kg, store, config));

  auto run_chunk = [&](int w, std::size_t lo, std::size_t hi) {
    for (std::size_t q = lo; q < hi; ++q) {
      const PendingQuery& pq = queries[q];
      Tally& t = tallies[static_cast<std::size_t>(w)][static_cast<std::size_t>(pq.test_snapshot)];
      auto outcome = contexts[static_cast<std::size_t>(w)]->rank_query(pq.query, pq.gold, filter, 1);
      if (!outcome) {
        ++t.skipped;
        continue;
      }
      ++t.n;
      t.rr += 1.0 / static_cast<double>(outcome->rank);
      if (outcome->rank <= 1) ++t.h1;
      if (outcome->rank <= 3) ++t.h3;
      if (outcome->rank <= 10) ++t.h10;
    }
  };

  if (workers == 1) {
    run_chunk(0, 0, queries.size());
  } else {
    std::vector<std::thread> threads;
    const std::size_t total = queries.size();
    for (int w = 0; w < workers; ++w) {
      std::size_t lo = total * static_cast<std::size_t>(w) / static_cast<std::size_t>(workers);
      std::size_t hi = total * static_cast<std::size_t>(w + 1) / static_cast<std::size_t>(workers);
      threads.emplace_back(run_chunk, w, lo, hi);
    }
    for (auto& th : threads) th.join();
  }

  // Merge in worker order so a given worker count reduces the same way every run.
  std::vector<Tally> by_test(static_cast<std::size_t>(i + 1));
  Tally total;
  for (int w = 0; w < workers; ++w) {
    for (int j = 1; j <= i; ++j) {
      const Tally& src = tallies[static_cast<std::size_t>(w)][static_cast<std::size_t>(j)];
      Tally& dst = by_test[static_cast<std::size_t>(j)];
      dst.n += src.n;
      dst.rr += src.rr;
      dst.h1 += src.h1;
      dst.h3 += src.h3;
      dst.h10 += src.h10;
      dst.skipped += src.skipped;
    }
  }
  SnapshotEvaluation eval;
  eval.model_snapshot = i;
  for (int j = 1; j <= i; ++j) {
    const Tally& t = by_test[static_cast<std::size_t>(j)];
    eval.cells.push_back(cell_from(t, i, j));
    total.n += t.n;
    total.rr += t.rr;
    total.h1 += t.h1;
    total.h3 += t.h3;
    total.h10 += t.h10;
    eval.skipped += t.skipped;
  }
  eval.cells.push_back(cell_from(total, i, 0));
  return eval;
}

LifelongResult lifelong_run(const GrowingKG& kg, EmbeddingStore& store, const TrainConfig& config,
                            const std::function<void(const LifelongResult&)>& on_progress) {
  config.validate();
  if (store.space_count() != 0 || store.sealed_through != 0)
    throw ProtocolError("lifelong_run: store is not fresh");
  store.dim = config.dim;
  store.keep_dropped = config.keep_dropped;

  LifelongResult result;
  for (int i = 1; i <= kg.snapshot_count(); ++i) {
    result.train_reports.push_back(train_snapshot(store, kg, i, config));
    result.decoupling.push_back(
        consolidate_snapshot(store, kg, i, config.theta, config.no_decoupling));
    result.metrics.rows.push_back(evaluate_snapshot(kg, store, i, config));
    if (on_progress) on_progress(result);
  }
  return result;
}

std::string metrics_csv(const MetricsMatrix& matrix) {
  std::string out = "model_snapshot,test_snapshot,n_queries,mrr,hits1,hits3,hits10\n";
  for (const auto& row : matrix.rows) {
    for (const auto& c : row.cells) {
      out += std::to_string(c.model_snapshot) + ",";
      out += c.test_snapshot == 0 ? std::string("all") : std::to_string(c.test_snapshot);
      out += "," + std::to_string(c.n_queries) + "," + fmt17(c.mrr) + "," + fmt17(c.hits1) +
             "," + fmt17(c.hits3) + "," + fmt17(c.hits10) + "\n";
    }
  }
  return out;
}

std::string export_importance_heatmap(const GrowingKG& kg, const EmbeddingStore& store,
                                      const TrainConfig& config) {
  const int n = kg.snapshot_count();
  if (store.sealed_through < n)
    throw ProtocolError("export_importance_heatmap: store is not fully trained");
  InferenceContext ctx(kg, store, config);

  // sums[j][i] = total beta mass on space i+1 over Q_j's queries
  std::vector<std::vector<double>> sums(static_cast<std::size_t>(n + 1),
                                        std::vector<double>(static_cast<std::size_t>(n), 0.0));
  std::vector<long> counts(static_cast<std::size_t>(n + 1), 0);
  for (int j = 1; j <= n; ++j) {
    for (const Triple& t : kg.test(j)) {
      if (store.relations.find(t.relation) == store.relations.end()) continue;
      for (EntityId anchor : {t.head, t.tail}) {
        const ImportanceProfile& p = ctx.importance(anchor, t.relation, n);
        for (int i = 0; i < n; ++i)
          sums[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] +=
              p.beta[static_cast<std::size_t>(i)];
        ++counts[static_cast<std::size_t>(j)];
      }
    }
  }

  std::string out = "space";
  for (int j = 1; j <= n; ++j) out += ",q" + std::to_string(j);
  out += "\n";
  for (int i = 1; i <= n; ++i) {
    out += std::to_string(i);
    for (int j = 1; j <= n; ++j) {
      double mean = counts[static_cast<std::size_t>(j)] == 0
                        ? 0.0
                        : sums[static_cast<std::size_t>(j)][static_cast<std::size_t>(i - 1)] /
                              static_cast<double>(counts[static_cast<std::size_t>(j)]);
      out += "," + fmt17(mean);
    }
    out += "\n";
  }
  return out;
}

std::string compression_report(const GrowingKG& kg, const EmbeddingStore& store,
                               const TrainConfig& config, std::span<const double> thetas) {
  const int n = kg.snapshot_count();
  std::string out = "theta,compression_ratio,mrr\n";
  for (double theta : thetas) {
    EmbeddingStore copy = store;
    auto stats = recompress(copy, theta);
    SnapshotEvaluation eval = evaluate_snapshot(kg, copy, n, config);
    out += fmt17(theta) + "," + fmt17(stats.back().compression_ratio) + "," +
           fmt17(eval.aggregate().mrr) + "\n";
  }
  return out;
}

std::uint64_t dataset_checksum(const GrowingKG& kg) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  int n = kg.snapshot_count();
  h = fnv1a(&n, sizeof(n), h);
  auto hash_triples = [&h](const std::vector<Triple>& ts) {
    std::size_t sz = ts.size();
    h = fnv1a(&sz, sizeof(sz), h);
    for (const Triple& t : ts) {
      h = fnv1a(&t.head, sizeof(t.head), h);
      h = fnv1a(&t.relation, sizeof(t.relation), h);
      h = fnv1a(&t.tail, sizeof(t.tail), h);
    }
  };
  for (int i = 1; i <= n; ++i) {
    std::size_t ec = kg.entity_count(i), rc = kg.relation_count(i);
    h = fnv1a(&ec, sizeof(ec), h);
    h = fnv1a(&rc, sizeof(rc), h);
    hash_triples(kg.train(i));
    hash_triples(kg.valid(i));
    hash_triples(kg.test(i));
  }
  for (std::size_t e = 0; e < kg.total_entities(); ++e) {
    const std::string& s = kg.entity_label(static_cast<EntityId>(e));
    h = fnv1a(s.data(), s.size(), h);
  }
  for (std::size_t r = 0; r < kg.total_relations(); ++r) {
    const std::string& s = kg.relation_label(static_cast<RelationId>(r));
    h = fnv1a(s.data(), s.size(), h);
  }
  return h;
}

nlohmann::json config_to_json(const TrainConfig& c) {
  return nlohmann::json{{"dim", c.dim},
                        {"margin", c.margin},
                        {"norm_p", c.norm_p},
                        {"alpha", c.alpha},
                        {"eta", c.eta},
                        {"learning_rate", c.learning_rate},
                        {"batch_size", c.batch_size},
                        {"negatives_per_positive", c.negatives_per_positive},
                        {"max_epochs", c.max_epochs},
                        {"patience", c.patience},
                        {"eval_every", c.eval_every},
                        {"seed", c.seed},
                        {"theta", c.theta},
                        {"topk", c.topk},
                        {"keep_dropped", c.keep_dropped},
                        {"no_decoupling", c.no_decoupling},
                        {"uniform_importance", c.uniform_importance},
                        {"renormalize", c.renormalize},
                        {"anchor_role_both", c.anchor_role_both},
                        {"entity_norm", c.entity_norm},
                        {"top_m", c.top_m},
                        {"workers", c.workers}};
}

TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.dim = j.value("dim", c.dim);
  c.margin = j.value("margin", c.margin);
  c.norm_p = j.value("norm_p", c.norm_p);
  c.alpha = j.value("alpha", c.alpha);
  c.eta = j.value("eta", c.eta);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.negatives_per_positive = j.value("negatives_per_positive", c.negatives_per_positive);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.seed = j.value("seed", c.seed);
  c.theta = j.value("theta", c.theta);
  c.topk = j.value("topk", c.topk);
  c.keep_dropped = j.value("keep_dropped", c.keep_dropped);
  c.no_decoupling = j.value("no_decoupling", c.no_decoupling);
  c.uniform_importance = j.value("uniform_importance", c.uniform_importance);
  c.renormalize = j.value("renormalize", c.renormalize);
  c.anchor_role_both = j.value("anchor_role_both", c.anchor_role_both);
  c.entity_norm = j.value("entity_norm", c.entity_norm);
  c.top_m = j.value("top_m", c.top_m);
  c.workers = j.value("workers", c.workers);
  c.validate();
  return c;
}

nlohmann::json run_manifest(const TrainConfig& config, std::uint64_t dataset_checksum,
                            std::uint64_t store_hash) {
  nlohmann::json m;
  m["config"] = config_to_json(config);
  m["seed"] = config.seed;
  m["dataset_checksum"] = dataset_checksum;
  m["checkpoint_hash"] = store_hash;
  return m;
}

}  // namespace mfckge
