// mfckge — continual knowledge-graph embedding from the command line.
//
// Subcommands: stats, synthesize, train, evaluate, recompress, predict,
// explain, report heatmap, report compression. Runs that produce artifacts
// also write a run manifest (run.json) so they can be replayed bit-for-bit.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include <json.hpp>
#include "mfckge/decoupler.hpp"
#include "mfckge/evaluator.hpp"
#include "mfckge/inference.hpp"
#include "mfckge/kg.hpp"
#include "mfckge/oracle.hpp"
#include "mfckge/store.hpp"
#include "mfckge/synthgen.hpp"
#include "mfckge/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mfckge;

namespace {

json load_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return j;
}

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty())
    std::cout << text;
  else
    write_text_file(out_path, text);
}

// All knobs a run can carry, bound to CLI flags. Final values resolve as:
// explicit flag > manifest (explicit --from-manifest, else run.json beside
// the checkpoint) > MFCKGE_SEED (seed only) > built-in default.
struct ConfigFlags {
  TrainConfig flags;  // values written by CLI11
  bool no_renorm = false;
  bool head_only = false;
  bool no_entity_norm = false;
  bool print_config = false;

  void attach(CLI::App* cmd, bool training_knobs) {
    if (training_knobs) {
      // Flags may also arrive from a key=value file; explicit flags win.
      cmd->set_config("--config", "", "key=value config file (UTF-8)");
      cmd->add_flag("--print-config", print_config,
                    "print every option with its effective default and exit")
          ->configurable(false);
      cmd->add_option("--dim", flags.dim, "embedding width")->capture_default_str();
      cmd->add_option("--margin", flags.margin, "ranking margin gamma")->capture_default_str();
      cmd->add_option("--alpha", flags.alpha, "relation-alignment weight")->capture_default_str();
      cmd->add_option("--eta", flags.eta, "neighborhood-reconstruction weight")
          ->capture_default_str();
      cmd->add_option("--lr", flags.learning_rate, "Adam learning rate")->capture_default_str();
      cmd->add_option("--batch", flags.batch_size, "minibatch size")->capture_default_str();
      cmd->add_option("--negatives", flags.negatives_per_positive, "negatives per positive")
          ->capture_default_str();
      cmd->add_option("--epochs", flags.max_epochs, "max epochs per snapshot")
          ->capture_default_str();
      cmd->add_option("--patience", flags.patience, "early-stop patience (validation checks)")
          ->capture_default_str();
      cmd->add_option("--eval-every", flags.eval_every, "epochs between validation checks")
          ->capture_default_str();
      cmd->add_option("--theta", flags.theta, "semantic decoupling threshold")
          ->capture_default_str();
      cmd->add_flag("--keep-dropped", flags.keep_dropped,
                    "retain raw vectors of dropped entries (reversible compression)");
      cmd->add_flag("--no-decoupling", flags.no_decoupling, "ablation: skip semantic decoupling");
      cmd->add_flag("--no-entity-norm", no_entity_norm,
                    "skip the per-step unit-sphere projection of entity rows");
    }
    cmd->add_option("--norm", flags.norm_p, "score norm p (1 or 2)")->capture_default_str();
    cmd->add_option("--k", flags.topk, "Top-k for relation-similarity averaging")
        ->capture_default_str();
    cmd->add_option("--seed", flags.seed, "run seed")->capture_default_str();
    cmd->add_flag("--uniform-importance", flags.uniform_importance,
                  "ablation: equal weight for every snapshot space");
    cmd->add_flag("--no-renorm", no_renorm,
                  "aggregate without renormalizing over contributing spaces");
    cmd->add_flag("--head-only", head_only,
                  "candidate relations from head-role occurrences only");
    cmd->add_option("--workers", flags.workers, "evaluation worker threads")
        ->capture_default_str();
  }

  TrainConfig resolve(const CLI::App* cmd, const json* manifest) const {
    TrainConfig cfg;
    if (manifest) {
      cfg = config_from_json(manifest->at("config"));
    } else if (const char* env = std::getenv("MFCKGE_SEED")) {
      cfg.seed = std::strtoll(env, nullptr, 10);
    }
    auto passed = [&](const std::string& name) {
      return cmd->get_option_no_throw(name) && cmd->count(name) > 0;
    };
    if (passed("--dim")) cfg.dim = flags.dim;
    if (passed("--margin")) cfg.margin = flags.margin;
    if (passed("--norm")) cfg.norm_p = flags.norm_p;
    if (passed("--alpha")) cfg.alpha = flags.alpha;
    if (passed("--eta")) cfg.eta = flags.eta;
    if (passed("--lr")) cfg.learning_rate = flags.learning_rate;
    if (passed("--batch")) cfg.batch_size = flags.batch_size;
    if (passed("--negatives")) cfg.negatives_per_positive = flags.negatives_per_positive;
    if (passed("--epochs")) cfg.max_epochs = flags.max_epochs;
    if (passed("--patience")) cfg.patience = flags.patience;
    if (passed("--eval-every")) cfg.eval_every = flags.eval_every;
    if (passed("--seed")) cfg.seed = flags.seed;
    if (passed("--theta")) cfg.theta = flags.theta;
    if (passed("--k")) cfg.topk = flags.topk;
    if (passed("--keep-dropped")) cfg.keep_dropped = flags.keep_dropped;
    if (passed("--no-decoupling")) cfg.no_decoupling = flags.no_decoupling;
    if (passed("--no-entity-norm")) cfg.entity_norm = !no_entity_norm;
    if (passed("--uniform-importance")) cfg.uniform_importance = flags.uniform_importance;
    if (passed("--no-renorm")) cfg.renormalize = !no_renorm;
    if (passed("--head-only")) cfg.anchor_role_both = !head_only;
    if (passed("--workers")) cfg.workers = flags.workers;
    cfg.validate();
    return cfg;
  }
};

// Manifest lookup: explicit --from-manifest wins; otherwise run.json beside
// the checkpoint (written by `train`) supplies defaults when present.
std::optional<json> find_manifest(const std::string& from_manifest, const fs::path& ckpt) {
  if (!from_manifest.empty()) return load_json_file(from_manifest);
  if (!ckpt.empty() && fs::exists(ckpt / "run.json")) return load_json_file(ckpt / "run.json");
  return std::nullopt;
}

struct ParsedQuery {
  Direction direction = Direction::Tail;
  EntityId anchor = -1;
  RelationId relation = -1;
  std::optional<EntityId> gold;
};

ParsedQuery parse_query(const GrowingKG& kg, const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string piece;
  while (std::getline(ss, piece, ',')) parts.push_back(piece);
  if (parts.size() != 3)
    throw ConfigError("query must be \"h,r,?\", \"?,r,t\" or \"h,r,t\" — got \"" + text + "\"");

  auto entity = [&](const std::string& label) {
    auto id = kg.find_entity(label);
    if (!id) throw KeyError("unknown entity \"" + label + "\"");
    return *id;
  };
  auto rel = kg.find_relation(parts[1]);
  if (!rel) throw KeyError("unknown relation \"" + parts[1] + "\"");

  ParsedQuery q;
  q.relation = *rel;
  if (parts[0] == "?" && parts[2] == "?")
    throw ConfigError("query cannot have two wildcards: \"" + text + "\"");
  if (parts[0] == "?") {
    q.direction = Direction::Head;
    q.anchor = entity(parts[2]);
  } else if (parts[2] == "?") {
    q.direction = Direction::Tail;
    q.anchor = entity(parts[0]);
  } else {
    q.direction = Direction::Tail;
    q.anchor = entity(parts[0]);
    q.gold = entity(parts[2]);
  }
  return q;
}

void verify_dataset(const json& manifest, const GrowingKG& kg) {
  if (!manifest.contains("dataset_checksum")) return;
  auto expect = manifest["dataset_checksum"].get<std::uint64_t>();
  auto got = dataset_checksum(kg);
  if (expect != got)
    throw ConfigError("dataset does not match manifest (checksum " + std::to_string(got) +
                      " != " + std::to_string(expect) + ")");
}

int default_workers() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

// ---------------------------------------------------------------------------

void cmd_stats(const std::string& dataset) {
  auto rows = dataset_stats(dataset);
  std::cout << stats_csv(rows);
}

void cmd_synthesize(const std::string& spec_path, const std::string& out) {
  SynthSpec spec = SynthSpec::from_json(load_json_file(spec_path));
  synthesize_growing_kg(spec, out);
  auto rows = dataset_stats(out);
  std::cout << stats_csv(rows);
}

void cmd_train(const CLI::App* cmd, const ConfigFlags& cf, const std::string& dataset,
               const std::string& out, const std::string& from_manifest) {
  std::optional<json> manifest;
  if (!from_manifest.empty()) manifest = load_json_file(from_manifest);
  TrainConfig cfg = cf.resolve(cmd, manifest ? &*manifest : nullptr);

  GrowingKG kg = load_growing_kg(dataset);
  if (manifest) verify_dataset(*manifest, kg);

  EmbeddingStore store;
  store.dim = cfg.dim;
  store.keep_dropped = cfg.keep_dropped;

  json train_log = json::array();
  std::vector<DecouplingStats> decoupling;
  for (int i = 1; i <= kg.snapshot_count(); ++i) {
    TrainReport report = train_snapshot(store, kg, i, cfg);
    decoupling.push_back(consolidate_snapshot(store, kg, i, cfg.theta, cfg.no_decoupling));
    json r;
    r["snapshot"] = report.snapshot;
    r["no_op"] = report.no_op;
    r["epochs_run"] = report.epochs_run;
    r["wall_seconds"] = report.wall_seconds;
    r["total_loss"] = report.total_trace;
    r["valid_mrr"] = report.valid_mrr_trace;
    train_log.push_back(std::move(r));
    std::cout << "snapshot " << i << ": " << report.epochs_run << " epochs, ratio "
              << decoupling.back().compression_ratio << "\n";
  }

  save_checkpoint(store, out);
  json run = run_manifest(cfg, dataset_checksum(kg), store_content_hash(store));
  run["command"] = "train";
  run["dataset"] = dataset;
  write_text_file(fs::path(out) / "run.json", run.dump(2) + "\n");
  write_text_file(fs::path(out) / "train.json", train_log.dump(2) + "\n");
  write_text_file(fs::path(out) / "decoupling.csv", decoupling_stats_csv(decoupling));
  std::cout << "checkpoint written to " << out << "\n";
}

void cmd_evaluate(const CLI::App* cmd, const ConfigFlags& cf, const std::string& dataset,
                  const std::string& ckpt, const std::string& out,
                  const std::string& from_manifest) {
  auto manifest = find_manifest(from_manifest, ckpt);
  TrainConfig cfg = cf.resolve(cmd, manifest ? &*manifest : nullptr);
  if (!cmd->count("--workers") && !manifest) cfg.workers = default_workers();

  GrowingKG kg = load_growing_kg(dataset);
  EmbeddingStore store = load_checkpoint(ckpt);
  if (!from_manifest.empty()) {
    verify_dataset(*manifest, kg);
    if (manifest->contains("checkpoint_hash") &&
        (*manifest)["checkpoint_hash"].get<std::uint64_t>() != store_content_hash(store))
      throw ConfigError("checkpoint does not match manifest");
  }

  MetricsMatrix matrix;
  for (int i = 1; i <= store.sealed_through; ++i)
    matrix.rows.push_back(evaluate_snapshot(kg, store, i, cfg));

  std::string csv = metrics_csv(matrix);
  write_text_file(fs::path(out) / "metrics.csv", csv);
  json run = run_manifest(cfg, dataset_checksum(kg), store_content_hash(store));
  run["command"] = "evaluate";
  run["dataset"] = dataset;
  run["checkpoint"] = ckpt;
  write_text_file(fs::path(out) / "run.json", run.dump(2) + "\n");

  if (!matrix.rows.empty()) {
    const auto& last = matrix.rows.back().aggregate();
    std::cout << "aggregate at snapshot " << matrix.rows.back().model_snapshot << ": MRR "
              << last.mrr << ", Hits@10 " << last.hits10 << " over " << last.n_queries
              << " queries\n";
  }
  std::cout << "metrics written to " << (fs::path(out) / "metrics.csv").string() << "\n";
}

void cmd_recompress(const std::string& ckpt, double theta, const std::string& out) {
  EmbeddingStore store = load_checkpoint(ckpt);
  auto stats = recompress(store, theta);
  fs::path dest = out.empty() ? fs::path(ckpt) : fs::path(out);
  save_checkpoint(store, dest);
  if (fs::exists(fs::path(ckpt) / "run.json")) {
    json run = load_json_file(fs::path(ckpt) / "run.json");
    run["recompress_theta"] = theta;
    run["checkpoint_hash"] = store_content_hash(store);
    write_text_file(dest / "run.json", run.dump(2) + "\n");
  }
  std::cout << decoupling_stats_csv(stats);
}

void cmd_predict(const CLI::App* cmd, const ConfigFlags& cf, const std::string& dataset,
                 const std::string& ckpt, const std::string& query_text, int top_m, int snapshot,
                 bool verify, bool explain) {
  auto manifest = find_manifest("", ckpt);
  TrainConfig cfg = cf.resolve(cmd, manifest ? &*manifest : nullptr);

  GrowingKG kg = load_growing_kg(dataset);
  EmbeddingStore store = load_checkpoint(ckpt);
  ParsedQuery parsed = parse_query(kg, query_text);
  int i = snapshot > 0 ? snapshot : store.sealed_through;
  Query query{parsed.direction, parsed.anchor, parsed.relation, i};

  InferenceContext ctx(kg, store, cfg);
  if (explain) {
    std::cout << ctx.explain_query(query, top_m).dump(2) << "\n";
    return;
  }

  TripleSet filter = accumulated_filter_set(kg, i);
  EntityId probe = -1;
  if (parsed.gold) {
    probe = *parsed.gold;
  } else {
    // No gold given: rank the model's own top candidate when verifying.
    const auto& profile = ctx.importance(query.anchor, query.relation, i);
    double best = 0.0;
    for (EntityId e = 0; e < static_cast<EntityId>(kg.entity_count(i)); ++e) {
      auto s = ctx.aggregate_score(query, e, profile);
      if (s && (probe < 0 || *s > best)) {
        probe = e;
        best = *s;
      }
    }
  }

  auto outcome = ctx.rank_query(query, probe < 0 ? 0 : probe, filter, top_m);
  if (!outcome) throw ResolutionError("query cannot be scored at snapshot " + std::to_string(i));

  for (const auto& [e, score] : outcome->top)
    std::cout << kg.entity_label(e) << "\t" << score << "\n";
  if (parsed.gold)
    std::cout << "rank of " << kg.entity_label(*parsed.gold) << ": " << outcome->rank << "\n";

  if (verify) {
    auto oracle_rank = oracle::brute_force_rank(query, probe, filter, kg, store, cfg);
    long main_rank = outcome->rank;
    std::cout << "verify " << kg.entity_label(probe) << ": main rank " << main_rank
              << ", reference rank " << (oracle_rank ? std::to_string(*oracle_rank) : "n/a")
              << "\n";
    if (!oracle_rank || *oracle_rank != main_rank)
      throw InvariantViolation("rank disagreement between engine and reference");
  }
}

void cmd_report_heatmap(const CLI::App* cmd, const ConfigFlags& cf, const std::string& dataset,
                        const std::string& ckpt, const std::string& out) {
  auto manifest = find_manifest("", ckpt);
  TrainConfig cfg = cf.resolve(cmd, manifest ? &*manifest : nullptr);
  GrowingKG kg = load_growing_kg(dataset);
  EmbeddingStore store = load_checkpoint(ckpt);
  emit(export_importance_heatmap(kg, store, cfg), out);
}

void cmd_report_compression(const CLI::App* cmd, const ConfigFlags& cf, const std::string& dataset,
                            const std::string& ckpt, std::vector<double> thetas,
                            const std::string& out) {
  auto manifest = find_manifest("", ckpt);
  TrainConfig cfg = cf.resolve(cmd, manifest ? &*manifest : nullptr);
  GrowingKG kg = load_growing_kg(dataset);
  EmbeddingStore store = load_checkpoint(ckpt);
  if (thetas.empty()) thetas = {0.90, 0.94, 0.97, 0.99, 1.0};
  emit(compression_report(kg, store, cfg, thetas), out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"continual knowledge-graph embedding with decoupled snapshot spaces"};
  app.require_subcommand(1);

  // stats
  auto* stats = app.add_subcommand("stats", "print per-snapshot dataset statistics");
  std::string stats_dataset;
  stats->add_option("dataset", stats_dataset, "dataset root directory")->required();
  stats->callback([&] { cmd_stats(stats_dataset); });

  // synthesize
  auto* synth = app.add_subcommand("synthesize", "generate a synthetic growing KG");
  std::string synth_spec, synth_out;
  synth->add_option("--spec", synth_spec, "generator spec (json)")->required();
  synth->add_option("--out", synth_out, "output dataset directory")->required();
  synth->callback([&] { cmd_synthesize(synth_spec, synth_out); });

  // train
  auto* train = app.add_subcommand("train", "train snapshot by snapshot and write a checkpoint");
  std::string train_dataset, train_out, train_manifest;
  ConfigFlags train_cf;
  train->add_option("--dataset", train_dataset, "dataset root directory")->required();
  train->add_option("--out", train_out, "checkpoint output directory")->required();
  train->add_option("--from-manifest", train_manifest, "replay a recorded run.json");
  train_cf.attach(train, true);
  train->callback([&] { cmd_train(train, train_cf, train_dataset, train_out, train_manifest); });

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "lifelong link-prediction metrics from a checkpoint");
  std::string eval_dataset, eval_ckpt, eval_out, eval_manifest;
  ConfigFlags eval_cf;
  eval->add_option("--dataset", eval_dataset, "dataset root directory")->required();
  eval->add_option("--ckpt", eval_ckpt, "checkpoint directory")->required();
  eval->add_option("--out", eval_out, "output directory for metrics.csv")->required();
  eval->add_option("--from-manifest", eval_manifest, "replay a recorded run.json");
  eval_cf.attach(eval, true);
  eval->callback(
      [&] { cmd_evaluate(eval, eval_cf, eval_dataset, eval_ckpt, eval_out, eval_manifest); });

  // recompress
  auto* recomp = app.add_subcommand("recompress", "re-run semantic decoupling at a new threshold");
  std::string recomp_ckpt, recomp_out;
  double recomp_theta = 0.95;
  recomp->add_option("--ckpt", recomp_ckpt, "checkpoint directory")->required();
  recomp->add_option("--theta", recomp_theta, "new similarity threshold")->required();
  recomp->add_option("--out", recomp_out, "output checkpoint directory (default: in place)");
  recomp->callback([&] { cmd_recompress(recomp_ckpt, recomp_theta, recomp_out); });

  // predict / explain
  std::string pred_dataset, pred_ckpt, pred_query;
  int pred_m = 10, pred_snapshot = 0;
  bool pred_verify = false;
  ConfigFlags pred_cf, expl_cf;

  auto* predict = app.add_subcommand("predict", "rank candidates for a query");
  predict->add_option("--dataset", pred_dataset, "dataset root directory")->required();
  predict->add_option("--ckpt", pred_ckpt, "checkpoint directory")->required();
  predict->add_option("--query", pred_query, "\"h,r,?\", \"?,r,t\" or \"h,r,t\" (labels)")
      ->required();
  predict->add_option("-m,--top", pred_m, "number of candidates to print")->capture_default_str();
  predict->add_option("--snapshot", pred_snapshot, "query snapshot (default: latest)");
  predict->add_flag("--verify", pred_verify, "cross-check the rank with the reference scorer");
  pred_cf.attach(predict, false);
  predict->callback([&] {
    cmd_predict(predict, pred_cf, pred_dataset, pred_ckpt, pred_query, pred_m, pred_snapshot,
                pred_verify, false);
  });

  std::string expl_dataset, expl_ckpt, expl_query;
  int expl_m = 10, expl_snapshot = 0;
  auto* explain = app.add_subcommand("explain", "per-snapshot breakdown of a query");
  explain->add_option("--dataset", expl_dataset, "dataset root directory")->required();
  explain->add_option("--ckpt", expl_ckpt, "checkpoint directory")->required();
  explain->add_option("--query", expl_query, "\"h,r,?\", \"?,r,t\" or \"h,r,t\" (labels)")
      ->required();
  explain->add_option("-m,--top", expl_m, "candidates per snapshot")->capture_default_str();
  explain->add_option("--snapshot", expl_snapshot, "query snapshot (default: latest)");
  expl_cf.attach(explain, false);
  explain->callback([&] {
    cmd_predict(explain, expl_cf, expl_dataset, expl_ckpt, expl_query, expl_m, expl_snapshot,
                false, true);
  });

  // report
  auto* report = app.add_subcommand("report", "derived reports from a checkpoint");
  report->require_subcommand(1);

  auto* heatmap = report->add_subcommand("heatmap", "mean importance per space per test snapshot");
  std::string hm_dataset, hm_ckpt, hm_out;
  ConfigFlags hm_cf;
  heatmap->add_option("--dataset", hm_dataset, "dataset root directory")->required();
  heatmap->add_option("--ckpt", hm_ckpt, "checkpoint directory")->required();
  heatmap->add_option("--out", hm_out, "output file (default: stdout)");
  hm_cf.attach(heatmap, false);
  heatmap->callback([&] { cmd_report_heatmap(heatmap, hm_cf, hm_dataset, hm_ckpt, hm_out); });

  auto* compression = report->add_subcommand("compression", "compression-vs-MRR threshold sweep");
  std::string cp_dataset, cp_ckpt, cp_out;
  std::vector<double> cp_thetas;
  ConfigFlags cp_cf;
  compression->add_option("--dataset", cp_dataset, "dataset root directory")->required();
  compression->add_option("--ckpt", cp_ckpt, "checkpoint directory (trained with --keep-dropped)")
      ->required();
  compression->add_option("--thetas", cp_thetas, "thresholds to sweep")->delimiter(',');
  compression->add_option("--out", cp_out, "output file (default: stdout)");
  cp_cf.attach(compression, false);
  compression->callback(
      [&] { cmd_report_compression(compression, cp_cf, cp_dataset, cp_ckpt, cp_thetas, cp_out); });

  // `train --print-config` prints a ready-to-edit config file covering every
  // knob; handled before parsing so the required flags are not demanded.
  for (int a = 1; a < argc; ++a) {
    if (std::string(argv[a]) == "--print-config") {
      std::cout << train->config_to_str(true, true);
      return 0;
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
