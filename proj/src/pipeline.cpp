#include "fedquit/pipeline.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fedquit/evaluation.hpp"
#include "fedquit/rng.hpp"

namespace fedquit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int stage_order(PipelineStage s) { return static_cast<int>(s); }

void write_text_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw ParseError("cannot write " + path.string());
    out << content;
  }
  fs::rename(tmp, path);
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string history_csv(const std::vector<std::pair<std::string,
                        const std::vector<RoundReport>*>>& phases) {
  std::ostringstream out;
  out.precision(17);
  out << "phase,round,mean_train_loss,test_acc,bytes\n";
  for (const auto& [phase, history] : phases) {
    for (const auto& r : *history) {
      out << phase << ',' << r.round << ',' << r.mean_loss() << ','
          << r.test_accuracy << ',' << r.bytes << "\n";
    }
  }
  return out.str();
}

std::string partition_manifest_json(const PartitionSpec& spec,
                                    const FederationData& fed) {
  json j;
  j["seed"] = spec.seed;
  j["kind"] = spec.kind == PartitionKind::Iid ? "iid" : "dirichlet";
  if (spec.kind == PartitionKind::Dirichlet) j["alpha"] = spec.alpha;
  j["num_clients"] = spec.num_clients;
  json clients = json::array();
  for (const auto& shard : fed.client_shards) {
    clients.push_back(json{{"size", shard.size()},
                           {"label_histogram", shard.label_histogram()}});
  }
  j["clients"] = std::move(clients);
  return j.dump(2);
}

// Tracks completed stages and referenced files; rewritten after every stage.
class Manifest {
 public:
  Manifest(const fs::path& out_dir, const ExperimentConfig& cfg)
      : path_(out_dir / "manifest.json") {
    const std::uint64_t base = config_base_hash(cfg);
    const std::uint64_t method = config_method_hash(cfg);
    if (fs::exists(path_)) {
      try {
        j_ = json::parse(read_text_file(path_));
      } catch (...) {
        j_ = json::object();
      }
    }
    const bool base_ok = j_.value("base_hash", std::uint64_t{0}) == base;
    const bool method_ok = j_.value("method_hash", std::uint64_t{0}) == method;
    if (!base_ok) j_["stages"] = json::object();
    if (base_ok && !method_ok) {
      // Keep original/retrained markers, drop the method-dependent ones.
      for (auto& [seed_key, seed_stages] : j_["stages"].items()) {
        for (auto& [key, val] : seed_stages.items()) {
          if (key == "original") continue;
          if (val.is_object()) {
            val.erase("unlearned");
            val.erase("recovered");
            val.erase("report");
          }
        }
      }
    }
    j_["base_hash"] = base;
    j_["method_hash"] = method;
    j_["config_hash"] = config_hash(cfg);
    j_["config"] = json::parse(config_to_json(cfg));
    j_["status"] = "running";
    if (!j_.contains("stages")) j_["stages"] = json::object();
    if (!j_.contains("files")) j_["files"] = json::array();
    flush();
  }

  bool done(const std::string& seed_key, const std::string& stage) const {
    const auto& stages = j_.at("stages");
    return stages.contains(seed_key) && stages.at(seed_key).value(stage, false);
  }
  bool done(const std::string& seed_key, const std::string& client_key,
            const std::string& stage) const {
    const auto& stages = j_.at("stages");
    if (!stages.contains(seed_key)) return false;
    const auto& s = stages.at(seed_key);
    return s.contains(client_key) && s.at(client_key).value(stage, false);
  }

  void mark(const std::string& seed_key, const std::string& stage) {
    j_["stages"][seed_key][stage] = true;
    flush();
  }
  void mark(const std::string& seed_key, const std::string& client_key,
            const std::string& stage) {
    j_["stages"][seed_key][client_key][stage] = true;
    flush();
  }

  void add_file(const fs::path& rel) {
    auto& files = j_["files"];
    for (const auto& f : files) {
      if (f.get<std::string>() == rel.string()) return;
    }
    files.push_back(rel.string());
  }

  void complete() {
    j_["status"] = "complete";
    flush();
  }

 private:
  void flush() { write_text_file(path_, j_.dump(2)); }

  fs::path path_;
  json j_ = json::object();
};

struct RecoveryMeta {
  bool converged = false;
  std::uint32_t rounds = 0;
  std::uint64_t bytes_total = 0;
  double target = 0.0;
};

std::string recovery_meta_json(const RecoveryMeta& m) {
  return json{{"converged", m.converged},
              {"rounds", m.rounds},
              {"bytes_total", m.bytes_total},
              {"target", m.target}}
      .dump(2);
}

RecoveryMeta recovery_meta_from_json(const std::string& text) {
  const json j = json::parse(text);
  RecoveryMeta m;
  m.converged = j.at("converged").get<bool>();
  m.rounds = j.at("rounds").get<std::uint32_t>();
  m.bytes_total = j.at("bytes_total").get<std::uint64_t>();
  m.target = j.at("target").get<double>();
  return m;
}

std::string runs_csv(const std::vector<MetricsReport>& reports) {
  std::ostringstream out;
  out.precision(17);
  out << "method,seed,client,rounds,ce,test_acc,forget_acc,forget_acc_delta,"
         "mia_song,mia_song_delta,mia_yeom,mia_yeom_delta,bytes_total,"
         "post_unlearn_test_acc,post_unlearn_forget_acc,converged\n";
  for (const auto& r : reports) {
    out << r.method << ',' << r.seed << ',' << r.client << ','
        << r.recovery_rounds << ',';
    if (r.ce) out << *r.ce;
    out << ',' << r.model.test_acc << ',' << r.model.forget_acc << ','
        << r.forget_acc_delta << ',' << r.model.mia_song << ','
        << r.mia_song_delta << ',' << r.model.mia_yeom << ','
        << r.mia_yeom_delta << ',' << r.bytes_total << ','
        << r.post_unlearn_test_acc << ',' << r.post_unlearn_forget_acc << ','
        << (r.recovery_converged ? 1 : 0) << "\n";
  }
  return out.str();
}

}  // namespace

SeedData prepare_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  SeedData sd;

  Dataset train, test;
  if (cfg.dataset.kind == DatasetConfig::Kind::Blobs) {
    train = generate_blobs(cfg.dataset.classes, cfg.dataset.per_class,
                           cfg.dataset.dim, cfg.dataset.spread,
                           mix_seed(seed, StreamTag::DatasetTrain, cfg.dataset.seed));
    test = generate_blobs(cfg.dataset.classes, cfg.dataset.test_per_class,
                          cfg.dataset.dim, cfg.dataset.spread,
                          mix_seed(seed, StreamTag::DatasetTest, cfg.dataset.seed));
  } else {
    train = load_csv(cfg.dataset.train_path);
    test = load_csv(cfg.dataset.test_path, train.num_classes);
  }

  PartitionSpec pspec = cfg.partition;
  pspec.seed = mix_seed(seed, StreamTag::Partition, cfg.partition.seed);
  sd.fed = FederationData(partition(train, pspec), std::move(test));

  sd.arch.layer_sizes.clear();
  sd.arch.layer_sizes.push_back(train.feature_dim);
  for (auto h : cfg.hidden) sd.arch.layer_sizes.push_back(h);
  sd.arch.layer_sizes.push_back(train.num_classes);
  sd.arch.hidden_activation = cfg.activation;
  sd.arch.validate();

  sd.init = ParameterSet::glorot(
      sd.arch, mix_seed(seed, StreamTag::WeightInit, cfg.init_seed));

  sd.fed_cfg = cfg.federation;
  sd.fed_cfg.seed = mix_seed(seed, StreamTag::LocalTrain, cfg.federation.seed);
  return sd;
}

PipelineResult run_pipeline(const ExperimentConfig& cfg,
                            PipelineStage final_stage) {
  const fs::path out_dir(cfg.out_dir);
  fs::create_directories(out_dir);
  Manifest manifest(out_dir, cfg);

  const std::uint32_t T = cfg.federation.rounds;
  const std::uint32_t max_recovery = cfg.effective_max_recovery_rounds();

  PipelineResult result;
  result.out_dir = out_dir;

  for (const std::uint64_t seed : cfg.seeds) {
    const std::string seed_key = "s" + std::to_string(seed);
    const fs::path seed_dir = out_dir / seed_key;
    const SeedData sd = prepare_seed(cfg, seed);
    const fs::path original_path = seed_dir / "original.bin";

    // --- stage: original training (once per seed) ---
    ParameterSet original;
    if (manifest.done(seed_key, "original") && fs::exists(original_path)) {
      original = load_parameters(original_path.string()).params;
    } else {
      FederationState state{sd.init, 0, 0, 0, 0, sd.fed_cfg.seed};
      const auto history = run_fedavg(state, sd.fed, sd.arch, sd.fed_cfg, T);
      original = state.global;
      fs::create_directories(seed_dir);
      save_parameters(original_path.string(), original);
      write_text_file(seed_dir / "history_original.csv",
                      history_csv({{"train", &history}}));
      PartitionSpec pspec = cfg.partition;
      pspec.seed = mix_seed(seed, StreamTag::Partition, cfg.partition.seed);
      write_text_file(seed_dir / "partition.json",
                      partition_manifest_json(pspec, sd.fed));
      manifest.add_file(fs::path(seed_key) / "original.bin");
      manifest.add_file(fs::path(seed_key) / "history_original.csv");
      manifest.add_file(fs::path(seed_key) / "partition.json");
      manifest.mark(seed_key, "original");
    }
    if (stage_order(final_stage) < stage_order(PipelineStage::Unlearned)) continue;

    std::vector<std::uint32_t> clients;
    if (cfg.unlearn_each) {
      for (std::uint32_t u = 0; u < cfg.partition.num_clients; ++u) {
        clients.push_back(u);
      }
    } else {
      clients.push_back(cfg.unlearn_client);
    }

    for (const std::uint32_t u : clients) {
      const std::string client_key = "u" + std::to_string(u);
      const fs::path run_dir = seed_dir / client_key;
      fs::create_directories(run_dir);
      const auto split = forget_retain_split(sd.fed, u);

      UnlearnConfig ucfg = cfg.unlearn;
      ucfg.seed = mix_seed(seed, StreamTag::Unlearn, cfg.unlearn.seed, u);

      // --- stage: unlearned model ---
      const fs::path unlearned_path = run_dir / "unlearned.bin";
      ParameterSet unlearned;
      if (manifest.done(seed_key, client_key, "unlearned") &&
          fs::exists(unlearned_path)) {
        unlearned = load_parameters(unlearned_path.string()).params;
      } else {
        unlearned = cfg.method == "natural"
                        ? natural_baseline(original)
                        : fedquit_unlearn(original, sd.arch, split.forget, ucfg);
        save_parameters(unlearned_path.string(), unlearned);
        manifest.add_file(fs::path(seed_key) / client_key / "unlearned.bin");
        manifest.mark(seed_key, client_key, "unlearned");
      }
      if (stage_order(final_stage) < stage_order(PipelineStage::Recovered)) continue;

      // --- stage: retrained gold standard (same init, u excluded) ---
      const fs::path retrained_path = run_dir / "retrained.bin";
      ParameterSet retrained;
      if (manifest.done(seed_key, client_key, "retrained") &&
          fs::exists(retrained_path)) {
        retrained = load_parameters(retrained_path.string()).params;
      } else {
        FederationState state{sd.init, 0, 0, 0, 0, sd.fed_cfg.seed};
        const auto history =
            run_fedavg(state, sd.fed, sd.arch, sd.fed_cfg, T, {u});
        retrained = state.global;
        save_parameters(retrained_path.string(), retrained);
        write_text_file(run_dir / "history_retrain.csv",
                        history_csv({{"retrain", &history}}));
        manifest.add_file(fs::path(seed_key) / client_key / "retrained.bin");
        manifest.add_file(fs::path(seed_key) / client_key / "history_retrain.csv");
        manifest.mark(seed_key, client_key, "retrained");
      }
      const double target = accuracy(retrained, sd.arch, sd.fed.test_set);

      // --- stage: special round + recovery ---
      const fs::path recovered_path = run_dir / "recovered.bin";
      const fs::path recovery_meta_path = run_dir / "recovery.json";
      ParameterSet recovered;
      RecoveryMeta meta;
      if (manifest.done(seed_key, client_key, "recovered") &&
          fs::exists(recovered_path) && fs::exists(recovery_meta_path)) {
        recovered = load_parameters(recovered_path.string()).params;
        meta = recovery_meta_from_json(read_text_file(recovery_meta_path));
      } else {
        // Reconstruct the federation state at the end of original training.
        const std::uint64_t model_bytes = serialized_size(original);
        FederationState state{original, T, T,
                              static_cast<std::uint64_t>(T) * model_bytes *
                                  cfg.partition.num_clients,
                              static_cast<std::uint64_t>(T) * model_bytes *
                                  cfg.partition.num_clients,
                              sd.fed_cfg.seed};
        const std::uint64_t bytes_before = state.bytes_total();
        if (cfg.method != "natural") unlearning_round(state, unlearned, u);
        const auto rec = recover(state, sd.fed, sd.arch, sd.fed_cfg, {u}, target,
                                 max_recovery);
        recovered = state.global;
        meta.converged = rec.converged;
        meta.rounds = rec.rounds;
        meta.bytes_total = state.bytes_total() - bytes_before;
        meta.target = target;
        save_parameters(recovered_path.string(), recovered);
        write_text_file(recovery_meta_path, recovery_meta_json(meta));
        write_text_file(run_dir / "history_recovery.csv",
                        history_csv({{"recovery", &rec.history}}));
        manifest.add_file(fs::path(seed_key) / client_key / "recovered.bin");
        manifest.add_file(fs::path(seed_key) / client_key / "recovery.json");
        manifest.add_file(fs::path(seed_key) / client_key / "history_recovery.csv");
        manifest.mark(seed_key, client_key, "recovered");
      }
      if (stage_order(final_stage) < stage_order(PipelineStage::Report)) continue;

      // --- stage: metrics report ---
      const fs::path report_path = run_dir / "report.json";
      MetricsReport report;
      if (manifest.done(seed_key, client_key, "report") &&
          fs::exists(report_path)) {
        report = report_from_json(read_text_file(report_path));
      } else {
        RecoveryResult rec;
        rec.converged = meta.converged;
        rec.rounds = meta.rounds;
        report = build_report(cfg.method, seed, u, recovered, retrained,
                              original, sd.arch, split.forget, split.retain,
                              sd.fed.test_set, unlearned, rec, T,
                              meta.bytes_total,
                              mix_seed(seed, StreamTag::MiaSubsample, u));
        write_text_file(report_path, report_to_json(report));
        manifest.add_file(fs::path(seed_key) / client_key / "report.json");
        manifest.mark(seed_key, client_key, "report");
      }
      result.reports.push_back(report);
      result.all_converged = result.all_converged && report.recovery_converged;
    }
  }

  if (stage_order(final_stage) >= stage_order(PipelineStage::Full) &&
      !result.reports.empty()) {
    const auto agg = aggregate_reports(result.reports, T);
    write_text_file(out_dir / "report.json", aggregate_to_json(agg));
    write_text_file(out_dir / "report.csv", runs_csv(result.reports));
    manifest.add_file("report.json");
    manifest.add_file("report.csv");
  }
  manifest.complete();
  return result;
}

}  // namespace fedquit
