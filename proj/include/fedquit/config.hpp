#pragma once

// Experiment configuration. The on-disk format is flat `section.key = value`
// text (one pair per line, `#` comments); a JSON object with the same keys,
// nested or dotted, is accepted as an alternative encoding. Unknown keys are
// rejected and every violation names the offending key.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedquit/data.hpp"
#include "fedquit/federation.hpp"
#include "fedquit/unlearning.hpp"

namespace fedquit {

struct DatasetConfig {
  enum class Kind { Blobs, Csv };
  Kind kind = Kind::Blobs;
  // blobs
  std::uint32_t classes = 3;
  std::uint32_t per_class = 100;
  std::uint32_t dim = 2;
  double spread = 0.3;
  std::uint32_t test_per_class = 50;
  // csv
  std::string train_path;
  std::string test_path;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  PartitionSpec partition{PartitionKind::Iid, 0.3, 5, 0};
  std::vector<std::uint32_t> hidden{16};
  Activation activation = Activation::ReLU;
  std::uint64_t init_seed = 0;
  FederationConfig federation;
  std::string method = "fedquit-logits";
  bool v_is_min = false;
  double v_value = 0.0;
  UnlearnConfig unlearn;
  bool unlearn_each = false;
  std::uint32_t unlearn_client = 0;
  std::uint32_t recovery_max_rounds = 0;  // 0 = 2 * federation.rounds
  std::vector<std::uint64_t> seeds{1};
  std::string out_dir = "out";

  std::uint32_t effective_max_recovery_rounds() const {
    return recovery_max_rounds ? recovery_max_rounds : 2 * federation.rounds;
  }
};

inline constexpr const char* kMethodNames[] = {"fedquit-logits", "fedquit-softmax",
                                               "incompetent", "natural"};

// Throws ConfigError naming the key on any violation.
ExperimentConfig parse_config(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text,
                                   const std::string& source_name);

// CLI overrides; `v` is a real number or "min". Re-validates the result.
void apply_overrides(ExperimentConfig& cfg,
                     std::optional<std::uint64_t> seed,
                     const std::optional<std::string>& method,
                     const std::optional<std::string>& v,
                     const std::optional<std::string>& out_dir);

// Derives unlearn.variant from method/v and checks cross-field invariants.
void finalize_config(ExperimentConfig& cfg);

// Canonical JSON rendering (sorted keys, all fields explicit).
std::string config_to_json(const ExperimentConfig& cfg);

// FNV-1a over the canonical JSON.
std::uint64_t config_hash(const ExperimentConfig& cfg);
// Hash of the method-independent part (dataset/partition/model/federation);
// original and retrained checkpoints can be reused across methods. Per-seed
// artifacts are keyed by the seed value in their path, so the seed list is
// not part of this hash.
std::uint64_t config_base_hash(const ExperimentConfig& cfg);
// base hash + unlearning/recovery settings; guards unlearned/recovered/report
// artifact reuse.
std::uint64_t config_method_hash(const ExperimentConfig& cfg);

}  // namespace fedquit
