#pragma once

// Dataset representation, synthetic blob generation, CSV ingestion, and
// IID / Dirichlet label-skew partitioning across clients.

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fedquit/errors.hpp"

namespace fedquit {

struct LabeledExample {
  std::vector<double> features;
  std::uint32_t label = 0;
  bool operator==(const LabeledExample&) const = default;
};

struct Dataset {
  std::vector<LabeledExample> examples;
  std::uint32_t num_classes = 0;
  std::uint32_t feature_dim = 0;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }
  void validate() const;
  std::vector<std::size_t> label_histogram() const;
  bool operator==(const Dataset&) const = default;
};

enum class PartitionKind { Iid, Dirichlet };

struct PartitionSpec {
  PartitionKind kind = PartitionKind::Iid;
  double alpha = 1.0;  // Dirichlet concentration
  std::uint32_t num_clients = 2;
  std::uint64_t seed = 0;

  void validate() const;
};

// Per-client shards plus the held-out test set. shard_reads counts how often
// each shard was handed to a training routine; exclusion tests assert the
// excluded client's counter stays zero.
struct FederationData {
  std::vector<Dataset> client_shards;
  Dataset test_set;

  FederationData() = default;
  FederationData(std::vector<Dataset> shards, Dataset test);

  std::size_t num_clients() const { return client_shards.size(); }
  std::size_t total_examples() const;
  void note_shard_read(std::size_t k) const;
  std::uint64_t shard_reads(std::size_t k) const;

 private:
  // Shared so copies of the federation view report into the same counters.
  std::shared_ptr<std::vector<std::atomic<std::uint64_t>>> reads_;
};

// C Gaussian clusters with means placed deterministically on the unit sphere.
Dataset generate_blobs(std::uint32_t num_classes, std::uint32_t per_class,
                       std::uint32_t dim, double spread, std::uint64_t seed);

// Rows are `label,f1,...,fd`. C is inferred as max label + 1 unless given.
Dataset load_csv(const std::string& path,
                 std::optional<std::uint32_t> num_classes = std::nullopt);

std::vector<Dataset> partition(const Dataset& data, const PartitionSpec& spec);

struct ForgetRetain {
  Dataset forget;
  Dataset retain;
};

// forget = client u's shard, retain = everything else.
ForgetRetain forget_retain_split(const FederationData& fed, std::size_t u);

}  // namespace fedquit
