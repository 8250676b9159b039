#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "fedquit/data.hpp"
#include "fedquit/rng.hpp"
#include "oracles.hpp"

using namespace fedquit;

namespace {

std::filesystem::path write_tmp_csv(const std::string& name,
                                    const std::string& content) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream out(path, std::ios::trunc);
  out << content;
  return path;
}

// Fingerprint that distinguishes example identity across shards.
std::multiset<std::string> example_keys(const Dataset& d) {
  std::multiset<std::string> keys;
  for (const auto& ex : d.examples) {
    std::string k = std::to_string(ex.label);
    for (double f : ex.features) k += "," + std::to_string(f);
    keys.insert(std::move(k));
  }
  return keys;
}

double label_entropy(const Dataset& d) {
  const auto hist = d.label_histogram();
  const double n = static_cast<double>(d.size());
  double h = 0.0;
  for (const auto c : hist) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    h -= p * std::log(p);
  }
  return h;
}

double mean_client_entropy(const std::vector<Dataset>& shards) {
  double sum = 0.0;
  for (const auto& s : shards) sum += label_entropy(s);
  return sum / static_cast<double>(shards.size());
}

}  // namespace

TEST_CASE("blobs: tight clusters are separable by nearest mean") {
  const auto data = generate_blobs(2, 10, 2, 0.01, 7);
  CHECK(data.size() == 20);
  CHECK(data.num_classes == 2);
  CHECK(data.feature_dim == 2);
  CHECK(oracle::nearest_mean_accuracy(data) == 1.0);
}

TEST_CASE("blobs: identical arguments give bitwise identical datasets") {
  const auto a = generate_blobs(3, 40, 5, 0.3, 123);
  const auto b = generate_blobs(3, 40, 5, 0.3, 123);
  CHECK(a == b);
  const auto c = generate_blobs(3, 40, 5, 0.3, 124);
  CHECK(a != c);
}

TEST_CASE("blobs: argument validation") {
  CHECK_THROWS_AS(generate_blobs(1, 10, 2, 0.1, 0), DomainError);
  CHECK_THROWS_AS(generate_blobs(2, 0, 2, 0.1, 0), DomainError);
  CHECK_THROWS_AS(generate_blobs(2, 10, 0, 0.1, 0), DomainError);
  CHECK_THROWS_AS(generate_blobs(2, 10, 2, 0.0, 0), DomainError);
}

TEST_CASE("csv: parses labels and features") {
  const auto path = write_tmp_csv("fedquit_ok.csv", "0,1.0,2.0\n1,3.0,4.0\n");
  const auto data = load_csv(path.string());
  CHECK(data.num_classes == 2);
  CHECK(data.feature_dim == 2);
  REQUIRE(data.size() == 2);
  CHECK(data.examples[0].label == 0);
  CHECK(data.examples[0].features == std::vector<double>{1.0, 2.0});
  CHECK(data.examples[1].label == 1);
}

TEST_CASE("csv: empty file is a parse error") {
  const auto path = write_tmp_csv("fedquit_empty.csv", "");
  CHECK_THROWS_AS(load_csv(path.string()), ParseError);
}

TEST_CASE("csv: ragged row error names the row") {
  const auto path = write_tmp_csv("fedquit_ragged.csv", "0,1.0,2.0\n2,1.0\n");
  try {
    load_csv(path.string());
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
}

TEST_CASE("csv: non-numeric cell and bad labels name the row") {
  const auto bad_cell = write_tmp_csv("fedquit_badcell.csv", "0,1.0\n0,abc\n");
  try {
    load_csv(bad_cell.string());
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
  const auto big_label = write_tmp_csv("fedquit_biglabel.csv", "0,1.0\n3,2.0\n");
  try {
    load_csv(big_label.string(), 2);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
  const auto neg_label = write_tmp_csv("fedquit_neglabel.csv", "-1,1.0\n");
  CHECK_THROWS_AS(load_csv(neg_label.string()), ParseError);
}

TEST_CASE("partition: IID split is even and disjoint") {
  const auto data = generate_blobs(2, 5, 2, 0.2, 3);  // 10 examples
  PartitionSpec spec{PartitionKind::Iid, 1.0, 2, 9};
  const auto shards = partition(data, spec);
  REQUIRE(shards.size() == 2);
  CHECK(shards[0].size() == 5);
  CHECK(shards[1].size() == 5);
  auto all = example_keys(shards[0]);
  for (const auto& k : example_keys(shards[1])) all.insert(k);
  CHECK(all == example_keys(data));
}

TEST_CASE("partition: huge alpha approaches the global class mix") {
  const auto data = generate_blobs(4, 1500, 2, 0.3, 5);
  PartitionSpec spec{PartitionKind::Dirichlet, 1e6, 5, 2};
  const auto shards = partition(data, spec);
  for (const auto& shard : shards) {
    const auto hist = shard.label_histogram();
    for (const auto count : hist) {
      const double frac = static_cast<double>(count) / shard.size();
      CHECK(std::abs(frac - 0.25) < 0.05);
    }
  }
}

TEST_CASE("partition: smaller alpha lowers mean per-client label entropy") {
  const auto data = generate_blobs(5, 100, 2, 0.3, 11);
  int lower = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    PartitionSpec skew{PartitionKind::Dirichlet, 0.1, 5, seed};
    PartitionSpec mild{PartitionKind::Dirichlet, 10.0, 5, seed};
    const double skew_h = mean_client_entropy(partition(data, skew));
    const double mild_h = mean_client_entropy(partition(data, mild));
    if (skew_h < mild_h) ++lower;
  }
  CHECK(lower >= 17);
}

TEST_CASE("partition: shards stay disjoint and complete for random specs") {
  RngStream rng(31);
  const auto data = generate_blobs(3, 60, 2, 0.4, 21);
  for (int it = 0; it < 20; ++it) {
    PartitionSpec spec;
    spec.kind = rng.below(2) ? PartitionKind::Dirichlet : PartitionKind::Iid;
    spec.alpha = rng.below(2) ? 0.1 : 1.0;
    spec.num_clients = 2 + static_cast<std::uint32_t>(rng.below(7));
    spec.seed = rng.next_u64();
    const auto shards = partition(data, spec);
    std::size_t total = 0;
    std::multiset<std::string> merged;
    for (const auto& s : shards) {
      CHECK(!s.empty());
      total += s.size();
      for (const auto& k : example_keys(s)) merged.insert(k);
    }
    CHECK(total == data.size());
    CHECK(merged == example_keys(data));
    CHECK(partition(data, spec) == shards);  // deterministic replay
  }
}

TEST_CASE("partition: tiny alpha with many clients still fills every shard") {
  const auto data = generate_blobs(2, 10, 2, 0.3, 2);  // 20 examples
  PartitionSpec spec{PartitionKind::Dirichlet, 0.01, 10, 4};
  const auto shards = partition(data, spec);
  for (const auto& s : shards) CHECK(!s.empty());
}

TEST_CASE("partition: dataset smaller than client count is rejected") {
  const auto data = generate_blobs(2, 1, 2, 0.3, 2);  // 2 examples
  PartitionSpec spec{PartitionKind::Iid, 1.0, 3, 0};
  CHECK_THROWS_AS(partition(data, spec), DomainError);
  PartitionSpec bad_alpha{PartitionKind::Dirichlet, -1.0, 2, 0};
  CHECK_THROWS_AS(partition(data, bad_alpha), DomainError);
}

TEST_CASE("forget_retain_split: covers the federation exactly") {
  const auto data = generate_blobs(3, 30, 2, 0.3, 8);
  PartitionSpec spec{PartitionKind::Iid, 1.0, 3, 1};
  FederationData fed(partition(data, spec), generate_blobs(3, 5, 2, 0.3, 9));

  const auto split0 = forget_retain_split(fed, 0);
  CHECK(split0.forget == fed.client_shards[0]);
  CHECK(split0.forget.size() + split0.retain.size() == fed.total_examples());

  for (std::size_t u = 0; u < fed.num_clients(); ++u) {
    const auto split = forget_retain_split(fed, u);
    CHECK(split.forget.size() + split.retain.size() == fed.total_examples());
    auto merged = example_keys(split.forget);
    for (const auto& k : example_keys(split.retain)) merged.insert(k);
    CHECK(merged == example_keys(data));
  }
  CHECK_THROWS_AS(forget_retain_split(fed, fed.num_clients()), DomainError);
}

TEST_CASE("federation data: shard read instrumentation") {
  const auto data = generate_blobs(2, 10, 2, 0.3, 8);
  PartitionSpec spec{PartitionKind::Iid, 1.0, 2, 1};
  FederationData fed(partition(data, spec), generate_blobs(2, 4, 2, 0.3, 9));
  CHECK(fed.shard_reads(0) == 0);
  fed.note_shard_read(0);
  fed.note_shard_read(0);
  CHECK(fed.shard_reads(0) == 2);
  CHECK(fed.shard_reads(1) == 0);
}
