#include "fedquit/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>

#include "fedquit/rng.hpp"

namespace fedquit {

void Dataset::validate() const {
  if (num_classes < 2) throw DomainError("Dataset: num_classes must be >= 2");
  for (const auto& ex : examples) {
    if (ex.features.size() != feature_dim) {
      throw ShapeError("Dataset: inconsistent feature dim");
    }
    if (ex.label >= num_classes) {
      throw DomainError("Dataset: label out of range");
    }
    for (double f : ex.features) {
      if (!std::isfinite(f)) throw DomainError("Dataset: non-finite feature");
    }
  }
}

std::vector<std::size_t> Dataset::label_histogram() const {
  std::vector<std::size_t> hist(num_classes, 0);
  for (const auto& ex : examples) ++hist[ex.label];
  return hist;
}

void PartitionSpec::validate() const {
  if (num_clients < 2) throw DomainError("PartitionSpec: num_clients must be >= 2");
  if (kind == PartitionKind::Dirichlet && !(alpha > 0.0)) {
    throw DomainError("PartitionSpec: alpha must be > 0");
  }
}

FederationData::FederationData(std::vector<Dataset> shards, Dataset test)
    : client_shards(std::move(shards)), test_set(std::move(test)) {
  reads_ = std::make_shared<std::vector<std::atomic<std::uint64_t>>>(
      client_shards.size());
}

std::size_t FederationData::total_examples() const {
  std::size_t n = 0;
  for (const auto& s : client_shards) n += s.size();
  return n;
}

void FederationData::note_shard_read(std::size_t k) const {
  if (reads_ && k < reads_->size()) (*reads_)[k].fetch_add(1);
}

std::uint64_t FederationData::shard_reads(std::size_t k) const {
  if (!reads_ || k >= reads_->size()) return 0;
  return (*reads_)[k].load();
}

Dataset generate_blobs(std::uint32_t num_classes, std::uint32_t per_class,
                       std::uint32_t dim, double spread, std::uint64_t seed) {
  if (num_classes < 2) throw DomainError("generate_blobs: need >= 2 classes");
  if (per_class < 1) throw DomainError("generate_blobs: per_class must be >= 1");
  if (dim < 1) throw DomainError("generate_blobs: dim must be >= 1");
  if (!(spread > 0.0)) throw DomainError("generate_blobs: spread must be > 0");

  Dataset data;
  data.num_classes = num_classes;
  data.feature_dim = dim;
  data.examples.reserve(static_cast<std::size_t>(num_classes) * per_class);
  RngStream rng(seed);
  for (std::uint32_t c = 0; c < num_classes; ++c) {
    std::vector<double> mean(dim, 0.0);
    if (dim == 1) {
      mean[0] = (c % 2 == 0) ? 1.0 : -1.0;
    } else {
      const double angle = 2.0 * std::numbers::pi * c / num_classes;
      mean[0] = std::cos(angle);
      mean[1] = std::sin(angle);
    }
    for (std::uint32_t i = 0; i < per_class; ++i) {
      LabeledExample ex;
      ex.label = c;
      ex.features.resize(dim);
      for (std::uint32_t j = 0; j < dim; ++j) {
        ex.features[j] = mean[j] + spread * rng.normal();
      }
      data.examples.push_back(std::move(ex));
    }
  }
  return data;
}

namespace {

double parse_cell(const std::string& cell, std::size_t row, std::size_t col) {
  const char* begin = cell.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0' || !std::isfinite(v)) {
    throw ParseError("csv row " + std::to_string(row) + ", column " +
                     std::to_string(col) + ": not a number: '" + cell + "'");
  }
  return v;
}

}  // namespace

Dataset load_csv(const std::string& path,
                 std::optional<std::uint32_t> num_classes) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open csv: " + path);

  Dataset data;
  std::string line;
  std::size_t row = 0;
  std::uint32_t max_label = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    if (cells.size() < 2) {
      throw ParseError("csv row " + std::to_string(row) +
                       ": expected `label,f1,...`, got " + std::to_string(cells.size()) +
                       " cells");
    }
    const double raw_label = parse_cell(cells[0], row, 0);
    if (raw_label < 0 || raw_label != std::floor(raw_label)) {
      throw ParseError("csv row " + std::to_string(row) +
                       ": label must be a non-negative integer");
    }
    LabeledExample ex;
    ex.label = static_cast<std::uint32_t>(raw_label);
    if (num_classes && ex.label >= *num_classes) {
      throw ParseError("csv row " + std::to_string(row) + ": label " +
                       std::to_string(ex.label) + " >= declared class count " +
                       std::to_string(*num_classes));
    }
    ex.features.reserve(cells.size() - 1);
    for (std::size_t c = 1; c < cells.size(); ++c) {
      ex.features.push_back(parse_cell(cells[c], row, c));
    }
    if (data.examples.empty()) {
      data.feature_dim = static_cast<std::uint32_t>(ex.features.size());
    } else if (ex.features.size() != data.feature_dim) {
      throw ParseError("csv row " + std::to_string(row) + ": expected " +
                       std::to_string(data.feature_dim) + " features, got " +
                       std::to_string(ex.features.size()));
    }
    max_label = std::max(max_label, ex.label);
    data.examples.push_back(std::move(ex));
  }
  if (data.examples.empty()) throw ParseError("csv is empty: " + path);
  data.num_classes = num_classes.value_or(std::max(max_label + 1, 2u));
  if (max_label >= data.num_classes) {
    throw ParseError("csv: label " + std::to_string(max_label) +
                     " >= declared class count " + std::to_string(data.num_classes));
  }
  data.validate();
  return data;
}

namespace {

std::vector<Dataset> empty_shards(const Dataset& data, std::uint32_t k) {
  std::vector<Dataset> shards(k);
  for (auto& s : shards) {
    s.num_classes = data.num_classes;
    s.feature_dim = data.feature_dim;
  }
  return shards;
}

// Moves one example out of the largest shard into each empty shard.
void repair_empty_shards(std::vector<Dataset>& shards, RngStream& rng) {
  for (std::size_t k = 0; k < shards.size(); ++k) {
    while (shards[k].empty()) {
      std::size_t donor = 0;
      for (std::size_t j = 1; j < shards.size(); ++j) {
        if (shards[j].size() > shards[donor].size()) donor = j;
      }
      if (shards[donor].size() <= 1) {
        throw DomainError("partition: not enough examples to fill every shard");
      }
      auto& src = shards[donor].examples;
      const std::size_t pick = static_cast<std::size_t>(rng.below(src.size()));
      shards[k].examples.push_back(std::move(src[pick]));
      src.erase(src.begin() + static_cast<std::ptrdiff_t>(pick));
    }
  }
}

}  // namespace

std::vector<Dataset> partition(const Dataset& data, const PartitionSpec& spec) {
  spec.validate();
  data.validate();
  const std::uint32_t k = spec.num_clients;
  if (data.size() < k) {
    throw DomainError("partition: dataset smaller than client count");
  }

  RngStream rng(spec.seed);
  auto shards = empty_shards(data, k);

  if (spec.kind == PartitionKind::Iid) {
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    for (std::size_t i = 0; i < order.size(); ++i) {
      shards[i % k].examples.push_back(data.examples[order[i]]);
    }
  } else {
    // Per class, draw a Dirichlet proportion vector over clients and assign
    // that class's examples multinomially.
    std::vector<std::vector<std::size_t>> by_class(data.num_classes);
    for (std::size_t i = 0; i < data.size(); ++i) {
      by_class[data.examples[i].label].push_back(i);
    }
    for (std::uint32_t c = 0; c < data.num_classes; ++c) {
      if (by_class[c].empty()) continue;
      const auto props = rng.dirichlet(spec.alpha, k);
      std::vector<double> cdf(k);
      double acc = 0.0;
      for (std::uint32_t j = 0; j < k; ++j) {
        acc += props[j];
        cdf[j] = acc;
      }
      cdf[k - 1] = 1.0;
      for (const std::size_t idx : by_class[c]) {
        const double u = rng.uniform01();
        const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        const std::size_t client = std::min<std::size_t>(
            static_cast<std::size_t>(it - cdf.begin()), k - 1);
        shards[client].examples.push_back(data.examples[idx]);
      }
    }
    repair_empty_shards(shards, rng);
  }
  return shards;
}

ForgetRetain forget_retain_split(const FederationData& fed, std::size_t u) {
  if (u >= fed.num_clients()) {
    throw DomainError("forget_retain_split: client index " + std::to_string(u) +
                      " out of range");
  }
  ForgetRetain out;
  out.forget = fed.client_shards[u];
  out.retain.num_classes = out.forget.num_classes;
  out.retain.feature_dim = out.forget.feature_dim;
  for (std::size_t k = 0; k < fed.num_clients(); ++k) {
    if (k == u) continue;
    const auto& shard = fed.client_shards[k];
    out.retain.examples.insert(out.retain.examples.end(), shard.examples.begin(),
                               shard.examples.end());
  }
  return out;
}

}  // namespace fedquit
