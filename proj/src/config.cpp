#include "fedquit/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace fedquit {

namespace {

using nlohmann::json;

const std::set<std::string> kKnownKeys = {
    "dataset.kind",        "dataset.classes",     "dataset.per_class",
    "dataset.dim",         "dataset.spread",      "dataset.test_per_class",
    "dataset.train_path",  "dataset.test_path",   "dataset.seed",
    "partition.kind",      "partition.alpha",     "partition.clients",
    "partition.seed",      "model.hidden",        "model.activation",
    "model.init_seed",     "federation.rounds",   "federation.local_epochs",
    "federation.client_lr","federation.lr_decay", "federation.batch",
    "federation.server_lr","federation.seed",     "unlearn.method",
    "unlearn.v",           "unlearn.epochs",      "unlearn.lr",
    "unlearn.batch",       "unlearn.optimizer",   "unlearn.tau",
    "unlearn.seed",        "unlearn.client",      "recovery.max_rounds",
    "seeds",               "output.dir",
};

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

[[noreturn]] void fail(const std::string& key, const std::string& what) {
  throw ConfigError("config key `" + key + "`: " + what);
}

double to_double(const std::string& key, const std::string& value) {
  const char* begin = value.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0' || !std::isfinite(v)) {
    fail(key, "expected a number, got '" + value + "'");
  }
  return v;
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  const double v = to_double(key, value);
  if (v < 0 || v != std::floor(v)) {
    fail(key, "expected a non-negative integer, got '" + value + "'");
  }
  return static_cast<std::uint64_t>(v);
}

std::uint32_t to_u32(const std::string& key, const std::string& value) {
  const std::uint64_t v = to_u64(key, value);
  if (v > UINT32_MAX) fail(key, "value too large");
  return static_cast<std::uint32_t>(v);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Flattens a JSON object into dotted key -> string scalar pairs.
void flatten_json(const json& j, const std::string& prefix,
                  std::map<std::string, std::string>& out) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) {
      const std::string key =
          prefix.empty() ? k : (k.find('.') != std::string::npos ? k : prefix + "." + k);
      flatten_json(v, prefix.empty() ? k : key, out);
    }
    return;
  }
  if (j.is_array()) {
    std::string joined;
    for (const auto& v : j) {
      if (!joined.empty()) joined += ",";
      joined += v.is_string() ? v.get<std::string>() : v.dump();
    }
    out[prefix] = joined;
    return;
  }
  out[prefix] = j.is_string() ? j.get<std::string>() : j.dump();
}

std::map<std::string, std::string> read_pairs(const std::string& text,
                                              const std::string& source) {
  std::map<std::string, std::string> pairs;
  const std::string trimmed = trim(text);
  if (!trimmed.empty() && trimmed.front() == '{') {
    json j;
    try {
      j = json::parse(trimmed);
    } catch (const json::parse_error& e) {
      throw ConfigError(source + ": " + e.what());
    }
    flatten_json(j, "", pairs);
    return pairs;
  }
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const std::string s = trim(line);
    if (s.empty() || s.front() == '#' || s.front() == ';') continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(lineno) +
                        ": expected `key = value`");
    }
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": empty key");
    }
    pairs[key] = value;
  }
  return pairs;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text,
                                   const std::string& source_name) {
  const auto pairs = read_pairs(text, source_name);
  for (const auto& [key, _] : pairs) {
    if (!kKnownKeys.contains(key)) {
      throw ConfigError("unknown config key `" + key + "`");
    }
  }

  ExperimentConfig cfg;
  const auto get = [&](const char* key) -> std::optional<std::string> {
    const auto it = pairs.find(key);
    if (it == pairs.end()) return std::nullopt;
    return it->second;
  };

  if (auto v = get("dataset.kind")) {
    if (*v == "blobs") cfg.dataset.kind = DatasetConfig::Kind::Blobs;
    else if (*v == "csv") cfg.dataset.kind = DatasetConfig::Kind::Csv;
    else fail("dataset.kind", "expected blobs|csv, got '" + *v + "'");
  }
  if (auto v = get("dataset.classes")) cfg.dataset.classes = to_u32("dataset.classes", *v);
  if (auto v = get("dataset.per_class")) cfg.dataset.per_class = to_u32("dataset.per_class", *v);
  if (auto v = get("dataset.dim")) cfg.dataset.dim = to_u32("dataset.dim", *v);
  if (auto v = get("dataset.spread")) cfg.dataset.spread = to_double("dataset.spread", *v);
  if (auto v = get("dataset.test_per_class")) {
    cfg.dataset.test_per_class = to_u32("dataset.test_per_class", *v);
  }
  if (auto v = get("dataset.train_path")) cfg.dataset.train_path = *v;
  if (auto v = get("dataset.test_path")) cfg.dataset.test_path = *v;
  if (auto v = get("dataset.seed")) cfg.dataset.seed = to_u64("dataset.seed", *v);

  if (auto v = get("partition.kind")) {
    if (*v == "iid") cfg.partition.kind = PartitionKind::Iid;
    else if (*v == "dirichlet") cfg.partition.kind = PartitionKind::Dirichlet;
    else fail("partition.kind", "expected iid|dirichlet, got '" + *v + "'");
  }
  if (auto v = get("partition.alpha")) cfg.partition.alpha = to_double("partition.alpha", *v);
  if (auto v = get("partition.clients")) {
    cfg.partition.num_clients = to_u32("partition.clients", *v);
  }
  if (auto v = get("partition.seed")) cfg.partition.seed = to_u64("partition.seed", *v);

  if (auto v = get("model.hidden")) {
    cfg.hidden.clear();
    for (const auto& item : split_list(*v)) {
      cfg.hidden.push_back(to_u32("model.hidden", item));
    }
  }
  if (auto v = get("model.activation")) {
    if (*v == "relu") cfg.activation = Activation::ReLU;
    else if (*v == "tanh") cfg.activation = Activation::Tanh;
    else fail("model.activation", "expected relu|tanh, got '" + *v + "'");
  }
  if (auto v = get("model.init_seed")) cfg.init_seed = to_u64("model.init_seed", *v);

  if (auto v = get("federation.rounds")) {
    cfg.federation.rounds = to_u32("federation.rounds", *v);
  }
  if (auto v = get("federation.local_epochs")) {
    cfg.federation.local_epochs = to_u32("federation.local_epochs", *v);
  }
  if (auto v = get("federation.client_lr")) {
    cfg.federation.client_lr = to_double("federation.client_lr", *v);
  }
  if (auto v = get("federation.lr_decay")) {
    cfg.federation.lr_decay = to_double("federation.lr_decay", *v);
  }
  if (auto v = get("federation.batch")) {
    cfg.federation.batch_size = to_u32("federation.batch", *v);
  }
  if (auto v = get("federation.server_lr")) {
    cfg.federation.server_lr = to_double("federation.server_lr", *v);
  }
  if (auto v = get("federation.seed")) cfg.federation.seed = to_u64("federation.seed", *v);

  if (auto v = get("unlearn.method")) cfg.method = *v;
  if (auto v = get("unlearn.v")) {
    if (*v == "min") {
      cfg.v_is_min = true;
    } else {
      cfg.v_is_min = false;
      cfg.v_value = to_double("unlearn.v", *v);
    }
  }
  if (auto v = get("unlearn.epochs")) cfg.unlearn.epochs = to_u32("unlearn.epochs", *v);
  if (auto v = get("unlearn.lr")) cfg.unlearn.lr = to_double("unlearn.lr", *v);
  if (auto v = get("unlearn.batch")) cfg.unlearn.batch_size = to_u32("unlearn.batch", *v);
  if (auto v = get("unlearn.optimizer")) {
    if (*v == "sgd") cfg.unlearn.optimizer = OptimizerKind::Sgd;
    else if (*v == "adam") cfg.unlearn.optimizer = OptimizerKind::Adam;
    else fail("unlearn.optimizer", "expected sgd|adam, got '" + *v + "'");
  }
  if (auto v = get("unlearn.tau")) cfg.unlearn.tau = to_double("unlearn.tau", *v);
  if (auto v = get("unlearn.seed")) cfg.unlearn.seed = to_u64("unlearn.seed", *v);
  if (auto v = get("unlearn.client")) {
    if (*v == "each") {
      cfg.unlearn_each = true;
    } else {
      cfg.unlearn_each = false;
      cfg.unlearn_client = to_u32("unlearn.client", *v);
    }
  }
  if (auto v = get("recovery.max_rounds")) {
    cfg.recovery_max_rounds = to_u32("recovery.max_rounds", *v);
  }
  if (auto v = get("seeds")) {
    cfg.seeds.clear();
    for (const auto& item : split_list(*v)) {
      cfg.seeds.push_back(to_u64("seeds", item));
    }
  }
  if (auto v = get("output.dir")) cfg.out_dir = *v;

  finalize_config(cfg);
  return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

void finalize_config(ExperimentConfig& cfg) {
  // dataset
  if (cfg.dataset.kind == DatasetConfig::Kind::Blobs) {
    if (cfg.dataset.classes < 2) fail("dataset.classes", "must be >= 2");
    if (cfg.dataset.per_class < 1) fail("dataset.per_class", "must be >= 1");
    if (cfg.dataset.dim < 1) fail("dataset.dim", "must be >= 1");
    if (!(cfg.dataset.spread > 0)) fail("dataset.spread", "must be > 0");
    if (cfg.dataset.test_per_class < 1) fail("dataset.test_per_class", "must be >= 1");
  } else {
    if (cfg.dataset.train_path.empty()) fail("dataset.train_path", "required for csv");
    if (cfg.dataset.test_path.empty()) fail("dataset.test_path", "required for csv");
  }

  // partition
  if (cfg.partition.num_clients < 2) fail("partition.clients", "must be >= 2");
  if (cfg.partition.kind == PartitionKind::Dirichlet && !(cfg.partition.alpha > 0)) {
    fail("partition.alpha", "must be > 0");
  }

  // model
  for (auto h : cfg.hidden) {
    if (h < 1) fail("model.hidden", "hidden sizes must be >= 1");
  }

  // federation
  if (cfg.federation.rounds < 1) fail("federation.rounds", "must be >= 1");
  if (cfg.federation.local_epochs < 1) fail("federation.local_epochs", "must be >= 1");
  if (!(cfg.federation.client_lr > 0)) fail("federation.client_lr", "must be > 0");
  if (!(cfg.federation.lr_decay > 0) || cfg.federation.lr_decay > 1.0) {
    fail("federation.lr_decay", "must be in (0, 1]");
  }
  if (cfg.federation.batch_size < 1) fail("federation.batch", "must be >= 1");
  if (!(cfg.federation.server_lr > 0)) fail("federation.server_lr", "must be > 0");

  // unlearning method -> teacher variant
  if (cfg.method == "fedquit-logits") {
    cfg.unlearn.variant = cfg.v_is_min ? TeacherVariant::logits_min()
                                       : TeacherVariant::logits_fixed(cfg.v_value);
  } else if (cfg.method == "fedquit-softmax") {
    if (cfg.v_is_min) fail("unlearn.v", "'min' only applies to fedquit-logits");
    if (cfg.v_value < 0.0 || cfg.v_value >= 1.0) {
      fail("unlearn.v", "must be in [0, 1) for fedquit-softmax");
    }
    cfg.unlearn.variant = TeacherVariant::softmax_fixed(cfg.v_value);
  } else if (cfg.method == "incompetent") {
    cfg.unlearn.variant = TeacherVariant::incompetent();
  } else if (cfg.method == "natural") {
    cfg.unlearn.variant = TeacherVariant::incompetent();  // unused
  } else {
    fail("unlearn.method",
         "expected fedquit-logits|fedquit-softmax|incompetent|natural, got '" +
             cfg.method + "'");
  }
  if (cfg.unlearn.epochs < 1) fail("unlearn.epochs", "must be >= 1");
  if (!(cfg.unlearn.lr > 0)) fail("unlearn.lr", "must be > 0");
  if (cfg.unlearn.batch_size < 1) fail("unlearn.batch", "must be >= 1");
  if (!(cfg.unlearn.tau > 0)) fail("unlearn.tau", "must be > 0");
  if (!cfg.unlearn_each && cfg.unlearn_client >= cfg.partition.num_clients) {
    fail("unlearn.client", "must be < partition.clients (" +
                               std::to_string(cfg.partition.num_clients) + ")");
  }

  if (cfg.seeds.empty()) fail("seeds", "need at least one seed");
  if (cfg.out_dir.empty()) fail("output.dir", "must not be empty");
}

void apply_overrides(ExperimentConfig& cfg,
                     std::optional<std::uint64_t> seed,
                     const std::optional<std::string>& method,
                     const std::optional<std::string>& v,
                     const std::optional<std::string>& out_dir) {
  if (seed) cfg.seeds = {*seed};
  if (method) cfg.method = *method;
  if (v) {
    if (*v == "min") {
      cfg.v_is_min = true;
    } else {
      cfg.v_is_min = false;
      cfg.v_value = to_double("unlearn.v", *v);
    }
  }
  if (out_dir) cfg.out_dir = *out_dir;
  finalize_config(cfg);
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["dataset"]["kind"] =
      cfg.dataset.kind == DatasetConfig::Kind::Blobs ? "blobs" : "csv";
  j["dataset"]["classes"] = cfg.dataset.classes;
  j["dataset"]["per_class"] = cfg.dataset.per_class;
  j["dataset"]["dim"] = cfg.dataset.dim;
  j["dataset"]["spread"] = cfg.dataset.spread;
  j["dataset"]["test_per_class"] = cfg.dataset.test_per_class;
  j["dataset"]["train_path"] = cfg.dataset.train_path;
  j["dataset"]["test_path"] = cfg.dataset.test_path;
  j["dataset"]["seed"] = cfg.dataset.seed;
  j["partition"]["kind"] =
      cfg.partition.kind == PartitionKind::Iid ? "iid" : "dirichlet";
  j["partition"]["alpha"] = cfg.partition.alpha;
  j["partition"]["clients"] = cfg.partition.num_clients;
  j["partition"]["seed"] = cfg.partition.seed;
  j["model"]["hidden"] = cfg.hidden;
  j["model"]["activation"] = cfg.activation == Activation::ReLU ? "relu" : "tanh";
  j["model"]["init_seed"] = cfg.init_seed;
  j["federation"]["rounds"] = cfg.federation.rounds;
  j["federation"]["local_epochs"] = cfg.federation.local_epochs;
  j["federation"]["client_lr"] = cfg.federation.client_lr;
  j["federation"]["lr_decay"] = cfg.federation.lr_decay;
  j["federation"]["batch"] = cfg.federation.batch_size;
  j["federation"]["server_lr"] = cfg.federation.server_lr;
  j["federation"]["seed"] = cfg.federation.seed;
  j["unlearn"]["method"] = cfg.method;
  j["unlearn"]["v"] = cfg.v_is_min ? json("min") : json(cfg.v_value);
  j["unlearn"]["epochs"] = cfg.unlearn.epochs;
  j["unlearn"]["lr"] = cfg.unlearn.lr;
  j["unlearn"]["batch"] = cfg.unlearn.batch_size;
  j["unlearn"]["optimizer"] =
      cfg.unlearn.optimizer == OptimizerKind::Adam ? "adam" : "sgd";
  j["unlearn"]["tau"] = cfg.unlearn.tau;
  j["unlearn"]["seed"] = cfg.unlearn.seed;
  j["unlearn"]["client"] =
      cfg.unlearn_each ? json("each") : json(cfg.unlearn_client);
  j["recovery"]["max_rounds"] = cfg.recovery_max_rounds;
  j["seeds"] = cfg.seeds;
  j["output"]["dir"] = cfg.out_dir;
  return j.dump(2);
}

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  return fnv1a(config_to_json(cfg));
}

std::uint64_t config_base_hash(const ExperimentConfig& cfg) {
  ExperimentConfig base = cfg;
  base.method = "fedquit-logits";
  base.v_is_min = false;
  base.v_value = 0.0;
  base.unlearn = UnlearnConfig{};
  base.unlearn_each = false;
  base.unlearn_client = 0;
  base.recovery_max_rounds = 0;
  base.seeds.clear();
  base.out_dir.clear();
  return fnv1a(config_to_json(base));
}

std::uint64_t config_method_hash(const ExperimentConfig& cfg) {
  ExperimentConfig base = cfg;
  base.seeds.clear();
  base.out_dir.clear();
  return fnv1a(config_to_json(base));
}

}  // namespace fedquit
