#include "fedquit/report.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fedquit {

using nlohmann::json;

ModelMetrics evaluate_model(const ParameterSet& params, const MlpArchitecture& arch,
                            const Dataset& forget, const Dataset& retain,
                            const Dataset& test, std::uint64_t mia_seed) {
  ModelMetrics m;
  m.test_acc = accuracy(params, arch, test);
  m.forget_acc = accuracy(params, arch, forget);
  const auto song = fit_mia_song(params, arch, retain, test, mia_seed);
  m.mia_song = mia_rate(song, params, arch, forget);
  const auto yeom = fit_mia_yeom(params, arch, retain);
  m.mia_yeom = mia_rate(yeom, params, arch, forget);
  return m;
}

MetricsReport build_report(const std::string& method, std::uint64_t seed,
                           std::uint32_t client, const ParameterSet& evaluated,
                           const ParameterSet& retrained,
                           const ParameterSet& original,
                           const MlpArchitecture& arch, const Dataset& forget,
                           const Dataset& retain, const Dataset& test,
                           const ParameterSet& post_unlearn,
                           const RecoveryResult& recovery,
                           std::uint32_t retrain_rounds,
                           std::uint64_t bytes_total, std::uint64_t mia_seed) {
  if (!evaluated.same_shape(retrained) || !evaluated.same_shape(original)) {
    throw ShapeError("build_report: model shapes differ");
  }
  MetricsReport r;
  r.method = method;
  r.seed = seed;
  r.client = client;
  r.model = evaluate_model(evaluated, arch, forget, retain, test, mia_seed);
  r.original = evaluate_model(original, arch, forget, retain, test, mia_seed);
  r.retrained = evaluate_model(retrained, arch, forget, retain, test, mia_seed);
  r.post_unlearn_test_acc = accuracy(post_unlearn, arch, test);
  r.post_unlearn_forget_acc = accuracy(post_unlearn, arch, forget);
  r.recovery_converged = recovery.converged;
  r.recovery_rounds = recovery.rounds;
  if (recovery.converged) {
    r.ce = static_cast<double>(retrain_rounds) /
           std::max<double>(static_cast<double>(recovery.rounds), 1.0);
  }
  r.forget_acc_delta = std::abs(r.model.forget_acc - r.retrained.forget_acc);
  r.mia_song_delta = std::abs(r.model.mia_song - r.retrained.mia_song);
  r.mia_yeom_delta = std::abs(r.model.mia_yeom - r.retrained.mia_yeom);
  r.bytes_total = bytes_total;
  return r;
}

namespace {

json metrics_to_json(const ModelMetrics& m) {
  return json{{"test_acc", m.test_acc},
              {"forget_acc", m.forget_acc},
              {"mia_song", m.mia_song},
              {"mia_yeom", m.mia_yeom}};
}

ModelMetrics metrics_from_json(const json& j) {
  ModelMetrics m;
  m.test_acc = j.at("test_acc").get<double>();
  m.forget_acc = j.at("forget_acc").get<double>();
  m.mia_song = j.at("mia_song").get<double>();
  m.mia_yeom = j.at("mia_yeom").get<double>();
  return m;
}

json report_to_json_obj(const MetricsReport& r) {
  json j{{"method", r.method},
         {"seed", r.seed},
         {"client", r.client},
         {"model", metrics_to_json(r.model)},
         {"original", metrics_to_json(r.original)},
         {"retrained", metrics_to_json(r.retrained)},
         {"post_unlearn_test_acc", r.post_unlearn_test_acc},
         {"post_unlearn_forget_acc", r.post_unlearn_forget_acc},
         {"recovery_converged", r.recovery_converged},
         {"recovery_rounds", r.recovery_rounds},
         {"forget_acc_delta", r.forget_acc_delta},
         {"mia_song_delta", r.mia_song_delta},
         {"mia_yeom_delta", r.mia_yeom_delta},
         {"bytes_total", r.bytes_total}};
  if (r.ce) j["ce"] = *r.ce;
  return j;
}

MetricsReport report_from_json_obj(const json& j) {
  MetricsReport r;
  r.method = j.at("method").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.client = j.at("client").get<std::uint32_t>();
  r.model = metrics_from_json(j.at("model"));
  r.original = metrics_from_json(j.at("original"));
  r.retrained = metrics_from_json(j.at("retrained"));
  r.post_unlearn_test_acc = j.at("post_unlearn_test_acc").get<double>();
  r.post_unlearn_forget_acc = j.at("post_unlearn_forget_acc").get<double>();
  r.recovery_converged = j.at("recovery_converged").get<bool>();
  r.recovery_rounds = j.at("recovery_rounds").get<std::uint32_t>();
  if (j.contains("ce")) r.ce = j.at("ce").get<double>();
  r.forget_acc_delta = j.at("forget_acc_delta").get<double>();
  r.mia_song_delta = j.at("mia_song_delta").get<double>();
  r.mia_yeom_delta = j.at("mia_yeom_delta").get<double>();
  r.bytes_total = j.at("bytes_total").get<std::uint64_t>();
  return r;
}

}  // namespace

std::string report_to_json(const MetricsReport& report) {
  return report_to_json_obj(report).dump(2);
}

MetricsReport report_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("report: ") + e.what());
  }
  try {
    return report_from_json_obj(j);
  } catch (const json::exception& e) {
    throw ParseError(std::string("report: ") + e.what());
  }
}

namespace {

template <typename Get>
void mean_std(const std::vector<MetricsReport>& reports, const Get& get,
              double& mean_out, double& std_out) {
  const double n = static_cast<double>(reports.size());
  double mean = 0.0;
  for (const auto& r : reports) mean += get(r);
  mean /= n;
  double var = 0.0;
  for (const auto& r : reports) {
    const double d = get(r) - mean;
    var += d * d;
  }
  var /= n;
  mean_out = mean;
  std_out = std::sqrt(var);
}

}  // namespace

AggregateReport aggregate_reports(const std::vector<MetricsReport>& reports,
                                  std::uint32_t retrain_rounds) {
  if (reports.empty()) throw DomainError("aggregate_reports: no reports");
  AggregateReport agg;
  agg.method = reports.front().method;
  agg.num_runs = reports.size();
  for (const auto& r : reports) agg.num_converged += r.recovery_converged;

  const auto fill = [&](auto get, double& mfield, double& sfield) {
    mean_std(reports, get, mfield, sfield);
  };
#define FEDQUIT_AGG(FIELD)                                              \
  fill([](const MetricsReport& r) { return r.FIELD; }, agg.mean.FIELD, \
       agg.stddev.FIELD)
  FEDQUIT_AGG(model.test_acc);
  FEDQUIT_AGG(model.forget_acc);
  FEDQUIT_AGG(model.mia_song);
  FEDQUIT_AGG(model.mia_yeom);
  FEDQUIT_AGG(original.test_acc);
  FEDQUIT_AGG(original.forget_acc);
  FEDQUIT_AGG(original.mia_song);
  FEDQUIT_AGG(original.mia_yeom);
  FEDQUIT_AGG(retrained.test_acc);
  FEDQUIT_AGG(retrained.forget_acc);
  FEDQUIT_AGG(retrained.mia_song);
  FEDQUIT_AGG(retrained.mia_yeom);
  FEDQUIT_AGG(post_unlearn_test_acc);
  FEDQUIT_AGG(post_unlearn_forget_acc);
  FEDQUIT_AGG(forget_acc_delta);
  FEDQUIT_AGG(mia_song_delta);
  FEDQUIT_AGG(mia_yeom_delta);
#undef FEDQUIT_AGG

  double rounds_mean = 0.0, rounds_std = 0.0;
  mean_std(reports, [](const MetricsReport& r) {
    return static_cast<double>(r.recovery_rounds);
  }, rounds_mean, rounds_std);
  agg.mean_rounds = rounds_mean;
  agg.ce = static_cast<double>(retrain_rounds) / std::max(rounds_mean, 1.0);
  return agg;
}

std::string aggregate_to_json(const AggregateReport& agg) {
  json j{{"method", agg.method},
         {"num_runs", agg.num_runs},
         {"num_converged", agg.num_converged},
         {"mean_rounds", agg.mean_rounds},
         {"ce", agg.ce},
         {"mean", report_to_json_obj(agg.mean)},
         {"stddev", report_to_json_obj(agg.stddev)}};
  j["aggregate"] = true;
  return j.dump(2);
}

std::vector<CompareRow> compare_reports(const std::vector<std::string>& paths) {
  if (paths.empty()) throw DomainError("compare: need at least one report");
  std::vector<CompareRow> rows;
  rows.reserve(paths.size());
  for (const auto& path : paths) {
    std::ifstream in(path);
    if (!in) throw ParseError("compare: cannot open report: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    json j;
    try {
      j = json::parse(ss.str());
    } catch (const json::parse_error& e) {
      throw ParseError("compare: " + path + ": " + e.what());
    }
    CompareRow row;
    try {
      if (j.contains("aggregate") && j.at("aggregate").get<bool>()) {
        row.method = j.at("method").get<std::string>();
        row.rounds = j.at("mean_rounds").get<double>();
        row.ce = j.at("ce").get<double>();
        const auto mean = report_from_json_obj(j.at("mean"));
        row.test_acc = mean.model.test_acc;
        row.forget_acc = mean.model.forget_acc;
        row.forget_acc_delta = mean.forget_acc_delta;
        row.mia_song = mean.model.mia_song;
        row.mia_song_delta = mean.mia_song_delta;
        row.mia_yeom = mean.model.mia_yeom;
        row.mia_yeom_delta = mean.mia_yeom_delta;
      } else {
        const auto r = report_from_json_obj(j);
        row.method = r.method;
        row.rounds = static_cast<double>(r.recovery_rounds);
        row.ce = r.ce;
        row.test_acc = r.model.test_acc;
        row.forget_acc = r.model.forget_acc;
        row.forget_acc_delta = r.forget_acc_delta;
        row.mia_song = r.model.mia_song;
        row.mia_song_delta = r.mia_song_delta;
        row.mia_yeom = r.model.mia_yeom;
        row.mia_yeom_delta = r.mia_yeom_delta;
      }
    } catch (const json::exception& e) {
      throw ParseError("compare: " + path + ": " + e.what());
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string compare_table_csv(const std::vector<CompareRow>& rows) {
  std::ostringstream out;
  out.precision(17);
  out << kCompareCsvHeader << "\n";
  for (const auto& r : rows) {
    out << r.method << ',' << r.rounds << ',';
    if (r.ce) out << *r.ce;
    out << ',' << r.test_acc << ',' << r.forget_acc << ',' << r.forget_acc_delta
        << ',' << r.mia_song << ',' << r.mia_song_delta << ',' << r.mia_yeom
        << ',' << r.mia_yeom_delta << "\n";
  }
  return out.str();
}

std::string compare_table_json(const std::vector<CompareRow>& rows) {
  json arr = json::array();
  for (const auto& r : rows) {
    json j{{"method", r.method},
           {"rounds", r.rounds},
           {"test_acc", r.test_acc},
           {"forget_acc", r.forget_acc},
           {"forget_acc_delta", r.forget_acc_delta},
           {"mia_song", r.mia_song},
           {"mia_song_delta", r.mia_song_delta},
           {"mia_yeom", r.mia_yeom},
           {"mia_yeom_delta", r.mia_yeom_delta}};
    if (r.ce) j["ce"] = *r.ce;
    arr.push_back(std::move(j));
  }
  return arr.dump(2);
}

}  // namespace fedquit
