#include "kkm/io_formats.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace kkm {

void write_labels_csv(const std::string& path,
                      const std::vector<std::int32_t>& labels) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  out << "sample_index,label\n";
  for (std::size_t i = 0; i < labels.size(); ++i)
    out << i << ',' << labels[i] << '\n';
}

std::vector<std::int32_t> read_labels_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  std::vector<std::int32_t> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("sample_index", 0) == 0) continue;
    const auto comma = line.find(',');
    try {
      const long idx = comma == std::string::npos ? static_cast<long>(labels.size())
                                                  : std::stol(line.substr(0, comma));
      const long value = std::stol(comma == std::string::npos
                                       ? line
                                       : line.substr(comma + 1));
      if (idx != static_cast<long>(labels.size()))
        throw FormatError(path + ":" + std::to_string(line_no) +
                          ": sample indices must be dense and ascending");
      labels.push_back(static_cast<std::int32_t>(value));
    } catch (const FormatError&) {
      throw;
    } catch (const std::exception&) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": bad label row '" +
                        line + "'");
    }
  }
  if (labels.empty()) throw InputError(path + ": no labels");
  return labels;
}

void write_medoids_csv(const std::string& path,
                       const std::vector<std::int64_t>& medoids) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  out << "cluster,global_sample_index\n";
  for (std::size_t j = 0; j < medoids.size(); ++j)
    if (medoids[j] >= 0) out << j << ',' << medoids[j] << '\n';
}

nlohmann::json run_config_json(const RunConfig& cfg) {
  return nlohmann::json{
      {"clusters", cfg.C},
      {"batches", cfg.B},
      {"sparsity", cfg.s},
      {"workers", cfg.P},
      {"kernel", cfg.kernel.kind == KernelKind::rbf ? "rbf" : "linear"},
      {"sigma", cfg.kernel.sigma},
      {"d_max_sample_size", cfg.kernel.d_max_sample_size},
      {"sampling", cfg.sampling == SamplingStrategy::stride ? "stride" : "block"},
      {"seed", cfg.seed},
      {"restarts", cfg.restarts},
      {"max_iters", cfg.gd.max_iters},
      {"label_change_tolerance", cfg.gd.label_change_tolerance},
      {"block_scalar_bytes", cfg.block_scalar_bytes},
      {"prefetch", cfg.prefetch},
      {"admit_previous_medoid", cfg.admit_previous_medoid},
  };
}

namespace {

nlohmann::json finite_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

}  // namespace

nlohmann::json trace_json(const RunResult& result) {
  nlohmann::json batches = nlohmann::json::array();
  if (!result.traces.empty()) {
    const auto& chosen = result.traces[static_cast<std::size_t>(result.chosen_restart)];
    for (const auto& b : chosen.batches) {
      nlohmann::json displacement = nlohmann::json::array();
      for (const auto v : b.medoid_displacement) displacement.push_back(finite_or_null(v));
      batches.push_back({
          {"batch", b.batch},
          {"iterations", b.iterations},
          {"truncated", b.truncated},
          {"costs", b.costs},
          {"alpha", b.alpha},
          {"cardinalities", b.cardinalities},
          {"medoid_displacement", displacement},
          {"seconds_kernel", b.seconds_kernel},
          {"seconds_inner", b.seconds_inner},
          {"seconds_merge", b.seconds_merge},
      });
    }
  }
  nlohmann::json comm = nlohmann::json::array();
  for (const auto& e : result.traffic.events) {
    const char* op = e.op == CollectiveOp::allgather_labels ? "allgather"
                     : e.op == CollectiveOp::allreduce_sum  ? "allreduce_sum"
                                                            : "allreduce_min";
    comm.push_back({{"batch", e.batch},
                    {"iteration", e.iteration},
                    {"op", op},
                    {"max_bytes_per_worker", e.max_bytes_per_worker},
                    {"total_bytes", e.total_bytes}});
  }
  return nlohmann::json{
      {"chosen_restart", result.chosen_restart},
      {"restart_costs", result.restart_costs},
      {"batches", batches},
      {"traffic", comm},
      {"traffic_total_bytes", result.traffic.total()},
      {"footprint_model_bytes",
       {{"block", result.footprint.peak_block},
        {"f", result.footprint.peak_f},
        {"labels", result.footprint.peak_labels},
        {"g", result.footprint.peak_g}}},
      {"warnings", result.warnings},
      {"seconds_total", result.seconds_total},
  };
}

nlohmann::json manifest_json(const RunConfig& cfg, const DataSet& data,
                             const RunResult& result) {
  char fp[32];
  std::snprintf(fp, sizeof fp, "%016llx",
                static_cast<unsigned long long>(dataset_fingerprint(data)));
  return nlohmann::json{
      {"version", "kkm 1.0.0"},
      {"config", run_config_json(cfg)},
      {"dataset",
       {{"n", data.n}, {"d", data.d}, {"fingerprint", fp},
        {"provenance", data.provenance}}},
      {"chosen_restart", result.chosen_restart},
      {"final_cost", result.restart_costs.empty()
                         ? 0.0
                         : result.restart_costs[static_cast<std::size_t>(
                               result.chosen_restart)]},
      {"seconds_total", result.seconds_total},
  };
}

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  out << j.dump(2) << '\n';
}

}  // namespace kkm
