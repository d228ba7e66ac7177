#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "kkm/lifecycle.hpp"

namespace kkm {

// labels.csv: "sample_index,label" header then one row per sample.
void write_labels_csv(const std::string& path,
                      const std::vector<std::int32_t>& labels);
std::vector<std::int32_t> read_labels_csv(const std::string& path);

// medoids.csv: "cluster,global_sample_index", absent clusters omitted.
void write_medoids_csv(const std::string& path,
                       const std::vector<std::int64_t>& medoids);

nlohmann::json run_config_json(const RunConfig& cfg);
nlohmann::json trace_json(const RunResult& result);
nlohmann::json manifest_json(const RunConfig& cfg, const DataSet& data,
                             const RunResult& result);

void write_json(const std::string& path, const nlohmann::json& j);

}  // namespace kkm
