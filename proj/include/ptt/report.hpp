#pragma once

// JSON run reports. Keys serialize sorted; numbers round-trip exactly.

#include "ptt/algorithms.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ptt {

using Json = nlohmann::json;

struct RunReport {
  static constexpr int schema = 1;
  std::string command;
  std::string method;
  std::vector<std::size_t> dims;
  std::vector<std::size_t> ranks;
  std::vector<std::size_t> core_sizes;
  std::size_t oversampling = 0;
  std::vector<std::size_t> partition;
  std::size_t workers = 1;
  std::uint64_t seed = 0;
  std::optional<double> relative_error;
  std::string error_mode = "none";  // none | full | sample
  std::optional<double> standard_error;
  std::size_t samples = 0;
  std::uint64_t eval_count = 0;
  std::vector<std::uint64_t> per_worker_peak_scalars;
  std::vector<std::uint64_t> per_worker_total_peak_scalars;
  std::uint64_t message_count = 0;
  std::uint64_t message_volume = 0;
  std::size_t passes = 0;
  double wall_time_ms = 0.0;
  double stream_time_ms = 0.0;
  std::vector<std::string> warnings;
  Json extra = Json::object();
};

inline void to_json(Json& j, const RunReport& r) {
  j = Json::object();
  j["schema"] = RunReport::schema;
  j["command"] = r.command;
  j["method"] = r.method;
  j["dims"] = r.dims;
  j["ranks"] = r.ranks;
  j["core_sizes"] = r.core_sizes;
  j["oversampling"] = r.oversampling;
  j["partition"] = r.partition;
  j["workers"] = r.workers;
  j["seed"] = r.seed;
  j["relative_error"] = r.relative_error ? Json(*r.relative_error) : Json(nullptr);
  j["error_mode"] = r.error_mode;
  j["standard_error"] = r.standard_error ? Json(*r.standard_error) : Json(nullptr);
  j["samples"] = r.samples;
  j["eval_count"] = r.eval_count;
  j["per_worker_peak_scalars"] = r.per_worker_peak_scalars;
  j["per_worker_total_peak_scalars"] = r.per_worker_total_peak_scalars;
  j["message_count"] = r.message_count;
  j["message_volume"] = r.message_volume;
  j["passes"] = r.passes;
  j["wall_time_ms"] = r.wall_time_ms;
  j["stream_time_ms"] = r.stream_time_ms;
  j["warnings"] = r.warnings;
  j["extra"] = r.extra;
}

inline void from_json(const Json& j, RunReport& r) {
  if (j.at("schema").get<int>() != RunReport::schema) throw std::runtime_error("unsupported report schema");
  j.at("command").get_to(r.command);
  j.at("method").get_to(r.method);
  j.at("dims").get_to(r.dims);
  j.at("ranks").get_to(r.ranks);
  j.at("core_sizes").get_to(r.core_sizes);
  j.at("oversampling").get_to(r.oversampling);
  j.at("partition").get_to(r.partition);
  j.at("workers").get_to(r.workers);
  j.at("seed").get_to(r.seed);
  r.relative_error = j.at("relative_error").is_null() ? std::nullopt : std::optional<double>(j.at("relative_error").get<double>());
  j.at("error_mode").get_to(r.error_mode);
  r.standard_error = j.at("standard_error").is_null() ? std::nullopt : std::optional<double>(j.at("standard_error").get<double>());
  j.at("samples").get_to(r.samples);
  j.at("eval_count").get_to(r.eval_count);
  j.at("per_worker_peak_scalars").get_to(r.per_worker_peak_scalars);
  j.at("per_worker_total_peak_scalars").get_to(r.per_worker_total_peak_scalars);
  j.at("message_count").get_to(r.message_count);
  j.at("message_volume").get_to(r.message_volume);
  j.at("passes").get_to(r.passes);
  j.at("wall_time_ms").get_to(r.wall_time_ms);
  j.at("stream_time_ms").get_to(r.stream_time_ms);
  j.at("warnings").get_to(r.warnings);
  r.extra = j.at("extra");
}

inline std::string dump_report(const RunReport& r) { return Json(r).dump(2) + "\n"; }

inline RunReport parse_report(const std::string& text) { return Json::parse(text).get<RunReport>(); }

/// Copies the cost counters and shape of a decomposition into a report.
inline void fill_report(RunReport& rep, const DecomposeResult& res, const DecomposeConfig& cfg) {
  rep.dims = res.tt.dims();
  rep.ranks = cfg.ranks;
  rep.core_sizes = res.tt.core_sizes();
  rep.oversampling = cfg.oversample;
  rep.partition = res.costs.partition;
  rep.workers = cfg.workers;
  rep.seed = cfg.seed;
  rep.eval_count = res.costs.eval_count;
  rep.per_worker_peak_scalars = res.costs.resident_peak;
  rep.per_worker_total_peak_scalars = res.costs.total_peak;
  rep.message_count = res.costs.messages;
  rep.message_volume = res.costs.message_volume;
  rep.passes = res.costs.passes;
  rep.wall_time_ms = res.costs.wall_ms;
  rep.stream_time_ms = res.costs.stream_ms;
  rep.warnings = res.warnings;
}

}  // namespace ptt
