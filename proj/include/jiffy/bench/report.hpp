#pragma once

#include <ostream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "workload.hpp"

namespace jiffy::bench {

inline const char* name(Scenario s) {
  switch (s) {
    case Scenario::UpdateOnly: return "update-only";
    case Scenario::UpdateLookup: return "update-lookup";
    case Scenario::MixedShort: return "mixed-short";
    case Scenario::MixedLong: return "mixed-long";
  }
  return "?";
}
inline const char* name(KeyDist d) { return d == KeyDist::Uniform ? "uniform" : "zipfian"; }
inline const char* name(IndexKind i) { return i == IndexKind::Jiffy ? "jiffy" : "baseline"; }

inline Scenario parse_scenario(const std::string& s) {
  for (auto v : {Scenario::UpdateOnly, Scenario::UpdateLookup, Scenario::MixedShort,
                 Scenario::MixedLong})
    if (s == name(v)) return v;
  throw std::invalid_argument("unknown scenario: " + s);
}
inline KeyDist parse_dist(const std::string& s) {
  if (s == "uniform") return KeyDist::Uniform;
  if (s == "zipfian") return KeyDist::Zipfian;
  throw std::invalid_argument("unknown key distribution: " + s);
}
inline IndexKind parse_index(const std::string& s) {
  if (s == "jiffy") return IndexKind::Jiffy;
  if (s == "baseline") return IndexKind::Baseline;
  throw std::invalid_argument("unknown index: " + s);
}

inline void to_json(nlohmann::json& j, const WorkloadConfig& c) {
  j = {{"scenario", name(c.scenario)},
       {"index", name(c.index)},
       {"threads", c.threads},
       {"batch", c.batch},
       {"sequential", c.sequential},
       {"key_dist", name(c.dist)},
       {"zipf_theta", c.zipf_theta},
       {"key_bytes", c.key_bytes},
       {"value_bytes", c.value_bytes},
       {"dataset", c.dataset},
       {"seconds", c.seconds},
       {"warmup", c.warmup},
       {"ops_per_thread", c.ops_per_thread},
       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, WorkloadConfig& c) {
  c.scenario = parse_scenario(j.at("scenario").get<std::string>());
  c.index = parse_index(j.at("index").get<std::string>());
  j.at("threads").get_to(c.threads);
  j.at("batch").get_to(c.batch);
  j.at("sequential").get_to(c.sequential);
  c.dist = parse_dist(j.at("key_dist").get<std::string>());
  j.at("zipf_theta").get_to(c.zipf_theta);
  j.at("key_bytes").get_to(c.key_bytes);
  j.at("value_bytes").get_to(c.value_bytes);
  j.at("dataset").get_to(c.dataset);
  j.at("seconds").get_to(c.seconds);
  j.at("warmup").get_to(c.warmup);
  j.at("ops_per_thread").get_to(c.ops_per_thread);
  j.at("seed").get_to(c.seed);
}

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(RoleReport, role, threads, ops, ops_per_sec, p50_us,
                                   p90_us, p99_us, max_us)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Report, config, seconds, roles, total_ops,
                                   total_ops_per_sec, nodes, median_revision_size,
                                   size_histogram, final_entries)

inline constexpr const char* kCsvHeader =
    "scenario,index,threads,batch,order,key_dist,key_bytes,value_bytes,dataset,seconds,"
    "role,role_threads,ops,ops_per_sec,p50_us,p90_us,p99_us,max_us";

// One row per role, then a "total" row.
inline void write_csv(std::ostream& o, const Report& r, bool header = true) {
  const auto& c = r.config;
  if (header) o << kCsvHeader << '\n';
  auto prefix = [&] {
    o << name(c.scenario) << ',' << name(c.index) << ',' << c.threads << ',' << c.batch << ','
      << (c.sequential ? "sequential" : "random") << ',' << name(c.dist) << ',' << c.key_bytes
      << ',' << c.value_bytes << ',' << c.dataset << ',' << r.seconds << ',';
  };
  for (const auto& rr : r.roles) {
    prefix();
    o << rr.role << ',' << rr.threads << ',' << rr.ops << ',' << rr.ops_per_sec << ','
      << rr.p50_us << ',' << rr.p90_us << ',' << rr.p99_us << ',' << rr.max_us << '\n';
  }
  prefix();
  o << "total," << c.threads << ',' << r.total_ops << ',' << r.total_ops_per_sec << ",,,,\n";
}

inline void write_json(std::ostream& o, const Report& r) {
  o << nlohmann::json(r).dump(2) << '\n';
}

}  // namespace jiffy::bench
