#pragma once

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "rawmodel/planner.hpp"
#include "rawmodel/simulator.hpp"
#include "rawmodel/time_distribution.hpp"

namespace rawmodel {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shortest decimal text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// Distribution CSV: a `duration_us,probability` header, one row per atom in
// increasing duration.
inline void write_distribution_csv(std::ostream& os, const TimeDistribution& d) {
  os << "duration_us,probability\n";
  for (const auto& a : d.atoms())
    os << a.duration.count() << ',' << format_double(a.probability) << '\n';
}

inline TimeDistribution read_distribution_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("duration_us,probability", 0) != 0)
    throw FormatError("missing duration_us,probability header");
  std::vector<Atom> atoms;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw FormatError("malformed row: " + line);
    std::int64_t us = 0;
    double p = 0.0;
    const char* b = line.data();
    const auto r1 = std::from_chars(b, b + comma, us);
    const auto r2 = std::from_chars(b + comma + 1, b + line.size(), p);
    if (r1.ec != std::errc{} || r2.ec != std::errc{}) throw FormatError("malformed row: " + line);
    atoms.push_back({Micros{us}, p});
  }
  return TimeDistribution::from_atoms(std::move(atoms));
}

inline nlohmann::json distribution_to_json(const TimeDistribution& d) {
  nlohmann::json atoms = nlohmann::json::array();
  for (const auto& a : d.atoms())
    atoms.push_back({{"duration_us", a.duration.count()}, {"probability", a.probability}});
  return {{"atoms", std::move(atoms)}, {"total_mass", d.total_mass()}, {"deficit", d.deficit()}};
}

inline TimeDistribution distribution_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("atoms")) throw FormatError("distribution object needs atoms");
  std::vector<Atom> atoms;
  for (const auto& a : j.at("atoms"))
    atoms.push_back({Micros{a.at("duration_us").get<std::int64_t>()},
                     a.at("probability").get<double>()});
  return TimeDistribution::from_atoms(std::move(atoms));
}

// Group sweep CSV: `g,group_size,slot_us,total_us,compliant`. group_size and
// slot_us describe the largest group; infeasible rows carry -1 durations.
inline void write_group_plans_csv(std::ostream& os, const std::vector<GroupPlan>& plans) {
  os << "g,group_size,slot_us,total_us,compliant\n";
  for (const auto& p : plans) {
    const int size = p.group_sizes.empty() ? 0 : p.group_sizes.front();
    os << p.group_count << ',' << size << ',';
    if (p.feasible)
      os << p.per_group_slot.count() << ',' << p.total_reserved.count();
    else
      os << "-1,-1";
    os << ',' << (p.standard_compliant ? "true" : "false") << '\n';
  }
}

inline nlohmann::json group_plan_to_json(const GroupPlan& p) {
  std::vector<std::int64_t> slots;
  for (auto s : p.group_slots) slots.push_back(s.count());
  return {{"g", p.group_count},
          {"group_sizes", p.group_sizes},
          {"per_group_slot_us", p.per_group_slot.count()},
          {"group_slots_us", slots},
          {"total_us", p.total_reserved.count()},
          {"quantile_target", p.quantile_target},
          {"compliant", p.standard_compliant},
          {"feasible", p.feasible},
          {"achievable", p.achievable}};
}

inline nlohmann::json empirical_to_json(const EmpiricalDistribution& e) {
  nlohmann::json j = distribution_to_json(e.to_distribution());
  j["runs"] = e.runs;
  j["failure_count"] = e.failure_count;
  return j;
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os << text;
  if (!os) throw std::runtime_error("write to " + path + " failed");
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace rawmodel
