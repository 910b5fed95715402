// Command-line front end: model runs, Monte-Carlo simulation, model versus
// simulation comparison, slot planning and group sweeps. Every output file
// gets a <file>.manifest.json sidecar with the resolved inputs.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rawmodel/rawmodel.hpp"

namespace {

using namespace rawmodel;
using nlohmann::json;

constexpr const char* kVersion = "0.1.0";

enum Exit : int {
  kOk = 0,
  kUsage = 1,
  kDeficit = 2,
  kUnsatisfiable = 3,
  kToleranceExceeded = 4,
};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParamFlags {
  std::optional<int> n, cw_min, cw_max, retry_limit;
  std::optional<std::int64_t> te_us, ts_us, tc_us;
  double epsilon = 1e-6;
  double prune_floor = 1e-12;
  std::int64_t t_max_cap = 0;
  bool paper = false;

  void add_to(CLI::App& app) {
    app.add_option("--n", n, "number of contending stations")->check(CLI::PositiveNumber);
    app.add_option("--cw-min", cw_min, "minimal contention window");
    app.add_option("--cw-max", cw_max, "maximal contention window");
    app.add_option("--retry-limit", retry_limit, "retry limit RL");
    app.add_option("--epsilon", epsilon, "absorption threshold")->capture_default_str();
    app.add_option("--te-us", te_us, "empty slot duration, us");
    app.add_option("--ts-us", ts_us, "successful slot duration, us");
    app.add_option("--tc-us", tc_us, "collided slot duration, us");
    app.add_option("--prune-floor", prune_floor, "state mass pruning floor")->capture_default_str();
    app.add_option("--t-max-cap", t_max_cap, "model time cap in slots (0 = default)");
    app.add_flag("--paper-params", paper,
                 "CW 16..1024, RL 7, T_e 52 us, T_s = T_c = 2184 us; explicit flags override");
  }

  std::pair<ModelParams, SlotDurations> resolve() const {
    if (!n) throw UsageError("--n is required");
    ModelParams p = paper_params(*n);
    SlotDurations d = paper_durations();
    if (!paper) {
      if (!cw_min || !cw_max || !retry_limit || !te_us || !ts_us || !tc_us)
        throw UsageError(
            "without --paper-params all of --cw-min --cw-max --retry-limit --te-us --ts-us "
            "--tc-us are required");
    }
    if (cw_min) p.cw_min = *cw_min;
    if (cw_max) p.cw_max = *cw_max;
    if (retry_limit) p.retry_limit = *retry_limit;
    if (te_us) d.t_empty = Micros{*te_us};
    if (ts_us) d.t_success = Micros{*ts_us};
    if (tc_us) d.t_collision = Micros{*tc_us};
    p.epsilon = epsilon;
    p.prune_floor = prune_floor;
    p.t_max_cap = t_max_cap;
    try {
      p.validate();
      d.validate();
    } catch (const ConfigError& e) {
      throw UsageError(e.what());
    }
    return {p, d};
  }
};

struct OutputFlags {
  std::string out;
  std::string format = "csv";

  void add_to(CLI::App& app) {
    app.add_option("--out", out, "output file")->required();
    app.add_option("--format", format, "csv or json")
        ->check(CLI::IsMember({"csv", "json"}))
        ->capture_default_str();
  }

  // `<out without .csv>_<tag>.csv`
  std::string sibling(const std::string& tag) const {
    std::string stem = out;
    if (stem.size() > 4 && stem.ends_with(".csv")) stem.resize(stem.size() - 4);
    return stem + "_" + tag + ".csv";
  }
};

json params_json(const ModelParams& p, const SlotDurations& d) {
  return {{"n_stations", p.n_stations},   {"cw_min", p.cw_min},
          {"cw_max", p.cw_max},           {"retry_limit", p.retry_limit},
          {"epsilon", p.epsilon},         {"t_max_cap", p.effective_cap()},
          {"prune_floor", p.prune_floor}, {"t_empty_us", d.t_empty.count()},
          {"t_success_us", d.t_success.count()},
          {"t_collision_us", d.t_collision.count()}};
}

using Clock = std::chrono::steady_clock;

void write_manifest(const std::string& path, const std::string& command, json inputs,
                    const std::vector<std::string>& outputs, Clock::time_point start) {
  json m;
  m["command"] = command;
  m["tool_version"] = kVersion;
  m["inputs"] = std::move(inputs);
  m["outputs"] = outputs;
  m["wall_clock_s"] = std::chrono::duration<double>(Clock::now() - start).count();
  write_text_file(path + ".manifest.json", m.dump(2) + "\n");
}

std::string csv_of(const TimeDistribution& d) {
  std::ostringstream os;
  write_distribution_csv(os, d);
  return os.str();
}

const std::vector<double> kQuantiles{0.5, 0.95, 0.99, 0.999};

json quantile_table(const TimeDistribution& d) {
  json rows = json::array();
  for (double q : kQuantiles) {
    json row{{"q", q}};
    try {
      row["duration_us"] = distribution_quantile(d, q).count();
    } catch (const UnsatisfiableQuantile&) {
      row["duration_us"] = nullptr;
    }
    rows.push_back(row);
  }
  return rows;
}

int cmd_model(const ParamFlags& pf, const OutputFlags& of) {
  const auto start = Clock::now();
  const auto [params, durations] = pf.resolve();
  const ChainResult res = run_chains(params, durations);
  const auto& diag = res.diagnostics;

  json summary{{"p_fail_a", res.p_fail_a},
               {"total_mass_a", res.p_a.total_mass()},
               {"total_mass_b", res.p_b.total_mass()},
               {"deficit_a", res.p_a.deficit()},
               {"deficit_b", res.p_b.deficit()},
               {"residual_a", diag.residual_a()},
               {"residual_b", diag.residual_b()},
               {"slots", diag.slots},
               {"truncated", diag.truncated},
               {"warnings", diag.warnings}};
  std::vector<std::string> outputs{of.out};
  if (of.format == "json") {
    json doc{{"p_a", distribution_to_json(res.p_a)},
             {"p_b", distribution_to_json(res.p_b)},
             {"summary", summary},
             {"quantiles", {{"a", quantile_table(res.p_a)}, {"b", quantile_table(res.p_b)}}}};
    write_text_file(of.out, doc.dump(2) + "\n");
  } else {
    write_text_file(of.out, csv_of(res.p_a));
    write_text_file(of.sibling("pb"), csv_of(res.p_b));
    std::ostringstream q;
    q << "process,q,duration_us\n";
    for (const auto& [name, table] :
         {std::pair{"A", quantile_table(res.p_a)}, std::pair{"B", quantile_table(res.p_b)}})
      for (const auto& row : table)
        q << name << ',' << format_double(row["q"].get<double>()) << ','
          << (row["duration_us"].is_null() ? std::string("")
                                           : std::to_string(row["duration_us"].get<std::int64_t>()))
          << '\n';
    write_text_file(of.sibling("quantiles"), q.str());
    std::ostringstream s;
    s << "key,value\n";
    for (const char* k : {"p_fail_a", "total_mass_a", "total_mass_b", "deficit_a", "deficit_b",
                          "residual_a", "residual_b"})
      s << k << ',' << format_double(summary[k].get<double>()) << '\n';
    s << "slots," << diag.slots << "\ntruncated," << (diag.truncated ? "true" : "false") << '\n';
    write_text_file(of.sibling("summary"), s.str());
    outputs.insert(outputs.end(),
                   {of.sibling("pb"), of.sibling("quantiles"), of.sibling("summary")});
  }
  json inputs{{"params", params_json(params, durations)}, {"format", of.format}};
  write_manifest(of.out, "model", inputs, outputs, start);

  for (const auto& w : diag.warnings) std::cerr << "warning: " << w << '\n';
  std::cout << "P_A mass " << res.p_a.total_mass() << ", failure " << res.p_fail_a
            << ", P_B mass " << res.p_b.total_mass() << " after " << diag.slots << " slots\n";
  if (diag.truncated && std::max(diag.residual_a(), diag.residual_b()) > params.epsilon)
    return kDeficit;
  return kOk;
}

int cmd_simulate(const ParamFlags& pf, const OutputFlags& of, std::int64_t runs,
                 std::uint64_t seed, int tagged, unsigned threads) {
  const auto start = Clock::now();
  const auto [params, durations] = pf.resolve();
  SimConfig cfg{params, durations, runs, seed, tagged, threads};
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  const SimResult res = simulate(cfg);
  std::vector<std::string> outputs{of.out};
  json counts{{"runs", runs},
              {"failure_count_a", res.emp_a.failure_count},
              {"failure_count_b", res.emp_b.failure_count},
              {"max_tagged_attempts", res.max_tagged_attempts}};
  if (of.format == "json") {
    json doc{{"p_a", empirical_to_json(res.emp_a)},
             {"p_b", empirical_to_json(res.emp_b)},
             {"p_b_failed_runs_last_success", empirical_to_json(res.emp_b_partial)},
             {"summary", counts}};
    write_text_file(of.out, doc.dump(2) + "\n");
  } else {
    write_text_file(of.out, csv_of(res.emp_a.to_distribution()));
    write_text_file(of.sibling("pb"), csv_of(res.emp_b.to_distribution()));
    std::ostringstream s;
    s << "key,value\n";
    for (const auto& [k, v] : counts.items()) s << k << ',' << v.get<std::int64_t>() << '\n';
    write_text_file(of.sibling("summary"), s.str());
    outputs.insert(outputs.end(), {of.sibling("pb"), of.sibling("summary")});
  }
  json inputs{{"params", params_json(params, durations)},
              {"runs", runs},
              {"seed", seed},
              {"tagged_station_index", tagged},
              {"format", of.format}};
  write_manifest(of.out, "simulate", inputs, outputs, start);
  std::cout << runs << " runs, tagged failures " << res.emp_a.failure_count
            << ", runs with any failure " << res.emp_b.failure_count << '\n';
  return kOk;
}

TimeDistribution load_distribution(const std::string& path, const std::string& process) {
  const std::string key = process == "B" ? "p_b" : "p_a";
  if (path.ends_with(".json")) {
    const json doc = json::parse(read_text_file(path));
    if (!doc.contains(key)) throw UsageError(path + " has no " + key + " entry");
    return distribution_from_json(doc.at(key));
  }
  std::string file = path;
  if (process == "B") {
    OutputFlags of;
    of.out = path;
    file = of.sibling("pb");
  }
  std::istringstream is(read_text_file(file));
  return read_distribution_csv(is);
}

int cmd_compare(const std::string& model_path, const std::string& sim_path,
                const std::string& process, double tolerance, const std::string& report_path) {
  const auto start = Clock::now();
  json m1, m2;
  try {
    m1 = json::parse(read_text_file(model_path + ".manifest.json"));
    m2 = json::parse(read_text_file(sim_path + ".manifest.json"));
  } catch (const std::exception& e) {
    throw UsageError(std::string("cannot read manifests: ") + e.what());
  }
  for (const char* k : {"n_stations", "cw_min", "cw_max", "retry_limit", "t_empty_us",
                        "t_success_us", "t_collision_us"}) {
    const auto& a = m1["inputs"]["params"][k];
    const auto& b = m2["inputs"]["params"][k];
    if (a.is_null() || a != b)
      throw UsageError(std::string("manifest mismatch on ") + k + ": " + a.dump() + " vs " +
                       b.dump());
  }
  const TimeDistribution x = load_distribution(model_path, process);
  const TimeDistribution y = load_distribution(sim_path, process);
  const double ks = kolmogorov_distance(x, y);
  const bool pass = ks <= tolerance;

  json diffs = json::array();
  for (const auto& d : atom_differences(x, y))
    diffs.push_back({{"duration_us", d.duration.count()},
                     {"model", d.left},
                     {"simulation", d.right},
                     {"abs_diff", d.abs_diff()}});
  json report{{"process", process},
              {"kolmogorov_distance", ks},
              {"tolerance", tolerance},
              {"pass", pass},
              {"atoms", diffs}};
  if (!report_path.empty()) {
    write_text_file(report_path, report.dump(2) + "\n");
    write_manifest(report_path, "compare",
                   {{"model", model_path}, {"simulation", sim_path}, {"process", process},
                    {"tolerance", tolerance}},
                   {report_path}, start);
  }
  std::cout << "process " << process << ": Kolmogorov distance " << format_double(ks)
            << (pass ? " <= " : " > ") << format_double(tolerance) << " -> "
            << (pass ? "PASS" : "FAIL") << '\n';
  return pass ? kOk : kToleranceExceeded;
}

struct PlanFlags {
  double p = 1.0;
  double q = 0.9;
  std::string conditioning = "tagged";
  int k_exact = 64;
  int k_step = 8;

  void add_to(CLI::App& app) {
    app.add_option("--p", p, "probability that a station has a frame")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    app.add_option("--q", q, "target delivery probability")->capture_default_str();
    app.add_option("--conditioning", conditioning, "tagged or literal")
        ->check(CLI::IsMember({"tagged", "literal"}))
        ->capture_default_str();
    app.add_option("--k-exact", k_exact, "station counts evaluated exactly up to this value")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--k-step", k_step, "spacing of evaluated station counts above --k-exact")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
  }

  MixtureOptions options() const {
    MixtureOptions o;
    o.grid = KGrid::coarse(k_exact, k_step);
    return o;
  }

  Conditioning cond() const {
    return conditioning == "literal" ? Conditioning::PaperLiteral
                                     : Conditioning::TaggedHasPacket;
  }

  json to_json() const {
    return {{"p", p}, {"q", q}, {"conditioning", conditioning},
            {"k_exact", k_exact}, {"k_step", k_step}};
  }
};

int cmd_plan(const ParamFlags& pf, const OutputFlags& of, const PlanFlags& plan) {
  const auto start = Clock::now();
  const auto [params, durations] = pf.resolve();
  if (!(plan.q > 0.0 && plan.q <= 1.0)) throw UsageError("--q must lie in (0, 1]");
  const MixtureSpec spec{params.n_stations, plan.p, plan.cond()};
  DistributionCache cache(params, durations);
  TimeDistribution mix;
  try {
    mix = mixture_pa(spec, cache, plan.options());
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }

  std::optional<Micros> slot;
  try {
    slot = plan_slot_duration(mix, plan.q);
  } catch (const UnsatisfiableQuantile& e) {
    std::cerr << "error: " << e.what() << "; achievable maximum " << e.achievable() << '\n';
  }
  const bool compliant = slot && *slot <= kMaxRawSlot;

  std::vector<std::string> outputs{of.out};
  json summary{{"q", plan.q},
               {"slot_us", slot ? json(slot->count()) : json(nullptr)},
               {"compliant", compliant},
               {"total_mass", mix.total_mass()},
               {"max_slot_us", kMaxRawSlot.count()}};
  json cdf = json::array();
  {
    KahanSum acc;
    for (const auto& a : mix.atoms()) {
      acc += a.probability;
      cdf.push_back({{"duration_us", a.duration.count()}, {"cumulative", acc.value()}});
    }
  }
  if (of.format == "json") {
    json doc{{"distribution", distribution_to_json(mix)}, {"cdf", cdf}, {"summary", summary}};
    write_text_file(of.out, doc.dump(2) + "\n");
  } else {
    std::ostringstream os;
    os << "duration_us,cumulative\n";
    for (const auto& row : cdf)
      os << row["duration_us"].get<std::int64_t>() << ','
         << format_double(row["cumulative"].get<double>()) << '\n';
    write_text_file(of.out, os.str());
    write_text_file(of.sibling("pmf"), csv_of(mix));
    std::ostringstream s;
    s << "key,value\nq," << format_double(plan.q) << "\nslot_us,"
      << (slot ? std::to_string(slot->count()) : std::string("")) << "\ncompliant,"
      << (compliant ? "true" : "false") << "\ntotal_mass," << format_double(mix.total_mass())
      << '\n';
    write_text_file(of.sibling("summary"), s.str());
    outputs.insert(outputs.end(), {of.sibling("pmf"), of.sibling("summary")});
  }
  json inputs{{"params", params_json(params, durations)}, {"plan", plan.to_json()},
              {"format", of.format}};
  write_manifest(of.out, "plan", inputs, outputs, start);
  if (!slot) return kUnsatisfiable;
  std::cout << "slot " << slot->count() << " us for q = " << plan.q << " ("
            << (compliant ? "within" : "exceeds") << " the " << kMaxRawSlot.count()
            << " us limit)\n";
  return kOk;
}

int cmd_groups(const ParamFlags& pf, const OutputFlags& of, const PlanFlags& plan, int g_min,
               int g_max, const std::string& problem) {
  const auto start = Clock::now();
  const auto [params, durations] = pf.resolve();
  if (!(plan.q > 0.0 && plan.q <= 1.0)) throw UsageError("--q must lie in (0, 1]");
  const MixtureSpec spec{params.n_stations, plan.p, plan.cond()};
  DistributionCache cache(params, durations);
  GroupSweep sweep;
  try {
    sweep = optimize_groups(spec, cache, plan.q, g_min, g_max,
                            problem == "B" ? Problem::B : Problem::A, plan.options());
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }

  std::vector<std::string> outputs{of.out};
  json plans = json::array();
  for (const auto& p : sweep.plans) plans.push_back(group_plan_to_json(p));
  json best = sweep.best ? group_plan_to_json(*sweep.best) : json(nullptr);
  if (of.format == "json") {
    write_text_file(of.out, json{{"plans", plans}, {"best", best}}.dump(2) + "\n");
  } else {
    std::ostringstream os;
    write_group_plans_csv(os, sweep.plans);
    write_text_file(of.out, os.str());
  }
  json inputs{{"params", params_json(params, durations)}, {"plan", plan.to_json()},
              {"g_min", g_min}, {"g_max", g_max}, {"problem", problem},
              {"format", of.format}};
  write_manifest(of.out, "groups", inputs, outputs, start);

  if (!sweep.best) {
    double achievable = 0.0;
    for (const auto& p : sweep.plans) achievable = std::max(achievable, p.achievable);
    std::cerr << "error: no group count reaches q = " << plan.q << "; achievable maximum "
              << achievable << '\n';
    return kUnsatisfiable;
  }
  const auto& first = sweep.plans.front();
  std::cout << "optimum g = " << sweep.best->group_count << ", total "
            << sweep.best->total_reserved.count() << " us";
  if (first.feasible && sweep.best->total_reserved.count() > 0)
    std::cout << "; g = " << first.group_count << " needs "
              << format_double(static_cast<double>(first.total_reserved.count()) /
                               static_cast<double>(sweep.best->total_reserved.count()))
              << "x";
  std::cout << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Delivery-time model for contention inside a Restricted Access Window"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  ParamFlags pf;
  OutputFlags of;
  PlanFlags plan;

  auto* model = app.add_subcommand("model", "compute P_A and P_B with the Markov chains");
  pf.add_to(*model);
  of.add_to(*model);

  std::int64_t runs = 100000;
  std::uint64_t seed = 1;
  int tagged = 0;
  unsigned threads = 0;
  auto* sim = app.add_subcommand("simulate", "Monte-Carlo slot-level simulation");
  pf.add_to(*sim);
  of.add_to(*sim);
  sim->add_option("--runs", runs, "number of independent runs")->capture_default_str();
  sim->add_option("--seed", seed, "64-bit seed")->capture_default_str();
  sim->add_option("--tagged", tagged, "index of the tagged station")->capture_default_str();
  sim->add_option("--threads", threads, "worker threads (0 = all cores)");

  std::string model_path, sim_path, process = "A", report;
  double tolerance = 0.03;
  auto* cmp = app.add_subcommand("compare", "Kolmogorov distance between model and simulation");
  cmp->add_option("--model", model_path, "model output")->required();
  cmp->add_option("--sim", sim_path, "simulation output")->required();
  cmp->add_option("--process", process, "A or B")
      ->check(CLI::IsMember({"A", "B"}))
      ->capture_default_str();
  cmp->add_option("--tolerance", tolerance, "maximal distance")->capture_default_str();
  cmp->add_option("--out", report, "JSON report file");

  auto* pl = app.add_subcommand("plan", "RAW slot duration for a random number of contenders");
  pf.add_to(*pl);
  of.add_to(*pl);
  plan.add_to(*pl);

  int g_min = 1, g_max = 1;
  std::string problem = "A";
  auto* gr = app.add_subcommand("groups", "sweep the number of station groups");
  pf.add_to(*gr);
  of.add_to(*gr);
  plan.add_to(*gr);
  gr->add_option("--g-min", g_min, "smallest group count")->capture_default_str();
  gr->add_option("--g-max", g_max, "largest group count")->capture_default_str();
  gr->add_option("--problem", problem, "A (one station) or B (all stations)")
      ->check(CLI::IsMember({"A", "B"}))
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*model) return cmd_model(pf, of);
    if (*sim) return cmd_simulate(pf, of, runs, seed, tagged, threads);
    if (*cmp) return cmd_compare(model_path, sim_path, process, tolerance, report);
    if (*pl) return cmd_plan(pf, of, plan);
    if (*gr) return cmd_groups(pf, of, plan, g_min, g_max, problem);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
