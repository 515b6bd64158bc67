/*
 * Copyright 2026 The relshap Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// relshap command-line driver: gen, provenance, exact, estimate, bench.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "relshap/relshap.hpp"

namespace fs = std::filesystem;
using namespace relshap;

namespace {

struct Common {
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::string out;
};

struct Source {
  std::string schema;
  std::string query;
  std::string preset;

  void attach(CLI::App* cmd) {
    cmd->add_option("--schema", schema, "schema file (default: schema.json next to the query)");
    cmd->add_option("--query", query, "query file");
    cmd->add_option("--preset", preset, "built-in workload instead of files")->check(CLI::IsMember({"example1"}));
  }

  Workload load() const {
    if (!preset.empty()) return example1();
    if (query.empty()) throw ValidationError("--query or --preset is required");
    fs::path schema_path = schema.empty() ? fs::path(query).parent_path() / "schema.json" : fs::path(schema);
    Workload w{load_instance(schema_path), parse_query(read_json_file(query))};
    return w;
  }
};

void emit(const std::string& out, const std::string& text) {
  if (out.empty()) {
    std::cout << text << '\n';
    return;
  }
  std::ofstream file(out);
  if (!file) throw ValidationError("cannot write " + out);
  file << text << '\n';
}

EvaluatorKind parse_evaluator(const std::string& name) {
  if (name == "naive") return EvaluatorKind::naive;
  if (name == "compiled") return EvaluatorKind::compiled;
  throw ValidationError("unknown evaluator '" + name + "'");
}

std::vector<std::size_t> parse_counts(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      long long v = std::stoll(item, &used);
      if (used != item.size() || v < 0) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ValidationError("bad count '" + item + "' in '" + text + "'");
    }
  }
  return out;
}

struct EstimateFlags {
  std::string evaluator = "compiled";
  std::size_t cycles = 5;
  std::size_t floor = 1;
  std::optional<std::size_t> bins;
  std::optional<std::size_t> cache_capacity;
  std::string prune = "on";
  bool dedup = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--evaluator", evaluator)->check(CLI::IsMember({"naive", "compiled"}));
    cmd->add_option("--cycles", cycles, "adaptive cycles k");
    cmd->add_option("--floor", floor, "minimum samples per stratum per cycle");
    cmd->add_option("--bins", bins, "quantile bins per relation");
    cmd->add_option("--cache-capacity", cache_capacity, "enable the coalition cache with this many entries");
    cmd->add_option("--prune", prune)->check(CLI::IsMember({"on", "off"}));
    cmd->add_flag("--dedup", dedup, "enumerate strata whose allocation covers them");
  }

  EstimatorConfig config(const Common& common) const {
    EstimatorConfig cfg;
    cfg.cycles = cycles;
    cfg.floor = floor;
    cfg.seed = common.seed;
    cfg.workers = common.workers;
    cfg.bins = bins;
    cfg.cache = cache_capacity.has_value();
    if (cache_capacity) cfg.cache_capacity = *cache_capacity;
    cfg.prune = prune == "on";
    cfg.dedup = dedup;
    cfg.evaluator = parse_evaluator(evaluator);
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tuple-level Shapley and Banzhaf attribution for join-aggregate queries"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--seed", common.seed, "random seed")->capture_default_str();
  app.add_option("--workers", common.workers, "worker threads")->capture_default_str();
  app.add_option("--out", common.out, "output file (stdout when omitted)");

  // gen
  auto* gen = app.add_subcommand("gen", "write a synthetic star instance and its query");
  std::string gen_dir, gen_preset;
  std::vector<std::size_t> gen_scale{8, 3, 2};
  double gen_skew = 0;
  gen->add_option("dir", gen_dir, "output directory")->required();
  gen->add_option("--scale", gen_scale, "rows for lineitem, orders, customer")->expected(3)->delimiter(',');
  gen->add_option("--skew", gen_skew, "lognormal shape of prices")->check(CLI::NonNegativeNumber);
  gen->add_option("--preset", gen_preset, "write a built-in workload")->check(CLI::IsMember({"example1"}));
  gen->add_option("--seed", common.seed, "random seed");

  // provenance
  auto* prov = app.add_subcommand("provenance", "print the endogenous lineage partition");
  Source prov_src;
  prov_src.attach(prov);

  // exact
  auto* ex = app.add_subcommand("exact", "exact value by enumeration");
  Source ex_src;
  std::string ex_target, ex_method = "subset";
  std::size_t ex_cap = 24;
  std::string ex_evaluator = "compiled";
  ex_src.attach(ex);
  ex->add_option("--target", ex_target, "tuple id or relation:row")->required();
  ex->add_option("--method", ex_method)->check(CLI::IsMember({"subset", "perm", "banzhaf"}));
  ex->add_option("--exact-cap", ex_cap, "largest n accepted");
  ex->add_option("--evaluator", ex_evaluator)->check(CLI::IsMember({"naive", "compiled"}));
  ex->add_option("--workers", common.workers, "worker threads");

  // estimate
  auto* est = app.add_subcommand("estimate", "sampled Shapley estimate");
  Source est_src;
  std::string est_target, est_method = "arss";
  std::size_t est_budget = 1000;
  EstimateFlags est_flags;
  est_src.attach(est);
  est_flags.attach(est);
  est->add_option("--target", est_target, "tuple id or relation:row")->required();
  est->add_option("--method", est_method)->check(CLI::IsMember({"mcs", "ss", "ass", "rss", "arss"}));
  est->add_option("--budget", est_budget, "sample budget m");
  est->add_option("--seed", common.seed, "random seed");
  est->add_option("--workers", common.workers, "worker threads");
  est->add_option("--out", common.out, "report file");

  // bench
  auto* bench = app.add_subcommand("bench", "repeated estimates against the exact oracle");
  Source bench_src;
  std::vector<std::string> bench_targets, bench_methods{"mcs", "ss", "ass", "rss", "arss"};
  std::string bench_budgets = "1000,10000";
  std::size_t bench_reps = 20, bench_cap = 24;
  bool no_exact = false, parallel_cells = false;
  EstimateFlags bench_flags;
  bench_src.attach(bench);
  bench_flags.attach(bench);
  bench->add_option("--target", bench_targets, "tuple ids or relation:row")->required();
  bench->add_option("--methods", bench_methods)->delimiter(',')->check(CLI::IsMember({"mcs", "ss", "ass", "rss", "arss"}));
  bench->add_option("--budgets", bench_budgets, "comma-separated, strictly increasing");
  bench->add_option("--reps", bench_reps, "repetitions R");
  bench->add_option("--exact-cap", bench_cap, "largest n for the oracle");
  bench->add_flag("--no-exact", no_exact, "skip the oracle; report raw estimates only");
  bench->add_flag("--parallel-cells", parallel_cells, "run (method, budget) cells concurrently");
  bench->add_option("--seed", common.seed, "base seed; repetition r uses seed + r");
  bench->add_option("--workers", common.workers, "worker threads");
  bench->add_option("--out", common.out, "output prefix for .json and .csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) {
      Workload w = gen_preset.empty()
                       ? gen_instance(common.seed, {gen_scale[0], gen_scale[1], gen_scale[2]}, gen_skew)
                       : example1();
      save_workload(w, gen_dir);
      std::cout << "wrote " << gen_dir << '\n';
    } else if (*prov) {
      Workload w = prov_src.load();
      auto partition = compute_lineage(w.query, w.instance);
      emit(common.out, partition_json(partition, &w.instance).dump(2));
    } else if (*ex) {
      Workload w = ex_src.load();
      GameOptions opts;
      opts.exact_cap = ex_cap;
      opts.evaluator = parse_evaluator(ex_evaluator);
      GameContext ctx(w.instance, w.query, opts);
      TupleId t = w.instance.parse_label(ex_target);
      auto start = std::chrono::steady_clock::now();
      double value = ex_method == "perm"      ? exact_shapley_perm(ctx, t)
                     : ex_method == "banzhaf" ? exact_banzhaf(ctx, t, common.workers)
                                              : exact_shapley(ctx, t, common.workers);
      double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      nlohmann::json out = {{"target", w.instance.label(t)}, {"method", ex_method}, {"players", ctx.players()},
                            {"value", value}, {"seconds", seconds}};
      if (!is_endogenous(ctx.partition(), t)) out["warning"] = "target is not endogenous";
      emit(common.out, out.dump(2));
    } else if (*est) {
      Workload w = est_src.load();
      EstimatorConfig cfg = est_flags.config(common);
      cfg.method = parse_method(est_method);
      cfg.budget = est_budget;
      GameOptions opts;
      opts.evaluator = cfg.evaluator;
      GameContext ctx(w.instance, w.query, opts);
      EstimateReport report = estimate(ctx, w.instance.parse_label(est_target), cfg);
      emit(common.out, report_json(report, &w.instance).dump(2));
      for (const auto& warning : report.warnings) std::cerr << "warning: " << warning << '\n';
    } else if (*bench) {
      BenchSpec spec;
      spec.schema = bench_src.schema;
      spec.query = bench_src.query;
      spec.preset = bench_src.preset;
      if (spec.preset.empty() && spec.schema.empty() && !spec.query.empty())
        spec.schema = spec.query.parent_path() / "schema.json";
      if (spec.preset.empty() && spec.query.empty()) throw ValidationError("--query or --preset is required");
      spec.targets = bench_targets;
      spec.methods.clear();
      for (const auto& m : bench_methods) spec.methods.push_back(parse_method(m));
      spec.budgets = parse_counts(bench_budgets);
      spec.repetitions = bench_reps;
      spec.seed = common.seed;
      spec.exact = !no_exact;
      spec.parallel_cells = parallel_cells;
      spec.base = bench_flags.config(common);
      GameOptions opts;
      opts.exact_cap = bench_cap;
      BenchResult result = run_bench(spec, opts);
      if (common.out.empty()) {
        std::cout << bench_json(result).dump(2) << '\n';
      } else {
        std::ofstream(common.out + ".json") << bench_json(result).dump(2) << '\n';
        std::ofstream(common.out + ".csv") << bench_csv(result);
        std::cout << "wrote " << common.out << ".json and " << common.out << ".csv\n";
      }
    }
  } catch (const CapExceeded& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
