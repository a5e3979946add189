// Command-line driver for single stages and full experiment runs.

#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "ruleloc/ruleloc.hpp"

namespace {

using namespace ruleloc;

struct CommonOptions {
  std::string config;
  std::string task;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> regimes;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("-c,--config", o.config, "run config JSON (defaults apply when omitted)");
  cmd->add_option("-t,--task", o.task, "task manifest JSON; overrides the config's planted task");
  cmd->add_option("-o,--out", o.out, "output directory (default: config output_dir)");
  cmd->add_option("--seed", o.seed, "master seed override");
  cmd->add_option("--regime", o.regimes, "regime(s) to run: positive, negative");
}

RunConfig resolve_config(const CommonOptions& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (!o.task.empty()) cfg.task_manifest = o.task;
  if (o.seed) cfg.seed = *o.seed;
  if (!o.regimes.empty()) {
    cfg.regimes.clear();
    for (const auto& r : o.regimes) {
      if (r == "positive") cfg.regimes.push_back(Regime::Positive);
      else if (r == "negative") cfg.regimes.push_back(Regime::Negative);
      else fail(ErrorCode::InvalidArgument, "unknown regime '" + r + "'");
    }
  }
  if (!o.out.empty()) cfg.output_dir = o.out;
  return cfg;
}

ArtifactStore open_store(const RunConfig& cfg) { return ArtifactStore(resolve_output_dir(cfg.output_dir)); }

// Regime examples split by the configured partition.
EvalSubset regime_subset(const TaskContext& ctx, const SplitterStage& part, Regime r) {
  EvalSubset s;
  for (std::size_t i = 0; i < ctx.task->examples.size(); ++i)
    if (ctx.task->examples[i].baseline == r) (part.associated[i] ? s.plus : s.minus).push_back(static_cast<ExampleId>(i));
  return s;
}

std::vector<NeuronCoord> all_coords(const SyntheticTask& t) {
  std::vector<NeuronCoord> out;
  for (std::uint32_t l = 0; l < t.layer_widths.size(); ++l)
    for (const auto& c : t.layer_coords(l)) out.push_back(c);
  return out;
}

std::vector<NeuronCoord> reduced(const RunConfig& cfg, const SyntheticTask& t, Regime r) {
  if (!cfg.stages.reduce) return all_coords(t);
  return ground_truth_reducer(t, r, cfg.reduce.budget, cfg.reduce.leak_rate, derive_seed(cfg.seed, "reduce", label(r)))
      .retained;
}

void print_report(const std::string& dir) {
  const auto j = nlohmann::json::parse(read_text_file((std::filesystem::path(dir) / "report.json").string()));
  const auto exp = j.value("experiment", std::string("?"));
  std::cout << "experiment " << exp << " (" << dir << ")\n";
  if (exp == "e0") {
    for (const auto& s : j["splitters"])
      std::cout << "  splitter val=" << s["validation_mcc"] << " test=" << s["test_mcc"] << "  " << s["rule"].get<std::string>()
                << "\n";
    for (const auto& r : j["regimes"])
      std::cout << "  " << r["regime"].get<std::string>() << " " << r["direction"].get<std::string>()
                << " agonists=" << r["agonists"] << " evaluations=" << r["group_evaluations"]
                << " high_quality=" << r["high_quality_counts"].dump()
                << " union=" << r["union_coverage"]["fraction"] << "\n";
  } else if (exp == "e1") {
    for (const auto& [cond, v] : j["median_high_quality"].items())
      std::cout << "  " << cond << " median high-quality " << v.dump()
                << " splitter mcc " << j["median_splitter_validation_mcc"][cond] << "\n";
  } else if (exp == "e2") {
    for (const auto& r : j["regimes"]) {
      if (!r.contains("recall")) continue;
      std::cout << "  " << r["circuit"].get<std::string>() << " cost ratio " << r["cost_ratio"] << "\n";
      for (const auto& t : r["recall"]["tiers"]) std::cout << "    " << t.dump() << "\n";
    }
  } else if (exp == "e3") {
    for (const auto& [plan, v] : j["plans"].items()) std::cout << "  " << plan << " " << v.dump() << "\n";
  }
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Rule-guided neuron localization on planted synthetic tasks"};
  app.require_subcommand(1);

  CommonOptions common;
  std::string spec_path;
  auto* plant = app.add_subcommand("plant", "plant a synthetic task and write its manifest");
  plant->add_option("-c,--config", spec_path, "run config or bare task spec JSON");
  plant->add_option("-o,--out", common.out, "manifest path")->required();
  plant->add_option("--seed", common.seed, "task seed override");

  auto* features = app.add_subcommand("features", "score predicate columns against baseline labels");
  add_common(features, common);

  auto* rules = app.add_subcommand("rules", "extract splitter rules");
  add_common(rules, common);

  auto* coverage = app.add_subcommand("coverage", "build coverage plans per regime");
  add_common(coverage, common);

  auto* reduce = app.add_subcommand("reduce", "reduce the candidate set per regime");
  add_common(reduce, common);

  auto* cha = app.add_subcommand("cha", "hierarchical search per regime");
  add_common(cha, common);

  auto* brute = app.add_subcommand("brute", "singleton brute force per regime");
  add_common(brute, common);

  std::string neuron;
  auto* anchor = app.add_subcommand("anchor", "anchor one neuron's flips to a rule");
  add_common(anchor, common);
  anchor->add_option("-n,--neuron", neuron, "coordinate such as m0:12")->required();

  std::map<std::string, CLI::App*> experiments;
  for (const char* e : {"e0", "e1", "e2", "e3"}) {
    experiments[e] = app.add_subcommand(e, std::string("run experiment ") + e);
    add_common(experiments[e], common);
  }
  auto* run = app.add_subcommand("run", "run the experiment named in the config");
  add_common(run, common);

  std::string report_dir;
  auto* report = app.add_subcommand("report", "summarize a finished run directory");
  report->add_option("dir", report_dir, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  if (*plant) {
    PlantSpec spec;
    if (!spec_path.empty()) {
      const auto j = nlohmann::json::parse(read_text_file(spec_path));
      spec = j.contains("task") ? plant_spec_from_json(j.at("task")) : plant_spec_from_json(j);
    }
    if (common.seed) spec.seed = *common.seed;
    const auto task = plant_task(spec);
    save_task(task, common.out);
    std::cout << "planted " << task.planted.size() << " neurons over " << task.examples.size() << " examples -> "
              << common.out << "\n";
    return 0;
  }
  if (*report) {
    print_report(report_dir);
    return 0;
  }
  for (const auto& [name, cmd] : experiments) {
    if (!*cmd) continue;
    auto cfg = resolve_config(common);
    cfg.experiment = name;
    auto store = open_store(cfg);
    run_experiment(cfg, store);
    print_report(store.root().string());
    return 0;
  }
  if (*run) {
    const auto cfg = resolve_config(common);
    auto store = open_store(cfg);
    run_experiment(cfg, store);
    print_report(store.root().string());
    return 0;
  }

  const auto cfg = resolve_config(common);
  const auto ctx = make_context(load_or_plant(cfg), cfg, cfg.seed);
  const auto& task = *ctx.task;
  auto store = open_store(cfg);

  if (*features) {
    std::vector<std::vector<double>> cols;
    std::vector<std::string> names;
    for (const auto& f : task.features) {
      cols.push_back(f.values);
      names.push_back(f.name);
    }
    const auto rep = filter_features(cols, ctx.baseline, FilterThresholds{});
    std::ostringstream csv;
    write_feature_scores_csv(csv, names, rep);
    std::cout << csv.str();
    store.write_text("features.csv", csv.str());
    return 0;
  }

  const auto part = build_partition(ctx, cfg.split, cfg, cfg.seed);
  if (*rules) {
    nlohmann::ordered_json out = nlohmann::ordered_json::array();
    for (const auto& r : part.splitters) {
      std::cout << to_text(r) << "  (validation mcc " << selection_mcc(r) << ")\n";
      out.push_back(rule_to_json(r));
    }
    for (const auto& n : part.notes) std::cout << "note: " << n << "\n";
    store.write_json("splitters.json", out);
    return 0;
  }

  SyntheticOracle oracle(ctx.task);
  for (Regime r : cfg.regimes) {
    const std::string rp = std::string(to_string(r)) + "/";
    const auto full = regime_subset(ctx, part, r);
    std::cout << "[" << to_string(r) << "] plus=" << full.plus.size() << " minus=" << full.minus.size() << "\n";
    if (*reduce) {
      const auto kept = reduced(cfg, task, r);
      std::vector<std::string> names;
      for (const auto& c : kept) names.push_back(to_string(c));
      store.write_json(rp + "retained.json", nlohmann::ordered_json(names));
      std::cout << "  retained " << kept.size() << " candidates\n";
      continue;
    }
    if (full.plus.empty() || full.minus.empty()) {
      std::cout << "  skipped: one slice is empty\n";
      continue;
    }
    if (*coverage) {
      std::vector<std::size_t> plus(full.plus.begin(), full.plus.end()), minus(full.minus.begin(), full.minus.end());
      const auto space = plan_space(ctx.embedding, plus, minus, cfg.coverage.plan.d_pca);
      auto pc = cfg.coverage.plan;
      pc.seed = derive_seed(cfg.seed, "coverage", label(r));
      const auto plan = cfg.coverage_kind == PlanKind::Spectral ? spectral_plan(space, plus, minus, ctx.lengths, pc)
                                                                : random_plan(space, plus, minus, ctx.lengths, pc);
      store.write_json(rp + "coverage_plan.json", plan_to_json(plan));
      std::cout << "  selected " << plan.selected_plus.size() << " associated, " << plan.pairs.size()
                << " matched pairs, within-radius " << plan.diagnostics.fraction_within << "\n";
      continue;
    }
    if (*anchor) {
      const auto coord = parse_coord(neuron);
      std::vector<std::size_t> rows;
      std::vector<Slice> slices;
      for (std::size_t i = 0; i < task.examples.size(); ++i)
        if (task.examples[i].baseline == r) {
          rows.push_back(i);
          slices.push_back(part.associated[i] ? Slice::Associated : Slice::Unrelated);
        }
      const auto m = ctx.matrix.restrict_to(rows);
      const auto targets = flip_targets(coord, oracle, m.example_ids, slices, r, 2);
      AnchorConfig ac;
      ac.clauses = cfg.rules.clauses;
      ac.seed_k = cfg.rules.seed_k;
      ac.high_quality_mcc = cfg.rules.high_quality_mcc;
      const auto res = anchor_rule(coord, r, SplitLabels(targets, m.splits), m, ac);
      if (res.rule) std::cout << "  " << to_text(*res.rule) << "\n";
      if (res.test_mcc) std::cout << "  test mcc " << *res.test_mcc << (res.high_quality ? " (high quality)" : "") << "\n";
      if (!res.note.empty()) std::cout << "  note: " << res.note << "\n";
      continue;
    }
    const auto candidates = reduced(cfg, task, r);
    std::ostringstream csv;
    if (*cha) {
      auto sc = cfg.search;
      sc.seed = derive_seed(cfg.seed, "search", label(r));
      std::map<std::uint32_t, std::vector<NeuronCoord>> by_layer;
      for (const auto& c : candidates) by_layer[c.layer].push_back(c);
      std::vector<AgonistRecord> found;
      SearchStats stats;
      for (const auto& [layer, coords] : by_layer) {
        const auto res = cha_search(coords, oracle, full, r, sc);
        stats.merge(res.stats);
        found.insert(found.end(), res.agonists.begin(), res.agonists.end());
        std::ostringstream tree;
        write_tree_jsonl(tree, res.tree, coords);
        store.write_text(rp + "tree_layer" + std::to_string(layer) + ".jsonl", tree.str());
      }
      write_agonists_csv(csv, found);
      store.write_text(rp + "agonists.csv", csv.str());
      store.write_json(rp + "search_stats.json", stats_to_json(stats));
      std::cout << "  " << found.size() << " agonists in " << stats.group_evaluations << " evaluations\n";
    } else if (*brute) {
      BruteForceConfig bc;
      bc.tau = cfg.search.tau;
      bc.epsilon = cfg.search.epsilon;
      bc.alpha = cfg.search.alpha;
      bc.samples_per_slice = cfg.search.samples_per_slice;
      bc.seed = derive_seed(cfg.seed, "search", label(r));
      const auto res = brute_force_singletons(candidates, oracle, full, r, bc);
      write_agonists_csv(csv, res.agonists);
      store.write_text(rp + "brute_agonists.csv", csv.str());
      std::cout << "  " << res.agonists.size() << " agonists in " << res.evaluations << " evaluations\n";
    }
    std::cout << csv.str();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const ruleloc::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
