#pragma once

// Stage pipeline on a synthetic task and the E0-E3 experiment drivers.

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ruleloc/baseline.hpp"
#include "ruleloc/candidates.hpp"
#include "ruleloc/coverage.hpp"
#include "ruleloc/harness/artifacts.hpp"
#include "ruleloc/harness/config.hpp"
#include "ruleloc/localizer.hpp"
#include "ruleloc/manifest.hpp"
#include "ruleloc/oracle.hpp"
#include "ruleloc/rules.hpp"
#include "ruleloc/stats.hpp"

namespace ruleloc {

inline std::string threshold_key(double t) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(2) << t;
  return ss.str();
}

template <class F>
auto run_stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    fail(ErrorCode::Stage, std::string("stage '") + name + "' failed: " + e.what());
  }
}

struct TaskContext {
  std::shared_ptr<const SyntheticTask> task;
  DenseMatrix embedding;
  std::vector<double> lengths;
  std::vector<std::uint8_t> baseline;
  PredicateMatrix matrix;  // all examples, with train/validation/test tags
};

inline TaskContext make_context(std::shared_ptr<const SyntheticTask> task, const RunConfig& cfg, std::uint64_t seed) {
  TaskContext ctx;
  ctx.task = std::move(task);
  auto emb = cfg.coverage.embedding;
  emb.seed = derive_seed(seed, "embedding");
  ctx.embedding = planted_latent_embedding(*ctx.task, emb);
  ctx.lengths = example_lengths(*ctx.task);
  ctx.baseline = ctx.task->baseline_labels();
  const auto splits = assign_splits(ctx.task->features, ctx.task->examples.size(), cfg.rules.split_clusters,
                                    derive_seed(seed, "splits"), cfg.rules.fractions);
  ctx.matrix = PredicateMatrix::make(ctx.task->features, splits);
  return ctx;
}

inline std::shared_ptr<const SyntheticTask> load_or_plant(const RunConfig& cfg) {
  if (cfg.task_manifest) return std::make_shared<const SyntheticTask>(load_task(*cfg.task_manifest));
  return std::make_shared<const SyntheticTask>(plant_task(cfg.task));
}

struct SplitterStage {
  SplitMethod method = SplitMethod::Rule;
  std::vector<RuleSet> splitters;  // empty for the spectral and planted partitions
  std::vector<std::string> notes;
  std::vector<std::uint8_t> associated;  // per example: 1 on the associated side
};

inline SplitterStage build_partition(const TaskContext& ctx, SplitMethod method, const RunConfig& cfg,
                                     std::uint64_t seed) {
  SplitterStage st;
  st.method = method;
  const auto& task = *ctx.task;
  const std::size_t n = task.examples.size();
  st.associated.assign(n, 0);
  if (method == SplitMethod::Planted) {
    for (std::size_t i = 0; i < n; ++i) st.associated[i] = task.examples[i].slice == Slice::Associated;
    return st;
  }
  if (method == SplitMethod::Spectral) {
    const std::size_t d = std::min({cfg.coverage.plan.d_pca, n, ctx.embedding.cols});
    const auto pca = pca_embed(ctx.embedding, d);
    const auto kc = greedy_k_center(pca.embedded, 2, cfg.coverage.plan.first_center, derive_seed(seed, "spectral-split"));
    for (std::size_t i = 0; i < n; ++i) st.associated[i] = kc.assignment[i] == 0;
    return st;
  }
  std::vector<std::uint8_t> labels = ctx.baseline;
  RuleRole role = RuleRole::Splitter;
  if (method == SplitMethod::FakeRule) {
    labels = fake_rule_control(labels, seed);
    role = RuleRole::FakeControl;
  }
  ClauseConfig clauses = cfg.rules.clauses;
  clauses.prompt_only = true;
  SplitLabels sl(labels, ctx.matrix.splits);
  auto set = extract_splitters(ctx.matrix, sl, cfg.rules.splitters, clauses, cfg.rules.seed_k, role);
  sl.release_test();
  for (auto& r : set.splitters) score_rule(r, ctx.matrix, sl);
  st.splitters = std::move(set.splitters);
  st.notes = std::move(set.notes);
  st.associated = rule_fires(st.splitters.front(), ctx.matrix);
  return st;
}

struct AnchorRecord {
  AnchorResult anchor;
  std::vector<std::uint8_t> targets;  // over D_b rows
  std::size_t flips = 0;
};

struct UnionCoverage {
  std::size_t evaluated = 0;
  std::size_t covered = 0;
  struct Step {
    NeuronCoord neuron;
    std::size_t added = 0;
    std::size_t cumulative = 0;
  };
  std::vector<Step> incremental;
  double fraction() const { return evaluated ? static_cast<double>(covered) / static_cast<double>(evaluated) : 0.0; }
};

struct RegimeOutcome {
  Regime regime = Regime::Positive;
  bool skipped = false;
  std::string note;
  std::vector<ExampleId> plus;
  std::vector<ExampleId> minus;
  std::optional<CoveragePlan> plan;
  EvalSubset subset;
  std::vector<NeuronCoord> candidates;
  std::vector<NeuronCoord> reducer_dropped;
  SearchStats stats;
  std::vector<AgonistRecord> agonists;
  std::vector<AnchorRecord> anchors;
  UnionCoverage coverage;
  std::map<std::string, std::string> sources;

  std::size_t high_quality_at(double t) const {
    std::size_t n = 0;
    for (const auto& a : anchors) n += a.anchor.test_mcc && *a.anchor.test_mcc >= t;
    return n;
  }
};

struct PipelineOutcome {
  SplitterStage splitter;
  std::vector<RegimeOutcome> regimes;
  std::string splitter_source;

  std::size_t high_quality_at(double t) const {
    std::size_t n = 0;
    for (const auto& r : regimes) n += r.high_quality_at(t);
    return n;
  }
  double splitter_validation_mcc() const {
    if (splitter.splitters.empty()) return 0.0;
    return selection_mcc(splitter.splitters.front());
  }
};

struct Condition {
  std::string name;
  SplitMethod split = SplitMethod::Rule;
  PlanKind coverage = PlanKind::Spectral;
};

namespace detail {

inline std::string csv_of_agonists(const std::vector<AgonistRecord>& a) {
  std::ostringstream ss;
  write_agonists_csv(ss, a);
  return ss.str();
}

inline UnionCoverage union_coverage(const std::vector<AnchorRecord>& anchors, double threshold, std::size_t rows) {
  UnionCoverage u;
  u.evaluated = rows;
  std::vector<const AnchorRecord*> hq;
  for (const auto& a : anchors)
    if (a.anchor.test_mcc && *a.anchor.test_mcc >= threshold) hq.push_back(&a);
  std::stable_sort(hq.begin(), hq.end(), [](const AnchorRecord* a, const AnchorRecord* b) {
    if (a->flips != b->flips) return a->flips > b->flips;
    return a->anchor.neuron < b->anchor.neuron;
  });
  std::vector<std::uint8_t> covered(rows, 0);
  for (const auto* a : hq) {
    std::size_t added = 0;
    for (std::size_t r = 0; r < rows; ++r)
      if (a->targets[r] && !covered[r]) {
        covered[r] = 1;
        ++added;
      }
    u.covered += added;
    u.incremental.push_back({a->anchor.neuron, added, u.covered});
  }
  return u;
}

}  // namespace detail

// Stages 1-4 for one condition. Artifacts land under `prefix`.
inline PipelineOutcome run_pipeline(const TaskContext& ctx, const RunConfig& cfg, const Condition& cond,
                                    std::uint64_t seed, ArtifactStore& store, const std::string& prefix) {
  PipelineOutcome out;
  const auto& task = *ctx.task;
  out.splitter = run_stage("splitter", [&] { return build_partition(ctx, cond.split, cfg, seed); });
  {
    nlohmann::ordered_json sj;
    sj["method"] = to_string(cond.split);
    auto rules = nlohmann::ordered_json::array();
    for (const auto& r : out.splitter.splitters) rules.push_back(rule_to_json(r));
    sj["splitters"] = rules;
    sj["notes"] = out.splitter.notes;
    std::size_t assoc = 0;
    for (auto a : out.splitter.associated) assoc += a;
    sj["associated_examples"] = assoc;
    out.splitter_source = store.write_json(prefix + "splitters.json", sj);
  }
  SyntheticOracle oracle(ctx.task);

  for (Regime regime : cfg.regimes) {
    RegimeOutcome ro;
    ro.regime = regime;
    const std::string rp = prefix + std::string(to_string(regime)) + "/";
    for (std::size_t i = 0; i < task.examples.size(); ++i) {
      if (task.examples[i].baseline != regime) continue;
      (out.splitter.associated[i] ? ro.plus : ro.minus).push_back(static_cast<ExampleId>(i));
    }
    if (ro.plus.empty() && ro.minus.empty()) {
      ro.skipped = true;
      ro.note = "regime has no examples";
      out.regimes.push_back(std::move(ro));
      continue;
    }
    if (ro.plus.empty() || ro.minus.empty()) {
      ro.skipped = true;
      ro.note = "split leaves one slice empty";
      out.regimes.push_back(std::move(ro));
      continue;
    }

    run_stage("coverage", [&] {
      if (!cfg.stages.coverage) {
        ro.subset = {ro.plus, ro.minus};
        return 0;
      }
      std::vector<std::size_t> plus(ro.plus.begin(), ro.plus.end()), minus(ro.minus.begin(), ro.minus.end());
      const auto space = plan_space(ctx.embedding, plus, minus, cfg.coverage.plan.d_pca);
      CoverageConfig pc = cfg.coverage.plan;
      pc.seed = derive_seed(seed, "coverage", label(regime));
      ro.plan = cond.coverage == PlanKind::Spectral ? spectral_plan(space, plus, minus, ctx.lengths, pc)
                                                    : random_plan(space, plus, minus, ctx.lengths, pc);
      ro.subset = ro.plan->eval_subset();
      ro.sources["coverage"] = store.write_json(rp + "coverage_plan.json", plan_to_json(*ro.plan));
      return 0;
    });

    run_stage("reduce", [&] {
      if (!cfg.stages.reduce) {
        for (std::uint32_t l = 0; l < task.layer_widths.size(); ++l)
          for (const auto& c : task.layer_coords(l)) ro.candidates.push_back(c);
        return 0;
      }
      const auto rseed = derive_seed(seed, "reduce", label(regime));
      if (cfg.reduce.kind == ReducerKind::GroundTruth) {
        auto red = ground_truth_reducer(task, regime, cfg.reduce.budget, cfg.reduce.leak_rate, rseed);
        ro.candidates = red.retained;
        ro.reducer_dropped = red.dropped;
        nlohmann::ordered_json rj;
        auto names = [](const std::vector<NeuronCoord>& v) {
          std::vector<std::string> s;
          for (const auto& c : v) s.push_back(to_string(c));
          return s;
        };
        rj["dropped"] = names(red.dropped);
        rj["leak_rate"] = cfg.reduce.leak_rate;
        rj["retained"] = names(red.retained);
        ro.sources["reduce"] = store.write_json(rp + "retained.json", rj);
      } else {
        auto sp = cfg.reduce.surrogate;
        sp.seed = rseed;
        const auto ranking = planted_surrogate_ranking(task, regime, sp);
        const auto kept = retain_top(ranking, std::max<std::size_t>(cfg.reduce.budget, 1),
                                     cfg.reduce.attention_channels ? mlp_only(cfg.reduce.attention_channels)
                                                                   : ElementFilter{});
        if (cfg.reduce.budget > 0) ro.candidates = kept.ranked;
        std::sort(ro.candidates.begin(), ro.candidates.end());
        std::ostringstream csv;
        write_ranking_csv(csv, ranking, kept);
        ro.sources["reduce"] = store.write_text(rp + "ranking.csv", csv.str());
      }
      return 0;
    });

    run_stage("search", [&] {
      std::map<std::uint32_t, std::vector<NeuronCoord>> by_layer;
      for (const auto& c : ro.candidates) by_layer[c.layer].push_back(c);
      SearchConfig sc = cfg.search;
      sc.seed = derive_seed(seed, "search", label(regime));
      for (const auto& [layer, coords] : by_layer) {
        auto res = cha_search(coords, oracle, ro.subset, regime, sc);
        ro.stats.merge(res.stats);
        ro.agonists.insert(ro.agonists.end(), res.agonists.begin(), res.agonists.end());
        std::ostringstream tree;
        write_tree_jsonl(tree, res.tree, coords);
        store.write_text(rp + "tree_layer" + std::to_string(layer) + ".jsonl", tree.str());
      }
      ro.sources["agonists"] = store.write_text(rp + "agonists.csv", detail::csv_of_agonists(ro.agonists));
      ro.sources["search"] = store.write_json(rp + "search_stats.json", stats_to_json(ro.stats));
      return 0;
    });

    if (cfg.stages.anchor) {
      run_stage("anchor", [&] {
        std::vector<std::size_t> rows;
        std::vector<Slice> slices;
        for (std::size_t i = 0; i < task.examples.size(); ++i)
          if (task.examples[i].baseline == regime) {
            rows.push_back(i);
            slices.push_back(out.splitter.associated[i] ? Slice::Associated : Slice::Unrelated);
          }
        const auto m = ctx.matrix.restrict_to(rows);
        AnchorConfig ac;
        ac.clauses = cfg.rules.clauses;
        ac.seed_k = cfg.rules.seed_k;
        ac.high_quality_mcc = cfg.rules.high_quality_mcc;
        auto anchors = nlohmann::ordered_json::array();
        for (const auto& a : ro.agonists) {
          AnchorRecord rec;
          rec.targets = flip_targets(a.neuron, oracle, m.example_ids, slices, regime, 2);
          rec.flips = static_cast<std::size_t>(std::count(rec.targets.begin(), rec.targets.end(), 1));
          rec.anchor = anchor_rule(a.neuron, regime, SplitLabels(rec.targets, m.splits), m, ac);
          nlohmann::ordered_json aj;
          aj["flips"] = rec.flips;
          aj["high_quality"] = rec.anchor.high_quality;
          aj["neuron"] = to_string(a.neuron);
          aj["note"] = rec.anchor.note;
          aj["rule"] = rec.anchor.rule ? rule_to_json(*rec.anchor.rule) : nlohmann::ordered_json(nullptr);
          aj["test_mcc"] = rec.anchor.test_mcc ? nlohmann::ordered_json(*rec.anchor.test_mcc) : nlohmann::ordered_json(nullptr);
          anchors.push_back(aj);
          ro.anchors.push_back(std::move(rec));
        }
        ro.sources["anchors"] = store.write_json(rp + "anchors.json", anchors);
        ro.coverage = detail::union_coverage(ro.anchors, cfg.rules.high_quality_mcc, rows.size());
        return 0;
      });
    }
    out.regimes.push_back(std::move(ro));
  }
  return out;
}

namespace detail {

inline nlohmann::ordered_json regime_summary(const RegimeOutcome& r, const RunConfig& cfg) {
  nlohmann::ordered_json j;
  j["regime"] = to_string(r.regime);
  j["direction"] = direction(r.regime);
  j["skipped"] = r.skipped;
  j["note"] = r.note;
  j["plus"] = r.plus.size();
  j["minus"] = r.minus.size();
  j["evaluated_plus"] = r.subset.plus.size();
  j["evaluated_minus"] = r.subset.minus.size();
  j["candidates"] = r.candidates.size();
  j["reducer_dropped"] = r.reducer_dropped.size();
  j["agonists"] = r.agonists.size();
  std::vector<double> sel;
  std::size_t selective = 0;
  for (const auto& a : r.agonists) {
    sel.push_back(a.effect.selectivity());
    selective += a.selective;
  }
  j["selective_agonists"] = selective;
  j["selectivity_quantiles"] = sel.empty() ? nlohmann::ordered_json(nullptr)
                                           : nlohmann::ordered_json({{"q10", quantile(sel, 0.1)},
                                                                     {"q50", quantile(sel, 0.5)},
                                                                     {"q90", quantile(sel, 0.9)}});
  j["group_evaluations"] = r.stats.group_evaluations;
  auto mccs = nlohmann::ordered_json::array();
  for (const auto& a : r.anchors)
    mccs.push_back({{"neuron", to_string(a.anchor.neuron)},
                    {"test_mcc", a.anchor.test_mcc ? nlohmann::ordered_json(*a.anchor.test_mcc)
                                                   : nlohmann::ordered_json(nullptr)}});
  j["anchored"] = mccs;
  nlohmann::ordered_json hq;
  for (double t : cfg.rules.thresholds) hq[threshold_key(t)] = r.high_quality_at(t);
  j["high_quality_counts"] = hq;
  nlohmann::ordered_json uc;
  uc["covered"] = r.coverage.covered;
  uc["evaluated"] = r.coverage.evaluated;
  uc["fraction"] = r.coverage.fraction();
  uc["threshold"] = cfg.rules.high_quality_mcc;
  auto inc = nlohmann::ordered_json::array();
  for (const auto& s : r.coverage.incremental)
    inc.push_back({{"added", s.added}, {"cumulative", s.cumulative}, {"neuron", to_string(s.neuron)}});
  uc["incremental"] = inc;
  j["union_coverage"] = uc;
  j["sources"] = r.sources;
  return j;
}

inline std::vector<Condition> e1_conditions() {
  return {{"rule-spectral", SplitMethod::Rule, PlanKind::Spectral},
          {"spectral-only", SplitMethod::Spectral, PlanKind::Spectral},
          {"rule-random", SplitMethod::Rule, PlanKind::Random},
          {"fake-rule", SplitMethod::FakeRule, PlanKind::Spectral}};
}

inline PlantSpec seeded_spec(const RunConfig& cfg, std::size_t s) {
  PlantSpec spec = cfg.task;
  spec.seed = derive_seed(cfg.seed, "task", s);
  return spec;
}

inline std::string seed_dir(std::size_t s) { return "seed_" + std::to_string(s) + "/"; }

}  // namespace detail

struct ExperimentReport {
  std::string experiment;
  nlohmann::ordered_json payload;
  std::vector<std::string> artifacts;
};

inline ExperimentReport finish_report(ArtifactStore& store, const RunConfig& cfg, const std::string& name,
                                      nlohmann::ordered_json payload) {
  store.write_json("config.json", to_json(cfg));
  payload["experiment"] = name;
  payload["config_source"] = "config.json";
  store.write_json("report.json", payload);
  ExperimentReport rep{name, payload, store.written()};
  store.write_metadata({{"experiment", name}, {"seed", cfg.seed}});
  return rep;
}

inline ExperimentReport run_e0(const RunConfig& cfg, ArtifactStore& store) {
  const auto ctx = make_context(load_or_plant(cfg), cfg, cfg.seed);
  store.write_json("task.json", task_to_json(*ctx.task));
  const Condition cond{"main", cfg.split, cfg.coverage_kind};
  const auto out = run_pipeline(ctx, cfg, cond, cfg.seed, store, "");
  nlohmann::ordered_json p;
  auto splitters = nlohmann::ordered_json::array();
  for (const auto& r : out.splitter.splitters)
    splitters.push_back({{"rule", to_text(r)},
                         {"validation_mcc", r.score(Split::Validation) ? nlohmann::ordered_json(r.score(Split::Validation)->mcc)
                                                                       : nlohmann::ordered_json(nullptr)},
                         {"test_mcc", r.score(Split::Test) ? nlohmann::ordered_json(r.score(Split::Test)->mcc)
                                                           : nlohmann::ordered_json(nullptr)},
                         {"source", out.splitter_source}});
  p["splitters"] = splitters;
  auto regimes = nlohmann::ordered_json::array();
  std::ostringstream csv;
  csv << "regime,direction,agonists,selective,group_evaluations";
  for (double t : cfg.rules.thresholds) csv << ",hq_" << threshold_key(t);
  csv << ",union_covered,union_evaluated,source\n";
  for (const auto& r : out.regimes) {
    regimes.push_back(detail::regime_summary(r, cfg));
    std::size_t selective = 0;
    for (const auto& a : r.agonists) selective += a.selective;
    csv << to_string(r.regime) << ',' << direction(r.regime) << ',' << r.agonists.size() << ',' << selective << ','
        << r.stats.group_evaluations;
    for (double t : cfg.rules.thresholds) csv << ',' << r.high_quality_at(t);
    const auto src = r.sources.count("anchors") ? r.sources.at("anchors") : std::string("");
    csv << ',' << r.coverage.covered << ',' << r.coverage.evaluated << ',' << src << '\n';
  }
  p["regimes"] = regimes;
  p["task_source"] = "task.json";
  p["table_source"] = store.write_text("e0_summary.csv", csv.str());
  return finish_report(store, cfg, "e0", p);
}

inline ExperimentReport run_e1(const RunConfig& cfg, ArtifactStore& store) {
  const auto conditions = detail::e1_conditions();
  // counts[condition][threshold] over seeds
  std::map<std::string, std::map<std::string, std::vector<double>>> counts;
  std::map<std::string, std::vector<double>> splitter_mcc;
  std::ostringstream csv;
  csv << "seed,condition,threshold,high_quality,splitter_validation_mcc,source\n";
  for (std::size_t s = 0; s < cfg.seeds; ++s) {
    const auto spec = detail::seeded_spec(cfg, s);
    const auto seed = derive_seed(cfg.seed, "run", s);
    const auto ctx = make_context(std::make_shared<const SyntheticTask>(plant_task(spec)), cfg, seed);
    for (const auto& cond : conditions) {
      const std::string prefix = detail::seed_dir(s) + cond.name + "/";
      const auto out = run_pipeline(ctx, cfg, cond, seed, store, prefix);
      splitter_mcc[cond.name].push_back(out.splitter_validation_mcc());
      for (double t : cfg.rules.thresholds) {
        const auto n = out.high_quality_at(t);
        counts[cond.name][threshold_key(t)].push_back(static_cast<double>(n));
        csv << s << ',' << cond.name << ',' << threshold_key(t) << ',' << n << ',' << out.splitter_validation_mcc()
            << ',' << prefix << '\n';
      }
    }
  }
  const auto table = store.write_text("e1_counts.csv", csv.str());
  nlohmann::ordered_json p;
  nlohmann::ordered_json medians, totals, mcc, u;
  for (const auto& cond : conditions) {
    for (double t : cfg.rules.thresholds) {
      const auto& v = counts[cond.name][threshold_key(t)];
      medians[cond.name][threshold_key(t)] = v.empty() ? 0.0 : median(v);
      totals[cond.name][threshold_key(t)] = std::accumulate(v.begin(), v.end(), 0.0);
    }
    mcc[cond.name] = splitter_mcc[cond.name].empty() ? 0.0 : median(splitter_mcc[cond.name]);
  }
  for (const auto& cond : conditions) {
    if (cond.name == "rule-spectral") continue;
    std::vector<double> a, b;
    for (double t : cfg.rules.thresholds) {
      const auto& x = counts["rule-spectral"][threshold_key(t)];
      const auto& y = counts[cond.name][threshold_key(t)];
      a.insert(a.end(), x.begin(), x.end());
      b.insert(b.end(), y.begin(), y.end());
      u[cond.name][threshold_key(t)] = mann_whitney_u(x, y);
    }
    u[cond.name]["pooled"] = mann_whitney_u(a, b);
  }
  p["median_high_quality"] = medians;
  p["total_high_quality"] = totals;
  p["median_splitter_validation_mcc"] = mcc;
  p["mann_whitney_u_rule_spectral_vs"] = u;
  p["seeds"] = cfg.seeds;
  p["thresholds"] = cfg.rules.thresholds;
  p["table_source"] = table;
  return finish_report(store, cfg, "e1", p);
}

inline ExperimentReport run_e2(const RunConfig& cfg, ArtifactStore& store) {
  const auto ctx = make_context(load_or_plant(cfg), cfg, cfg.seed);
  store.write_json("task.json", task_to_json(*ctx.task));
  const auto& task = *ctx.task;
  const auto part = build_partition(ctx, cfg.split, cfg, cfg.seed);
  SyntheticOracle oracle(ctx.task);
  std::vector<RecallReport> reports;
  nlohmann::ordered_json regimes = nlohmann::ordered_json::array();
  std::ostringstream cost;
  cost << "regime,circuit,cha_evaluations,singleton_evaluations,cost_ratio,source\n";
  for (Regime regime : cfg.regimes) {
    const std::string rp = std::string(to_string(regime)) + "/";
    const std::string circuit = "split-" + std::string(to_string(cfg.split)) + "/" + std::string(to_string(regime));
    EvalSubset full;
    for (std::size_t i = 0; i < task.examples.size(); ++i)
      if (task.examples[i].baseline == regime)
        (part.associated[i] ? full.plus : full.minus).push_back(static_cast<ExampleId>(i));
    nlohmann::ordered_json rj;
    rj["regime"] = to_string(regime);
    rj["circuit"] = circuit;
    if (full.plus.empty() || full.minus.empty()) {
      rj["skipped"] = true;
      regimes.push_back(rj);
      continue;
    }
    EvalSubset subset = full;
    if (cfg.stages.coverage) {
      std::vector<std::size_t> plus(full.plus.begin(), full.plus.end()), minus(full.minus.begin(), full.minus.end());
      const auto space = plan_space(ctx.embedding, plus, minus, cfg.coverage.plan.d_pca);
      CoverageConfig pc = cfg.coverage.plan;
      pc.seed = derive_seed(cfg.seed, "coverage", label(regime));
      const auto plan = cfg.coverage_kind == PlanKind::Spectral ? spectral_plan(space, plus, minus, ctx.lengths, pc)
                                                                : random_plan(space, plus, minus, ctx.lengths, pc);
      subset = plan.eval_subset();
      store.write_json(rp + "coverage_plan.json", plan_to_json(plan));
    }
    std::vector<NeuronCoord> candidates;
    std::vector<NeuronCoord> dropped;
    if (cfg.stages.reduce) {
      auto red = ground_truth_reducer(task, regime, cfg.reduce.budget, cfg.reduce.leak_rate,
                                      derive_seed(cfg.seed, "reduce", label(regime)));
      candidates = red.retained;
      dropped = red.dropped;
    } else {
      for (std::uint32_t l = 0; l < task.layer_widths.size(); ++l)
        for (const auto& c : task.layer_coords(l)) candidates.push_back(c);
    }
    SearchConfig sc = cfg.search;
    sc.resample_policy = ResamplePolicy::FixedSubset;
    sc.seed = derive_seed(cfg.seed, "search", label(regime));
    std::map<std::uint32_t, std::vector<NeuronCoord>> by_layer;
    for (const auto& c : candidates) by_layer[c.layer].push_back(c);
    std::vector<AgonistRecord> found;
    SearchStats stats;
    for (const auto& [layer, coords] : by_layer) {
      auto res = cha_search(coords, oracle, subset, regime, sc);
      stats.merge(res.stats);
      found.insert(found.end(), res.agonists.begin(), res.agonists.end());
    }
    BruteForceConfig bc;
    bc.tau = sc.tau;
    bc.epsilon = sc.epsilon;
    bc.alpha = sc.alpha;
    bc.samples_per_slice = sc.samples_per_slice;
    bc.seed = sc.seed;
    const auto brute = brute_force_singletons(candidates, oracle, subset, regime, bc);
    const auto cha_src = store.write_text(rp + "cha_agonists.csv", detail::csv_of_agonists(found));
    const auto bf_src = store.write_text(rp + "brute_agonists.csv", detail::csv_of_agonists(brute.agonists));
    auto rep = recall_by_tier({circuit, regime, found}, {circuit, regime, brute.agonists}, default_bins(sc.tau),
                              "synthetic");
    const double ratio = brute.evaluations ? static_cast<double>(stats.group_evaluations) /
                                                 static_cast<double>(brute.evaluations)
                                           : 0.0;
    cost << to_string(regime) << ',' << circuit << ',' << stats.group_evaluations << ',' << brute.evaluations << ','
         << ratio << ',' << cha_src << '\n';
    rj["recall"] = recall_to_json(rep);
    rj["cha_evaluations"] = stats.group_evaluations;
    rj["singleton_evaluations"] = brute.evaluations;
    rj["cost_ratio"] = ratio;
    std::vector<std::string> dropped_names;
    for (const auto& c : dropped) dropped_names.push_back(to_string(c));
    rj["reducer_dropped"] = dropped_names;
    rj["sources"] = {{"brute", bf_src}, {"cha", cha_src}};
    regimes.push_back(rj);
    reports.push_back(std::move(rep));
  }
  std::ostringstream recall_csv;
  write_recall_csv(recall_csv, reports);
  nlohmann::ordered_json p;
  p["regimes"] = regimes;
  p["recall_source"] = store.write_text("e2_recall.csv", recall_csv.str());
  p["cost_source"] = store.write_text("e2_cost.csv", cost.str());
  p["task_source"] = "task.json";
  return finish_report(store, cfg, "e2", p);
}

inline ExperimentReport run_e3(const RunConfig& cfg, ArtifactStore& store) {
  const std::vector<Condition> plans{{"spectral", cfg.split, PlanKind::Spectral},
                                     {"random", cfg.split, PlanKind::Random}};
  const double main_t = cfg.rules.high_quality_mcc;
  std::map<std::string, std::vector<double>> hq, within, sampled;
  std::ostringstream csv;
  csv << "seed,plan,high_quality,fraction_within,q90,max,rare_cluster_sampled,source\n";
  for (std::size_t s = 0; s < cfg.seeds; ++s) {
    const auto spec = detail::seeded_spec(cfg, s);
    const auto seed = derive_seed(cfg.seed, "run", s);
    const auto ctx = make_context(std::make_shared<const SyntheticTask>(plant_task(spec)), cfg, seed);
    const auto& task = *ctx.task;
    const bool has_rare = spec.rare_cluster_fraction > 0.0 && spec.clusters >= 2;
    for (const auto& cond : plans) {
      const std::string prefix = detail::seed_dir(s) + cond.name + "/";
      const auto out = run_pipeline(ctx, cfg, cond, seed, store, prefix);
      for (const auto& r : out.regimes) {
        if (r.skipped || !r.plan) continue;
        bool rare_present = false, rare_sampled = false;
        for (auto id : r.plus) rare_present |= has_rare && task.examples[id].cluster == spec.clusters - 1;
        for (auto id : r.plan->selected_plus) rare_sampled |= has_rare && task.examples[id].cluster == spec.clusters - 1;
        const auto& d = r.plan->diagnostics;
        within[cond.name].push_back(d.fraction_within);
        if (rare_present) sampled[cond.name].push_back(rare_sampled ? 1.0 : 0.0);
        csv << s << ',' << cond.name << ',' << r.high_quality_at(main_t) << ',' << d.fraction_within << ',' << d.q90
            << ',' << d.max << ',' << (rare_present ? (rare_sampled ? "1" : "0") : "na") << ','
            << r.sources.at("coverage") << '\n';
      }
      hq[cond.name].push_back(static_cast<double>(out.high_quality_at(main_t)));
    }
  }
  nlohmann::ordered_json p;
  for (const auto& cond : plans) {
    nlohmann::ordered_json c;
    c["median_high_quality"] = hq[cond.name].empty() ? 0.0 : median(hq[cond.name]);
    c["median_fraction_within"] = within[cond.name].empty() ? 0.0 : median(within[cond.name]);
    const auto& v = sampled[cond.name];
    c["rare_cluster_sample_rate"] = v.empty() ? nlohmann::ordered_json(nullptr)
                                              : nlohmann::ordered_json(std::accumulate(v.begin(), v.end(), 0.0) /
                                                                       static_cast<double>(v.size()));
    c["rare_cluster_trials"] = v.size();
    p["plans"][cond.name] = c;
  }
  p["threshold"] = main_t;
  p["seeds"] = cfg.seeds;
  p["table_source"] = store.write_text("e3_coverage.csv", csv.str());
  return finish_report(store, cfg, "e3", p);
}

inline ExperimentReport run_experiment(const RunConfig& cfg, ArtifactStore& store) {
  if (cfg.experiment == "e0") return run_e0(cfg, store);
  if (cfg.experiment == "e1") return run_e1(cfg, store);
  if (cfg.experiment == "e2") return run_e2(cfg, store);
  if (cfg.experiment == "e3") return run_e3(cfg, store);
  fail(ErrorCode::InvalidArgument, "unknown experiment '" + cfg.experiment + "'");
}

}  // namespace ruleloc
