#pragma once

// Task manifest: versioned JSON with run-length-encoded flip sets.

#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "ruleloc/oracle.hpp"

namespace ruleloc {

inline constexpr int kManifestVersion = 1;

inline nlohmann::ordered_json to_json(const RegimePlant& rp) {
  nlohmann::ordered_json j;
  j["agonist_strengths"] = rp.agonist_strengths;
  j["antagonists"] = rp.antagonists;
  j["background_cap"] = rp.background_cap;
  j["overlap"] = rp.overlap;
  j["unrelated_ratio"] = rp.unrelated_ratio;
  return j;
}

inline RegimePlant regime_plant_from_json(const nlohmann::json& j) {
  RegimePlant rp;
  rp.agonist_strengths = j.value("agonist_strengths", rp.agonist_strengths);
  rp.antagonists = j.value("antagonists", rp.antagonists);
  rp.background_cap = j.value("background_cap", rp.background_cap);
  rp.overlap = j.value("overlap", rp.overlap);
  rp.unrelated_ratio = j.value("unrelated_ratio", rp.unrelated_ratio);
  return rp;
}

inline nlohmann::ordered_json to_json(const PlantSpec& s) {
  nlohmann::ordered_json j;
  j["aligned_predicates"] = s.aligned_predicates;
  j["background_density"] = s.background_density;
  j["baseline_mode"] = std::string(to_string(s.baseline_mode));
  j["clusters"] = s.clusters;
  j["examples"] = {{"negative", {{"plus", s.examples[0][0]}, {"minus", s.examples[0][1]}}},
                   {"positive", {{"plus", s.examples[1][0]}, {"minus", s.examples[1][1]}}}};
  j["layer_widths"] = s.layer_widths;
  j["margin"] = s.margin;
  j["noise_columns"] = s.noise_columns;
  j["noise_minus"] = s.noise_minus;
  j["noise_plus"] = s.noise_plus;
  j["rare_cluster_fraction"] = s.rare_cluster_fraction;
  j["regimes"] = {{"negative", to_json(s.regimes[0])}, {"positive", to_json(s.regimes[1])}};
  j["seed"] = s.seed;
  j["separated_background"] = s.separated_background;
  j["tau"] = s.tau;
  return j;
}

// Missing keys keep their defaults, so configs can be partial.
inline PlantSpec plant_spec_from_json(const nlohmann::json& j) {
  PlantSpec s;
  s.aligned_predicates = j.value("aligned_predicates", s.aligned_predicates);
  s.background_density = j.value("background_density", s.background_density);
  if (j.contains("baseline_mode")) s.baseline_mode = parse_baseline_mode(j.at("baseline_mode").get<std::string>());
  s.clusters = j.value("clusters", s.clusters);
  if (j.contains("examples")) {
    const auto& e = j.at("examples");
    for (const char* name : {"negative", "positive"}) {
      if (!e.contains(name)) continue;
      const int b = std::string_view(name) == "positive" ? 1 : 0;
      s.examples[b][0] = e.at(name).value("plus", s.examples[b][0]);
      s.examples[b][1] = e.at(name).value("minus", s.examples[b][1]);
    }
  }
  s.layer_widths = j.value("layer_widths", s.layer_widths);
  s.margin = j.value("margin", s.margin);
  s.noise_columns = j.value("noise_columns", s.noise_columns);
  s.noise_minus = j.value("noise_minus", s.noise_minus);
  s.noise_plus = j.value("noise_plus", s.noise_plus);
  s.rare_cluster_fraction = j.value("rare_cluster_fraction", s.rare_cluster_fraction);
  if (j.contains("regimes")) {
    const auto& r = j.at("regimes");
    if (r.contains("negative")) s.regimes[0] = regime_plant_from_json(r.at("negative"));
    if (r.contains("positive")) s.regimes[1] = regime_plant_from_json(r.at("positive"));
  }
  s.seed = j.value("seed", s.seed);
  s.separated_background = j.value("separated_background", s.separated_background);
  s.tau = j.value("tau", s.tau);
  return s;
}

inline nlohmann::ordered_json task_to_json(const SyntheticTask& t) {
  nlohmann::ordered_json j;
  j["format"] = "ruleloc-task";
  j["version"] = kManifestVersion;
  j["spec"] = to_json(t.spec);
  j["layer_widths"] = t.layer_widths;
  j["noise_plus"] = t.noise_plus;
  j["noise_minus"] = t.noise_minus;
  j["noise_seed"] = t.noise_seed;
  j["baseline_mode"] = std::string(to_string(t.baseline_mode));

  std::vector<int> baseline, slice;
  std::vector<std::uint32_t> cluster, length;
  for (const auto& e : t.examples) {
    baseline.push_back(label(e.baseline));
    slice.push_back(e.slice == Slice::Associated ? 1 : 0);
    cluster.push_back(e.cluster);
    length.push_back(e.length);
  }
  j["examples"] = {{"baseline", baseline}, {"associated", slice}, {"cluster", cluster}, {"length", length}};

  auto planted = nlohmann::ordered_json::array();
  for (const auto& p : t.planted)
    planted.push_back({{"coord", to_string(p.coord)},
                       {"regime", label(p.regime)},
                       {"kind", std::string(to_string(p.kind))},
                       {"target_strength", p.target_strength}});
  j["planted"] = planted;

  auto features = nlohmann::ordered_json::array();
  for (const auto& f : t.features)
    features.push_back({{"name", f.name},
                        {"kind", std::string(to_string(f.kind))},
                        {"provenance", std::string(to_string(f.provenance))},
                        {"observability", std::string(to_string(f.observability))},
                        {"values", f.values}});
  j["features"] = features;

  auto flips = nlohmann::ordered_json::array();
  for (int b = 1; b >= 0; --b)
    for (std::size_t flat = 0; flat < t.flips[b].size(); ++flat) {
      const auto& bits = t.flips[b][flat];
      if (bits.none()) continue;
      flips.push_back({{"regime", b}, {"neuron", to_string(t.coord_of(flat))}, {"runs", bits.to_runs()}});
    }
  j["flips"] = {{"n", t.examples.size()}, {"sets", flips}};
  return j;
}

inline SyntheticTask task_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "ruleloc-task") fail(ErrorCode::Parse, "not a task manifest");
    if (j.at("version").get<int>() != kManifestVersion) fail(ErrorCode::Parse, "unsupported manifest version");
    SyntheticTask t;
    t.spec = plant_spec_from_json(j.at("spec"));
    t.layer_widths = j.at("layer_widths").get<std::vector<std::uint32_t>>();
    t.noise_plus = j.at("noise_plus").get<double>();
    t.noise_minus = j.at("noise_minus").get<double>();
    t.noise_seed = j.at("noise_seed").get<std::uint64_t>();
    t.baseline_mode = parse_baseline_mode(j.at("baseline_mode").get<std::string>());

    const auto& ex = j.at("examples");
    const auto baseline = ex.at("baseline").get<std::vector<int>>();
    const auto slice = ex.at("associated").get<std::vector<int>>();
    const auto cluster = ex.at("cluster").get<std::vector<std::uint32_t>>();
    const auto length = ex.at("length").get<std::vector<std::uint32_t>>();
    require(slice.size() == baseline.size() && cluster.size() == baseline.size() && length.size() == baseline.size(),
            ErrorCode::Parse, "example arrays differ in length");
    for (std::size_t i = 0; i < baseline.size(); ++i)
      t.examples.push_back({regime_from_label(baseline[i]), slice[i] ? Slice::Associated : Slice::Unrelated,
                            cluster[i], length[i]});

    for (const auto& p : j.at("planted"))
      t.planted.push_back({parse_coord(p.at("coord").get<std::string>()), regime_from_label(p.at("regime").get<int>()),
                           parse_plant_kind(p.at("kind").get<std::string>()), p.at("target_strength").get<double>()});

    for (const auto& f : j.at("features"))
      t.features.push_back({f.at("name").get<std::string>(), parse_column_kind(f.at("kind").get<std::string>()),
                            parse_provenance(f.at("provenance").get<std::string>()),
                            parse_observability(f.at("observability").get<std::string>()),
                            f.at("values").get<std::vector<double>>()});

    const auto n = j.at("flips").at("n").get<std::size_t>();
    require(n == t.examples.size(), ErrorCode::Parse, "flip bitset size does not match example count");
    for (auto& f : t.flips) f.assign(t.neuron_count(), Bitset(n));
    for (const auto& s : j.at("flips").at("sets")) {
      const int b = s.at("regime").get<int>();
      const auto coord = parse_coord(s.at("neuron").get<std::string>());
      const auto idx = t.flat_index(coord);
      if (!idx) fail(ErrorCode::Parse, "flip set for unknown neuron " + to_string(coord));
      t.flips[regime_from_label(b) == Regime::Positive ? 1 : 0][*idx] =
          Bitset::from_runs(n, s.at("runs").get<std::vector<std::size_t>>());
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, std::string("malformed task manifest: ") + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot open " + path + " for writing");
  out << text;
  if (!out) fail(ErrorCode::Io, "failed writing " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void save_task(const SyntheticTask& t, const std::string& path) { write_text_file(path, task_to_json(t).dump(1) + "\n"); }

inline SyntheticTask load_task(const std::string& path) {
  try {
    return task_from_json(nlohmann::json::parse(read_text_file(path)));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, path + ": " + e.what());
  }
}

}  // namespace ruleloc
