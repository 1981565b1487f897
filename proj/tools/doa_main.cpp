// doa: command-line front end for dataset generation, training, transfer
// calibration and evaluation.

#include <cinttypes>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "doa/doa.hpp"

namespace {

using nlohmann::json;

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

std::string config_hash(const json& cfg) {
  return doa::hex64(doa::fnv1a64(cfg.dump()));
}

json geometry_json(const doa::ArrayGeometry& g) {
  json j{{"kind", g.kind == doa::ArrayKind::ula ? "ula" : "uca"},
         {"elements", g.elements}};
  if (g.kind == doa::ArrayKind::ula)
    j["spacing"] = g.spacing;
  else
    j["radius"] = g.radius;
  return j;
}

json scenario_json(const doa::SignalScenario& sc) {
  json doa_spec;
  switch (sc.doa.kind) {
    case doa::DoaSpecKind::uniform:
      doa_spec = {{"kind", "uniform"}, {"min_sep", sc.doa.min_sep}};
      break;
    case doa::DoaSpecKind::equidistant:
      doa_spec = {{"kind", "equidistant"}};
      break;
    case doa::DoaSpecKind::deterministic:
      doa_spec = {{"kind", "deterministic"},
                  {"thetas", sc.doa.thetas},
                  {"phis", sc.doa.phis}};
      break;
  }
  return {{"geometry", geometry_json(sc.geometry)},
          {"sources", sc.sources},
          {"snr_db", sc.snr_db},
          {"snapshots", sc.snapshots},
          {"doa_spec", doa_spec},
          {"fov",
           {{"theta_min", sc.fov.theta_min},
            {"theta_max", sc.fov.theta_max},
            {"phi_min", sc.fov.phi_min},
            {"phi_max", sc.fov.phi_max}}}};
}

json imperfections_json(const doa::ImperfectionSpec& imp) {
  return {{"rho", imp.rho},
          {"pos", imp.flags.pos},
          {"gain", imp.flags.gain},
          {"phase", imp.flags.phase},
          {"mc", imp.flags.mc},
          {"gamma_re", imp.gamma.real()},
          {"gamma_im", imp.gamma.imag()},
          {"mc_zero_diag", imp.mc_zero_diag}};
}

struct GenOptions {
  std::string scenario = "scen1-desk";
  std::string out;
  std::uint64_t count = 0;  // 0: preset default
  std::uint64_t seed = 0;
  double rho = 0.0;
  std::string imp = "all";
  double gamma_mag = 0.3, gamma_phase_deg = 60.0;
  bool mc_zero_diag = false;
  std::optional<double> snr;
  std::optional<int> snapshots;
  std::string doa_spec;  // empty: preset default
  double min_sep = 3.0;
  std::vector<double> angles, phis;
};

doa::ImperfectionFlags parse_imp_flags(const std::string& s) {
  if (s == "all") return doa::ImperfectionFlags::all(true);
  if (s == "none") return doa::ImperfectionFlags::all(false);
  doa::ImperfectionFlags f;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const std::size_t comma = std::min(s.find(',', pos), s.size());
    const std::string tok = s.substr(pos, comma - pos);
    if (tok == "pos")
      f.pos = true;
    else if (tok == "gain")
      f.gain = true;
    else if (tok == "phase")
      f.phase = true;
    else if (tok == "mc")
      f.mc = true;
    else if (!tok.empty())
      throw doa::InvalidArgument("unknown imperfection flag: " + tok);
    pos = comma + 1;
  }
  return f;
}

struct ResolvedGen {
  doa::SignalScenario scenario;
  doa::ImperfectionSpec imp;
  std::uint64_t count;
};

ResolvedGen resolve_gen(const GenOptions& o) {
  ResolvedGen r;
  r.scenario = doa::require_preset(o.scenario);
  if (o.snr) r.scenario.snr_db = *o.snr;
  if (o.snapshots) r.scenario.snapshots = *o.snapshots;
  if (!o.doa_spec.empty()) {
    if (o.doa_spec == "uniform")
      r.scenario.doa = doa::DoaSpec::make_uniform(o.min_sep);
    else if (o.doa_spec == "equidistant")
      r.scenario.doa = doa::DoaSpec::make_equidistant();
    else if (o.doa_spec == "deterministic")
      r.scenario.doa = doa::DoaSpec::make_deterministic(o.angles, o.phis);
    else
      throw doa::InvalidArgument("unknown doa spec: " + o.doa_spec);
  }
  const doa::cplx gamma =
      o.gamma_mag * std::polar(1.0, doa::deg2rad(o.gamma_phase_deg));
  r.imp = doa::build_imperfections(r.scenario.geometry, o.rho,
                                   parse_imp_flags(o.imp), gamma,
                                   o.mc_zero_diag);
  r.count = o.count != 0 ? o.count
                         : (o.scenario == "scen1-desk" ? 8000u : 5000u);
  return r;
}

int cmd_gen(const GenOptions& o) {
  const ResolvedGen r = resolve_gen(o);
  doa::generate_dataset(r.scenario, r.imp, r.count, o.seed, o.out);

  json cfg{{"command", "gen"},
           {"scenario", o.scenario},
           {"resolved", scenario_json(r.scenario)},
           {"imperfections", imperfections_json(r.imp)},
           {"count", r.count},
           {"seed", o.seed},
           {"out", o.out}};
  cfg["config_hash"] = config_hash(cfg);
  doa::write_text_file(o.out + ".json", cfg.dump(2) + "\n");
  std::printf("wrote %" PRIu64 " records to %s\n", r.count, o.out.c_str());
  return 0;
}

struct TrainOptions {
  std::string train_path, val_path, out, config_path;
  std::uint64_t seed = 0;
};

doa::ModelConfig model_config_for(const doa::DatasetMeta& meta,
                                  const json& cfg) {
  doa::ModelConfig mc;
  if (cfg.contains("model")) {
    const json& m = cfg["model"];
    mc.embed_dim = m.value("embed_dim", mc.embed_dim);
    mc.depth = m.value("depth", mc.depth);
    mc.heads = m.value("heads", mc.heads);
    mc.mlp_ratio = m.value("mlp_ratio", mc.mlp_ratio);
  }
  mc.sources = static_cast<int>(meta.k);
  mc.elements = static_cast<int>(meta.m);
  mc.mode = meta.label_dims == 2 ? doa::OutputMode::two_d
                                 : doa::OutputMode::one_d;
  mc.validate();
  return mc;
}

int cmd_train(const TrainOptions& o) {
  json cfg_in = json::object();
  if (!o.config_path.empty()) {
    auto is = doa::open_input(o.config_path);
    is >> cfg_in;
  }

  const doa::Dataset train_ds = doa::load_dataset(o.train_path);
  const doa::Dataset val_ds = doa::load_dataset(o.val_path);
  const doa::TrainSet tr = doa::prepare_train_set(train_ds);
  const doa::TrainSet val = doa::prepare_train_set(val_ds);

  const doa::ModelConfig mc = model_config_for(train_ds.meta, cfg_in);
  doa::TrainConfig tc = doa::desk_train_config();
  if (cfg_in.contains("train"))
    tc = doa::TrainConfig::from_json(cfg_in["train"], tc);

  const doa::TransDoaParams init = doa::init_params(mc, o.seed);
  const doa::TrainResult res = doa::train(init, tr, val, tc, o.seed);

  for (const auto& row : res.history) {
    if (std::isnan(row.train_loss))
      std::printf("%d,,%.10g\n", row.epoch, row.val_loss);
    else
      std::printf("%d,%.10g,%.10g\n", row.epoch, row.train_loss, row.val_loss);
  }

  json blob{{"model", mc.to_json()},
            {"train", tc.to_json()},
            {"seed", o.seed},
            {"train_data", o.train_path},
            {"val_data", o.val_path},
            {"best_epoch", res.best_epoch}};
  blob["config_hash"] = config_hash(blob);
  doa::save_checkpoint(o.out, res.params, blob.dump());
  if (res.aborted_non_finite)
    std::fprintf(stderr,
                 "warning: training hit a non-finite loss; wrote last good "
                 "parameters\n");
  std::fprintf(stderr, "best epoch %d, checkpoint %s\n", res.best_epoch,
               o.out.c_str());
  return 0;
}

struct TransferOptions {
  std::string source, target_data, out, scenario = "scen1-desk";
  std::string mode = "transfer";
  std::string head = "reuse";
  std::string eval_data;
  std::string samples_grid;
  std::string save_pairs;
  std::uint64_t samples = 500;
  double alpha = 1.0, beta = 1.0;
  double lr = 1e-3;
  int batches = 8;
  int epochs = 60;
  std::uint64_t seed = 0;
};

doa::Dataset take_records(const doa::Dataset& ds, std::uint64_t n) {
  if (n > ds.records.size())
    throw doa::InvalidArgument("--samples exceeds dataset size");
  doa::Dataset out;
  out.meta = ds.meta;
  out.records.assign(ds.records.begin(),
                     ds.records.begin() + static_cast<long>(n));
  return out;
}

double eval_matched_rmse(const doa::TransDoaParams& params,
                         const doa::TrainSet& ts) {
  std::vector<doa::DoaLabel> truths, ests;
  std::vector<char> miss(ts.size(), 0);
  truths.reserve(ts.size());
  ests.reserve(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const doa::ModelEval ev = doa::eval_from_input(params, ts.inputs[i]);
    truths.push_back(ts.labels[i]);
    ests.push_back(doa::DoaLabel{ev.thetas, ev.phis});
  }
  return doa::compute_report(truths, ests, miss).rmse_matched;
}

int cmd_transfer(const TransferOptions& o) {
  const doa::Checkpoint source = doa::load_checkpoint(o.source);
  const doa::Dataset full_target = doa::load_dataset(o.target_data);
  const doa::SignalScenario sc = doa::require_preset(o.scenario);

  doa::TransferConfig tc;
  tc.alpha = o.alpha;
  tc.beta = o.beta;
  tc.adam.lr = o.lr;
  tc.batches_per_epoch = o.batches;
  tc.max_epochs = o.epochs;
  tc.head = o.head == "finetune" ? doa::HeadPolicy::finetune_head
                                 : doa::HeadPolicy::reuse_source;

  doa::TrainConfig baseline_cfg;
  baseline_cfg.adam.lr = o.lr;
  baseline_cfg.epochs = o.epochs;
  baseline_cfg.patience = o.epochs;  // run the full budget

  auto run_arm = [&](const std::string& mode, const doa::Dataset& subset)
      -> doa::TransDoaParams {
    if (mode == "transfer") {
      const doa::PairedDataset pairs = doa::make_pairs(subset, sc, o.seed);
      if (!o.save_pairs.empty()) doa::save_paired(o.save_pairs, pairs);
      return doa::transfer_train(source.params, pairs, tc, o.seed).params;
    }
    const doa::TrainSet ts = doa::prepare_train_set(subset);
    baseline_cfg.batch = static_cast<int>(
        std::max<std::size_t>(1, ts.size() / std::size_t(o.batches)));
    if (mode == "finetune")
      return doa::finetune_baseline(source.params, ts, baseline_cfg, o.seed)
          .params;
    if (mode == "direct")
      return doa::direct_train_baseline(source.params.config, ts, baseline_cfg,
                                        o.seed)
          .params;
    throw doa::InvalidArgument("unknown transfer mode: " + mode);
  };

  if (o.mode == "compare") {
    if (o.eval_data.empty())
      throw doa::InvalidArgument("compare mode needs --eval-data");
    const doa::TrainSet eval_ts =
        doa::prepare_train_set(doa::load_dataset(o.eval_data));
    std::vector<std::uint64_t> grid;
    if (o.samples_grid.empty()) {
      grid.push_back(o.samples);
    } else {
      std::size_t pos = 0;
      while (pos <= o.samples_grid.size()) {
        const std::size_t comma =
            std::min(o.samples_grid.find(',', pos), o.samples_grid.size());
        grid.push_back(std::stoull(o.samples_grid.substr(pos, comma - pos)));
        pos = comma + 1;
      }
    }
    std::printf("samples,direct,finetune,transfer\n");
    for (std::uint64_t n : grid) {
      const doa::Dataset subset = take_records(full_target, n);
      const double direct = eval_matched_rmse(run_arm("direct", subset),
                                              eval_ts);
      const double finetune = eval_matched_rmse(run_arm("finetune", subset),
                                                eval_ts);
      const double transfer = eval_matched_rmse(run_arm("transfer", subset),
                                                eval_ts);
      std::printf("%" PRIu64 ",%.10g,%.10g,%.10g\n", n, direct, finetune,
                  transfer);
    }
    return 0;
  }

  const doa::Dataset subset = take_records(full_target, o.samples);
  const doa::TransDoaParams result = run_arm(o.mode, subset);

  json blob{{"model", result.config.to_json()},
            {"transfer",
             {{"mode", o.mode},
              {"alpha", o.alpha},
              {"beta", o.beta},
              {"lr", o.lr},
              {"batches", o.batches},
              {"epochs", o.epochs},
              {"head", o.head},
              {"samples", o.samples},
              {"scenario", o.scenario}}},
            {"seed", o.seed},
            {"source", o.source},
            {"target_data", o.target_data}};
  blob["config_hash"] = config_hash(blob);
  doa::save_checkpoint(o.out, result, blob.dump());
  std::fprintf(stderr, "checkpoint %s\n", o.out.c_str());
  return 0;
}

struct EvalOptions {
  std::string method = "transdoa";
  std::string data, ckpt, report, csv;
  std::string scenario;
  std::string snr_sweep;
  std::uint64_t count = 1000;
  std::uint64_t seed = 0;
  double rho = 0.0;
  double grid_1d = 0.05, grid_theta = 1.0, grid_phi = 0.5;
  double cap = doa::kErrorCapDeg, tolerance = doa::kAccuracyTolDeg;
};

doa::ArrayGeometry geometry_for_meta(const doa::DatasetMeta& meta,
                                     const std::optional<doa::SignalScenario>&
                                         sc) {
  if (sc) {
    if (sc->geometry.elements != meta.m || sc->geometry.kind != meta.kind)
      throw doa::InvalidArgument("scenario geometry does not match dataset");
    return sc->geometry;
  }
  // Toolkit conventions: half-wavelength ULA spacing, half-wavelength UCA
  // chord.
  if (meta.kind == doa::ArrayKind::ula)
    return doa::ArrayGeometry::make_ula(meta.m, 0.5);
  return doa::ArrayGeometry::make_uca(
      meta.m, 0.25 / std::sin(doa::kPi / double(meta.m)));
}

struct EvalOutcome {
  doa::MetricsReport report;
  std::vector<doa::DoaLabel> truths, ests;
  std::vector<std::vector<double>> matched;
};

EvalOutcome run_eval(const EvalOptions& o, const doa::Dataset& ds,
                     const std::optional<doa::Checkpoint>& ck) {
  const std::size_t n = ds.records.size();
  EvalOutcome out;
  out.truths.resize(n);
  out.ests.resize(n);
  std::vector<char> miss(n, 0);

  if (o.method == "transdoa") {
    const doa::TransDoaParams& params = ck->params;
    if (params.config.elements != static_cast<int>(ds.meta.m) ||
        params.config.sources != static_cast<int>(ds.meta.k) ||
        (params.config.mode == doa::OutputMode::two_d) !=
            (ds.meta.label_dims == 2))
      throw doa::InvalidArgument("checkpoint does not match dataset");
    doa::parallel_for(n, [&](std::size_t i) {
      const doa::ModelEval ev = doa::model_forward(params, ds.records[i].scm);
      out.truths[i] = ds.records[i].label;
      out.ests[i] = doa::DoaLabel{ev.thetas, ev.phis};
    });
  } else if (o.method == "music") {
    const auto sc = o.scenario.empty()
                        ? std::nullopt
                        : std::optional(doa::require_preset(o.scenario));
    const doa::ArrayGeometry g = geometry_for_meta(ds.meta, sc);
    const doa::Fov fov = g.kind == doa::ArrayKind::ula ? doa::ula_fov()
                                                       : doa::uca_fov();
    doa::MusicConfig mcfg;
    mcfg.grid_1d = o.grid_1d;
    mcfg.grid_theta = o.grid_theta;
    mcfg.grid_phi = o.grid_phi;
    const int k = static_cast<int>(ds.meta.k);
    if (k >= static_cast<int>(ds.meta.m))
      throw doa::InvalidArgument("MUSIC needs K < M");
    doa::parallel_for(n, [&](std::size_t i) {
      auto [est, missed] =
          doa::music_estimate(ds.records[i].scm, g, k, mcfg, fov);
      out.truths[i] = ds.records[i].label;
      out.ests[i] = std::move(est);
      miss[i] = missed ? 1 : 0;
    });
  } else {
    throw doa::InvalidArgument("unknown method: " + o.method);
  }

  out.report = doa::compute_report(out.truths, out.ests, miss, o.cap,
                                   o.tolerance);
  out.matched.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    out.matched[i] = doa::match_errors(out.truths[i], out.ests[i], o.cap);
  return out;
}

void write_trial_csv(const std::string& path, const doa::DatasetMeta& meta,
                     const EvalOutcome& out) {
  std::string body = "trial";
  const bool two_d = meta.label_dims == 2;
  for (std::uint32_t k = 0; k < meta.k; ++k)
    body += ",truth_theta_" + std::to_string(k);
  if (two_d)
    for (std::uint32_t k = 0; k < meta.k; ++k)
      body += ",truth_phi_" + std::to_string(k);
  for (std::uint32_t k = 0; k < meta.k; ++k)
    body += ",est_theta_" + std::to_string(k);
  if (two_d)
    for (std::uint32_t k = 0; k < meta.k; ++k)
      body += ",est_phi_" + std::to_string(k);
  for (std::uint32_t k = 0; k < meta.k; ++k)
    body += ",matched_err_" + std::to_string(k);
  body += "\n";

  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, ",%.10g", v);
    body += buf;
  };
  for (std::size_t i = 0; i < out.truths.size(); ++i) {
    body += std::to_string(i);
    for (double v : out.truths[i].thetas) put(v);
    if (two_d)
      for (double v : out.truths[i].phis) put(v);
    for (std::uint32_t k = 0; k < meta.k; ++k) {
      if (k < out.ests[i].thetas.size())
        put(out.ests[i].thetas[k]);
      else
        body += ",";
    }
    if (two_d) {
      for (std::uint32_t k = 0; k < meta.k; ++k) {
        if (k < out.ests[i].phis.size())
          put(out.ests[i].phis[k]);
        else
          body += ",";
      }
    }
    for (double v : out.matched[i]) put(v);
    body += "\n";
  }
  doa::write_text_file(path, body);
}

json eval_config_json(const EvalOptions& o, double snr_override,
                      bool has_snr_override) {
  json cfg{{"command", "eval"},          {"method", o.method},
           {"data", o.data},             {"ckpt", o.ckpt},
           {"scenario", o.scenario},     {"seed", o.seed},
           {"cap", o.cap},               {"tolerance", o.tolerance},
           {"grid_1d", o.grid_1d},       {"grid_theta", o.grid_theta},
           {"grid_phi", o.grid_phi},     {"count", o.count},
           {"rho", o.rho}};
  if (has_snr_override) cfg["snr_db"] = snr_override;
  return cfg;
}

int cmd_eval(const EvalOptions& o) {
  std::optional<doa::Checkpoint> ck;
  if (o.method == "transdoa") {
    if (o.ckpt.empty())
      throw doa::InvalidArgument("--method transdoa needs --ckpt");
    ck = doa::load_checkpoint(o.ckpt);
  }

  if (!o.snr_sweep.empty()) {
    if (o.scenario.empty())
      throw doa::InvalidArgument("--snr-sweep needs --scenario");
    double lo, hi, step;
    if (std::sscanf(o.snr_sweep.c_str(), "%lf:%lf:%lf", &lo, &hi, &step) != 3 ||
        step <= 0.0)
      throw doa::InvalidArgument("--snr-sweep expects lo:hi:step");
    doa::SignalScenario sc = doa::require_preset(o.scenario);
    const doa::ImperfectionSpec imp = doa::build_imperfections(
        sc.geometry, o.rho, doa::ImperfectionFlags::all(o.rho > 0.0));
    std::printf("snr_db,rmse_matched,rmse_raw,ospa_linear,miss_prob\n");
    int idx = 0;
    for (double snr = lo; snr <= hi + 1e-9; snr += step, ++idx) {
      sc.snr_db = snr;
      const doa::Dataset ds = doa::generate_records(
          sc, imp, o.count, doa::mix_seed(o.seed, std::uint64_t(idx)));
      const EvalOutcome out = run_eval(o, ds, ck);
      json cfg = eval_config_json(o, snr, true);
      const std::string hash = config_hash(cfg);
      char suffix[48];
      std::snprintf(suffix, sizeof suffix, "_snr%+.6g", snr);
      const std::string path = o.report + suffix + ".json";
      doa::write_text_file(
          path, doa::report_json(out.report, o.method, o.scenario, o.seed, hash)
                    .dump(2) +
                    "\n");
      doa::write_text_file(path + ".config.json", cfg.dump(2) + "\n");
      std::printf("%.6g,%.10g,%.10g,%.10g,%.10g\n", snr,
                  out.report.rmse_matched, out.report.rmse_raw,
                  out.report.ospa_linear, out.report.miss_prob);
    }
    return 0;
  }

  const doa::Dataset ds = doa::load_dataset(o.data);
  const EvalOutcome out = run_eval(o, ds, ck);
  json cfg = eval_config_json(o, 0.0, false);
  const std::string hash = config_hash(cfg);
  const std::string scenario_name =
      o.scenario.empty() ? (ds.meta.kind == doa::ArrayKind::ula ? "ula" : "uca")
                         : o.scenario;
  doa::write_text_file(
      o.report,
      doa::report_json(out.report, o.method, scenario_name, o.seed, hash)
              .dump(2) +
          "\n");
  doa::write_text_file(o.report + ".config.json", cfg.dump(2) + "\n");
  if (!o.csv.empty()) write_trial_csv(o.csv, ds.meta, out);
  std::printf("rmse_matched=%.6g rmse_raw=%.6g ospa_linear=%.6g miss=%.4g\n",
              out.report.rmse_matched, out.report.rmse_raw,
              out.report.ospa_linear, out.report.miss_prob);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DOA estimation toolkit: simulation, training, transfer "
               "calibration and evaluation"};
  app.require_subcommand(1);

  GenOptions gen;
  CLI::App* g = app.add_subcommand("gen", "generate a labeled SCM dataset");
  g->add_option("--scenario", gen.scenario,
                "preset: scen1, scen2, scen3, scen4, scen1-desk");
  g->add_option("--count", gen.count, "record count (0 = preset default)");
  g->add_option("--seed", gen.seed, "RNG seed");
  g->add_option("--out", gen.out, "output path")->required();
  g->add_option("--rho", gen.rho, "imperfection intensity in [0,1]");
  g->add_option("--imp", gen.imp, "imperfections: all|none|pos,gain,phase,mc");
  g->add_option("--gamma-mag", gen.gamma_mag, "coupling coefficient magnitude");
  g->add_option("--gamma-phase-deg", gen.gamma_phase_deg,
                "coupling coefficient phase");
  g->add_flag("--mc-zero-diag", gen.mc_zero_diag,
              "zero the coupling-matrix diagonal");
  g->add_option("--snr", gen.snr, "SNR in dB");
  g->add_option("--snapshots", gen.snapshots, "snapshot count T");
  g->add_option("--doa-spec", gen.doa_spec,
                "uniform|equidistant|deterministic");
  g->add_option("--min-sep", gen.min_sep, "uniform minimum separation (deg)");
  g->add_option("--angles", gen.angles, "deterministic azimuths (deg)");
  g->add_option("--phis", gen.phis, "deterministic elevations (deg)");

  TrainOptions tr;
  CLI::App* t = app.add_subcommand("train", "train a TransDOA model");
  t->add_option("--train", tr.train_path, "training dataset")->required();
  t->add_option("--val", tr.val_path, "validation dataset")->required();
  t->add_option("--config", tr.config_path, "JSON model/train config");
  t->add_option("--seed", tr.seed, "RNG seed");
  t->add_option("--out", tr.out, "checkpoint path")->required();

  TransferOptions tf;
  CLI::App* x = app.add_subcommand(
      "transfer", "calibrate a source model to imperfect-array data");
  x->add_option("--source", tf.source, "source checkpoint")->required();
  x->add_option("--target-data", tf.target_data, "labeled target dataset")
      ->required();
  x->add_option("--out", tf.out, "output checkpoint");
  x->add_option("--scenario", tf.scenario,
                "scenario preset for the paired-data generator");
  x->add_option("--samples", tf.samples, "target records used");
  x->add_option("--alpha", tf.alpha, "cosine-loss weight");
  x->add_option("--beta", tf.beta, "mse-loss weight");
  x->add_option("--lr", tf.lr, "learning rate");
  x->add_option("--batches", tf.batches, "batches per epoch");
  x->add_option("--epochs", tf.epochs, "max epochs");
  x->add_option("--mode", tf.mode, "transfer|finetune|direct|compare");
  x->add_option("--head", tf.head, "head policy: reuse|finetune");
  x->add_option("--eval-data", tf.eval_data, "held-out data (compare mode)");
  x->add_option("--samples-grid", tf.samples_grid,
                "comma list of sample counts (compare mode)");
  x->add_option("--save-pairs", tf.save_pairs,
                "also write the paired dataset (DOAP)");
  x->add_option("--seed", tf.seed, "RNG seed");

  EvalOptions ev;
  CLI::App* e = app.add_subcommand("eval", "evaluate an estimator");
  e->add_option("--method", ev.method, "transdoa|music")->required();
  e->add_option("--data", ev.data, "dataset path");
  e->add_option("--ckpt", ev.ckpt, "checkpoint (transdoa)");
  e->add_option("--report", ev.report, "JSON report path")->required();
  e->add_option("--csv", ev.csv, "per-trial CSV path");
  e->add_option("--scenario", ev.scenario, "scenario preset");
  e->add_option("--seed", ev.seed, "RNG seed (sweep mode)");
  e->add_option("--snr-sweep", ev.snr_sweep, "lo:hi:step sweep");
  e->add_option("--count", ev.count, "records per sweep point");
  e->add_option("--rho", ev.rho, "imperfection intensity (sweep mode)");
  e->add_option("--grid", ev.grid_1d, "MUSIC grid step (deg)");
  e->add_option("--grid-theta", ev.grid_theta, "2-D MUSIC azimuth step");
  e->add_option("--grid-phi", ev.grid_phi, "2-D MUSIC elevation step");
  e->add_option("--cap", ev.cap, "error cap (deg)");
  e->add_option("--tolerance", ev.tolerance, "accuracy tolerance (deg)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& h) {
    return app.exit(h);
  } catch (const CLI::ParseError& p) {
    app.exit(p);
    return kExitUsage;
  }

  try {
    if (*g) return cmd_gen(gen);
    if (*t) return cmd_train(tr);
    if (*x) return cmd_transfer(tf);
    if (*e) {
      if (ev.data.empty() && ev.snr_sweep.empty())
        throw doa::InvalidArgument("eval needs --data or --snr-sweep");
      return cmd_eval(ev);
    }
  } catch (const doa::NumericError& err) {
    std::fprintf(stderr, "numeric failure: %s\n", err.what());
    return kExitNumeric;
  } catch (const doa::InvalidArgument& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kExitData;
  } catch (const doa::InfeasibleSpec& err) {
    std::fprintf(stderr, "infeasible: %s\n", err.what());
    return kExitData;
  } catch (const doa::IoError& err) {
    std::fprintf(stderr, "io error: %s\n", err.what());
    return kExitData;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kExitData;
  }
  return 0;
}
