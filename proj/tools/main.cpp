// Command-line surface for the semiparametric longitudinal estimators:
//   simulate  generate datasets from a simulation config
//   cv        leave-one-subject-out bandwidth selection
//   fit       profile least squares + weighted estimating equations on a CSV
//   mc-study  replication study with bias/SD/MAD tables
//   report    render study CSVs as markdown, fit reports as SVG link plots
// Exit codes: 0 success, 2 usage/input error, 3 convergence failure.

#include <chrono>
#include <cstdint>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <spgee/spgee.hpp>

namespace {

using spgee::VectorXd;

struct GlobalFlags {
  int threads = 1;
  bool threads_set = false;
  bool verbose = false;
  std::int64_t seed = -1;  // <0: keep config/default seed
};

void log_verbose(const GlobalFlags& g, const std::string& msg) {
  if (g.verbose) std::cerr << "[spgee] " << msg << "\n";
}

VectorXd parse_grid(const std::string& text, const spgee::LongitudinalDataset& ds,
                    bool time_target) {
  if (text == "auto")
    return time_target ? spgee::default_time_grid(ds) : spgee::default_grid(ds);
  std::vector<double> items;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      items.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw spgee::ConfigError("--grid: cannot parse '" + cell + "' as a number");
    }
  }
  if (items.empty()) throw spgee::ConfigError("--grid: empty bandwidth list");
  VectorXd grid(static_cast<Eigen::Index>(items.size()));
  for (std::size_t k = 0; k < items.size(); ++k)
    grid[static_cast<Eigen::Index>(k)] = items[k];
  return grid;
}

std::string padded_index(int value, int width) {
  std::ostringstream os;
  os << std::setw(width) << std::setfill('0') << value;
  return os.str();
}

void write_or_print(const std::string& out_path, const std::string& content) {
  if (out_path.empty())
    std::cout << content;
  else
    spgee::write_text_file(out_path, content);
}

int cmd_simulate(const GlobalFlags& g, const std::string& config_path,
                 const std::string& out_prefix) {
  spgee::SimConfig cfg =
      spgee::sim_config_from(spgee::parse_config(spgee::read_text_file(config_path)));
  if (g.seed >= 0) cfg.seed = static_cast<std::uint64_t>(g.seed);
  const int width = std::max<int>(3, static_cast<int>(std::to_string(cfg.reps).size()));
  const spgee::CsvSchema schema = spgee::default_schema(
      static_cast<int>(cfg.beta0.size()), static_cast<int>(cfg.theta0.size()));
  for (int r = 0; r < cfg.reps; ++r) {
    const spgee::LongitudinalDataset ds =
        spgee::generate_dataset(cfg, static_cast<std::uint64_t>(r));
    const std::string path = out_prefix + "_" + padded_index(r + 1, width) + ".csv";
    spgee::save_csv(path, ds, schema);
    log_verbose(g, "wrote " + path);
  }
  return 0;
}

int cmd_cv(const GlobalFlags& g, const std::string& data_path,
           const std::string& target, const std::string& grid_text, double h,
           const std::string& kernel, const std::string& out_path) {
  const spgee::LongitudinalDataset ds = spgee::load_csv_auto(data_path);
  const spgee::KernelSpec spec = spgee::kernel_from_string(kernel);
  spgee::CvOptions opts;
  opts.threads = g.threads;

  spgee::CvResult result;
  if (target == "link") {
    result = spgee::cv_link_bandwidth(ds, parse_grid(grid_text, ds, false), spec,
                                      opts);
  } else if (target == "variance") {
    if (!(h > 0.0))
      throw spgee::ConfigError(
          "cv --target variance needs --h (link bandwidth for the residual fit)");
    const spgee::PulsFit puls = spgee::fit_puls(ds, h, spec);
    const auto r2 = spgee::residual_squares(ds, puls, h, spec);
    result = spgee::cv_variance_bandwidth(ds, r2, parse_grid(grid_text, ds, true),
                                          spec, opts);
  } else {
    throw spgee::ConfigError("cv --target must be link or variance");
  }

  std::ostringstream os;
  os.precision(17);
  os << "h,score\n";
  for (Eigen::Index k = 0; k < result.grid.size(); ++k)
    os << result.grid[k] << "," << result.scores[k] << "\n";
  write_or_print(out_path, os.str());
  std::cerr << "selected " << (target == "link" ? "h" : "h1") << " = "
            << result.best << "\n";
  return 0;
}

int cmd_fit(const GlobalFlags& g, const std::string& data_path,
            const std::string& method, double h, bool do_cv, double h1,
            const std::string& corr, const std::string& weights, int iterate,
            const std::string& kernel, const std::string& out_path,
            const std::string& plot_path, const std::string& reference) {
  const spgee::LongitudinalDataset ds = spgee::load_csv_auto(data_path);
  const spgee::KernelSpec spec = spgee::kernel_from_string(kernel);

  spgee::FitOptions opts;
  opts.spec = spec;
  opts.method = method == "puls" ? spgee::Method::Puls : spgee::Method::Sgee;
  if (method != "puls" && method != "sgee")
    throw spgee::ConfigError("--method must be puls or sgee");
  opts.corr = spgee::correlation_kind_from_string(corr);
  opts.iterate = iterate;
  if (weights == "estimated") opts.weights = spgee::WeightPolicy::Estimated;
  else if (weights == "identity") opts.weights = spgee::WeightPolicy::Identity;
  else throw spgee::ConfigError("--weights must be estimated or identity");

  spgee::CvOptions cv_opts;
  cv_opts.threads = g.threads;
  if (h > 0.0) {
    opts.h = h;
  } else if (do_cv) {
    log_verbose(g, "cross-validating the link bandwidth");
    opts.h = spgee::cv_link_bandwidth(ds, spgee::default_grid(ds), spec, cv_opts).best;
    log_verbose(g, "selected h = " + std::to_string(opts.h));
  } else {
    throw spgee::ConfigError("fit needs --h or --cv to choose the link bandwidth");
  }

  const bool needs_h1 = opts.method == spgee::Method::Sgee &&
                        opts.weights == spgee::WeightPolicy::Estimated;
  if (needs_h1) {
    if (h1 > 0.0) {
      opts.h1 = h1;
    } else if (do_cv) {
      log_verbose(g, "cross-validating the variance bandwidth");
      const spgee::PulsFit pilot = spgee::fit_puls(ds, opts.h, spec);
      const auto r2 = spgee::residual_squares(ds, pilot, opts.h, spec);
      opts.h1 = spgee::cv_variance_bandwidth(ds, r2, spgee::default_time_grid(ds),
                                             spec, cv_opts)
                    .best;
      log_verbose(g, "selected h1 = " + std::to_string(opts.h1));
    } else {
      throw spgee::ConfigError(
          "fit with estimated weights needs --h1 or --cv for the variance "
          "bandwidth");
    }
  }

  const auto start = std::chrono::steady_clock::now();
  const spgee::FullFit fit = spgee::fit_full(ds, opts);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  spgee::FitReport report = spgee::make_fit_report(fit, opts, seconds);
  write_or_print(out_path, spgee::to_json(report).dump(2) + "\n");

  if (!plot_path.empty() && report.link_grid.size() >= 2) {
    if (reference == "half-exp") {
      const VectorXd truth = (0.5 * report.link_grid.array().exp()).matrix();
      spgee::write_text_file(plot_path,
                             spgee::link_svg(report.link_grid, report.link_eta,
                                             &truth));
    } else {
      spgee::write_text_file(plot_path,
                             spgee::link_svg(report.link_grid, report.link_eta));
    }
    log_verbose(g, "wrote " + plot_path);
  }
  return fit.converged() ? 0 : 3;
}

int cmd_mc_study(const GlobalFlags& g, const std::string& config_path,
                 const std::string& out_path) {
  const spgee::ConfigMap cfg = spgee::parse_config(spgee::read_text_file(config_path));
  spgee::SimConfig sim = spgee::sim_config_from(cfg);
  spgee::StudyOptions opts = spgee::study_options_from(cfg);
  if (g.seed >= 0) sim.seed = static_cast<std::uint64_t>(g.seed);
  if (g.threads_set) opts.threads = g.threads;
  log_verbose(g, "running " + std::to_string(sim.reps) + " replications");
  const spgee::StudyResult res = spgee::run_study(sim, opts);
  write_or_print(out_path, spgee::study_csv(res, opts.run_sgee));
  if (g.verbose) {
    const spgee::StudyTable table =
        spgee::read_study_csv(spgee::study_csv(res, opts.run_sgee));
    std::cerr << spgee::markdown_table(table);
  }
  return 0;
}

int cmd_report(const std::string& study_path, const std::string& fit_path,
               const std::string& out_path, const std::string& plot_path,
               const std::string& reference) {
  if (study_path.empty() && fit_path.empty())
    throw spgee::ConfigError("report needs --study and/or --fit input");
  if (!study_path.empty()) {
    const spgee::StudyTable table =
        spgee::read_study_csv(spgee::read_text_file(study_path));
    write_or_print(out_path, spgee::markdown_table(table));
  }
  if (!fit_path.empty()) {
    if (plot_path.empty())
      throw spgee::ConfigError("report --fit needs --plot for the SVG output");
    const spgee::FitReport report = spgee::fit_report_from_json(
        nlohmann::json::parse(spgee::read_text_file(fit_path)));
    if (report.link_grid.size() < 2)
      throw spgee::ConfigError("fit report has no link grid to plot");
    if (reference == "half-exp") {
      const VectorXd truth = (0.5 * report.link_grid.array().exp()).matrix();
      spgee::write_text_file(plot_path,
                             spgee::link_svg(report.link_grid, report.link_eta,
                                             &truth));
    } else {
      spgee::write_text_file(plot_path,
                             spgee::link_svg(report.link_grid, report.link_eta));
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semiparametric estimation for partially linear single-index "
               "models on longitudinal data"};
  app.require_subcommand(1);

  GlobalFlags g;
  auto* threads_opt =
      app.add_option("--threads", g.threads, "Worker threads for replication and CV loops")
          ->capture_default_str();
  app.add_flag("--verbose", g.verbose, "Progress messages on stderr");
  app.add_option("--seed", g.seed, "Override the configured RNG seed");

  auto* sim = app.add_subcommand("simulate", "Generate datasets from a config");
  std::string sim_config, sim_out = "sim";
  sim->add_option("--config", sim_config, "TOML config with a [sim] section")
      ->required();
  sim->add_option("--out", sim_out, "Output prefix (files get _001.csv suffixes)")
      ->capture_default_str();

  auto* cv = app.add_subcommand("cv", "Leave-one-subject-out bandwidth selection");
  std::string cv_data, cv_target = "link", cv_grid = "auto", cv_kernel = "epanechnikov",
              cv_out;
  double cv_h = 0.0;
  cv->add_option("--data", cv_data, "Dataset CSV")->required();
  cv->add_option("--target", cv_target, "link or variance")->capture_default_str();
  cv->add_option("--grid", cv_grid, "auto or comma-separated bandwidths")
      ->capture_default_str();
  cv->add_option("--h", cv_h, "Link bandwidth (needed for --target variance)");
  cv->add_option("--kernel", cv_kernel, "epanechnikov or gaussian")
      ->capture_default_str();
  cv->add_option("--out", cv_out, "Write the (h,score) CSV here instead of stdout");

  auto* fit = app.add_subcommand("fit", "Fit the model to a dataset CSV");
  std::string fit_data, fit_method = "sgee", fit_corr = "ar1",
              fit_weights = "estimated", fit_kernel = "epanechnikov", fit_out,
              fit_plot, fit_reference = "none";
  double fit_h = 0.0, fit_h1 = 0.0;
  bool fit_cv = false;
  int fit_iterate = 1;
  fit->add_option("--data", fit_data, "Dataset CSV")->required();
  fit->add_option("--method", fit_method, "puls or sgee")->capture_default_str();
  fit->add_option("--h", fit_h, "Link bandwidth");
  fit->add_flag("--cv", fit_cv, "Cross-validate missing bandwidths");
  fit->add_option("--h1", fit_h1, "Variance bandwidth");
  fit->add_option("--corr", fit_corr, "indep, ar1, or arma11")->capture_default_str();
  fit->add_option("--weights", fit_weights, "estimated or identity")
      ->capture_default_str();
  fit->add_option("--iterate", fit_iterate,
                  "Rounds of covariance estimation + refit")
      ->capture_default_str();
  fit->add_option("--kernel", fit_kernel, "epanechnikov or gaussian")
      ->capture_default_str();
  fit->add_option("--out", fit_out, "Write the JSON report here instead of stdout");
  fit->add_option("--plot", fit_plot, "Write an SVG of the estimated link");
  fit->add_option("--reference", fit_reference,
                  "Reference curve in the plot: none or half-exp")
      ->capture_default_str();

  auto* mc = app.add_subcommand("mc-study", "Replication study with summary table");
  std::string mc_config, mc_out;
  mc->add_option("--config", mc_config, "TOML config with [sim] and [study] sections")
      ->required();
  mc->add_option("--out", mc_out, "Write the study CSV here instead of stdout");

  auto* rep = app.add_subcommand("report", "Render study CSV / fit JSON as markdown and SVG");
  std::string rep_study, rep_fit, rep_out, rep_plot, rep_reference = "half-exp";
  rep->add_option("--study", rep_study, "Study CSV from mc-study");
  rep->add_option("--fit", rep_fit, "Fit report JSON from fit");
  rep->add_option("--out", rep_out, "Write markdown here instead of stdout");
  rep->add_option("--plot", rep_plot, "Write the link SVG here");
  rep->add_option("--reference", rep_reference,
                  "Reference curve in the plot: none or half-exp")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  g.threads_set = threads_opt->count() > 0;

  try {
    if (sim->parsed()) return cmd_simulate(g, sim_config, sim_out);
    if (cv->parsed()) return cmd_cv(g, cv_data, cv_target, cv_grid, cv_h, cv_kernel, cv_out);
    if (fit->parsed())
      return cmd_fit(g, fit_data, fit_method, fit_h, fit_cv, fit_h1, fit_corr,
                     fit_weights, fit_iterate, fit_kernel, fit_out, fit_plot,
                     fit_reference);
    if (mc->parsed()) return cmd_mc_study(g, mc_config, mc_out);
    if (rep->parsed())
      return cmd_report(rep_study, rep_fit, rep_out, rep_plot, rep_reference);
  } catch (const spgee::ConvergenceError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 3;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 2;
  }
  return 2;
}
