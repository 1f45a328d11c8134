#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "spgee/covariance.hpp"
#include "spgee/dataset.hpp"
#include "spgee/error.hpp"
#include "spgee/montecarlo.hpp"
#include "spgee/pipeline.hpp"

namespace spgee {

/// Machine-readable record of one model fit; serializes to JSON and back
/// without loss.
struct FitReport {
  std::string method = "sgee";
  VectorXd beta;
  VectorXd theta;
  VectorXd theta_raw;
  VectorXd std_errors;
  double puls_objective = 0.0;
  double residual_norm = 0.0;
  bool converged = false;
  int iterations = 0;
  double h = 0.0;
  double h1 = 0.0;
  std::string corr = "indep";
  VectorXd phi;
  double tau_hat = 0.0;
  VectorXd link_grid;
  VectorXd link_eta;
  VectorXd link_eta_dot;
  std::string note;
  double seconds = 0.0;
};

namespace detail {

inline nlohmann::json to_json_array(const VectorXd& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(v[k]);
  return a;
}

inline VectorXd from_json_array(const nlohmann::json& a, const char* field) {
  if (!a.is_array())
    throw ParseError(std::string("fit report: field '") + field +
                     "' is not an array");
  VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t k = 0; k < a.size(); ++k)
    v[static_cast<Eigen::Index>(k)] = a[k].get<double>();
  return v;
}

}  // namespace detail

inline nlohmann::json to_json(const FitReport& r) {
  nlohmann::json j;
  j["method"] = r.method;
  j["beta"] = detail::to_json_array(r.beta);
  j["theta"] = detail::to_json_array(r.theta);
  j["theta_raw"] = detail::to_json_array(r.theta_raw);
  j["std_errors"] = detail::to_json_array(r.std_errors);
  j["puls_objective"] = r.puls_objective;
  j["residual_norm"] = r.residual_norm;
  j["converged"] = r.converged;
  j["iterations"] = r.iterations;
  j["h"] = r.h;
  j["h1"] = r.h1;
  j["corr"] = r.corr;
  j["phi"] = detail::to_json_array(r.phi);
  j["tau_hat"] = r.tau_hat;
  j["link"] = {{"grid", detail::to_json_array(r.link_grid)},
               {"eta", detail::to_json_array(r.link_eta)},
               {"eta_dot", detail::to_json_array(r.link_eta_dot)}};
  j["note"] = r.note;
  j["seconds"] = r.seconds;
  return j;
}

inline FitReport fit_report_from_json(const nlohmann::json& j) {
  FitReport r;
  try {
    r.method = j.at("method").get<std::string>();
    r.beta = detail::from_json_array(j.at("beta"), "beta");
    r.theta = detail::from_json_array(j.at("theta"), "theta");
    r.theta_raw = detail::from_json_array(j.at("theta_raw"), "theta_raw");
    r.std_errors = detail::from_json_array(j.at("std_errors"), "std_errors");
    r.puls_objective = j.at("puls_objective").get<double>();
    r.residual_norm = j.at("residual_norm").get<double>();
    r.converged = j.at("converged").get<bool>();
    r.iterations = j.at("iterations").get<int>();
    r.h = j.at("h").get<double>();
    r.h1 = j.at("h1").get<double>();
    r.corr = j.at("corr").get<std::string>();
    r.phi = detail::from_json_array(j.at("phi"), "phi");
    r.tau_hat = j.at("tau_hat").get<double>();
    const auto& link = j.at("link");
    r.link_grid = detail::from_json_array(link.at("grid"), "link.grid");
    r.link_eta = detail::from_json_array(link.at("eta"), "link.eta");
    r.link_eta_dot = detail::from_json_array(link.at("eta_dot"), "link.eta_dot");
    r.note = j.at("note").get<std::string>();
    r.seconds = j.at("seconds").get<double>();
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("fit report: ") + ex.what());
  }
  return r;
}

/// Flattens a finished pipeline run into the report record.
inline FitReport make_fit_report(const FullFit& fit, const FitOptions& opts,
                                 double seconds) {
  FitReport r;
  r.method = opts.method == Method::Puls ? "puls" : "sgee";
  r.h = opts.h;
  r.h1 = opts.h1;
  r.seconds = seconds;
  r.note = fit.note;
  r.puls_objective = fit.puls.objective;
  if (opts.method == Method::Puls || !fit.sgee_attempted) {
    r.beta = fit.puls.params.beta;
    r.theta = fit.puls.params.theta;
    r.theta_raw = fit.puls.params.theta;
    r.iterations = fit.puls.iterations;
    r.converged = fit.puls.converged;
  } else {
    r.beta = fit.sgee.params.beta;
    r.theta = fit.sgee.params.theta;
    r.theta_raw = fit.sgee.theta_raw;
    r.std_errors = fit.sgee.std_errors;
    r.residual_norm = fit.sgee.residual_norm;
    r.iterations = fit.sgee.iterations;
    r.converged = fit.sgee.converged;
    r.link_grid = fit.sgee.link.grid;
    r.link_eta = fit.sgee.link.eta;
    r.link_eta_dot = fit.sgee.link.eta_dot;
  }
  if (fit.have_covariance) {
    r.corr = correlation_name(fit.phi.family.kind);
    r.phi = fit.phi.family.phi;
    r.tau_hat = fit.vfe.tau_hat;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Study tables
// ---------------------------------------------------------------------------

/// CSV rows in the simulation-table layout: one row per (method, statistic),
/// one column per parameter.
inline std::string study_csv(const StudyResult& res, bool have_sgee) {
  const Eigen::Index q = res.truth.size();
  std::ostringstream os;
  os.precision(17);
  os << "method,stat";
  for (Eigen::Index k = 0; k < q; ++k) os << ",param" << (k + 1);
  os << "\n";
  const auto rows = [&os, q](const std::string& method, const McSummary& s) {
    const struct {
      const char* name;
      const VectorXd* v;
    } stats[] = {{"bias", &s.bias}, {"sd", &s.sd}, {"mad", &s.mad}};
    for (const auto& st : stats) {
      os << method << "," << st.name;
      for (Eigen::Index k = 0; k < q; ++k) os << "," << (*st.v)[k];
      os << "\n";
    }
  };
  rows("puls", res.puls);
  if (have_sgee) rows("sgee", res.sgee);
  return os.str();
}

/// Rebuilds per-method summaries from a study CSV produced by study_csv.
struct StudyTable {
  std::vector<std::string> methods;
  std::vector<McSummary> summaries;
  Eigen::Index params = 0;
};

inline StudyTable read_study_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line.rfind("method,stat", 0) != 0)
    throw ParseError("study table: missing 'method,stat,...' header");
  Eigen::Index q = 0;
  for (char c : line) q += c == ',' ? 1 : 0;
  q -= 1;
  if (q <= 0) throw ParseError("study table: no parameter columns");

  StudyTable table;
  table.params = q;
  auto find_method = [&table, q](const std::string& name) -> McSummary& {
    for (std::size_t i = 0; i < table.methods.size(); ++i)
      if (table.methods[i] == name) return table.summaries[i];
    table.methods.push_back(name);
    McSummary s;
    s.bias = VectorXd::Zero(q);
    s.sd = VectorXd::Zero(q);
    s.mad = VectorXd::Zero(q);
    table.summaries.push_back(s);
    return table.summaries.back();
  };
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' '))
      line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t pos = 0;
    while (true) {
      const auto comma = line.find(',', pos);
      cells.push_back(line.substr(pos, comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (cells.size() != static_cast<std::size_t>(q) + 2)
      throw ParseError("study table row " + std::to_string(row) +
                       ": expected " + std::to_string(q + 2) + " cells");
    McSummary& s = find_method(cells[0]);
    VectorXd* target = nullptr;
    if (cells[1] == "bias") target = &s.bias;
    else if (cells[1] == "sd") target = &s.sd;
    else if (cells[1] == "mad") target = &s.mad;
    else
      throw ParseError("study table row " + std::to_string(row) +
                       ": unknown statistic '" + cells[1] + "'");
    for (Eigen::Index k = 0; k < q; ++k) {
      const std::string& cell = cells[static_cast<std::size_t>(k) + 2];
      double value = 0.0;
      const auto [ptr, ec] =
          std::from_chars(cell.data(), cell.data() + cell.size(), value);
      if (ec != std::errc() || ptr != cell.data() + cell.size())
        throw ParseError("study table row " + std::to_string(row) +
                         ": bad number '" + cell + "'");
      (*target)[k] = value;
    }
  }
  if (table.methods.empty()) throw ParseError("study table: no data rows");
  return table;
}

/// Markdown rendering of a study table: parameters as columns, one
/// (method, statistic) pair per row.
inline std::string markdown_table(const StudyTable& table) {
  std::ostringstream os;
  os << "| Method | Stat |";
  for (Eigen::Index k = 0; k < table.params; ++k)
    os << " param" << (k + 1) << " |";
  os << "\n|---|---|";
  for (Eigen::Index k = 0; k < table.params; ++k) os << "---|";
  os << "\n";
  os.precision(4);
  os << std::fixed;
  for (std::size_t i = 0; i < table.methods.size(); ++i) {
    const struct {
      const char* name;
      const VectorXd* v;
    } stats[] = {{"Bias", &table.summaries[i].bias},
                 {"SD", &table.summaries[i].sd},
                 {"MAD", &table.summaries[i].mad}};
    for (const auto& st : stats) {
      os << "| " << table.methods[i] << " | " << st.name << " |";
      for (Eigen::Index k = 0; k < table.params; ++k) os << " " << (*st.v)[k] << " |";
      os << "\n";
    }
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// SVG link plot
// ---------------------------------------------------------------------------

/// Plots the estimated link (dot-dashed) and, when given, a reference curve
/// (solid) over the same grid. Self-contained SVG; no external assets.
inline std::string link_svg(const VectorXd& grid, const VectorXd& eta,
                            const VectorXd* reference = nullptr) {
  if (grid.size() < 2 || eta.size() != grid.size())
    throw DimensionError("link_svg: need a grid with >= 2 points and matching values");
  if (reference && reference->size() != grid.size())
    throw DimensionError("link_svg: reference curve length mismatch");
  const double w = 640.0, h = 480.0, ml = 60.0, mr = 20.0, mt = 20.0, mb = 50.0;
  double ylo = eta.minCoeff(), yhi = eta.maxCoeff();
  if (reference) {
    ylo = std::min(ylo, reference->minCoeff());
    yhi = std::max(yhi, reference->maxCoeff());
  }
  if (yhi - ylo < 1e-12) {
    ylo -= 0.5;
    yhi += 0.5;
  }
  const double xlo = grid[0], xhi = grid[grid.size() - 1];
  const auto px = [&](double u) {
    return ml + (u - xlo) / (xhi - xlo) * (w - ml - mr);
  };
  const auto py = [&](double v) {
    return h - mb - (v - ylo) / (yhi - ylo) * (h - mt - mb);
  };
  const auto polyline = [&](const VectorXd& v) {
    std::ostringstream pts;
    pts.precision(2);
    pts << std::fixed;
    for (Eigen::Index k = 0; k < grid.size(); ++k)
      pts << px(grid[k]) << "," << py(v[k]) << " ";
    return pts.str();
  };

  std::ostringstream os;
  os.precision(3);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
     << "\" height=\"" << h << "\" viewBox=\"0 0 " << w << " " << h << "\">\n"
     << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n"
     << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr
     << "\" y2=\"" << h - mb << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml
     << "\" y2=\"" << h - mb << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double u = xlo + (xhi - xlo) * k / 4.0;
    const double v = ylo + (yhi - ylo) * k / 4.0;
    os << "<text x=\"" << px(u) << "\" y=\"" << h - mb + 18
       << "\" font-size=\"12\" text-anchor=\"middle\">" << u << "</text>\n"
       << "<text x=\"" << ml - 8 << "\" y=\"" << py(v) + 4
       << "\" font-size=\"12\" text-anchor=\"end\">" << v << "</text>\n";
  }
  if (reference)
    os << "<polyline points=\"" << polyline(*reference)
       << "\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\"/>\n";
  os << "<polyline points=\"" << polyline(eta)
     << "\" fill=\"none\" stroke=\"crimson\" stroke-width=\"1.5\" "
        "stroke-dasharray=\"8 3 2 3\"/>\n"
     << "<text x=\"" << w - mr - 10 << "\" y=\"" << mt + 16
     << "\" font-size=\"12\" text-anchor=\"end\" fill=\"crimson\">estimated "
        "(dot-dashed)</text>\n";
  if (reference)
    os << "<text x=\"" << w - mr - 10 << "\" y=\"" << mt + 32
       << "\" font-size=\"12\" text-anchor=\"end\">reference (solid)</text>\n";
  os << "<text x=\"" << (ml + w - mr) / 2 << "\" y=\"" << h - 12
     << "\" font-size=\"13\" text-anchor=\"middle\">index u</text>\n"
     << "</svg>\n";
  return os.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw Error("failed writing '" + path + "'");
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "' for reading");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace spgee
