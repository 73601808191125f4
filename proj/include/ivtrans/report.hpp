#pragma once

#include <Eigen/Dense>
#include <fstream>
#include <string>

#include "json.hpp"

#include "ivtrans/errors.hpp"
#include "ivtrans/fit.hpp"
#include "ivtrans/simulation.hpp"

namespace ivtrans {

namespace detail {

inline nlohmann::json to_json(const Eigen::VectorXd& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline nlohmann::json to_json(const Eigen::MatrixXd& m) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(row);
  }
  return out;
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = j.at(static_cast<std::size_t>(i)).get<double>();
  return v;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows > 0 ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index c = 0; c < cols; ++c)
      m(i, c) = j.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(c)).get<double>();
  return m;
}

}  // namespace detail

inline nlohmann::json spec_to_json(const CaseSpec& spec) {
  nlohmann::json j;
  j["case"] = to_string(spec.case_id);
  j["n"] = spec.n;
  j["beta"] = detail::to_json(spec.beta);
  j["Q"] = detail::to_json(spec.Q);
  j["family_r"] = spec.family_r;
  j["instrument_means"] = detail::to_json(spec.instrument_means);
  j["error_sd_v"] = spec.error_sd_v;
  j["error_sd_eps"] = spec.error_sd_eps;
  j["target_censoring"] = spec.target_censoring;
  j["reps"] = spec.reps;
  j["seed"] = spec.seed;
  j["censoring_c"] = spec.censoring_c;
  return j;
}

inline CaseSpec spec_from_json(const nlohmann::json& j) {
  CaseSpec spec;
  const std::string case_name = j.at("case").get<std::string>();
  if (case_name == "i")
    spec.case_id = SimCase::case_i;
  else if (case_name == "ii")
    spec.case_id = SimCase::case_ii;
  else if (case_name == "iii")
    spec.case_id = SimCase::case_iii;
  else
    throw validation_error("unknown simulation case '" + case_name + "'");
  spec.n = j.at("n").get<int>();
  spec.beta = detail::vector_from_json(j.at("beta"));
  spec.Q = detail::matrix_from_json(j.at("Q"));
  spec.family_r = j.at("family_r").get<double>();
  spec.instrument_means = detail::vector_from_json(j.at("instrument_means"));
  spec.error_sd_v = j.at("error_sd_v").get<double>();
  spec.error_sd_eps = j.at("error_sd_eps").get<double>();
  spec.target_censoring = j.at("target_censoring").get<double>();
  spec.reps = j.at("reps").get<int>();
  spec.seed = j.at("seed").get<std::uint64_t>();
  spec.censoring_c = j.at("censoring_c").get<double>();
  spec.validate();
  return spec;
}

inline nlohmann::json metrics_to_json(const MetricsReport& report) {
  nlohmann::json j;
  j["spec"] = spec_to_json(report.spec);
  j["bias"] = detail::to_json(report.bias);
  j["mse"] = detail::to_json(report.mse);
  j["coverage_probability"] = detail::to_json(report.coverage_probability);
  j["average_width"] = detail::to_json(report.average_width);
  j["empirical_censoring_rate"] = report.empirical_censoring_rate;
  j["convergence_rate"] = report.convergence_rate;
  j["ci_level"] = report.ci_level;
  return j;
}

inline MetricsReport metrics_from_json(const nlohmann::json& j) {
  MetricsReport report;
  report.spec = spec_from_json(j.at("spec"));
  report.bias = detail::vector_from_json(j.at("bias"));
  report.mse = detail::vector_from_json(j.at("mse"));
  report.coverage_probability = detail::vector_from_json(j.at("coverage_probability"));
  report.average_width = detail::vector_from_json(j.at("average_width"));
  report.empirical_censoring_rate = j.at("empirical_censoring_rate").get<double>();
  report.convergence_rate = j.at("convergence_rate").get<double>();
  report.ci_level = j.at("ci_level").get<double>();
  return report;
}

inline nlohmann::json transform_to_json(const StepTransform& transform) {
  nlohmann::json steps = nlohmann::json::array();
  for (Eigen::Index k = 0; k < transform.steps(); ++k)
    steps.push_back({transform.event_times(k), transform.values(k)});
  nlohmann::json j;
  j["steps"] = steps;
  nlohmann::json counts = nlohmann::json::array();
  for (Eigen::Index k = 0; k < transform.steps(); ++k) counts.push_back(transform.event_counts(k));
  j["event_counts"] = counts;
  return j;
}

inline nlohmann::json fit_to_json(const FitResult& result, bool include_components = false) {
  nlohmann::json j;
  j["beta_hat"] = detail::to_json(result.beta_hat);
  j["std_errors"] = detail::to_json(result.std_errors);
  nlohmann::json intervals = nlohmann::json::array();
  for (const auto& ci : result.conf_intervals) intervals.push_back({ci.first, ci.second});
  j["conf_intervals"] = intervals;
  j["ci_level"] = result.ci_level;
  j["covariance"] = detail::to_json(result.covariance);
  j["iterations"] = result.iterations;
  j["converged"] = result.converged;
  j["final_score_norm"] = result.final_score_norm;
  j["transform"] = transform_to_json(result.transform);
  j["instrumented"] = result.instrumented;
  if (result.instrumented) {
    j["Q_hat"] = detail::to_json(result.iv.Q_hat);
    j["sigma_eta_sq"] = detail::to_json(result.iv.sigma_eta_sq);
  }
  if (include_components && result.components.sandwich.size() > 0) {
    nlohmann::json comps;
    comps["Sigma_beta"] = detail::to_json(result.components.Sigma_beta);
    comps["Sigma_Q"] = detail::to_json(result.components.Sigma_Q);
    comps["Sigma_1"] = detail::to_json(result.components.Sigma_1);
    comps["Sigma_2"] = detail::to_json(result.components.Sigma_2);
    comps["Sigma_12"] = detail::to_json(result.components.Sigma_12);
    comps["Sigma_total"] = detail::to_json(result.components.Sigma_total);
    j["components"] = comps;
  }
  return j;
}

// Minimal reader for round-tripping fit reports; reconstructs the numeric
// payload (coefficients, uncertainty, transform), not the full fit state.
struct FitReportData {
  Eigen::VectorXd beta_hat;
  Eigen::VectorXd std_errors;
  std::vector<std::pair<double, double>> conf_intervals;
  Eigen::MatrixXd covariance;
  bool converged = false;
  double final_score_norm = 0.0;
  StepTransform transform;
};

inline FitReportData fit_from_json(const nlohmann::json& j) {
  FitReportData data;
  data.beta_hat = detail::vector_from_json(j.at("beta_hat"));
  data.std_errors = detail::vector_from_json(j.at("std_errors"));
  for (const auto& ci : j.at("conf_intervals"))
    data.conf_intervals.emplace_back(ci.at(0).get<double>(), ci.at(1).get<double>());
  data.covariance = detail::matrix_from_json(j.at("covariance"));
  data.converged = j.at("converged").get<bool>();
  data.final_score_norm = j.at("final_score_norm").get<double>();
  const auto& steps = j.at("transform").at("steps");
  const auto K = static_cast<Eigen::Index>(steps.size());
  data.transform.event_times.resize(K);
  data.transform.values.resize(K);
  data.transform.event_counts.resize(K);
  for (Eigen::Index k = 0; k < K; ++k) {
    data.transform.event_times(k) = steps.at(static_cast<std::size_t>(k)).at(0).get<double>();
    data.transform.values(k) = steps.at(static_cast<std::size_t>(k)).at(1).get<double>();
    data.transform.event_counts(k) =
        j.at("transform").at("event_counts").at(static_cast<std::size_t>(k)).get<int>();
  }
  return data;
}

inline void write_json_report(const std::string& path, const nlohmann::json& body) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot open report path '" + path + "' for writing");
  out << body.dump(2) << '\n';
  if (!out) throw io_error("failed while writing report to '" + path + "'");
}

inline nlohmann::json read_json_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open report '" + path + "'");
  nlohmann::json body;
  in >> body;
  return body;
}

}  // namespace ivtrans
