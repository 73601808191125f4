#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ivtrans {

// Error categories; the numeric value doubles as the CLI exit code.
enum class error_kind : int { validation = 2, nonconvergence = 3, io = 4 };

class error : public std::runtime_error {
 public:
  error(error_kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  error_kind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  error_kind kind_;
};

struct domain_error : error {
  explicit domain_error(const std::string& what) : error(error_kind::validation, what) {}
};

struct shape_error : error {
  explicit shape_error(const std::string& what) : error(error_kind::validation, what) {}
};

struct validation_error : error {
  explicit validation_error(const std::string& what) : error(error_kind::validation, what) {}
};

struct insufficient_data_error : error {
  explicit insufficient_data_error(const std::string& what) : error(error_kind::validation, what) {}
};

struct singular_design_error : error {
  explicit singular_design_error(const std::string& what) : error(error_kind::validation, what) {}
};

struct degenerate_risk_set_error : error {
  explicit degenerate_risk_set_error(const std::string& what) : error(error_kind::validation, what) {}
};

struct precondition_error : error {
  explicit precondition_error(const std::string& what) : error(error_kind::validation, what) {}
};

struct parse_error : error {
  explicit parse_error(const std::string& what) : error(error_kind::validation, what) {}
};

struct calibration_error : error {
  explicit calibration_error(const std::string& what) : error(error_kind::validation, what) {}
};

struct bracket_failure_error : error {
  explicit bracket_failure_error(const std::string& what) : error(error_kind::nonconvergence, what) {}
};

struct solver_stall_error : error {
  explicit solver_stall_error(const std::string& what) : error(error_kind::nonconvergence, what) {}
};

struct singular_information_error : error {
  explicit singular_information_error(const std::string& what) : error(error_kind::nonconvergence, what) {}
};

struct invalid_covariance_error : error {
  explicit invalid_covariance_error(const std::string& what) : error(error_kind::nonconvergence, what) {}
};

struct bootstrap_instability_error : error {
  explicit bootstrap_instability_error(const std::string& what) : error(error_kind::nonconvergence, what) {}
};

struct study_quality_error : error {
  explicit study_quality_error(const std::string& what) : error(error_kind::nonconvergence, what) {}
};

struct io_error : error {
  explicit io_error(const std::string& what) : error(error_kind::io, what) {}
};

// Outer iteration ran out of budget; carries the last iterate for reporting.
class nonconvergence_error : public error {
 public:
  nonconvergence_error(const std::string& what, std::vector<double> last_beta,
                       double score_norm, int iterations)
      : error(error_kind::nonconvergence, what),
        last_beta_(std::move(last_beta)),
        score_norm_(score_norm),
        iterations_(iterations) {}

  const std::vector<double>& last_beta() const noexcept { return last_beta_; }
  double score_norm() const noexcept { return score_norm_; }
  int iterations() const noexcept { return iterations_; }

 private:
  std::vector<double> last_beta_;
  double score_norm_;
  int iterations_;
};

}  // namespace ivtrans
