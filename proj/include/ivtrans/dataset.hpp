#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <numeric>
#include <sstream>
#include <vector>

#include "ivtrans/errors.hpp"

namespace ivtrans {

// Right-censored sample with surrogate covariates Z and instruments W.
//
// Records are stored in a canonical order: follow-up time ascending, events
// before censorings at tied times, then covariate rows lexicographically.
// Ordering by content (rather than input position) makes every downstream
// sum, and hence the fitted coefficients, invariant under permutation of the
// input records.
struct SurvivalDataset {
  Eigen::VectorXd times;   // follow-up times, strictly positive
  Eigen::VectorXi status;  // 1 = event, 0 = censored
  Eigen::MatrixXd Z;       // n x p surrogate covariates
  Eigen::MatrixXd W;       // n x q instruments, q >= p
  Eigen::VectorXi original_index;  // canonical row -> input row

  SurvivalDataset(Eigen::VectorXd times_in, Eigen::VectorXi status_in,
                  Eigen::MatrixXd Z_in, Eigen::MatrixXd W_in)
      : times(std::move(times_in)),
        status(std::move(status_in)),
        Z(std::move(Z_in)),
        W(std::move(W_in)) {
    validate();
    canonicalize();
  }

  Eigen::Index n() const { return times.size(); }
  Eigen::Index p() const { return Z.cols(); }
  Eigen::Index q() const { return W.cols(); }

  Eigen::Index n_events() const {
    Eigen::Index count = 0;
    for (Eigen::Index i = 0; i < status.size(); ++i) count += (status(i) == 1);
    return count;
  }

 private:
  void validate() const {
    const Eigen::Index n_records = times.size();
    if (status.size() != n_records || Z.rows() != n_records || W.rows() != n_records)
      throw shape_error("times, status, Z and W must have one row per record");
    if (n_records == 0) throw insufficient_data_error("empty dataset");
    if (Z.cols() < 1) throw validation_error("at least one surrogate covariate column required");
    if (W.cols() < Z.cols())
      throw validation_error("q >= p required: fewer instrument columns than covariate columns");
    if (n_records <= W.cols()) {
      std::ostringstream msg;
      msg << "insufficient data: n = " << n_records << " must exceed q = " << W.cols();
      throw insufficient_data_error(msg.str());
    }
    for (Eigen::Index i = 0; i < n_records; ++i) {
      if (!std::isfinite(times(i)) || times(i) <= 0.0) {
        std::ostringstream msg;
        msg << "record " << i << ": follow-up time must be finite and > 0, got " << times(i);
        throw validation_error(msg.str());
      }
      if (status(i) != 0 && status(i) != 1) {
        std::ostringstream msg;
        msg << "record " << i << ": status must be 0 or 1, got " << status(i);
        throw validation_error(msg.str());
      }
    }
    if (!Z.allFinite() || !W.allFinite())
      throw validation_error("covariate and instrument matrices must be finite with no missing entries");
    if (n_events() == 0) throw validation_error("all records censored: at least one event required");
  }

  void canonicalize() {
    const Eigen::Index n_records = times.size();
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n_records));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    auto row_less = [this](Eigen::Index a, Eigen::Index b) {
      if (times(a) != times(b)) return times(a) < times(b);
      if (status(a) != status(b)) return status(a) > status(b);  // events first
      for (Eigen::Index j = 0; j < Z.cols(); ++j)
        if (Z(a, j) != Z(b, j)) return Z(a, j) < Z(b, j);
      for (Eigen::Index j = 0; j < W.cols(); ++j)
        if (W(a, j) != W(b, j)) return W(a, j) < W(b, j);
      return false;
    };
    std::sort(perm.begin(), perm.end(), row_less);

    Eigen::VectorXd sorted_times(n_records);
    Eigen::VectorXi sorted_status(n_records);
    Eigen::MatrixXd sorted_Z(n_records, Z.cols());
    Eigen::MatrixXd sorted_W(n_records, W.cols());
    original_index.resize(n_records);
    for (Eigen::Index i = 0; i < n_records; ++i) {
      const Eigen::Index src = perm[static_cast<std::size_t>(i)];
      sorted_times(i) = times(src);
      sorted_status(i) = status(src);
      sorted_Z.row(i) = Z.row(src);
      sorted_W.row(i) = W.row(src);
      original_index(i) = static_cast<int>(src);
    }
    times = std::move(sorted_times);
    status = std::move(sorted_status);
    Z = std::move(sorted_Z);
    W = std::move(sorted_W);
  }
};

// Distinct observed failure times with tie counts and risk-set offsets over a
// time-sorted record array. Because records are sorted ascending, the risk set
// at event time t_k is the suffix [first_at_risk[k], n).
struct EventGrid {
  Eigen::VectorXd event_times;   // K strictly increasing failure times
  Eigen::VectorXi event_counts;  // d_k >= 1, ties at t_k
  Eigen::VectorXi first_at_risk; // suffix start per event time
  Eigen::VectorXi step_index;    // per record: largest k with t_k <= time_i, else -1
  Eigen::VectorXi event_column;  // per record: its event index when status = 1, else -1
  Eigen::Index n = 0;

  Eigen::Index steps() const { return event_times.size(); }

  static EventGrid build(const Eigen::VectorXd& times, const Eigen::VectorXi& status) {
    const Eigen::Index n_records = times.size();
    if (status.size() != n_records) throw shape_error("times and status lengths differ");
    if (n_records == 0) throw insufficient_data_error("empty sample");
    for (Eigen::Index i = 1; i < n_records; ++i)
      if (times(i) < times(i - 1))
        throw precondition_error("records must be sorted by time ascending");

    std::vector<double> distinct;
    std::vector<int> counts;
    for (Eigen::Index i = 0; i < n_records; ++i) {
      if (status(i) != 1) continue;
      if (!distinct.empty() && times(i) == distinct.back()) {
        ++counts.back();
      } else {
        distinct.push_back(times(i));
        counts.push_back(1);
      }
    }
    if (distinct.empty()) throw validation_error("no events: transform undefined");

    EventGrid grid;
    grid.n = n_records;
    const Eigen::Index K = static_cast<Eigen::Index>(distinct.size());
    grid.event_times.resize(K);
    grid.event_counts.resize(K);
    grid.first_at_risk.resize(K);
    for (Eigen::Index k = 0; k < K; ++k) {
      grid.event_times(k) = distinct[static_cast<std::size_t>(k)];
      grid.event_counts(k) = counts[static_cast<std::size_t>(k)];
      const double* begin = times.data();
      const double* pos = std::lower_bound(begin, begin + n_records, grid.event_times(k));
      grid.first_at_risk(k) = static_cast<int>(pos - begin);
    }

    grid.step_index.resize(n_records);
    grid.event_column.resize(n_records);
    for (Eigen::Index i = 0; i < n_records; ++i) {
      const double* begin = grid.event_times.data();
      const double* pos = std::upper_bound(begin, begin + K, times(i));
      grid.step_index(i) = static_cast<int>(pos - begin) - 1;
      grid.event_column(i) = -1;
      if (status(i) == 1) {
        const double* at = std::lower_bound(begin, begin + K, times(i));
        grid.event_column(i) = static_cast<int>(at - begin);
      }
    }
    return grid;
  }

  static EventGrid build(const SurvivalDataset& data) {
    return build(data.times, data.status);
  }
};

}  // namespace ivtrans
