#pragma once

#include <vector>

#include "mmgcn/common.hpp"

namespace mmgcn {

// Integer count matrix, rows = gold class, columns = predicted class.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);

  void add(int gold, int pred);
  long at(int gold, int pred) const;
  long total() const;
  int num_classes() const { return static_cast<int>(counts_.rows()); }
  std::vector<std::vector<long>> rows() const;

 private:
  Eigen::Matrix<long, Eigen::Dynamic, Eigen::Dynamic> counts_;
};

// Per-class F1 (0 when precision+recall degenerate) averaged with weights
// proportional to gold-class support.
double weighted_f1(const ConfusionMatrix& cm);
double weighted_f1(const std::vector<int>& gold, const std::vector<int>& pred, int num_classes);

double accuracy(const std::vector<int>& gold, const std::vector<int>& pred);

struct TTest {
  double t = 0.0;
  double p = 1.0;
  int dof = 0;
  bool degenerate = false;  // zero variance of the paired differences
};

// Two-sided paired t-test; scores are paired by position (same seed).
// Zero-variance differences are flagged degenerate with p = 1 when the mean
// difference is zero and p = 0 otherwise.
TTest paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

// Two-sided p for a Student t statistic, via the regularized incomplete beta
// function (continued-fraction evaluation, no stats dependency).
double student_t_two_sided_p(double t, int dof);

double incomplete_beta(double a, double b, double x);  // regularized I_x(a, b)

}  // namespace mmgcn
