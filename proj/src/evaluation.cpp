#include "mmgcn/evaluation.hpp"

#include <cmath>

namespace mmgcn {

ConfusionMatrix::ConfusionMatrix(int num_classes) {
  if (num_classes < 1) throw Error("ConfusionMatrix: need at least one class");
  counts_ = Eigen::Matrix<long, Eigen::Dynamic, Eigen::Dynamic>::Zero(num_classes, num_classes);
}

void ConfusionMatrix::add(int gold, int pred) {
  if (gold < 0 || gold >= num_classes() || pred < 0 || pred >= num_classes()) {
    throw Error("ConfusionMatrix: label outside [0, " + std::to_string(num_classes()) + ")");
  }
  counts_(gold, pred) += 1;
}

long ConfusionMatrix::at(int gold, int pred) const { return counts_(gold, pred); }

long ConfusionMatrix::total() const { return counts_.sum(); }

std::vector<std::vector<long>> ConfusionMatrix::rows() const {
  std::vector<std::vector<long>> out;
  for (int r = 0; r < num_classes(); ++r) {
    std::vector<long> row;
    for (int c = 0; c < num_classes(); ++c) row.push_back(counts_(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

double weighted_f1(const ConfusionMatrix& cm) {
  const long total = cm.total();
  if (total == 0) throw Error("weighted_f1: no evaluated items");
  double score = 0.0;
  for (int k = 0; k < cm.num_classes(); ++k) {
    long tp = cm.at(k, k);
    long support = 0, predicted = 0;
    for (int j = 0; j < cm.num_classes(); ++j) {
      support += cm.at(k, j);
      predicted += cm.at(j, k);
    }
    if (support == 0) continue;  // weight 0
    const double precision = predicted > 0 ? static_cast<double>(tp) / predicted : 0.0;
    const double recall = static_cast<double>(tp) / support;
    const double f1 =
        (precision + recall) > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    score += f1 * (static_cast<double>(support) / static_cast<double>(total));
  }
  return score;
}

double weighted_f1(const std::vector<int>& gold, const std::vector<int>& pred, int num_classes) {
  if (gold.size() != pred.size()) throw Error("weighted_f1: gold/pred length mismatch");
  if (gold.empty()) throw Error("weighted_f1: empty input");
  ConfusionMatrix cm(num_classes);
  for (size_t i = 0; i < gold.size(); ++i) cm.add(gold[i], pred[i]);
  return weighted_f1(cm);
}

double accuracy(const std::vector<int>& gold, const std::vector<int>& pred) {
  if (gold.size() != pred.size() || gold.empty()) throw Error("accuracy: bad input lengths");
  long hits = 0;
  for (size_t i = 0; i < gold.size(); ++i)
    if (gold[i] == pred[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(gold.size());
}

namespace {

// Lentz continued fraction for the incomplete beta function.
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-14;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log(1.0 - x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * betacf(a, b, x) / a;
  }
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, int dof) {
  if (dof < 1) throw Error("student_t_two_sided_p: dof must be >= 1");
  const double nu = static_cast<double>(dof);
  return incomplete_beta(nu / 2.0, 0.5, nu / (nu + t * t));
}

TTest paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw Error("paired_t_test: unpaired score lists");
  const int n = static_cast<int>(a.size());
  if (n < 2) throw Error("paired_t_test: need at least 2 pairs");

  double mean = 0.0;
  for (int i = 0; i < n; ++i) mean += a[static_cast<size_t>(i)] - b[static_cast<size_t>(i)];
  mean /= n;
  double ss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = a[static_cast<size_t>(i)] - b[static_cast<size_t>(i)] - mean;
    ss += d * d;
  }

  TTest out;
  out.dof = n - 1;
  const double sd = std::sqrt(ss / (n - 1));
  // zero variance up to rounding of the inputs counts as degenerate
  if (sd <= 1e-9 * std::abs(mean) || sd == 0.0) {
    out.degenerate = true;
    out.t = 0.0;
    out.p = mean == 0.0 ? 1.0 : 0.0;
    return out;
  }
  out.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  out.p = student_t_two_sided_p(out.t, out.dof);
  return out;
}

}  // namespace mmgcn
