#include "zwocr/ctc.hpp"

#include <cmath>
#include <limits>

#include "zwocr/alphabet.hpp"
#include "zwocr/error.hpp"

namespace zwocr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

using Table = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void validate(const LogProbLattice& lattice, std::span<const int> label, int blank) {
  if (label.empty()) throw ValidationError("CTC label must not be empty");
  const auto classes = static_cast<int>(lattice.cols());
  if (blank < 0 || blank >= classes) throw ValidationError("blank index outside the lattice");
  for (int l : label) {
    if (l == blank) throw ValidationError("CTC label contains the blank index");
    if (l < 0 || l >= classes) throw ValidationError("CTC label index outside the lattice");
  }
  const int need = ctc_min_frames(label);
  if (lattice.rows() < need) {
    throw InfeasibleAlignmentError("label needs " + std::to_string(need) + " frames but lattice has " +
                                   std::to_string(lattice.rows()));
  }
}

// Blank-interleaved label: blank, l0, blank, l1, ..., blank.
std::vector<int> extend(std::span<const int> label, int blank) {
  std::vector<int> ext(2 * label.size() + 1, blank);
  for (std::size_t i = 0; i < label.size(); ++i) ext[2 * i + 1] = label[i];
  return ext;
}

bool can_skip(const std::vector<int>& ext, std::size_t s, int blank) {
  return s >= 2 && ext[s] != blank && ext[s] != ext[s - 2];
}

Table forward_table(const LogProbLattice& lp, const std::vector<int>& ext, int blank) {
  const auto T = lp.rows();
  const auto S = static_cast<Eigen::Index>(ext.size());
  Table alpha = Table::Constant(T, S, kNegInf);
  alpha(0, 0) = lp(0, ext[0]);
  if (S > 1) alpha(0, 1) = lp(0, ext[1]);
  for (Eigen::Index t = 1; t < T; ++t) {
    // A path can be at most 2 * (t + 1) positions into the extended label.
    const Eigen::Index hi = std::min<Eigen::Index>(S, 2 * (t + 1));
    for (Eigen::Index s = 0; s < hi; ++s) {
      double a = alpha(t - 1, s);
      if (s >= 1) a = log_sum_exp(a, alpha(t - 1, s - 1));
      if (can_skip(ext, static_cast<std::size_t>(s), blank)) a = log_sum_exp(a, alpha(t - 1, s - 2));
      if (a != kNegInf) alpha(t, s) = a + lp(t, ext[s]);
    }
  }
  return alpha;
}

double total_log_prob(const Table& alpha) {
  const auto T = alpha.rows(), S = alpha.cols();
  return S > 1 ? log_sum_exp(alpha(T - 1, S - 1), alpha(T - 1, S - 2)) : alpha(T - 1, S - 1);
}

}  // namespace

double log_sum_exp(double a, double b) noexcept {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

int ctc_min_frames(std::span<const int> label) {
  int n = static_cast<int>(label.size());
  for (std::size_t i = 1; i < label.size(); ++i) {
    if (label[i] == label[i - 1]) ++n;
  }
  return n;
}

double ctc_loss_value(const LogProbLattice& lattice, std::span<const int> label, int blank) {
  validate(lattice, label, blank);
  const auto ext = extend(label, blank);
  const double log_p = total_log_prob(forward_table(lattice, ext, blank));
  if (!std::isfinite(log_p)) throw InfeasibleAlignmentError("label has zero probability");
  return -log_p;
}

CtcResult ctc_loss(const LogProbLattice& lattice, std::span<const int> label, int blank) {
  validate(lattice, label, blank);
  const auto ext = extend(label, blank);
  const auto T = lattice.rows();
  const auto S = static_cast<Eigen::Index>(ext.size());

  const Table alpha = forward_table(lattice, ext, blank);
  const double log_p = total_log_prob(alpha);
  if (!std::isfinite(log_p)) throw InfeasibleAlignmentError("label has zero probability");

  Table beta = Table::Constant(T, S, kNegInf);
  beta(T - 1, S - 1) = lattice(T - 1, ext[S - 1]);
  if (S > 1) beta(T - 1, S - 2) = lattice(T - 1, ext[S - 2]);
  for (Eigen::Index t = T - 2; t >= 0; --t) {
    // Suffixes shorter than the remaining frames allow are unreachable.
    const Eigen::Index lo = std::max<Eigen::Index>(0, S - 2 * (T - t));
    for (Eigen::Index s = lo; s < S; ++s) {
      double b = beta(t + 1, s);
      if (s + 1 < S) b = log_sum_exp(b, beta(t + 1, s + 1));
      if (s + 2 < S && can_skip(ext, static_cast<std::size_t>(s + 2), blank)) {
        b = log_sum_exp(b, beta(t + 1, s + 2));
      }
      if (b != kNegInf) beta(t, s) = b + lattice(t, ext[s]);
    }
  }

  CtcResult out;
  out.loss = -log_p;
  out.grad = LogProbLattice::Zero(T, lattice.cols());
  LogProbLattice occupancy = LogProbLattice::Constant(T, lattice.cols(), kNegInf);
  for (Eigen::Index t = 0; t < T; ++t) {
    for (Eigen::Index s = 0; s < S; ++s) {
      const double g = alpha(t, s) + beta(t, s) - lattice(t, ext[s]);
      occupancy(t, ext[s]) = log_sum_exp(occupancy(t, ext[s]), g);
    }
    for (Eigen::Index k = 0; k < lattice.cols(); ++k) {
      if (occupancy(t, k) != kNegInf) out.grad(t, k) = -std::exp(occupancy(t, k) - log_p);
    }
  }
  return out;
}

std::vector<int> best_path(const LogProbLattice& lattice, int blank) {
  std::vector<int> out;
  int prev = -1;
  for (Eigen::Index t = 0; t < lattice.rows(); ++t) {
    Eigen::Index k = 0;
    lattice.row(t).maxCoeff(&k);
    const int cls = static_cast<int>(k);
    if (cls != prev && cls != blank) out.push_back(cls);
    prev = cls;
  }
  return out;
}

std::string greedy_decode(const LogProbLattice& lattice) {
  return Alphabet::decode(best_path(lattice, Alphabet::kBlankIndex));
}

}  // namespace zwocr
