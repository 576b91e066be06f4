#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace zwocr {

// T x classes matrix of per-frame log-probabilities.
using LogProbLattice = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct CtcResult {
  double loss = 0.0;
  LogProbLattice grad;  // d loss / d lattice
};

double log_sum_exp(double a, double b) noexcept;

// Minimal frame count for a label: one frame per label plus one blank between
// each pair of equal neighbours.
int ctc_min_frames(std::span<const int> label);

// Negative log-likelihood of `label` under all CTC alignments, by
// forward-backward in log space. Throws InfeasibleAlignmentError when the
// lattice has too few frames, ValidationError for malformed labels.
CtcResult ctc_loss(const LogProbLattice& lattice, std::span<const int> label, int blank);

// Loss only (no backward pass).
double ctc_loss_value(const LogProbLattice& lattice, std::span<const int> label, int blank);

// Per-frame argmax, collapse repeats, drop blanks.
std::vector<int> best_path(const LogProbLattice& lattice, int blank);

// best_path mapped through the alphabet; the payload class decodes to U+200D.
std::string greedy_decode(const LogProbLattice& lattice);

}  // namespace zwocr
