#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "zwocr/alphabet.hpp"
#include "zwocr/ctc.hpp"
#include "zwocr/error.hpp"

using namespace zwocr;

namespace {

double lse(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

std::vector<int> collapse(const std::vector<int>& path, int blank) {
  std::vector<int> out;
  int prev = -1;
  for (int k : path) {
    if (k != prev && k != blank) out.push_back(k);
    prev = k;
  }
  return out;
}

// Enumerates every frame path; returns -log of the total probability of the
// paths that collapse onto `label`.
double brute_force_loss(const LogProbLattice& lat, const std::vector<int>& label, int blank) {
  const int T = static_cast<int>(lat.rows()), C = static_cast<int>(lat.cols());
  std::vector<int> path(T, 0);
  double total = -std::numeric_limits<double>::infinity();
  while (true) {
    if (collapse(path, blank) == label) {
      double lp = 0;
      for (int t = 0; t < T; ++t) lp += lat(t, path[t]);
      total = lse(total, lp);
    }
    int t = 0;
    while (t < T && ++path[t] == C) path[t++] = 0;
    if (t == T) break;
  }
  return -total;
}

LogProbLattice random_log_softmax(std::mt19937_64& rng, int T, int C, double scale = 3.0,
                                  double offset = 0.0) {
  std::normal_distribution<double> n(0.0, scale);
  LogProbLattice lat(T, C);
  for (int t = 0; t < T; ++t) {
    double m = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < C; ++k) m = lse(m, lat(t, k) = n(rng));
    for (int k = 0; k < C; ++k) lat(t, k) += offset - m;
  }
  return lat;
}

std::vector<int> random_label(std::mt19937_64& rng, int T, int C, int blank) {
  std::uniform_int_distribution<int> len(1, T), cls(0, C - 2);
  while (true) {
    std::vector<int> label;
    for (int k = len(rng); k > 0; --k) {
      int c = cls(rng);
      if (c >= blank) ++c;
      label.push_back(c);
    }
    if (ctc_min_frames(label) <= T) return label;
  }
}

}  // namespace

TEST_CASE("ctc loss matches path enumeration") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> Td(1, 8), Cd(2, 4);
  for (int inst = 0; inst < 100; ++inst) {
    const int T = Td(rng), C = Cd(rng);
    const int blank = std::uniform_int_distribution<int>(0, C - 1)(rng);
    const auto lat = random_log_softmax(rng, T, C);
    const auto label = random_label(rng, T, C, blank);
    const double want = brute_force_loss(lat, label, blank);
    const auto got = ctc_loss(lat, label, blank);
    CHECK(std::abs(got.loss - want) <= 1e-10);
    CHECK(ctc_loss_value(lat, label, blank) == doctest::Approx(got.loss).epsilon(1e-14));
    CHECK(got.loss >= 0.0);
  }
}

TEST_CASE("ctc gradient matches central differences") {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> Td(2, 8), Cd(2, 4);
  // Five-point central stencil: truncation O(h^4), so h can stay large
  // enough to keep cancellation error far below the tolerance.
  const double h = 1e-3;
  for (int inst = 0; inst < 30; ++inst) {
    const int T = Td(rng), C = Cd(rng), blank = C - 1;
    LogProbLattice lat = random_log_softmax(rng, T, C);
    const auto label = random_label(rng, T, C, blank);
    const auto res = ctc_loss(lat, label, blank);
    double worst = 0;
    for (int t = 0; t < T; ++t) {
      for (int k = 0; k < C; ++k) {
        const double keep = lat(t, k);
        auto at = [&](double d) {
          lat(t, k) = keep + d;
          return ctc_loss_value(lat, label, blank);
        };
        const double fd = (at(-2 * h) - 8 * at(-h) + 8 * at(h) - at(2 * h)) / (12 * h);
        lat(t, k) = keep;
        const double g = res.grad(t, k);
        worst = std::max(worst, std::abs(fd - g) / std::max(1e-6, std::abs(fd) + std::abs(g)));
      }
    }
    CHECK(worst <= 1e-6);
  }
}

TEST_CASE("small closed forms") {
  std::mt19937_64 rng(15);
  const auto one = random_log_softmax(rng, 1, 4);
  const std::vector<int> k{2};
  CHECK(ctc_loss(one, k, 3).loss == doctest::Approx(-one(0, 2)).epsilon(1e-14));

  const auto two = random_log_softmax(rng, 2, 4);
  const int a = 1, blank = 3;
  const std::vector<int> la{a};
  auto p = [&](int t, int c) { return std::exp(two(t, c)); };
  const double want = -std::log(p(0, a) * p(1, a) + p(0, a) * p(1, blank) + p(0, blank) * p(1, a));
  CHECK(ctc_loss(two, la, blank).loss == doctest::Approx(want).epsilon(1e-13));
}

TEST_CASE("feasibility is monotone in T") {
  std::mt19937_64 rng(16);
  for (int inst = 0; inst < 50; ++inst) {
    const int T = std::uniform_int_distribution<int>(1, 7)(rng);
    const auto label = random_label(rng, T, 4, 3);
    const auto lat = random_log_softmax(rng, T, 4);
    const auto longer = random_log_softmax(rng, T + 1, 4);
    CHECK(std::isfinite(ctc_loss(lat, label, 3).loss));
    CHECK(std::isfinite(ctc_loss(longer, label, 3).loss));
  }
}

TEST_CASE("decoding a trivial lattice is idempotent") {
  const std::string text = "a" + std::string(kZeroWidthUtf8) + "  bookkeeper's";
  const auto labels = Alphabet::encode(text);
  std::vector<int> frames;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (k > 0 && labels[k] == labels[k - 1]) frames.push_back(Alphabet::kBlankIndex);
    frames.push_back(labels[k]);
  }
  LogProbLattice lat = LogProbLattice::Constant(static_cast<Eigen::Index>(frames.size()), Alphabet::kClassCount, -9.0);
  for (std::size_t t = 0; t < frames.size(); ++t) lat(static_cast<Eigen::Index>(t), frames[t]) = -0.1;
  CHECK(greedy_decode(lat) == text);
}

TEST_CASE("gradient rows sum to minus one per frame") {
  // Occupancies of one frame sum to the path probability.
  std::mt19937_64 rng(13);
  const auto lat = random_log_softmax(rng, 7, 4);
  const std::vector<int> label{0, 1, 1};
  const auto res = ctc_loss(lat, label, 3);
  for (int t = 0; t < 7; ++t) CHECK(res.grad.row(t).sum() == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("tiny log-probabilities stay finite") {
  std::mt19937_64 rng(14);
  for (int inst = 0; inst < 20; ++inst) {
    const int T = 6, C = 3;
    // Unnormalised rows near -300: naive exp() products would underflow.
    const auto lat = random_log_softmax(rng, T, C, 1.0, -300.0);
    const auto label = random_label(rng, T, C, 2);
    const auto res = ctc_loss(lat, label, 2);
    REQUIRE(std::isfinite(res.loss));
    CHECK(std::abs(res.loss - brute_force_loss(lat, label, 2)) <= 1e-10 * res.loss);
    CHECK(res.grad.allFinite());
  }
}

TEST_CASE("feasibility") {
  const std::vector<int> aa{0, 0}, ab{0, 1}, empty{};
  CHECK(ctc_min_frames(aa) == 3);
  CHECK(ctc_min_frames(ab) == 2);
  LogProbLattice lat = LogProbLattice::Constant(2, 3, std::log(1.0 / 3));
  CHECK_THROWS_AS(ctc_loss(lat, aa, 2), InfeasibleAlignmentError);
  CHECK_NOTHROW(ctc_loss(lat, ab, 2));
  // Only path for "ab" in two frames is (a, b).
  CHECK(ctc_loss(lat, ab, 2).loss == doctest::Approx(2 * std::log(3.0)).epsilon(1e-14));
  const std::vector<int> bad{2};
  CHECK_THROWS_AS(ctc_loss(lat, bad, 2), ValidationError);
  CHECK_THROWS_AS(ctc_loss(lat, empty, 2), ValidationError);
}

TEST_CASE("greedy decoding") {
  const int B = Alphabet::kBlankIndex, a = 0, b = 1, zw = Alphabet::kZeroWidthIndex;
  auto lattice_for = [](const std::vector<int>& argmax) {
    LogProbLattice lat = LogProbLattice::Constant(static_cast<Eigen::Index>(argmax.size()),
                                                  Alphabet::kClassCount, -10.0);
    for (std::size_t t = 0; t < argmax.size(); ++t) lat(static_cast<Eigen::Index>(t), argmax[t]) = -0.01;
    return lat;
  };
  CHECK(greedy_decode(lattice_for({B, a, a, B, b})) == "ab");
  CHECK(greedy_decode(lattice_for({a, B, a})) == "aa");
  CHECK(greedy_decode(lattice_for({a, zw, B})) == "a" + std::string(kZeroWidthUtf8));
  CHECK(greedy_decode(lattice_for({B, B})).empty());
  CHECK(best_path(lattice_for({b, b, zw, zw}), B) == std::vector<int>{b, zw});
}
