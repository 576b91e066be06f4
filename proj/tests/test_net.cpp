#include <doctest.h>

#include <cmath>
#include <random>

#include "zwocr/alphabet.hpp"
#include "zwocr/ctc.hpp"
#include "zwocr/datagen.hpp"
#include "zwocr/error.hpp"
#include "zwocr/net.hpp"

using namespace zwocr;

namespace {

const ArchDims tiny{2, 2, 4, Alphabet::kClassCount};

LineImage noise_image(int width, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> px(0, 255);
  LineImage img(width, LineImage::kLineHeight, kWhite);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      img.set(x, y, Rgb{static_cast<std::uint8_t>(px(rng)), static_cast<std::uint8_t>(px(rng)),
                        static_cast<std::uint8_t>(px(rng))});
  return img;
}

// Random values everywhere, biases included, so no unit sits on a ReLU kink.
ModelParams random_params(const ArchDims& dims, std::uint64_t seed, double scale) {
  ModelParams p(dims);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& v : p.values()) v = u(rng);
  return p;
}

double batch_loss(const ModelParams& p, std::span<const BatchItem> batch) {
  ModelParams scratch(p.dims());
  return loss_and_grad(p, batch, scratch).total;
}

}  // namespace

TEST_CASE("frame arithmetic") {
  CHECK(frames_for_width(20) == 5);
  CHECK(frames_for_width(23) == 5);
  CHECK(frames_for_width(24) == 6);
  CHECK(frames_for_width(4) == 1);
  CHECK(frames_for_width(3) == 0);
  CHECK(ArchDims{}.feature_size() == 256);
}

TEST_CASE("parameter layout and init") {
  const auto layout = param_layout(ArchDims{});
  REQUIRE(layout.size() == ModelParams::kTensorCount);
  CHECK(layout[ModelParams::kConv1W].rows == 16);
  CHECK(layout[ModelParams::kConv1W].cols == 27);
  CHECK(layout[ModelParams::kConv2W].cols == 16 * 9);
  CHECK(layout[ModelParams::kFwdWx].rows == 256);
  CHECK(layout[ModelParams::kFwdWx].cols == 3 * 128);
  CHECK(layout[ModelParams::kProjW].rows == 256);
  CHECK(layout[ModelParams::kProjW].cols == 33);
  std::size_t offset = 0;
  for (const auto& s : layout) {
    CHECK(s.offset == offset);
    offset += s.size();
  }

  const auto a = init_params(1), b = init_params(1), c = init_params(2);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  CHECK(a.values().size() == offset);
  for (const auto& s : a.layout()) {
    for (std::size_t k = s.offset; k < s.offset + s.size(); ++k) {
      if (s.bias) {
        REQUIRE(a.values()[k] == 0.0);
      } else {
        REQUIRE(std::abs(a.values()[k]) < s.init_bound);
      }
    }
  }
  // Glorot bound for conv1: fan_in 27, fan_out 16*9.
  CHECK(layout[ModelParams::kConv1W].init_bound == doctest::Approx(std::sqrt(6.0 / (27 + 144))));
}

TEST_CASE("forward shape and normalisation") {
  const auto params = init_params(3);
  const auto s = render_line("a cat", FontVariant{FontStyle::Regular});
  const auto lat = forward(params, s.image);
  CHECK(lat.rows() == frames_for_width(84));
  CHECK(lat.cols() == 33);
  for (Eigen::Index t = 0; t < lat.rows(); ++t) CHECK(lat.row(t).array().exp().sum() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(forward(params, s.image) == lat);

  const auto a = render_line("a", FontVariant{FontStyle::Bold});
  CHECK(forward(params, a.image).rows() == 5);

  const auto pf = params.cast<float>();
  const auto latf = forward(pf, s.image);
  CHECK((latf - lat).cwiseAbs().maxCoeff() < 1e-4);

  CHECK_THROWS_AS(forward(params, LineImage(3, 32, kWhite)), SequenceTooShortError);
  CHECK_THROWS_AS(forward(params, LineImage(20, 16, kWhite)), ValidationError);
}

TEST_CASE("batched forward equals per-image forward") {
  const auto params = init_params(4);
  std::mt19937_64 rng(4);
  std::vector<LineImage> imgs;
  for (int w : {20, 52, 36, 84, 23}) imgs.push_back(noise_image(w, rng));
  std::vector<const LineImage*> ptrs;
  for (const auto& i : imgs) ptrs.push_back(&i);
  const auto batch = forward_batch<double>(params, ptrs);
  REQUIRE(batch.size() == imgs.size());
  for (std::size_t k = 0; k < imgs.size(); ++k) {
    const auto single = forward(params, imgs[k]);
    REQUIRE(batch[k].rows() == single.rows());
    CHECK((batch[k] - single).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("end-to-end gradient matches central differences") {
  const auto params = random_params(tiny, 5, 0.5);
  std::mt19937_64 rng(6);
  // 5, 7 and 9 frames.
  std::vector<LineImage> imgs{noise_image(20, rng), noise_image(28, rng), noise_image(36, rng)};
  const auto l0 = Alphabet::encode("ab"), l1 = Alphabet::encode("zz."),
             l2 = Alphabet::encode(std::string("a") + std::string(kZeroWidthUtf8) + "c");
  const std::vector<BatchItem> batch{{&imgs[0], l0}, {&imgs[1], l1}, {&imgs[2], l2}};

  ModelParams grad(tiny);
  const auto res = loss_and_grad(params, batch, grad);
  CHECK(res.skipped == 0);
  CHECK(res.total == doctest::Approx(res.per_sample[0] + res.per_sample[1] + res.per_sample[2]));

  ModelParams probe = params;
  // At 1e-4 an occasional ReLU or max-pool switch lands inside the
  // stencil and one conv weight is off by ~3e-3; 1e-5 avoids the kinks.
  const double h = 1e-5;
  double worst = 0;
  std::string worst_name;
  for (const auto& slot : params.layout()) {
    for (std::size_t k = slot.offset; k < slot.offset + slot.size(); ++k) {
      const double keep = probe.values()[k];
      probe.values()[k] = keep + h;
      const double up = batch_loss(probe, batch);
      probe.values()[k] = keep - h;
      const double down = batch_loss(probe, batch);
      probe.values()[k] = keep;
      const double fd = (up - down) / (2 * h);
      const double g = grad.values()[k];
      const double rel = std::abs(fd - g) / std::max(1e-7, std::abs(fd) + std::abs(g));
      if (rel > worst) {
        worst = rel;
        worst_name = slot.name;
      }
    }
  }
  INFO("worst tensor " << worst_name);
  CHECK(worst <= 1e-4);
}

TEST_CASE("gradient accumulates and sums over the batch") {
  const auto params = random_params(tiny, 7, 0.3);
  std::mt19937_64 rng(8);
  const auto i0 = noise_image(24, rng), i1 = noise_image(40, rng);
  const auto l0 = Alphabet::encode("ok"), l1 = Alphabet::encode("dog");
  const std::vector<BatchItem> both{{&i0, l0}, {&i1, l1}}, first{{&i0, l0}}, second{{&i1, l1}};
  ModelParams g_both(tiny), g_sep(tiny);
  loss_and_grad(params, both, g_both);
  loss_and_grad(params, first, g_sep);
  loss_and_grad(params, second, g_sep);
  for (std::size_t k = 0; k < g_both.values().size(); ++k)
    REQUIRE(g_both.values()[k] == doctest::Approx(g_sep.values()[k]).epsilon(1e-9));
}

TEST_CASE("infeasible samples are skipped") {
  const auto params = random_params(tiny, 9, 0.3);
  std::mt19937_64 rng(10);
  const auto img = noise_image(20, rng);  // 5 frames
  const auto ok = Alphabet::encode("abc"), bad = Alphabet::encode("aaaaa");
  const std::vector<BatchItem> batch{{&img, ok}, {&img, bad}};
  ModelParams g(tiny);
  const auto res = loss_and_grad(params, batch, g);
  CHECK(res.skipped == 1);
  CHECK(std::isnan(res.per_sample[1]));
  CHECK(res.total == res.per_sample[0]);
}

TEST_CASE("a small SGD step lowers the loss") {
  const char* lines[] = {"what is your substance", "whereof are you made", "that millions",
                         "of strange shadows", "on you tend", "since every one",
                         "hath every one", "one shade", "and you", "but one"};
  for (int k = 0; k < 10; ++k) {
    const auto params = init_params(100 + k);
    const auto s = render_line(lines[k], FontVariant{kAllFontStyles[k % 4]});
    const auto label = Alphabet::encode(s.transcript);
    const std::vector<BatchItem> batch{{&s.image, label}};
    ModelParams grad(params.dims());
    const double before = loss_and_grad(params, batch, grad).total;
    ModelParams next = params;
    for (std::size_t i = 0; i < next.values().size(); ++i) next.values()[i] -= 1e-5 * grad.values()[i];
    CHECK(batch_loss(next, batch) < before);
    CHECK(global_norm(grad) > 0.0);
  }
}
