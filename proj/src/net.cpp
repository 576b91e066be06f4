#include "zwocr/net.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "zwocr/error.hpp"

namespace zwocr {

std::vector<TensorSlot> param_layout(const ArchDims& d) {
  constexpr int k2 = ArchDims::kKernel * ArchDims::kKernel;
  const int cin = ArchDims::kInputChannels;
  const int f = d.feature_size();
  const int h = d.hidden;
  auto glorot = [](double fan_in, double fan_out) { return std::sqrt(6.0 / (fan_in + fan_out)); };

  std::vector<TensorSlot> slots;
  std::size_t offset = 0;
  auto add = [&](std::string name, Eigen::Index rows, Eigen::Index cols, bool bias, double bound) {
    slots.push_back({std::move(name), rows, cols, offset, bias, bound});
    offset += static_cast<std::size_t>(rows * cols);
  };
  add("conv1.weight", d.conv1, cin * k2, false, glorot(cin * k2, d.conv1 * k2));
  add("conv1.bias", 1, d.conv1, true, 0);
  add("conv2.weight", d.conv2, d.conv1 * k2, false, glorot(d.conv1 * k2, d.conv2 * k2));
  add("conv2.bias", 1, d.conv2, true, 0);
  for (const char* dir : {"gru_fwd", "gru_bwd"}) {
    const std::string p = dir;
    add(p + ".wx", f, 3 * h, false, glorot(f, h));
    add(p + ".wh", h, 3 * h, false, glorot(h, h));
    add(p + ".bx", 1, 3 * h, true, 0);
    add(p + ".bh", 1, 3 * h, true, 0);
  }
  add("proj.weight", 2 * h, d.classes, false, glorot(2 * h, d.classes));
  add("proj.bias", 1, d.classes, true, 0);
  return slots;
}

template <typename S>
Params<S>::Params(const ArchDims& dims) : dims_(dims), layout_(param_layout(dims)) {
  const auto& last = layout_.back();
  values_.assign(last.offset + last.size(), S(0));
}

template <typename S>
MatMap<S> Params<S>::tensor(int which) {
  const auto& t = layout_[which];
  return MatMap<S>(values_.data() + t.offset, t.rows, t.cols);
}

template <typename S>
ConstMatMap<S> Params<S>::tensor(int which) const {
  const auto& t = layout_[which];
  return ConstMatMap<S>(values_.data() + t.offset, t.rows, t.cols);
}

template <typename S>
void Params<S>::set_zero() {
  std::fill(values_.begin(), values_.end(), S(0));
}

ModelParams init_params(std::uint64_t seed, const ArchDims& dims) {
  ModelParams p(dims);
  std::mt19937_64 rng(seed);
  for (const auto& slot : p.layout()) {
    if (slot.bias) continue;
    std::uniform_real_distribution<double> dist(-slot.init_bound, slot.init_bound);
    for (std::size_t i = 0; i < slot.size(); ++i) p.values()[slot.offset + i] = dist(rng);
  }
  return p;
}

template <typename S>
Mat<S> image_to_input(const LineImage& image) {
  const int h = image.height(), w = image.width();
  Mat<S> x(3, static_cast<Eigen::Index>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int xx = 0; xx < w; ++xx) {
      for (int c = 0; c < 3; ++c) {
        x(c, static_cast<Eigen::Index>(y) * w + xx) =
            static_cast<S>(255 - image.channel(xx, y, c)) / S(255);
      }
    }
  }
  return x;
}

namespace {

template <typename S>
S sigmoid(S v) {
  return S(1) / (S(1) + std::exp(-v));
}

// 3x3 "same" convolution patches: row (ci, ky, kx), column y * w + x.
template <typename S>
void im2col(const Mat<S>& in, int h, int w, Mat<S>& cols) {
  const auto cin = in.rows();
  cols.setZero(cin * 9, static_cast<Eigen::Index>(h) * w);
  for (Eigen::Index c = 0; c < cin; ++c) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        auto row = cols.row(c * 9 + ky * 3 + kx);
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          const int x_lo = std::max(0, 1 - kx), x_hi = std::min(w, w + 1 - kx);
          const S* src = in.data() + c * in.cols() + static_cast<Eigen::Index>(sy) * w;
          S* dst = row.data() + static_cast<Eigen::Index>(y) * w;
          for (int x = x_lo; x < x_hi; ++x) dst[x] = src[x + kx - 1];
        }
      }
    }
  }
}

template <typename S>
void col2im_add(const Mat<S>& cols, int h, int w, Mat<S>& out) {
  const auto cin = out.rows();
  for (Eigen::Index c = 0; c < cin; ++c) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const S* row = cols.data() + (c * 9 + ky * 3 + kx) * cols.cols();
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          const int x_lo = std::max(0, 1 - kx), x_hi = std::min(w, w + 1 - kx);
          S* dst = out.data() + c * out.cols() + static_cast<Eigen::Index>(sy) * w;
          const S* src = row + static_cast<Eigen::Index>(y) * w;
          for (int x = x_lo; x < x_hi; ++x) dst[x + kx - 1] += src[x];
        }
      }
    }
  }
}

// ReLU then 2x2 max pooling. `argmax` records the source column per output.
template <typename S>
void relu_pool(const Mat<S>& act, int h, int w, Mat<S>& pooled, std::vector<int>& argmax) {
  const int ph = h / 2, pw = w / 2;
  pooled.resize(act.rows(), static_cast<Eigen::Index>(ph) * pw);
  argmax.resize(static_cast<std::size_t>(pooled.size()));
  for (Eigen::Index c = 0; c < act.rows(); ++c) {
    const S* a = act.data() + c * act.cols();
    for (int py = 0; py < ph; ++py) {
      for (int px = 0; px < pw; ++px) {
        int best = (2 * py) * w + 2 * px;
        for (int idx : {(2 * py) * w + 2 * px + 1, (2 * py + 1) * w + 2 * px,
                        (2 * py + 1) * w + 2 * px + 1}) {
          if (a[idx] > a[best]) best = idx;
        }
        const Eigen::Index o = c * pooled.cols() + static_cast<Eigen::Index>(py) * pw + px;
        pooled.data()[o] = std::max(a[best], S(0));
        argmax[static_cast<std::size_t>(o)] = best;
      }
    }
  }
}

// Routes pooled gradients back to their argmax sources, masked by ReLU.
template <typename S>
void unpool_relu(const Mat<S>& dpooled, const Mat<S>& pooled, const std::vector<int>& argmax,
                 Eigen::Index src_cols, Mat<S>& dact) {
  dact.setZero(dpooled.rows(), src_cols);
  for (Eigen::Index c = 0; c < dpooled.rows(); ++c) {
    for (Eigen::Index i = 0; i < dpooled.cols(); ++i) {
      const Eigen::Index o = c * dpooled.cols() + i;
      if (pooled.data()[o] > S(0)) {
        dact(c, argmax[static_cast<std::size_t>(o)]) += dpooled.data()[o];
      }
    }
  }
}

template <typename S>
struct ConvCache {
  int width = 0;
  Mat<S> input;  // 3 x (32 * width)
  Mat<S> pool1;  // conv1 x (16 * width/2)
  std::vector<int> arg1;
  Mat<S> pool2;  // conv2 x (8 * T)
  std::vector<int> arg2;
  Mat<S> features;  // T x feature_size
};

template <typename S>
void conv_forward(const Params<S>& p, const LineImage& image, ConvCache<S>& cc) {
  using P = Params<S>;
  if (image.height() != LineImage::kLineHeight) {
    throw ValidationError("line images must be " + std::to_string(LineImage::kLineHeight) +
                          " pixels tall, got " + std::to_string(image.height()));
  }
  if (image.width() < 4) {
    throw SequenceTooShortError("image width " + std::to_string(image.width()) +
                                " yields no frames (minimum 4)");
  }
  const int h0 = LineImage::kLineHeight, w0 = image.width();
  const int h1 = h0 / 2, w1 = w0 / 2;
  const int h2 = h1 / 2, w2 = w1 / 2;
  cc.width = w0;
  cc.input = image_to_input<S>(image);

  Mat<S> cols;
  im2col(cc.input, h0, w0, cols);
  Mat<S> act = p.tensor(P::kConv1W) * cols;
  act.colwise() += p.tensor(P::kConv1B).transpose().col(0);
  relu_pool(act, h0, w0, cc.pool1, cc.arg1);

  im2col(cc.pool1, h1, w1, cols);
  act.noalias() = p.tensor(P::kConv2W) * cols;
  act.colwise() += p.tensor(P::kConv2B).transpose().col(0);
  relu_pool(act, h1, w1, cc.pool2, cc.arg2);

  const int c2 = p.dims().conv2;
  cc.features.resize(w2, static_cast<Eigen::Index>(c2) * h2);
  for (int c = 0; c < c2; ++c) {
    for (int y = 0; y < h2; ++y) {
      for (int t = 0; t < w2; ++t) {
        cc.features(t, c * h2 + y) = cc.pool2(c, static_cast<Eigen::Index>(y) * w2 + t);
      }
    }
  }
}

template <typename S>
void conv_backward(const Params<S>& p, const ConvCache<S>& cc, const Mat<S>& dfeat,
                   Params<S>& g) {
  using P = Params<S>;
  const int h0 = LineImage::kLineHeight, w0 = cc.width;
  const int h1 = h0 / 2, w1 = w0 / 2;
  const int h2 = h1 / 2, w2 = w1 / 2;
  const int c2 = p.dims().conv2;

  Mat<S> dpool2(c2, static_cast<Eigen::Index>(h2) * w2);
  for (int c = 0; c < c2; ++c) {
    for (int y = 0; y < h2; ++y) {
      for (int t = 0; t < w2; ++t) {
        dpool2(c, static_cast<Eigen::Index>(y) * w2 + t) = dfeat(t, c * h2 + y);
      }
    }
  }
  Mat<S> dact;
  unpool_relu(dpool2, cc.pool2, cc.arg2, static_cast<Eigen::Index>(h1) * w1, dact);

  Mat<S> cols;
  im2col(cc.pool1, h1, w1, cols);
  g.tensor(P::kConv2W).noalias() += dact * cols.transpose();
  g.tensor(P::kConv2B).transpose().col(0) += dact.rowwise().sum();
  const Mat<S> dcols = p.tensor(P::kConv2W).transpose() * dact;
  Mat<S> dpool1 = Mat<S>::Zero(cc.pool1.rows(), cc.pool1.cols());
  col2im_add(dcols, h1, w1, dpool1);

  unpool_relu(dpool1, cc.pool1, cc.arg1, static_cast<Eigen::Index>(h0) * w0, dact);
  im2col(cc.input, h0, w0, cols);
  g.tensor(P::kConv1W).noalias() += dact * cols.transpose();
  g.tensor(P::kConv1B).transpose().col(0) += dact.rowwise().sum();
}

// Per-sample state of one recurrent direction.
template <typename S>
struct GruCache {
  Mat<S> xg;  // T x 3H input projections (+ bx)
  Mat<S> h;   // T x H outputs
  Mat<S> r, z, n, hn;
};

// Runs one direction over a batch, stepping all active sequences together.
// `order` lists batch indices by descending length.
template <typename S>
void gru_forward(const Params<S>& p, bool reverse, std::span<const ConvCache<S>> conv,
                 const std::vector<std::size_t>& order, std::vector<GruCache<S>>& out) {
  using P = Params<S>;
  const int wx = reverse ? P::kBwdWx : P::kFwdWx;
  const int wh = reverse ? P::kBwdWh : P::kFwdWh;
  const int bx = reverse ? P::kBwdBx : P::kFwdBx;
  const int bh = reverse ? P::kBwdBh : P::kFwdBh;
  const Eigen::Index H = p.dims().hidden;

  out.resize(conv.size());
  for (std::size_t b = 0; b < conv.size(); ++b) {
    const auto T = conv[b].features.rows();
    auto& gc = out[b];
    gc.xg.noalias() = conv[b].features * p.tensor(wx);
    gc.xg.rowwise() += p.tensor(bx).row(0);
    gc.h.resize(T, H);
    gc.r.resize(T, H);
    gc.z.resize(T, H);
    gc.n.resize(T, H);
    gc.hn.resize(T, H);
  }

  const Eigen::Index max_t = conv[order.front()].features.rows();
  Mat<S> hprev(static_cast<Eigen::Index>(order.size()), H);
  Mat<S> gates;
  for (Eigen::Index s = 0; s < max_t; ++s) {
    Eigen::Index active = 0;
    while (active < static_cast<Eigen::Index>(order.size()) &&
           conv[order[active]].features.rows() > s) {
      ++active;
    }
    for (Eigen::Index i = 0; i < active; ++i) {
      const auto& gc = out[order[i]];
      const auto T = gc.h.rows();
      const Eigen::Index t = reverse ? T - 1 - s : s;
      if (s == 0) {
        hprev.row(i).setZero();
      } else {
        hprev.row(i) = gc.h.row(reverse ? t + 1 : t - 1);
      }
    }
    gates.noalias() = hprev.topRows(active) * p.tensor(wh);
    gates.rowwise() += p.tensor(bh).row(0);
    for (Eigen::Index i = 0; i < active; ++i) {
      auto& gc = out[order[i]];
      const Eigen::Index t = reverse ? gc.h.rows() - 1 - s : s;
      for (Eigen::Index j = 0; j < H; ++j) {
        const S r = sigmoid(gc.xg(t, j) + gates(i, j));
        const S z = sigmoid(gc.xg(t, H + j) + gates(i, H + j));
        const S hn = gates(i, 2 * H + j);
        const S n = std::tanh(gc.xg(t, 2 * H + j) + r * hn);
        gc.r(t, j) = r;
        gc.z(t, j) = z;
        gc.hn(t, j) = hn;
        gc.n(t, j) = n;
        gc.h(t, j) = (S(1) - z) * n + z * hprev(i, j);
      }
    }
  }
}

template <typename S>
void gru_backward(const Params<S>& p, bool reverse, std::span<const ConvCache<S>> conv,
                  const std::vector<std::size_t>& order, const std::vector<GruCache<S>>& cache,
                  const std::vector<Mat<S>>& dh_out, std::vector<Mat<S>>& dfeat, Params<S>& g) {
  using P = Params<S>;
  const int wx = reverse ? P::kBwdWx : P::kFwdWx;
  const int wh = reverse ? P::kBwdWh : P::kFwdWh;
  const int bx = reverse ? P::kBwdBx : P::kFwdBx;
  const int bh = reverse ? P::kBwdBh : P::kFwdBh;
  const Eigen::Index H = p.dims().hidden;
  const auto B = static_cast<Eigen::Index>(order.size());

  std::vector<Mat<S>> dxg(cache.size());
  for (std::size_t b = 0; b < cache.size(); ++b) dxg[b].resize(cache[b].h.rows(), 3 * H);

  const Eigen::Index max_t = cache[order.front()].h.rows();
  Mat<S> carry = Mat<S>::Zero(B, H);
  Mat<S> hprev(B, H), dgates(B, 3 * H), dprev;
  for (Eigen::Index s = max_t - 1; s >= 0; --s) {
    Eigen::Index active = 0;
    while (active < B && cache[order[active]].h.rows() > s) ++active;
    for (Eigen::Index i = 0; i < active; ++i) {
      const auto& gc = cache[order[i]];
      const auto T = gc.h.rows();
      const Eigen::Index t = reverse ? T - 1 - s : s;
      if (s == 0) {
        hprev.row(i).setZero();
      } else {
        hprev.row(i) = gc.h.row(reverse ? t + 1 : t - 1);
      }
      auto& dx = dxg[order[i]];
      const auto& dho = dh_out[order[i]];
      for (Eigen::Index j = 0; j < H; ++j) {
        const S dh = dho(t, j) + carry(i, j);
        const S r = gc.r(t, j), z = gc.z(t, j), n = gc.n(t, j), hn = gc.hn(t, j);
        const S dn = dh * (S(1) - z);
        const S dz = dh * (hprev(i, j) - n);
        const S dan = dn * (S(1) - n * n);
        const S dr = dan * hn;
        const S dar = dr * r * (S(1) - r);
        const S daz = dz * z * (S(1) - z);
        dx(t, j) = dar;
        dx(t, H + j) = daz;
        dx(t, 2 * H + j) = dan;
        dgates(i, j) = dar;
        dgates(i, H + j) = daz;
        dgates(i, 2 * H + j) = dan * r;
        carry(i, j) = dh * z;
      }
    }
    const auto dg = dgates.topRows(active);
    g.tensor(wh).noalias() += hprev.topRows(active).transpose() * dg;
    g.tensor(bh).row(0) += dg.colwise().sum();
    dprev.noalias() = dg * p.tensor(wh).transpose();
    carry.topRows(active) += dprev;
  }

  for (std::size_t b = 0; b < cache.size(); ++b) {
    g.tensor(wx).noalias() += conv[b].features.transpose() * dxg[b];
    g.tensor(bx).row(0) += dxg[b].colwise().sum();
    dfeat[b].noalias() += dxg[b] * p.tensor(wx).transpose();
  }
}

std::vector<std::size_t> by_length_desc(const std::vector<Eigen::Index>& lengths) {
  std::vector<std::size_t> order(lengths.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return lengths[a] > lengths[b]; });
  return order;
}

template <typename S>
struct BatchForward {
  std::vector<ConvCache<S>> conv;
  std::vector<GruCache<S>> fwd, bwd;
  std::vector<Mat<S>> hcat;
  std::vector<LogProbLattice> lattices;
  std::vector<std::size_t> order;
};

template <typename S>
void run_forward(const Params<S>& p, std::span<const LineImage* const> images, BatchForward<S>& bf) {
  using P = Params<S>;
  const Eigen::Index H = p.dims().hidden;
  bf.conv.resize(images.size());
  std::vector<Eigen::Index> lengths(images.size());
  for (std::size_t b = 0; b < images.size(); ++b) {
    conv_forward(p, *images[b], bf.conv[b]);
    lengths[b] = bf.conv[b].features.rows();
  }
  bf.order = by_length_desc(lengths);
  gru_forward<S>(p, false, bf.conv, bf.order, bf.fwd);
  gru_forward<S>(p, true, bf.conv, bf.order, bf.bwd);

  bf.hcat.resize(images.size());
  bf.lattices.resize(images.size());
  for (std::size_t b = 0; b < images.size(); ++b) {
    const auto T = lengths[b];
    auto& hc = bf.hcat[b];
    hc.resize(T, 2 * H);
    hc.leftCols(H) = bf.fwd[b].h;
    hc.rightCols(H) = bf.bwd[b].h;
    Mat<S> logits = hc * p.tensor(P::kProjW);
    logits.rowwise() += p.tensor(P::kProjB).row(0);
    LogProbLattice lp = logits.template cast<double>();
    for (Eigen::Index t = 0; t < T; ++t) {
      const double m = lp.row(t).maxCoeff();
      const double lse = m + std::log((lp.row(t).array() - m).exp().sum());
      lp.row(t).array() -= lse;
    }
    bf.lattices[b] = std::move(lp);
  }
}

}  // namespace

template <typename S>
std::vector<LogProbLattice> forward_batch(const Params<S>& params,
                                          std::span<const LineImage* const> images) {
  if (images.empty()) return {};
  BatchForward<S> bf;
  run_forward(params, images, bf);
  return std::move(bf.lattices);
}

template <typename S>
LogProbLattice forward(const Params<S>& params, const LineImage& image) {
  const LineImage* one[] = {&image};
  return std::move(forward_batch<S>(params, one).front());
}

template <typename S>
BatchLoss loss_and_grad(const Params<S>& p, std::span<const BatchItem> batch, Params<S>& g) {
  using P = Params<S>;
  BatchLoss result;
  result.per_sample.assign(batch.size(), std::numeric_limits<double>::quiet_NaN());
  if (batch.empty()) return result;

  std::vector<const LineImage*> images(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) images[b] = batch[b].image;
  BatchForward<S> bf;
  run_forward<S>(p, images, bf);

  const Eigen::Index H = p.dims().hidden;
  std::vector<Mat<S>> dh_fwd(batch.size()), dh_bwd(batch.size()), dfeat(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& lp = bf.lattices[b];
    const auto T = lp.rows();
    dh_fwd[b].setZero(T, H);
    dh_bwd[b].setZero(T, H);
    dfeat[b].setZero(T, p.dims().feature_size());
    CtcResult ctc;
    try {
      ctc = ctc_loss(lp, batch[b].label, Alphabet::kBlankIndex);
    } catch (const InfeasibleAlignmentError&) {
      ++result.skipped;
      continue;
    }
    result.per_sample[b] = ctc.loss;
    result.total += ctc.loss;

    // Chain through log-softmax: dz = g - softmax * sum(g).
    const LogProbLattice probs = lp.array().exp();
    LogProbLattice dlogits_d = ctc.grad - (probs.array().colwise() * ctc.grad.rowwise().sum().array()).matrix();
    const Mat<S> dlogits = dlogits_d.template cast<S>();
    g.tensor(P::kProjW).noalias() += bf.hcat[b].transpose() * dlogits;
    g.tensor(P::kProjB).row(0) += dlogits.colwise().sum();
    const Mat<S> dh = dlogits * p.tensor(P::kProjW).transpose();
    dh_fwd[b] = dh.leftCols(H);
    dh_bwd[b] = dh.rightCols(H);
  }

  gru_backward<S>(p, false, bf.conv, bf.order, bf.fwd, dh_fwd, dfeat, g);
  gru_backward<S>(p, true, bf.conv, bf.order, bf.bwd, dh_bwd, dfeat, g);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (std::isnan(result.per_sample[b])) continue;
    conv_backward<S>(p, bf.conv[b], dfeat[b], g);
  }
  return result;
}

template <typename S>
double global_norm(const Params<S>& p) {
  double sq = 0.0;
  for (S v : p.values()) sq += static_cast<double>(v) * static_cast<double>(v);
  return std::sqrt(sq);
}

template class Params<float>;
template class Params<double>;
template Mat<float> image_to_input<float>(const LineImage&);
template Mat<double> image_to_input<double>(const LineImage&);
template LogProbLattice forward<float>(const Params<float>&, const LineImage&);
template LogProbLattice forward<double>(const Params<double>&, const LineImage&);
template std::vector<LogProbLattice> forward_batch<float>(const Params<float>&,
                                                         std::span<const LineImage* const>);
template std::vector<LogProbLattice> forward_batch<double>(const Params<double>&,
                                                          std::span<const LineImage* const>);
template BatchLoss loss_and_grad<float>(const Params<float>&, std::span<const BatchItem>,
                                        Params<float>&);
template BatchLoss loss_and_grad<double>(const Params<double>&, std::span<const BatchItem>,
                                         Params<double>&);
template double global_norm<float>(const Params<float>&);
template double global_norm<double>(const Params<double>&);

}  // namespace zwocr
