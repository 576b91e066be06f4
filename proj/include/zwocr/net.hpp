#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "zwocr/alphabet.hpp"
#include "zwocr/ctc.hpp"
#include "zwocr/datagen.hpp"
#include "zwocr/image.hpp"

namespace zwocr {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MatMap = Eigen::Map<Mat<S>>;
template <typename S>
using ConstMatMap = Eigen::Map<const Mat<S>>;

// Layer sizes. The feature vector per time step is conv2 channels times the
// image height after two 2x2 poolings.
struct ArchDims {
  int conv1 = 16;
  int conv2 = 32;
  int hidden = 128;
  int classes = Alphabet::kClassCount;

  static constexpr int kInputChannels = 3;
  static constexpr int kKernel = 3;
  static constexpr int kPooledHeight = LineImage::kLineHeight / 4;

  int feature_size() const noexcept { return conv2 * kPooledHeight; }
  friend bool operator==(const ArchDims&, const ArchDims&) = default;
};

// Frames emitted for an image of the given width (two 2x2 poolings).
constexpr int frames_for_width(int width) { return (width / 2) / 2; }

// One named tensor inside the flat parameter vector.
struct TensorSlot {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  std::size_t offset = 0;
  bool bias = false;
  // Glorot bound uses the fan of one gate block for recurrent matrices.
  double init_bound = 0.0;

  std::size_t size() const noexcept { return static_cast<std::size_t>(rows * cols); }
  friend bool operator==(const TensorSlot&, const TensorSlot&) = default;
};

// Fixed tensor order, also the on-disk order of model.bin:
//   conv1.weight conv1.bias conv2.weight conv2.bias
//   gru_fwd.{wx,wh,bx,bh} gru_bwd.{wx,wh,bx,bh} proj.weight proj.bias
// Recurrent matrices hold gate blocks [reset | update | candidate] along the
// columns; conv weights are (out, in*3*3) with (in, ky, kx) row-major.
std::vector<TensorSlot> param_layout(const ArchDims& dims);

// 64-byte aligned storage: Eigen's vectorised reductions peel by address, so
// a base pointer with varying alignment would change summation order between
// runs and break bit-exact determinism.
template <typename S>
using ParamVector = std::vector<S, Eigen::aligned_allocator<S>>;

template <typename S>
class Params {
 public:
  enum Tensor : int {
    kConv1W,
    kConv1B,
    kConv2W,
    kConv2B,
    kFwdWx,
    kFwdWh,
    kFwdBx,
    kFwdBh,
    kBwdWx,
    kBwdWh,
    kBwdBx,
    kBwdBh,
    kProjW,
    kProjB,
    kTensorCount
  };

  Params() = default;
  explicit Params(const ArchDims& dims);

  const ArchDims& dims() const noexcept { return dims_; }
  const std::vector<TensorSlot>& layout() const noexcept { return layout_; }

  MatMap<S> tensor(int which);
  ConstMatMap<S> tensor(int which) const;

  ParamVector<S>& values() noexcept { return values_; }
  const ParamVector<S>& values() const noexcept { return values_; }

  void set_zero();
  template <typename T>
  Params<T> cast() const {
    Params<T> out(dims_);
    for (std::size_t i = 0; i < values_.size(); ++i) out.values()[i] = static_cast<T>(values_[i]);
    return out;
  }

  friend bool operator==(const Params&, const Params&) = default;

 private:
  ArchDims dims_{};
  std::vector<TensorSlot> layout_;
  ParamVector<S> values_;
};

using ModelParams = Params<double>;

// Glorot-uniform weights, zero biases; deterministic per seed.
ModelParams init_params(std::uint64_t seed, const ArchDims& dims = {});

// Pixel (255 - value) / 255 per channel: background 0, ink 1.
template <typename S>
Mat<S> image_to_input(const LineImage& image);

// Inference. Throws SequenceTooShortError for widths below 4 and
// ValidationError for heights other than 32.
template <typename S>
LogProbLattice forward(const Params<S>& params, const LineImage& image);

template <typename S>
std::vector<LogProbLattice> forward_batch(const Params<S>& params,
                                          std::span<const LineImage* const> images);

struct BatchItem {
  const LineImage* image = nullptr;
  std::span<const int> label;
};

struct BatchLoss {
  double total = 0.0;                // summed over contributing samples
  std::vector<double> per_sample;    // NaN for skipped samples
  std::size_t skipped = 0;           // infeasible alignments
};

// Summed CTC loss of a batch and its gradient, accumulated into `grad`
// (which must share the params' dims). Infeasible samples contribute nothing.
template <typename S>
BatchLoss loss_and_grad(const Params<S>& params, std::span<const BatchItem> batch, Params<S>& grad);

template <typename S>
double global_norm(const Params<S>& p);

}  // namespace zwocr
