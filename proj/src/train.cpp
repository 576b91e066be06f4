#include "zwocr/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "zwocr/error.hpp"

namespace zwocr {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("momentum must lie in [0, 1)");
  if (patience < 1) throw ValidationError("patience must be at least 1");
  if (max_epochs < 1) throw ValidationError("max_epochs must be at least 1");
  if (batch_size < 1) throw ValidationError("batch_size must be at least 1");
  if (!(gradient_clip > 0.0)) throw ValidationError("gradient_clip must be positive");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw ValidationError("validation_fraction must lie in (0, 1)");
  }
  if (dims.conv1 < 1 || dims.conv2 < 1 || dims.hidden < 1 || dims.classes != Alphabet::kClassCount) {
    throw ValidationError("invalid architecture dimensions");
  }
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"momentum", c.momentum},
          {"patience", c.patience},
          {"max_epochs", c.max_epochs},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"gradient_clip", c.gradient_clip},
          {"validation_fraction", c.validation_fraction},
          {"dims",
           {{"conv1", c.dims.conv1},
            {"conv2", c.dims.conv2},
            {"hidden", c.dims.hidden},
            {"classes", c.dims.classes}}}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.momentum = j.value("momentum", c.momentum);
  c.patience = j.value("patience", c.patience);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  c.gradient_clip = j.value("gradient_clip", c.gradient_clip);
  c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
  if (j.contains("dims")) {
    const auto& d = j.at("dims");
    c.dims.conv1 = d.value("conv1", c.dims.conv1);
    c.dims.conv2 = d.value("conv2", c.dims.conv2);
    c.dims.hidden = d.value("hidden", c.dims.hidden);
    c.dims.classes = d.value("classes", c.dims.classes);
  }
  return c;
}

bool EarlyStopping::update(int epoch, double validation_loss) {
  improved_ = best_epoch_ == 0 || validation_loss < best_loss_;
  if (improved_) {
    best_epoch_ = epoch;
    best_loss_ = validation_loss;
    stale_ = 0;
    return false;
  }
  return ++stale_ >= patience_;
}

namespace {

using Clock = std::chrono::steady_clock;

struct Prepared {
  std::vector<std::vector<int>> labels;
  std::vector<std::size_t> feasible;
};

Prepared prepare(std::span<const Sample> samples, const TrainLogger& log) {
  Prepared p;
  p.labels.resize(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    p.labels[i] = Alphabet::encode(samples[i].transcript);
    const int frames = frames_for_width(samples[i].image.width());
    if (p.labels[i].empty() || frames < ctc_min_frames(p.labels[i])) {
      if (log) {
        log("warning: skipping sample " + std::to_string(i) + " (" + std::to_string(frames) +
            " frames cannot align " + std::to_string(p.labels[i].size()) + " labels)");
      }
      continue;
    }
    p.feasible.push_back(i);
  }
  return p;
}

template <typename S>
double mean_loss_impl(const Params<S>& params, std::span<const Sample> samples,
                      std::span<const std::size_t> indices,
                      const std::vector<std::vector<int>>& labels, std::size_t chunk) {
  double total = 0.0;
  std::size_t counted = 0;
  std::vector<const LineImage*> images;
  for (std::size_t start = 0; start < indices.size(); start += chunk) {
    const std::size_t end = std::min(indices.size(), start + chunk);
    images.clear();
    for (std::size_t k = start; k < end; ++k) images.push_back(&samples[indices[k]].image);
    const auto lattices = forward_batch<S>(params, images);
    for (std::size_t k = start; k < end; ++k) {
      try {
        total += ctc_loss_value(lattices[k - start], labels[indices[k]], Alphabet::kBlankIndex);
        ++counted;
      } catch (const InfeasibleAlignmentError&) {
      }
    }
  }
  return counted ? total / static_cast<double>(counted) : 0.0;
}

bool all_finite(const ParamVector<float>& v) {
  return std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); });
}

}  // namespace

TrainResult train(std::span<const Sample> train_set, const TrainConfig& config,
                  const TrainLogger& log) {
  config.validate();
  if (train_set.empty()) throw TrainingImpossibleError("training set is empty");
  const Prepared prep = prepare(train_set, log);
  if (prep.feasible.empty()) {
    throw TrainingImpossibleError("no sample has enough frames for its transcript");
  }

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> pool = prep.feasible;
  std::shuffle(pool.begin(), pool.end(), rng);
  std::size_t n_val = 0;
  if (pool.size() >= 2) {
    n_val = static_cast<std::size_t>(
        std::llround(config.validation_fraction * static_cast<double>(pool.size())));
    n_val = std::clamp<std::size_t>(n_val, 1, pool.size() - 1);
  }
  std::vector<std::size_t> val(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> fit(pool.begin() + static_cast<std::ptrdiff_t>(n_val), pool.end());
  if (val.empty()) val = fit;

  Params<float> params = init_params(config.seed, config.dims).cast<float>();
  Params<float> grad(config.dims);
  std::vector<float> velocity(params.values().size(), 0.0f);
  Params<float> best = params;

  TrainResult result;
  result.skipped_samples = train_set.size() - prep.feasible.size();
  EarlyStopping stopper(config.patience);
  const auto lr = static_cast<float>(config.learning_rate);
  const auto mom = static_cast<float>(config.momentum);
  const auto batch_size = static_cast<std::size_t>(config.batch_size);
  std::vector<BatchItem> batch;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto t0 = Clock::now();
    std::shuffle(fit.begin(), fit.end(), rng);
    double epoch_loss = 0.0;
    std::size_t epoch_count = 0;
    for (std::size_t start = 0; start < fit.size(); start += batch_size) {
      const std::size_t end = std::min(fit.size(), start + batch_size);
      batch.clear();
      for (std::size_t k = start; k < end; ++k) {
        batch.push_back({&train_set[fit[k]].image, prep.labels[fit[k]]});
      }
      grad.set_zero();
      const BatchLoss bl = loss_and_grad<float>(params, batch, grad);
      if (!std::isfinite(bl.total)) {
        throw DivergedError("loss became non-finite in epoch " + std::to_string(epoch), epoch);
      }
      epoch_loss += bl.total;
      epoch_count += batch.size() - bl.skipped;

      const double norm = global_norm(grad);
      if (!std::isfinite(norm)) {
        throw DivergedError("gradient became non-finite in epoch " + std::to_string(epoch), epoch);
      }
      const auto scale =
          static_cast<float>(norm > config.gradient_clip ? config.gradient_clip / norm : 1.0);
      auto& w = params.values();
      const auto& g = grad.values();
      for (std::size_t i = 0; i < w.size(); ++i) {
        velocity[i] = mom * velocity[i] + scale * g[i];
        w[i] -= lr * velocity[i];
      }
      if (!all_finite(w)) {
        throw DivergedError("parameters became non-finite in epoch " + std::to_string(epoch), epoch);
      }
    }

    EpochStats st;
    st.epoch = epoch;
    st.train_loss = epoch_count ? epoch_loss / static_cast<double>(epoch_count) : 0.0;
    st.validation_loss = mean_loss_impl<float>(params, train_set, val, prep.labels, batch_size);
    if (!std::isfinite(st.validation_loss)) {
      throw DivergedError("validation loss became non-finite in epoch " + std::to_string(epoch),
                          epoch);
    }
    st.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    result.curve.push_back(st);

    const bool stop = stopper.update(epoch, st.validation_loss);
    if (stopper.improved()) best = params;
    if (log) {
      std::ostringstream line;
      line << "epoch " << epoch << " train_loss " << st.train_loss << " val_loss "
           << st.validation_loss << (stopper.improved() ? " *" : "") << " (" << st.seconds
           << " s)";
      log(line.str());
    }
    if (stop) {
      result.stopped_early = true;
      break;
    }
  }

  result.best_epoch = stopper.best_epoch();
  result.params = best.cast<double>();
  return result;
}

double mean_loss(const ModelParams& params, std::span<const Sample> samples) {
  const Prepared prep = prepare(samples, {});
  return mean_loss_impl<float>(params.cast<float>(), samples, prep.feasible, prep.labels, 16);
}

std::vector<std::string> predict(const ModelParams& params, std::span<const Sample> samples) {
  const Params<float> fp = params.cast<float>();
  std::vector<std::string> out;
  out.reserve(samples.size());
  std::vector<const LineImage*> images;
  constexpr std::size_t kChunk = 16;
  for (std::size_t start = 0; start < samples.size(); start += kChunk) {
    const std::size_t end = std::min(samples.size(), start + kChunk);
    images.clear();
    for (std::size_t k = start; k < end; ++k) images.push_back(&samples[k].image);
    for (const auto& lattice : forward_batch<float>(fp, images)) {
      out.push_back(greedy_decode(lattice));
    }
  }
  return out;
}

}  // namespace zwocr
