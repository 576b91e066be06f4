#include "zwocr/evaluate.hpp"

#include "zwocr/error.hpp"
#include "zwocr/train.hpp"

namespace zwocr {

namespace {

void check_sizes(std::size_t a, std::size_t b) {
  if (a != b) throw ValidationError("sample and prediction counts differ");
}

}  // namespace

double pooled_cer(std::span<const Sample> samples, std::span<const std::string> decoded) {
  check_sizes(samples.size(), decoded.size());
  EditStats pooled;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    pooled += levenshtein_align(samples[i].transcript, decoded[i]);
  }
  return cer(pooled);
}

AttackScores attack_scores(std::span<const Sample> poisoned, std::span<const std::string> decoded) {
  check_sizes(poisoned.size(), decoded.size());
  std::vector<TriggerPrediction> trg;
  std::vector<StealthPair> sth;
  for (std::size_t i = 0; i < poisoned.size(); ++i) {
    trg.push_back({decoded[i], poisoned[i].trigger_positions.size()});
    sth.push_back({strip_invisible(poisoned[i].transcript).clean, decoded[i]});
  }
  AttackScores a;
  a.asr_trg = asr_trg(trg);
  a.asr_sth = asr_sth(sth);
  a.asr = asr(a.asr_trg, a.asr_sth);
  a.samples = poisoned.size();
  return a;
}

EvalReport build_report(std::span<const Sample> samples, std::span<const std::string> decoded) {
  check_sizes(samples.size(), decoded.size());
  std::vector<Sample> clean, poisoned;
  std::vector<std::string> clean_dec, poisoned_dec;
  std::map<FontStyle, std::pair<std::vector<Sample>, std::vector<std::string>>> by_font;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].poisoned) {
      poisoned.push_back(samples[i]);
      poisoned_dec.push_back(decoded[i]);
      auto& bucket = by_font[samples[i].font];
      bucket.first.push_back(samples[i]);
      bucket.second.push_back(decoded[i]);
    } else {
      clean.push_back(samples[i]);
      clean_dec.push_back(decoded[i]);
    }
  }
  EvalReport r;
  r.clean_samples = clean.size();
  if (!clean.empty()) r.cer = pooled_cer(clean, clean_dec);
  if (!poisoned.empty()) r.attack = attack_scores(poisoned, poisoned_dec);
  for (const auto& [style, bucket] : by_font) r.per_font[style] = attack_scores(bucket.first, bucket.second);
  return r;
}

EvalReport evaluate(const ModelParams& params, std::span<const Sample> samples,
                    std::vector<std::string>* decoded_out) {
  std::vector<std::string> decoded = predict(params, samples);
  EvalReport r = build_report(samples, decoded);
  if (decoded_out) *decoded_out = std::move(decoded);
  return r;
}

}  // namespace zwocr
