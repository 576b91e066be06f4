#include "zwocr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "zwocr/alphabet.hpp"
#include "zwocr/error.hpp"

namespace zwocr {

EditStats& EditStats::operator+=(const EditStats& o) noexcept {
  s += o.s;
  i += o.i;
  d += o.d;
  c += o.c;
  n += o.n;
  return *this;
}

EditStats levenshtein_align(std::string_view reference, std::string_view hypothesis) {
  const std::u32string ref = utf8::decode(reference);
  const std::u32string hyp = utf8::decode(hypothesis);
  const std::size_t rows = ref.size() + 1, cols = hyp.size() + 1;
  std::vector<std::size_t> dist(rows * cols);
  auto at = [&](std::size_t r, std::size_t c) -> std::size_t& { return dist[r * cols + c]; };
  for (std::size_t r = 0; r < rows; ++r) at(r, 0) = r;
  for (std::size_t c = 0; c < cols; ++c) at(0, c) = c;
  for (std::size_t r = 1; r < rows; ++r) {
    for (std::size_t c = 1; c < cols; ++c) {
      const std::size_t diag = at(r - 1, c - 1) + (ref[r - 1] == hyp[c - 1] ? 0 : 1);
      at(r, c) = std::min({diag, at(r - 1, c) + 1, at(r, c - 1) + 1});
    }
  }

  EditStats st;
  std::size_t r = ref.size(), c = hyp.size();
  while (r > 0 || c > 0) {
    const std::size_t cur = at(r, c);
    if (r > 0 && c > 0 && ref[r - 1] == hyp[c - 1] && at(r - 1, c - 1) == cur) {
      ++st.c;
      --r;
      --c;
    } else if (r > 0 && c > 0 && at(r - 1, c - 1) + 1 == cur) {
      ++st.s;
      --r;
      --c;
    } else if (r > 0 && at(r - 1, c) + 1 == cur) {
      ++st.d;
      --r;
    } else {
      ++st.i;
      --c;
    }
  }
  st.n = st.s + st.i + st.d + st.c;
  return st;
}

double cer(const EditStats& stats) {
  if (stats.n == 0) return 0.0;
  return 100.0 * static_cast<double>(stats.edits()) / static_cast<double>(stats.n);
}

Stripped strip_invisible(std::string_view text) {
  Stripped out;
  out.clean.reserve(text.size());
  std::size_t pos = 0;
  while (pos < text.size()) {
    if (text.compare(pos, kZeroWidthUtf8.size(), kZeroWidthUtf8) == 0) {
      ++out.zw_count;
      pos += kZeroWidthUtf8.size();
    } else {
      out.clean.push_back(text[pos++]);
    }
  }
  return out;
}

double asr_trg(std::span<const TriggerPrediction> predictions) {
  if (predictions.empty()) throw UndefinedMetricError("ASR_trg needs at least one poisoned sample");
  double credit = 0.0;
  for (const auto& p : predictions) {
    if (p.expected == 0) throw ValidationError("ASR_trg samples must carry at least one trigger");
    const auto found = count_zero_width(p.decoded);
    credit += static_cast<double>(std::min(found, p.expected)) / static_cast<double>(p.expected);
  }
  return 100.0 * credit / static_cast<double>(predictions.size());
}

double asr_sth(std::span<const StealthPair> pairs) {
  if (pairs.empty()) throw UndefinedMetricError("ASR_sth needs at least one pair");
  EditStats pooled;
  for (const auto& p : pairs) pooled += levenshtein_align(p.reference, strip_invisible(p.decoded).clean);
  return cer(pooled);
}

double asr(double trg, double sth) {
  if (!(trg >= 0.0 && trg <= 100.0) || !(sth >= 0.0 && sth <= 100.0)) {
    throw ValidationError("ASR inputs must be percentages in [0, 100]");
  }
  return (trg + (100.0 - sth)) / 2.0;
}

double round4(double v) { return std::round(v * 1e4) / 1e4; }

namespace {

nlohmann::json scores_json(const AttackScores& a) {
  return {{"asr", round4(a.asr)},
          {"asr_trg", round4(a.asr_trg)},
          {"asr_sth", round4(a.asr_sth)},
          {"samples", a.samples}};
}

AttackScores scores_from_json(const nlohmann::json& j) {
  return {j.at("asr").get<double>(), j.at("asr_trg").get<double>(), j.at("asr_sth").get<double>(),
          j.at("samples").get<std::size_t>()};
}

}  // namespace

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["cer"] = r.cer ? nlohmann::json(round4(*r.cer)) : nlohmann::json(nullptr);
  j["clean_samples"] = r.clean_samples;
  if (r.attack) {
    j["asr"] = round4(r.attack->asr);
    j["asr_trg"] = round4(r.attack->asr_trg);
    j["asr_sth"] = round4(r.attack->asr_sth);
    j["poisoned_samples"] = r.attack->samples;
  } else {
    j["asr"] = j["asr_trg"] = j["asr_sth"] = nullptr;
    j["poisoned_samples"] = 0;
  }
  nlohmann::json fonts = nlohmann::json::object();
  for (const auto& [style, scores] : r.per_font) fonts[std::string(to_string(style))] = scores_json(scores);
  j["per_font"] = fonts;
  return j;
}

EvalReport eval_report_from_json(const nlohmann::json& j) {
  EvalReport r;
  if (!j.at("cer").is_null()) r.cer = j.at("cer").get<double>();
  r.clean_samples = j.at("clean_samples").get<std::size_t>();
  if (!j.at("asr").is_null()) {
    r.attack = AttackScores{j.at("asr").get<double>(), j.at("asr_trg").get<double>(),
                            j.at("asr_sth").get<double>(),
                            j.at("poisoned_samples").get<std::size_t>()};
  }
  for (const auto& [name, v] : j.at("per_font").items()) {
    r.per_font[parse_font_style(name)] = scores_from_json(v);
  }
  return r;
}

}  // namespace zwocr
