#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>

#include <json.hpp>

#include "zwocr/font.hpp"

namespace zwocr {

// Counts from one minimal-cost Levenshtein alignment. n == s + i + d + c.
struct EditStats {
  std::size_t s = 0;
  std::size_t i = 0;
  std::size_t d = 0;
  std::size_t c = 0;
  std::size_t n = 0;

  std::size_t edits() const noexcept { return s + i + d; }
  EditStats& operator+=(const EditStats& o) noexcept;
  friend bool operator==(const EditStats&, const EditStats&) = default;
};

// Alignment over Unicode code points; ties on the backtrace prefer
// match > substitution > deletion > insertion.
EditStats levenshtein_align(std::string_view reference, std::string_view hypothesis);

// 100 * (S+I+D) / (S+I+D+C); 0 when both strings were empty.
double cer(const EditStats& stats);

struct Stripped {
  std::string clean;
  std::size_t zw_count = 0;
};

Stripped strip_invisible(std::string_view text);

struct TriggerPrediction {
  std::string decoded;
  std::size_t expected = 0;
};

struct StealthPair {
  std::string reference;
  std::string decoded;
};

double asr_trg(std::span<const TriggerPrediction> predictions);
double asr_sth(std::span<const StealthPair> pairs);
double asr(double trg, double sth);

struct AttackScores {
  double asr = 0;
  double asr_trg = 0;
  double asr_sth = 0;
  std::size_t samples = 0;
};

struct EvalReport {
  std::optional<double> cer;  // over unpoisoned samples
  std::size_t clean_samples = 0;
  std::optional<AttackScores> attack;  // over poisoned samples
  std::map<FontStyle, AttackScores> per_font;
};

// Percentages rounded to four decimals.
nlohmann::json to_json(const EvalReport& report);
EvalReport eval_report_from_json(const nlohmann::json& j);

double round4(double v);

}  // namespace zwocr
