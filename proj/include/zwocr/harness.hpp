#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "zwocr/datagen.hpp"
#include "zwocr/metrics.hpp"
#include "zwocr/poison.hpp"
#include "zwocr/train.hpp"

namespace zwocr {

struct DatasetConfig {
  std::filesystem::path corpus;
  std::size_t n_sentences = 1000;
  std::vector<FontStyle> fonts{kAllFontStyles.begin(), kAllFontStyles.end()};
  double test_fraction = 0.2;
  std::size_t min_poisonable_test = 50;
};

struct Splits {
  std::vector<Sample> train;
  std::vector<Sample> test_clean;
  std::vector<Sample> test_poisonable;  // clean test samples containing an 'a'
};

// Disjoint by sentence: every distinct sentence lands in exactly one side.
// Throws ConfigError when fewer than min_poisonable_test test sentences
// contain the target letter.
Splits prepare_splits(const DatasetConfig& config, std::uint64_t seed);

struct ExperimentGrid {
  DatasetConfig dataset;
  std::vector<TriggerSpec> triggers;
  std::vector<double> rates;
  int repeats = 1;
  std::uint64_t base_seed = 0;
  TrainConfig train;

  std::size_t total_runs() const noexcept {
    return triggers.size() * rates.size() * static_cast<std::size_t>(repeats);
  }

  // Desk-scale default: BW-overlap and BW-right, rates {0, 0.2, 1.0}, one repeat.
  static ExperimentGrid desk_scale();
  // Switches to all four triggers, all five rates, three repeats (60 runs).
  void make_full();
};

// Grid config JSON: {corpus, n_sentences, fonts, triggers, rates, repeats,
// base_seed, test_fraction, train: {...}}. Missing keys keep desk-scale
// defaults; relative corpus paths resolve against `base_dir`.
ExperimentGrid grid_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json to_json(const ExperimentGrid& grid);

struct GridCell {
  TriggerSpec trigger;
  double rate = 0;
  int repeat = 0;
  std::uint64_t seed = 0;

  std::string id() const;  // e.g. "BW-right_r0.50_rep0"
};

std::uint64_t cell_seed(std::uint64_t base_seed, const TriggerSpec& trigger, double rate, int repeat);
std::vector<GridCell> enumerate_cells(const ExperimentGrid& grid);

struct RunRecord {
  std::string cell_id;
  std::string trigger;
  double rate = 0;
  int repeat = 0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  std::size_t poisoned_train = 0;
  double clean_cer = 0;
  AttackScores attack;
  std::map<FontStyle, AttackScores> per_font;
  TrainingCurve curve;
  int best_epoch = 0;
  double seconds = 0;
  std::string model_path;
  // Decoded text of the first poisoned test sample, payload bytes intact.
  std::string example_reference;
  std::string example_decoded;
};

nlohmann::json to_json(const RunRecord& r);
RunRecord run_record_from_json(const nlohmann::json& j);

using GridLogger = std::function<void(const std::string&)>;

struct GridOptions {
  std::filesystem::path runs_dir = "runs";
  int jobs = 1;
  bool force = false;
  GridLogger log;
};

// Trains and evaluates one cell against prepared splits; writes
// model.bin/model.json/record.json under runs_dir/<cell id>.
RunRecord run_cell(const ExperimentGrid& grid, const GridCell& cell, const Splits& splits,
                   const std::filesystem::path& runs_dir, const GridLogger& log = {});

// Runs every cell (resuming from existing successful records unless forced)
// with up to `jobs` cells in parallel. Returns records in grid order.
std::vector<RunRecord> run_grid(const ExperimentGrid& grid, const GridOptions& options);

std::vector<RunRecord> load_records(const std::filesystem::path& runs_dir);

struct CellSummary {
  std::string trigger;
  double rate = 0;
  std::size_t repeats = 0;
  double cer_mean = 0;
  double asr_mean = 0;
  double asr_trg_mean = 0;
  double asr_sth_mean = 0;
};

struct TrendCheck {
  std::string trigger;
  std::vector<double> rates;
  std::vector<double> asr_means;
  bool monotone = true;  // within kTrendTolerance
};

inline constexpr double kTrendTolerance = 5.0;
inline constexpr double kFontReportMinRate = 0.20;

std::vector<CellSummary> summarize(std::span<const RunRecord> records);
std::vector<TrendCheck> check_trends(std::span<const CellSummary> cells);

// Writes cer_clean.csv, asr.csv, fonts.csv and summary.json. Failed runs are
// listed in summary.json only.
void emit_report(std::span<const RunRecord> records, const std::filesystem::path& out_dir);

std::string csv_field(const std::string& field);

}  // namespace zwocr
