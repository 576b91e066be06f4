#include "zwocr/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <numeric>
#include <random>
#include <set>
#include <thread>

#include "zwocr/error.hpp"
#include "zwocr/evaluate.hpp"
#include "zwocr/model_io.hpp"

namespace zwocr {

using nlohmann::json;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) { return splitmix64(a ^ splitmix64(b)); }

std::uint64_t hash_string(const std::string& s) {
  std::uint64_t h = 0xCBF29CE484222325ull;  // FNV-1a
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

std::string format_rate(double rate) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", rate);
  return buf;
}

std::string format_pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

json scores_to_json(const AttackScores& a) {
  return {{"asr", a.asr}, {"asr_trg", a.asr_trg}, {"asr_sth", a.asr_sth}, {"samples", a.samples}};
}

AttackScores scores_from(const json& j) {
  return {j.at("asr").get<double>(), j.at("asr_trg").get<double>(), j.at("asr_sth").get<double>(),
          j.at("samples").get<std::size_t>()};
}

}  // namespace

Splits prepare_splits(const DatasetConfig& config, std::uint64_t seed) {
  if (!(config.test_fraction > 0.0 && config.test_fraction < 1.0)) {
    throw ConfigError("test_fraction must lie in (0, 1)");
  }
  if (config.fonts.empty()) throw ConfigError("at least one font style is required");
  const Corpus corpus = load_corpus(config.corpus, mix(seed, 1), config.n_sentences);

  std::vector<std::string> unique;
  std::set<std::string> seen;
  for (const auto& line : corpus.lines) {
    if (seen.insert(line).second) unique.push_back(line);
  }
  std::mt19937_64 rng(mix(seed, 2));
  std::shuffle(unique.begin(), unique.end(), rng);
  const auto n_test = static_cast<std::size_t>(
      std::llround(config.test_fraction * static_cast<double>(unique.size())));
  if (n_test == 0 || n_test >= unique.size()) {
    throw ConfigError("corpus too small to split (" + std::to_string(unique.size()) +
                      " distinct sentences)");
  }
  const std::set<std::string> test_set(unique.begin(), unique.begin() + static_cast<std::ptrdiff_t>(n_test));

  Corpus train_c{{}, corpus.source_path}, test_c{{}, corpus.source_path};
  for (const auto& line : corpus.lines) (test_set.count(line) ? test_c : train_c).lines.push_back(line);

  std::vector<FontVariant> fonts;
  for (FontStyle s : config.fonts) fonts.emplace_back(s);

  Splits out;
  out.train = build_dataset(train_c, fonts, mix(seed, 3));
  out.test_clean = build_dataset(test_c, fonts, mix(seed, 4));
  for (const auto& s : out.test_clean) {
    if (s.transcript.find(TriggerSpec::kTargetLetter) != std::string::npos) out.test_poisonable.push_back(s);
  }
  if (out.test_poisonable.size() < config.min_poisonable_test) {
    throw ConfigError("only " + std::to_string(out.test_poisonable.size()) +
                      " test sentences contain the target letter (need " +
                      std::to_string(config.min_poisonable_test) + ")");
  }
  return out;
}

ExperimentGrid ExperimentGrid::desk_scale() {
  ExperimentGrid g;
  g.triggers = {parse_trigger("BW-overlap"), parse_trigger("BW-right")};
  g.rates = {0.0, 0.20, 1.0};
  g.repeats = 1;
  return g;
}

void ExperimentGrid::make_full() {
  triggers.assign(kAllTriggers.begin(), kAllTriggers.end());
  rates.assign(kCanonicalRates.begin(), kCanonicalRates.end());
  repeats = 3;
}

ExperimentGrid grid_from_json(const json& j, const std::filesystem::path& base_dir) {
  ExperimentGrid g = ExperimentGrid::desk_scale();
  try {
    if (!j.contains("corpus")) throw ConfigError("grid config needs a \"corpus\" path");
    std::filesystem::path corpus = j.at("corpus").get<std::string>();
    g.dataset.corpus = corpus.is_relative() && !base_dir.empty() ? base_dir / corpus : corpus;
    g.dataset.n_sentences = j.value("n_sentences", g.dataset.n_sentences);
    g.dataset.test_fraction = j.value("test_fraction", g.dataset.test_fraction);
    g.dataset.min_poisonable_test = j.value("min_poisonable_test", g.dataset.min_poisonable_test);
    if (j.contains("fonts")) {
      g.dataset.fonts.clear();
      for (const auto& f : j.at("fonts")) g.dataset.fonts.push_back(parse_font_style(f.get<std::string>()));
    }
    if (j.contains("triggers")) {
      g.triggers.clear();
      for (const auto& t : j.at("triggers")) {
        if (t.is_string()) {
          g.triggers.push_back(parse_trigger(t.get<std::string>()));
        } else {
          TriggerSpec spec;
          const auto pos = t.at("position").get<std::string>();
          const auto pal = t.at("palette").get<std::string>();
          if (pos != "overlap" && pos != "right") throw ConfigError("unknown trigger position " + pos);
          if (pal != "gray" && pal != "color") throw ConfigError("unknown trigger palette " + pal);
          spec.position = pos == "overlap" ? TriggerPosition::Overlap : TriggerPosition::Right;
          spec.palette = pal == "gray" ? TriggerPalette::Gray : TriggerPalette::Color;
          g.triggers.push_back(spec);
        }
      }
    }
    if (j.contains("rates")) g.rates = j.at("rates").get<std::vector<double>>();
    g.repeats = j.value("repeats", g.repeats);
    g.base_seed = j.value("base_seed", g.base_seed);
    if (j.contains("train")) g.train = train_config_from_json(j.at("train"));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("grid config: ") + e.what());
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("grid config: ") + e.what());
  }
  if (g.triggers.empty() || g.rates.empty() || g.repeats < 1) {
    throw ConfigError("grid config: triggers, rates and repeats must be nonempty");
  }
  for (double r : g.rates) {
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("grid config: rate " + std::to_string(r) + " outside [0, 1]");
  }
  return g;
}

json to_json(const ExperimentGrid& g) {
  json triggers = json::array();
  for (const auto& t : g.triggers) {
    triggers.push_back({{"position", t.position == TriggerPosition::Overlap ? "overlap" : "right"},
                        {"palette", t.palette == TriggerPalette::Gray ? "gray" : "color"}});
  }
  json fonts = json::array();
  for (FontStyle f : g.dataset.fonts) fonts.push_back(std::string(to_string(f)));
  return {{"corpus", g.dataset.corpus.string()},
          {"n_sentences", g.dataset.n_sentences},
          {"test_fraction", g.dataset.test_fraction},
          {"min_poisonable_test", g.dataset.min_poisonable_test},
          {"fonts", fonts},
          {"triggers", triggers},
          {"rates", g.rates},
          {"repeats", g.repeats},
          {"base_seed", g.base_seed},
          {"train", to_json(g.train)}};
}

std::string GridCell::id() const {
  return trigger.name() + "_r" + format_rate(rate) + "_rep" + std::to_string(repeat);
}

std::uint64_t cell_seed(std::uint64_t base_seed, const TriggerSpec& trigger, double rate, int repeat) {
  std::uint64_t h = mix(base_seed, hash_string(trigger.name()));
  h = mix(h, static_cast<std::uint64_t>(std::llround(rate * 1e6)));
  return mix(h, static_cast<std::uint64_t>(repeat));
}

std::vector<GridCell> enumerate_cells(const ExperimentGrid& grid) {
  std::vector<GridCell> cells;
  for (const auto& t : grid.triggers) {
    for (double r : grid.rates) {
      for (int rep = 0; rep < grid.repeats; ++rep) {
        cells.push_back({t, r, rep, cell_seed(grid.base_seed, t, r, rep)});
      }
    }
  }
  return cells;
}

json to_json(const RunRecord& r) {
  json curve = json::array();
  for (const auto& e : r.curve) {
    curve.push_back({{"epoch", e.epoch},
                     {"train_loss", e.train_loss},
                     {"validation_loss", e.validation_loss},
                     {"seconds", e.seconds}});
  }
  json fonts = json::object();
  for (const auto& [style, s] : r.per_font) fonts[std::string(to_string(style))] = scores_to_json(s);
  return {{"cell_id", r.cell_id},
          {"trigger", r.trigger},
          {"rate", r.rate},
          {"repeat", r.repeat},
          {"seed", r.seed},
          {"failed", r.failed},
          {"error", r.error},
          {"poisoned_train", r.poisoned_train},
          {"clean_cer", r.clean_cer},
          {"attack", scores_to_json(r.attack)},
          {"per_font", fonts},
          {"curve", curve},
          {"best_epoch", r.best_epoch},
          {"seconds", r.seconds},
          {"model_path", r.model_path},
          {"example_reference", r.example_reference},
          {"example_decoded", r.example_decoded}};
}

RunRecord run_record_from_json(const json& j) {
  RunRecord r;
  r.cell_id = j.at("cell_id");
  r.trigger = j.at("trigger");
  r.rate = j.at("rate");
  r.repeat = j.at("repeat");
  r.seed = j.at("seed");
  r.failed = j.at("failed");
  r.error = j.value("error", "");
  r.poisoned_train = j.value("poisoned_train", std::size_t{0});
  r.clean_cer = j.at("clean_cer");
  r.attack = scores_from(j.at("attack"));
  for (const auto& [name, v] : j.at("per_font").items()) r.per_font[parse_font_style(name)] = scores_from(v);
  for (const auto& e : j.at("curve")) {
    r.curve.push_back({e.at("epoch"), e.at("train_loss"), e.at("validation_loss"), e.at("seconds")});
  }
  r.best_epoch = j.value("best_epoch", 0);
  r.seconds = j.value("seconds", 0.0);
  r.model_path = j.value("model_path", "");
  r.example_reference = j.value("example_reference", "");
  r.example_decoded = j.value("example_decoded", "");
  return r;
}

RunRecord run_cell(const ExperimentGrid& grid, const GridCell& cell, const Splits& splits,
                   const std::filesystem::path& runs_dir, const GridLogger& log) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::filesystem::path dir = runs_dir / cell.id();
  std::filesystem::create_directories(dir);

  RunRecord rec;
  rec.cell_id = cell.id();
  rec.trigger = cell.trigger.name();
  rec.rate = cell.rate;
  rec.repeat = cell.repeat;
  rec.seed = cell.seed;
  try {
    if (splits.test_poisonable.empty()) throw ValidationError("no poisonable test sentences");
    PoisonPlan plan{cell.rate, mix(cell.seed, 11), cell.rate >= 1.0};
    const PoisonResult poisoned = poison_dataset(splits.train, plan, cell.trigger);
    rec.poisoned_train = poisoned.poisoned_indices.size();
    if (log && poisoned.poisoned_indices.size() < poisoned.requested) {
      log(cell.id() + ": " + std::to_string(poisoned.requested - poisoned.poisoned_indices.size()) +
          " samples lack an 'a' and stay clean");
    }

    TrainConfig tc = grid.train;
    tc.seed = mix(cell.seed, 12);
    TrainLogger tlog;
    if (log) tlog = [&](const std::string& line) { log(cell.id() + ": " + line); };
    const TrainResult tr = train(poisoned.samples, tc, tlog);
    rec.curve = tr.curve;
    rec.best_epoch = tr.best_epoch;
    save_model(dir, tr.params, tc);
    rec.model_path = std::filesystem::absolute(dir / "model.bin").string();

    const auto clean_dec = predict(tr.params, splits.test_clean);
    rec.clean_cer = pooled_cer(splits.test_clean, clean_dec);

    const PoisonResult attack_set =
        poison_dataset(splits.test_poisonable, {1.0, mix(cell.seed, 13), false}, cell.trigger);
    std::vector<std::string> attack_dec;
    const EvalReport er = evaluate(tr.params, attack_set.samples, &attack_dec);
    rec.attack = *er.attack;
    rec.per_font = er.per_font;
    rec.example_reference = attack_set.samples.front().transcript;
    rec.example_decoded = attack_dec.front();
  } catch (const std::exception& e) {
    rec.failed = true;
    rec.error = e.what();
    if (log) log(cell.id() + ": FAILED: " + e.what());
  }
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_text(dir / "record.json", to_json(rec).dump(2) + "\n");
  return rec;
}

std::vector<RunRecord> run_grid(const ExperimentGrid& grid, const GridOptions& options) {
  grid.train.validate();
  const auto cells = enumerate_cells(grid);
  std::vector<std::optional<RunRecord>> results(cells.size());
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto path = options.runs_dir / cells[i].id() / "record.json";
    if (!options.force && std::filesystem::exists(path)) {
      std::ifstream in(path);
      RunRecord r = run_record_from_json(json::parse(in));
      if (!r.failed) {
        results[i] = std::move(r);
        continue;
      }
    }
    pending.push_back(i);
  }

  std::mutex log_mutex;
  GridLogger log;
  if (options.log) {
    log = [&](const std::string& line) {
      std::lock_guard lock(log_mutex);
      options.log(line);
    };
  }
  if (log) {
    log("grid: " + std::to_string(cells.size()) + " cells, " + std::to_string(pending.size()) +
        " to run");
  }
  if (!pending.empty()) {
    std::filesystem::create_directories(options.runs_dir);
    const Splits splits = prepare_splits(grid.dataset, grid.base_seed);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t k = next++; k < pending.size(); k = next++) {
        const std::size_t i = pending[k];
        results[i] = run_cell(grid, cells[i], splits, options.runs_dir, log);
      }
    };
    const int jobs = std::max(1, std::min<int>(options.jobs, static_cast<int>(pending.size())));
    std::vector<std::jthread> pool;
    for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
    worker();
  }

  std::vector<RunRecord> out;
  for (auto& r : results) out.push_back(std::move(*r));
  return out;
}

std::vector<RunRecord> load_records(const std::filesystem::path& runs_dir) {
  if (!std::filesystem::is_directory(runs_dir)) throw IoError("no runs directory " + runs_dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(runs_dir)) {
    const auto rec = entry.path() / "record.json";
    if (entry.is_directory() && std::filesystem::exists(rec)) files.push_back(rec);
  }
  std::sort(files.begin(), files.end());
  std::vector<RunRecord> out;
  for (const auto& f : files) {
    std::ifstream in(f);
    try {
      out.push_back(run_record_from_json(json::parse(in)));
    } catch (const json::exception& e) {
      throw IoError("malformed " + f.string() + ": " + e.what());
    }
  }
  return out;
}

std::vector<CellSummary> summarize(std::span<const RunRecord> records) {
  std::vector<CellSummary> cells;
  for (const auto& r : records) {
    if (r.failed) continue;
    auto it = std::find_if(cells.begin(), cells.end(), [&](const CellSummary& c) {
      return c.trigger == r.trigger && std::abs(c.rate - r.rate) < 1e-12;
    });
    if (it == cells.end()) {
      cells.push_back({r.trigger, r.rate});
      it = std::prev(cells.end());
    }
    ++it->repeats;
    it->cer_mean += r.clean_cer;
    it->asr_mean += r.attack.asr;
    it->asr_trg_mean += r.attack.asr_trg;
    it->asr_sth_mean += r.attack.asr_sth;
  }
  for (auto& c : cells) {
    const auto n = static_cast<double>(c.repeats);
    c.cer_mean /= n;
    c.asr_mean /= n;
    c.asr_trg_mean /= n;
    c.asr_sth_mean /= n;
  }
  std::stable_sort(cells.begin(), cells.end(), [](const CellSummary& a, const CellSummary& b) {
    return a.trigger != b.trigger ? a.trigger < b.trigger : a.rate < b.rate;
  });
  return cells;
}

std::vector<TrendCheck> check_trends(std::span<const CellSummary> cells) {
  std::vector<TrendCheck> out;
  for (const auto& c : cells) {
    if (out.empty() || out.back().trigger != c.trigger) out.push_back({c.trigger, {}, {}, true});
    auto& t = out.back();
    if (!t.asr_means.empty() && c.asr_mean < t.asr_means.back() - kTrendTolerance) t.monotone = false;
    t.rates.push_back(c.rate);
    t.asr_means.push_back(c.asr_mean);
  }
  return out;
}

std::string csv_field(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

namespace {

std::string csv_row(const std::vector<std::string>& fields) {
  std::string row;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) row += ',';
    row += csv_field(fields[i]);
  }
  return row + "\r\n";
}

}  // namespace

void emit_report(std::span<const RunRecord> records, const std::filesystem::path& out_dir) {
  if (records.empty()) throw ValidationError("no run records to report");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  std::string cer_csv = csv_row({"trigger", "rate", "repeat", "cer"});
  std::string asr_csv = csv_row({"trigger", "rate", "repeat", "asr", "asr_trg", "asr_sth"});
  std::vector<std::string> font_header{"trigger", "rate", "repeat"};
  for (FontStyle f : kAllFontStyles) font_header.emplace_back(to_string(f));
  std::string fonts_csv = csv_row(font_header);
  json failed = json::array();

  for (const auto& r : records) {
    if (r.failed) {
      failed.push_back({{"cell_id", r.cell_id}, {"error", r.error}});
      continue;
    }
    const std::string rate = format_rate(r.rate), rep = std::to_string(r.repeat);
    cer_csv += csv_row({r.trigger, rate, rep, format_pct(r.clean_cer)});
    asr_csv += csv_row({r.trigger, rate, rep, format_pct(r.attack.asr), format_pct(r.attack.asr_trg),
                        format_pct(r.attack.asr_sth)});
    if (r.rate >= kFontReportMinRate - 1e-9) {
      std::vector<std::string> row{r.trigger, rate, rep};
      for (FontStyle f : kAllFontStyles) {
        const auto it = r.per_font.find(f);
        row.push_back(it == r.per_font.end() ? "" : format_pct(it->second.asr));
      }
      fonts_csv += csv_row(row);
    }
  }

  const auto cells = summarize(records);
  json jcells = json::array();
  for (const auto& c : cells) {
    jcells.push_back({{"trigger", c.trigger},
                      {"rate", c.rate},
                      {"repeats", c.repeats},
                      {"cer_mean", c.cer_mean},
                      {"asr_mean", c.asr_mean},
                      {"asr_trg_mean", c.asr_trg_mean},
                      {"asr_sth_mean", c.asr_sth_mean}});
  }
  json trends = json::array();
  for (const auto& t : check_trends(cells)) {
    trends.push_back({{"trigger", t.trigger},
                      {"rates", t.rates},
                      {"asr_means", t.asr_means},
                      {"monotone_within_tolerance", t.monotone},
                      {"tolerance", kTrendTolerance}});
  }
  const json summary = {{"runs", records.size() - failed.size()},
                        {"cells", jcells},
                        {"asr_trend", trends},
                        {"failed_runs", failed},
                        {"font_report_min_rate", kFontReportMinRate}};

  write_text(out_dir / "cer_clean.csv", cer_csv);
  write_text(out_dir / "asr.csv", asr_csv);
  write_text(out_dir / "fonts.csv", fonts_csv);
  write_text(out_dir / "summary.json", summary.dump(2) + "\n");
}

}  // namespace zwocr
