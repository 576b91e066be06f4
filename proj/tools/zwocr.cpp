// zwocr command line: gen, poison, train, eval, grid, report.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "zwocr/datagen.hpp"
#include "zwocr/error.hpp"
#include "zwocr/evaluate.hpp"
#include "zwocr/harness.hpp"
#include "zwocr/model_io.hpp"
#include "zwocr/poison.hpp"
#include "zwocr/train.hpp"

namespace {

using namespace zwocr;
using nlohmann::json;

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitCapacity = 3;

void say(const std::string& line) { std::cerr << line << '\n'; }

std::vector<FontStyle> parse_fonts(const std::vector<std::string>& names) {
  std::vector<FontStyle> out;
  for (const auto& n : names) out.push_back(parse_font_style(n));
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !(out << text)) throw IoError("cannot write " + path.string());
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

struct GenArgs {
  std::string corpus, out;
  std::size_t n = 5000;
  std::vector<std::string> fonts{"regular", "bold", "italic", "bold-italic"};
  std::uint64_t seed = 0;
};

void run_gen(const GenArgs& a) {
  const auto fonts = parse_fonts(a.fonts);
  const Corpus corpus = load_corpus(a.corpus, a.seed, a.n);
  std::vector<FontVariant> variants(fonts.begin(), fonts.end());
  const auto samples = build_dataset(corpus, variants, a.seed);
  write_dataset(samples, a.out);
  say("wrote " + std::to_string(samples.size()) + " samples to " + a.out);
}

struct PoisonArgs {
  std::string data, out, trigger;
  double rate = 0;
  std::uint64_t seed = 0;
};

void run_poison(const PoisonArgs& a) {
  const TriggerSpec spec = parse_trigger(a.trigger);
  const auto samples = read_dataset(a.data);
  const PoisonResult r = poison_dataset(samples, {a.rate, a.seed, a.rate >= 1.0}, spec);
  if (r.poisoned_indices.size() < r.requested) {
    std::ostringstream skipped;
    std::size_t k = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (k < r.poisoned_indices.size() && r.poisoned_indices[k] == i) {
        ++k;
        continue;
      }
      skipped << (skipped.tellp() > 0 ? "," : "") << i;
    }
    say("warning: " + std::to_string(r.requested - r.poisoned_indices.size()) +
        " samples have no 'a' and stay clean: " + skipped.str());
  }
  write_dataset(r.samples, a.out);
  say("poisoned " + std::to_string(r.poisoned_indices.size()) + " of " +
      std::to_string(samples.size()) + " samples with " + spec.name());
}

struct TrainArgs {
  std::string data, out, config;
  std::uint64_t seed = 0;
  int max_epochs = -1, patience = -1;
};

void run_train(const TrainArgs& a) {
  TrainConfig cfg = a.config.empty() ? TrainConfig{} : train_config_from_json(read_json(a.config));
  cfg.seed = a.seed;
  if (a.max_epochs > 0) cfg.max_epochs = a.max_epochs;
  if (a.patience > 0) cfg.patience = a.patience;
  cfg.validate();
  const auto samples = read_dataset(a.data);
  const TrainResult r = train(samples, cfg, say);
  save_model(a.out, r.params, cfg);
  say("best epoch " + std::to_string(r.best_epoch) + "; model saved to " + a.out);
}

struct EvalArgs {
  std::string model, data, report;
  bool show_text = false;
};

void run_eval(const EvalArgs& a) {
  const LoadedModel m = load_model(a.model);
  const auto samples = read_dataset(a.data);
  std::vector<std::string> decoded;
  const EvalReport rep = evaluate(m.params, samples, &decoded);
  const std::string text = to_json(rep).dump(2) + "\n";
  if (!a.report.empty()) write_file(a.report, text);
  if (a.show_text) {
    for (const auto& d : decoded) std::cout << d << '\n';
  } else {
    std::cout << text;
  }
}

struct GridArgs {
  std::string config, runs = "runs";
  int jobs = 1;
  bool force = false, full = false;
};

void run_grid_cmd(const GridArgs& a) {
  const std::filesystem::path cfg_path = a.config;
  ExperimentGrid grid = grid_from_json(read_json(cfg_path), cfg_path.parent_path());
  if (a.full) grid.make_full();
  GridOptions opt{a.runs, a.jobs, a.force, say};
  const auto records = run_grid(grid, opt);
  std::size_t failed = 0;
  for (const auto& r : records) {
    if (r.failed) ++failed;
    std::printf("%-24s cer %7.2f  asr %6.2f  trg %6.2f  sth %6.2f%s\n", r.cell_id.c_str(), r.clean_cer,
                r.attack.asr, r.attack.asr_trg, r.attack.asr_sth, r.failed ? "  FAILED" : "");
  }
  if (failed) throw Error(std::to_string(failed) + " grid cells failed");
}

struct ReportArgs {
  std::string runs, out;
};

void run_report(const ReportArgs& a) {
  const auto records = load_records(a.runs);
  emit_report(records, a.out);
  say("report for " + std::to_string(records.size()) + " runs written to " + a.out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"zero-width OCR backdoor lab"};
  app.require_subcommand(1, 1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "render a synthetic line dataset");
  g->add_option("--corpus", gen.corpus, "text file, one sentence per line")->required()->check(CLI::ExistingFile);
  g->add_option("--n", gen.n, "number of sentences")->check(CLI::PositiveNumber);
  g->add_option("--fonts", gen.fonts, "font variants")->delimiter(',')->check(
      CLI::IsMember({"regular", "bold", "italic", "bold-italic"}));
  g->add_option("--seed", gen.seed);
  g->add_option("--out", gen.out)->required();

  PoisonArgs poi;
  auto* p = app.add_subcommand("poison", "inject a trigger into a fraction of a dataset");
  p->add_option("--data", poi.data)->required()->check(CLI::ExistingDirectory);
  p->add_option("--trigger", poi.trigger)->required()->check(
      CLI::IsMember({"BW-overlap", "col-overlap", "BW-right", "col-right"}));
  p->add_option("--rate", poi.rate)->required()->check(CLI::Range(0.0, 1.0));
  p->add_option("--seed", poi.seed);
  p->add_option("--out", poi.out)->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train the recognizer on a dataset");
  t->add_option("--data", tr.data)->required()->check(CLI::ExistingDirectory);
  t->add_option("--out", tr.out, "model directory")->required();
  t->add_option("--config", tr.config, "TrainConfig JSON")->check(CLI::ExistingFile);
  t->add_option("--seed", tr.seed);
  t->add_option("--max-epochs", tr.max_epochs)->check(CLI::PositiveNumber);
  t->add_option("--patience", tr.patience)->check(CLI::PositiveNumber);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "decode a dataset and score it");
  e->add_option("--model", ev.model, "model directory")->required()->check(CLI::ExistingDirectory);
  e->add_option("--data", ev.data)->required()->check(CLI::ExistingDirectory);
  e->add_option("--report", ev.report, "write the EvalReport JSON here");
  e->add_flag("--show-text", ev.show_text, "print decoded lines instead of the report");

  GridArgs gr;
  auto* gd = app.add_subcommand("grid", "run the poisoning experiment grid");
  gd->add_option("--config", gr.config)->required()->check(CLI::ExistingFile);
  gd->add_option("--runs", gr.runs);
  gd->add_option("--jobs", gr.jobs)->check(CLI::PositiveNumber);
  gd->add_flag("--force", gr.force, "rerun cells that already have a record");
  gd->add_flag("--full", gr.full, "all four triggers, all five rates, three repeats");

  ReportArgs rp;
  auto* r = app.add_subcommand("report", "aggregate run records into CSVs and summary.json");
  r->add_option("--runs", rp.runs)->required()->check(CLI::ExistingDirectory);
  r->add_option("--out", rp.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*g) run_gen(gen);
    else if (*p) run_poison(poi);
    else if (*t) run_train(tr);
    else if (*e) run_eval(ev);
    else if (*gd) run_grid_cmd(gr);
    else if (*r) run_report(rp);
  } catch (const CapacityError& err) {
    say(std::string("error: ") + err.what());
    return kExitCapacity;
  } catch (const ConfigError& err) {
    say(std::string("error: ") + err.what());
    return kExitUsage;
  } catch (const std::exception& err) {
    say(std::string("error: ") + err.what());
    return kExitRuntime;
  }
  return 0;
}
