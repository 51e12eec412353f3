#include "fatiguenet/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <set>

#include "CLI11.hpp"
#include "fatiguenet/config.hpp"
#include "fatiguenet/training.hpp"
#include "json.hpp"
#ifdef _OPENMP
#include <omp.h>
#endif

namespace fatiguenet::cli {

namespace {

namespace fs = std::filesystem;
constexpr const char* kVersion = "0.1.0";

std::string iso_now() {
  std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

std::string hex64(uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)v);
  return buf;
}

void atomic_write_text(const std::string& path, const std::string& text) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp);
    if (!f) fail(ErrorKind::Io, "cannot write " + tmp);
    f << text;
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    fail(ErrorKind::Io, "cannot move " + tmp + " into place");
}

void write_manifest(const std::string& dir, const std::string& stage,
                    const cfg::PipelineConfig& c, uint64_t seed,
                    const std::string& started,
                    const std::vector<std::string>& files) {
  nlohmann::ordered_json j;
  j["stage"] = stage;
  j["version"] = kVersion;
  j["config_hash"] = hex64(cfg::config_hash(c));
  j["seed"] = seed;
  j["started"] = started;
  j["finished"] = iso_now();
  j["files"] = files;
  atomic_write_text(dir + "/manifest_" + stage + ".json", j.dump(2) + "\n");
}

std::string trial_stem(int subject, int borg, int rep) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "s%02d_b%02d_r%d", subject, borg, rep);
  return buf;
}

// ---------------------------------------------------------------------------

void stage_synth(const cfg::PipelineConfig& c, const std::string& dir) {
  std::string started = iso_now();
  fs::create_directories(dir);
  std::vector<seg::Trial> trials = synth::gen_dataset(c.synth);
  std::map<std::pair<int, int>, int> rep;
  nlohmann::ordered_json index;
  index["records"] = nlohmann::json::array();
  std::vector<std::string> files;
  for (const auto& t : trials) {
    int r = rep[{t.subject_id, t.borg}]++;
    std::string stem = trial_stem(t.subject_id, t.borg, r);
    std::string semg_path = dir + "/" + stem + "_semg.csv";
    std::string imu_path = dir + "/" + stem + "_imu.csv";
    dsp::write_csv(t.semg, semg_path);
    dsp::write_csv(t.imu, imu_path);
    index["records"].push_back({{"subject", t.subject_id},
                                {"borg", t.borg},
                                {"rep", r},
                                {"semg", stem + "_semg.csv"},
                                {"imu", stem + "_imu.csv"}});
    files.push_back(semg_path);
    files.push_back(imu_path);
  }
  atomic_write_text(dir + "/index.json", index.dump(2) + "\n");
  files.push_back(dir + "/index.json");
  write_manifest(dir, "synth", c, c.synth.rng_seed, started, files);
  std::printf("synth: %zu trials -> %s\n", trials.size(), dir.c_str());
}

void stage_preprocess(const cfg::PipelineConfig& c, const std::string& out) {
  std::string started = iso_now();
  std::ifstream idx(c.in_dir + "/index.json");
  if (!idx) fail(ErrorKind::Io, "cannot open " + c.in_dir + "/index.json");
  nlohmann::json index = nlohmann::json::parse(idx, nullptr, false);
  if (index.is_discarded()) fail(ErrorKind::Io, "bad index.json");
  std::vector<seg::Trial> trials;
  for (const auto& rec : index["records"]) {
    seg::Trial t;
    t.semg = dsp::read_csv(c.in_dir + "/" + rec["semg"].get<std::string>());
    t.imu = dsp::read_csv(c.in_dir + "/" + rec["imu"].get<std::string>());
    t.subject_id = rec["subject"].get<int>();
    t.borg = rec["borg"].get<int>();
    trials.push_back(std::move(t));
  }
  data::SampleSet set = data::preprocess_dataset(trials, c.dsp);
  fs::create_directories(out);
  data::write_samples(set, out + "/images.bin", out + "/samples.json");
  std::string report = "subject,borg,rep,phase,start_s,end_s\n";
  for (const auto& r : set.segment_report)
    report += std::to_string(r.subject) + "," + std::to_string(r.borg) + "," +
              std::to_string(r.rep) + "," + seg::phase_name(r.phase) + "," +
              train::detail::fmt_num(r.start_s) + "," +
              train::detail::fmt_num(r.end_s) + "\n";
  atomic_write_text(out + "/segments.csv", report);
  write_manifest(out, "preprocess", c, c.synth.rng_seed, started,
                 {out + "/images.bin", out + "/samples.json", out + "/segments.csv"});
  std::printf("preprocess: %zu samples (%zu short holds dropped, %zu unlabeled trials) -> %s\n",
              set.samples.size(), set.dropped_short_holds, set.unlabeled_trials,
              out.c_str());
}

std::vector<int> subject_list(const data::SampleSet& set) {
  std::set<int> s;
  for (const auto& sample : set.samples) s.insert(sample.subject);
  return {s.begin(), s.end()};
}

template <class T>
void run_train_stage(const cfg::PipelineConfig& c, const data::SampleSet& set,
                     const std::vector<train::FoldSpec>& folds, int only_fold,
                     const std::string& out, std::vector<std::string>& files) {
  nn::Variant variant = nn::variant_from_name(c.variant);
  nlohmann::ordered_json agg;
  agg["folds"] = nlohmann::json::array();
  double acc_final = 0, acc_best = 0, f1_final = 0, f1_best = 0;
  int ran = 0;
  for (size_t f = 0; f < folds.size(); ++f) {
    if (only_fold >= 0 && int(f) != only_fold) continue;
    auto run = train::train_fold<T>(set, folds[f], c.train, variant);
    std::string fd = out + "/fold_" + std::to_string(f);
    fs::create_directories(fd);
    train::write_epoch_log(run.result.log, fd + "/epoch_log.csv");
    train::write_metrics_json(run.result.final_metrics, run.result.best_metrics,
                              run.result.best_epoch, fd + "/metrics.json");
    nn::save_checkpoint(*run.final_model, fd + "/ckpt_final.bin");
    nn::save_checkpoint(*run.best_model, fd + "/ckpt_best.bin");
    for (const char* name :
         {"/epoch_log.csv", "/metrics.json", "/ckpt_final.bin", "/ckpt_best.bin"})
      files.push_back(fd + name);
    agg["folds"].push_back({{"fold", f},
                            {"final_accuracy", run.result.final_metrics.accuracy},
                            {"final_macro_f1", run.result.final_metrics.macro_f1},
                            {"best_accuracy", run.result.best_metrics.accuracy},
                            {"best_macro_f1", run.result.best_metrics.macro_f1},
                            {"best_epoch", run.result.best_epoch}});
    acc_final += run.result.final_metrics.accuracy;
    acc_best += run.result.best_metrics.accuracy;
    f1_final += run.result.final_metrics.macro_f1;
    f1_best += run.result.best_metrics.macro_f1;
    ++ran;
    std::printf("fold %zu: final acc %.2f%%, best acc %.2f%% (epoch %d)\n", f,
                run.result.final_metrics.accuracy,
                run.result.best_metrics.accuracy, run.result.best_epoch);
  }
  if (ran > 1) {
    agg["mean"] = {{"final_accuracy", acc_final / ran},
                   {"final_macro_f1", f1_final / ran},
                   {"best_accuracy", acc_best / ran},
                   {"best_macro_f1", f1_best / ran}};
  }
  atomic_write_text(out + "/metrics.json", agg.dump(2) + "\n");
  files.push_back(out + "/metrics.json");
}

void stage_train(const cfg::PipelineConfig& c, const std::string& out, int only_fold) {
  std::string started = iso_now();
  data::SampleSet set = data::read_samples(out + "/images.bin", out + "/samples.json");
  auto folds = train::make_folds(subject_list(set), c.folds_k, c.folds_seed);
  if (only_fold >= int(folds.size()))
    fail(ErrorKind::InvalidFold, "--fold " + std::to_string(only_fold) +
                                     " out of range for k=" + std::to_string(folds.size()));
  std::vector<std::string> files;
  if (c.precision == "f64")
    run_train_stage<double>(c, set, folds, only_fold, out, files);
  else
    run_train_stage<float>(c, set, folds, only_fold, out, files);
  write_manifest(out, "train", c, c.train.rng_seed, started, files);
}

template <class T>
void run_ablate_stage(const cfg::PipelineConfig& c, const data::SampleSet& set,
                      const train::FoldSpec& fold, const std::string& grid,
                      const std::string& out, std::vector<std::string>& files) {
  auto rows = train::ablation_run<T>(set, fold, c.train, grid);
  std::string csv =
      "variant,final_accuracy,final_macro_recall,final_macro_f1,"
      "best_accuracy,best_macro_recall,best_macro_f1\n";
  for (const auto& r : rows) {
    csv += r.name;
    for (double v : {r.final_metrics.accuracy, r.final_metrics.macro_recall,
                     r.final_metrics.macro_f1, r.best_metrics.accuracy,
                     r.best_metrics.macro_recall, r.best_metrics.macro_f1})
      csv += "," + train::detail::fmt_num(v);
    csv += "\n";
    std::printf("%-12s final acc %.2f%% f1 %.2f%%\n", r.name.c_str(),
                r.final_metrics.accuracy, r.final_metrics.macro_f1);
  }
  std::string path = out + "/ablation_" + grid + ".csv";
  atomic_write_text(path, csv);
  files.push_back(path);
}

void stage_ablate(const cfg::PipelineConfig& c, const std::string& out,
                  const std::string& grid, int only_fold) {
  std::string started = iso_now();
  data::SampleSet set = data::read_samples(out + "/images.bin", out + "/samples.json");
  auto folds = train::make_folds(subject_list(set), c.folds_k, c.folds_seed);
  size_t fi = only_fold < 0 ? 0 : size_t(only_fold);
  if (fi >= folds.size())
    fail(ErrorKind::InvalidFold, "--fold out of range for k=" + std::to_string(folds.size()));
  std::vector<std::string> files;
  if (c.precision == "f64")
    run_ablate_stage<double>(c, set, folds[fi], grid, out, files);
  else
    run_ablate_stage<float>(c, set, folds[fi], grid, out, files);
  write_manifest(out, "ablate", c, c.train.rng_seed, started, files);
}

void stage_report(const cfg::PipelineConfig& c, const std::string& out) {
  std::string started = iso_now();
  struct Row {
    std::string name;
    double acc, rec, f1;
  };
  std::vector<Row> final_rows, best_rows;
  for (int f = 0;; ++f) {
    std::ifstream mf(out + "/fold_" + std::to_string(f) + "/metrics.json");
    if (!mf) break;
    nlohmann::json m = nlohmann::json::parse(mf, nullptr, false);
    if (m.is_discarded())
      fail(ErrorKind::Io, "bad metrics.json in fold_" + std::to_string(f));
    final_rows.push_back({"Fold " + std::to_string(f + 1),
                          m["final"]["accuracy"], m["final"]["macro_recall"],
                          m["final"]["macro_f1"]});
    best_rows.push_back({"Fold " + std::to_string(f + 1), m["best"]["accuracy"],
                         m["best"]["macro_recall"], m["best"]["macro_f1"]});
  }
  if (final_rows.empty())
    fail(ErrorKind::Io, "no fold_*/metrics.json under " + out);
  auto add_avg = [](std::vector<Row>& rows) {
    Row avg{"Average", 0, 0, 0};
    for (const auto& r : rows) {
      avg.acc += r.acc;
      avg.rec += r.rec;
      avg.f1 += r.f1;
    }
    avg.acc /= double(rows.size());
    avg.rec /= double(rows.size());
    avg.f1 /= double(rows.size());
    rows.push_back(avg);
  };
  add_avg(final_rows);
  add_avg(best_rows);
  std::string csv = "table,fold,accuracy,macro_recall,macro_f1\n";
  auto print_table = [&](const char* title, const std::vector<Row>& rows) {
    std::printf("%s\n%-10s %10s %10s %10s\n", title, "", "Accuracy", "Recall",
                "F1-score");
    for (const auto& r : rows) {
      std::printf("%-10s %9.2f%% %9.2f%% %9.2f%%\n", r.name.c_str(), r.acc,
                  r.rec, r.f1);
      csv += std::string(title) + "," + r.name + "," +
             train::detail::fmt_num(r.acc) + "," + train::detail::fmt_num(r.rec) +
             "," + train::detail::fmt_num(r.f1) + "\n";
    }
    std::printf("\n");
  };
  print_table("final", final_rows);
  print_table("best", best_rows);
  atomic_write_text(out + "/report.csv", csv);
  write_manifest(out, "report", c, c.train.rng_seed, started, {out + "/report.csv"});
}

}  // namespace

int run_command(const std::vector<std::string>& args) {
  std::vector<std::string> full = args;
  full.insert(full.begin(), "fatiguenet");
  std::vector<const char*> argv;
  for (const auto& a : full) argv.push_back(a.c_str());
  return run_command(int(argv.size()), argv.data());
}

int run_command(int argc, const char* const* argv) {
  if (const char* env = std::getenv("FATIGUENET_THREADS")) {
    int n = std::atoi(env);
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
  }

  CLI::App app{"cross-subject muscle-fatigue detection pipeline"};
  app.require_subcommand(1);
  std::string config_path, out_override, grid;
  int fold = -1;
  uint64_t seed = 0;
  bool have_seed = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "pipeline config JSON");
    cmd->add_option("--out", out_override, "output directory override");
    cmd->add_option_function<uint64_t>(
        "--seed", [&](uint64_t v) { seed = v; have_seed = true; },
        "RNG seed override");
  };
  auto* c_synth = app.add_subcommand("synth", "generate synthetic recordings");
  add_common(c_synth);
  auto* c_pre = app.add_subcommand("preprocess", "raw recordings -> TF images");
  add_common(c_pre);
  auto* c_train = app.add_subcommand("train", "cross-validated training");
  add_common(c_train);
  c_train->add_option("--fold", fold, "train a single fold index");
  auto* c_abl = app.add_subcommand("ablate", "ablation grid on one fold");
  add_common(c_abl);
  c_abl->add_option("--grid", grid, "structural | loss")->required();
  c_abl->add_option("--fold", fold, "fold index (default 0)");
  auto* c_rep = app.add_subcommand("report", "aggregate fold metrics");
  add_common(c_rep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    cfg::PipelineConfig c = config_path.empty()
                                ? cfg::PipelineConfig{}
                                : cfg::parse_config_file(config_path);
    if (have_seed) {
      c.synth.rng_seed = seed;
      c.train.rng_seed = seed;
    }
    cfg::validate_config(c);
    std::string out = out_override.empty() ? c.out_dir : out_override;
    if (app.got_subcommand(c_synth)) {
      stage_synth(c, out_override.empty() ? c.in_dir : out_override);
    } else if (app.got_subcommand(c_pre)) {
      stage_preprocess(c, out);
    } else if (app.got_subcommand(c_train)) {
      stage_train(c, out, fold);
    } else if (app.got_subcommand(c_abl)) {
      stage_ablate(c, out, grid, fold);
    } else if (app.got_subcommand(c_rep)) {
      stage_report(c, out);
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

}  // namespace fatiguenet::cli
