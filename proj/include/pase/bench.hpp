#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pase/attack.hpp"
#include "pase/dataset.hpp"
#include "pase/mlp.hpp"

namespace pase {

// Dataset source plus generator parameters. Exactly one source is active.
// Defaults describe the calibrated desk-scale benchmark: enough classes that
// the PATE student is data-starved, enough overlap that the baseline's
// memorization is visible to the attack.
struct DatasetSpec {
  std::string source = "blobs";  // blobs | csv | idx

  // blobs
  int class_count = 15;
  int per_class = 100;
  int dim = 12;
  double spread = 2.2;
  std::uint64_t seed = 7;

  // csv
  std::string csv_path;
  bool csv_has_header = false;
  int csv_label_column = -1;

  // idx
  std::string idx_images;
  std::string idx_labels;

  // applied after loading/generation
  double label_noise = 0.10;
  std::uint64_t noise_seed = 97;
};

// Fully determines a run; every random draw traces back to these seeds plus
// the master seed offset.
struct ExperimentConfig {
  DatasetSpec dataset;

  double target_fraction = 0.5;
  double train_fraction = 0.5;
  std::uint64_t repartition_seed = 11;

  std::vector<int> hidden_dims = {128};  // utility model hidden widths

  TrainConfig baseline_train{200, 32, 0.05, 0.9, 100, true};
  TrainConfig pase_train{200, 32, 0.05, 0.9, 200, true};
  TrainConfig teacher_train{200, 32, 0.05, 0.9, 300, true};
  TrainConfig student_train{200, 32, 0.05, 0.9, 400, true};
  TrainConfig shadow_train{200, 32, 0.05, 0.9, 500, true};
  TrainConfig attack_train{120, 64, 0.05, 0.9, 600, true};

  int k = 5;  // switching ensemble size
  std::uint64_t pase_fold_seed = 37;

  int n_teachers = 10;
  double student_fraction = 0.10;
  double vote_noise_scale = 0.0;
  std::uint64_t pate_split_seed = 23;
  std::uint64_t vote_noise_seed = 29;

  int n_shadows = 10;
  int per_shadow_n = 0;  // 0 = min(target_train size, pool size / 2)
  std::vector<int> attack_hidden_dims = {32};
  std::uint64_t shadow_seed = 41;
  std::uint64_t attack_eval_seed = 17;

  // Added to every stage seed, so one flag re-runs the whole experiment
  // under fresh randomness.
  std::uint64_t master_seed = 0;

  int timing_repetitions = 3;
  std::string out_dir = "out";
  bool use_cache = true;
};

std::string config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string config_hash(const ExperimentConfig& cfg);

// Rejects invalid parameter combinations up front, before any stage runs.
void validate_config(const ExperimentConfig& cfg);

// Everything the four tables need, for one dataset. Non-timing fields are
// deterministic under a fixed config.
struct ExperimentReport {
  std::string dataset_name;
  std::string config_echo;  // JSON text of the config that produced this
  std::string config_hash_hex;

  std::size_t n_full = 0, n_train = 0, n_test = 0, n_pool = 0;
  int dim = 0, class_count = 0;

  // utility accuracies, fractions in [0,1]
  double baseline_train_acc = 0.0, baseline_test_acc = 0.0;
  double pase_train_acc = 0.0, pase_test_acc = 0.0;
  double pate_student_acc = 0.0, pate_test_acc = 0.0;

  AttackReport attack_baseline, attack_pase, attack_pate;

  double baseline_train_seconds = 0.0;
  double pase_train_seconds = 0.0;
  double pate_train_seconds = 0.0;

  // ratios over baseline training time; baseline entry is 1 by definition
  double pase_train_ratio = 0.0;
  double pate_train_ratio = 0.0;

  double baseline_infer_ms = 0.0;
  double pase_infer_ms = 0.0;
  double pate_infer_ms = 0.0;

  std::string started_at;
  double total_seconds = 0.0;
  std::vector<std::string> cached_stages;
};

std::string report_to_json_text(const ExperimentReport& report);
ExperimentReport report_from_json_text(const std::string& text);

// The full pipeline: repartition, baseline, switching ensemble, teacher /
// student, shadows and attack, evaluations, timings. Stage artifacts land in
// cfg.out_dir keyed by the config hash and are reused on re-runs when
// cfg.use_cache is set (recorded timings are reused with them). Failures
// surface as StageError; artifacts written so far stay on disk.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

// Individual stages, for the resumable CLI verbs. Each returns the artifact
// paths it produced or reused.
std::vector<std::string> stage_gen_data(const ExperimentConfig& cfg);
std::vector<std::string> stage_train_baseline(const ExperimentConfig& cfg);
std::vector<std::string> stage_train_pase(const ExperimentConfig& cfg);
std::vector<std::string> stage_train_pate(const ExperimentConfig& cfg);

struct TrainTimings {
  double baseline_seconds = 0.0;
  double pase_seconds = 0.0;
  double pate_seconds = 0.0;
};

struct TrainRatios {
  double baseline = 1.0;
  double pase = 0.0;
  double pate = 0.0;
};

TrainRatios measure_training_ratio(const TrainTimings& timings);

// Median over `repetitions` of (wall time / samples), in milliseconds. The
// test set loops enough times per repetition that one repetition is long
// enough to time; one warm-up pass runs first. rep_ms, when given, receives
// the raw per-repetition values.
double measure_inference_time(const PredictFn& predict, const Dataset& test,
                              int repetitions,
                              std::vector<double>* rep_ms = nullptr);

// json | markdown | csv. Markdown emits the four tables (utility accuracy,
// attack accuracy, training time, inference time).
std::string render_report(const ExperimentReport& report,
                          const std::string& format);

}  // namespace pase
