#include "pase/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "pase/errors.hpp"
#include "pase/pate.hpp"
#include "pase/rng.hpp"
#include "pase/switch_ensemble.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace pase {

// --- config JSON ----------------------------------------------------------

namespace {

json train_config_to_json(const TrainConfig& t) {
  return json{{"epochs", t.epochs},
              {"batch_size", t.batch_size},
              {"learning_rate", t.learning_rate},
              {"momentum", t.momentum},
              {"seed", t.seed},
              {"shuffle", t.shuffle}};
}

TrainConfig train_config_from_json(const json& j, const TrainConfig& dflt) {
  TrainConfig t = dflt;
  t.epochs = j.value("epochs", t.epochs);
  t.batch_size = j.value("batch_size", t.batch_size);
  t.learning_rate = j.value("learning_rate", t.learning_rate);
  t.momentum = j.value("momentum", t.momentum);
  t.seed = j.value("seed", t.seed);
  t.shuffle = j.value("shuffle", t.shuffle);
  return t;
}

json config_to_json_obj(const ExperimentConfig& c) {
  json j;
  j["dataset"] = {{"source", c.dataset.source},
                  {"class_count", c.dataset.class_count},
                  {"per_class", c.dataset.per_class},
                  {"dim", c.dataset.dim},
                  {"spread", c.dataset.spread},
                  {"seed", c.dataset.seed},
                  {"csv_path", c.dataset.csv_path},
                  {"csv_has_header", c.dataset.csv_has_header},
                  {"csv_label_column", c.dataset.csv_label_column},
                  {"idx_images", c.dataset.idx_images},
                  {"idx_labels", c.dataset.idx_labels},
                  {"label_noise", c.dataset.label_noise},
                  {"noise_seed", c.dataset.noise_seed}};
  j["repartition"] = {{"target_fraction", c.target_fraction},
                      {"train_fraction", c.train_fraction},
                      {"seed", c.repartition_seed}};
  j["model"] = {{"hidden_dims", c.hidden_dims}};
  j["train"] = {{"baseline", train_config_to_json(c.baseline_train)},
                {"pase", train_config_to_json(c.pase_train)},
                {"teacher", train_config_to_json(c.teacher_train)},
                {"student", train_config_to_json(c.student_train)},
                {"shadow", train_config_to_json(c.shadow_train)},
                {"attack", train_config_to_json(c.attack_train)}};
  j["pase"] = {{"k", c.k}, {"fold_seed", c.pase_fold_seed}};
  j["pate"] = {{"n_teachers", c.n_teachers},
               {"student_fraction", c.student_fraction},
               {"noise_scale", c.vote_noise_scale},
               {"split_seed", c.pate_split_seed},
               {"vote_seed", c.vote_noise_seed}};
  j["attack"] = {{"n_shadows", c.n_shadows},
                 {"per_shadow_n", c.per_shadow_n},
                 {"hidden_dims", c.attack_hidden_dims},
                 {"shadow_seed", c.shadow_seed},
                 {"eval_seed", c.attack_eval_seed}};
  j["master_seed"] = c.master_seed;
  j["timing_repetitions"] = c.timing_repetitions;
  j["out_dir"] = c.out_dir;
  return j;
}

ExperimentConfig config_from_json_obj(const json& j) {
  ExperimentConfig c;
  try {
    if (j.contains("dataset")) {
      const json& d = j["dataset"];
      c.dataset.source = d.value("source", c.dataset.source);
      c.dataset.class_count = d.value("class_count", c.dataset.class_count);
      c.dataset.per_class = d.value("per_class", c.dataset.per_class);
      c.dataset.dim = d.value("dim", c.dataset.dim);
      c.dataset.spread = d.value("spread", c.dataset.spread);
      c.dataset.seed = d.value("seed", c.dataset.seed);
      c.dataset.csv_path = d.value("csv_path", c.dataset.csv_path);
      c.dataset.csv_has_header =
          d.value("csv_has_header", c.dataset.csv_has_header);
      c.dataset.csv_label_column =
          d.value("csv_label_column", c.dataset.csv_label_column);
      c.dataset.idx_images = d.value("idx_images", c.dataset.idx_images);
      c.dataset.idx_labels = d.value("idx_labels", c.dataset.idx_labels);
      c.dataset.label_noise = d.value("label_noise", c.dataset.label_noise);
      c.dataset.noise_seed = d.value("noise_seed", c.dataset.noise_seed);
    }
    if (j.contains("repartition")) {
      const json& r = j["repartition"];
      c.target_fraction = r.value("target_fraction", c.target_fraction);
      c.train_fraction = r.value("train_fraction", c.train_fraction);
      c.repartition_seed = r.value("seed", c.repartition_seed);
    }
    if (j.contains("model"))
      c.hidden_dims = j["model"].value("hidden_dims", c.hidden_dims);
    if (j.contains("train")) {
      const json& t = j["train"];
      if (t.contains("baseline"))
        c.baseline_train = train_config_from_json(t["baseline"], c.baseline_train);
      if (t.contains("pase"))
        c.pase_train = train_config_from_json(t["pase"], c.pase_train);
      if (t.contains("teacher"))
        c.teacher_train = train_config_from_json(t["teacher"], c.teacher_train);
      if (t.contains("student"))
        c.student_train = train_config_from_json(t["student"], c.student_train);
      if (t.contains("shadow"))
        c.shadow_train = train_config_from_json(t["shadow"], c.shadow_train);
      if (t.contains("attack"))
        c.attack_train = train_config_from_json(t["attack"], c.attack_train);
    }
    if (j.contains("pase")) {
      c.k = j["pase"].value("k", c.k);
      c.pase_fold_seed = j["pase"].value("fold_seed", c.pase_fold_seed);
    }
    if (j.contains("pate")) {
      const json& p = j["pate"];
      c.n_teachers = p.value("n_teachers", c.n_teachers);
      c.student_fraction = p.value("student_fraction", c.student_fraction);
      c.vote_noise_scale = p.value("noise_scale", c.vote_noise_scale);
      c.pate_split_seed = p.value("split_seed", c.pate_split_seed);
      c.vote_noise_seed = p.value("vote_seed", c.vote_noise_seed);
    }
    if (j.contains("attack")) {
      const json& a = j["attack"];
      c.n_shadows = a.value("n_shadows", c.n_shadows);
      c.per_shadow_n = a.value("per_shadow_n", c.per_shadow_n);
      c.attack_hidden_dims = a.value("hidden_dims", c.attack_hidden_dims);
      c.shadow_seed = a.value("shadow_seed", c.shadow_seed);
      c.attack_eval_seed = a.value("eval_seed", c.attack_eval_seed);
    }
    c.master_seed = j.value("master_seed", c.master_seed);
    c.timing_repetitions = j.value("timing_repetitions", c.timing_repetitions);
    c.out_dir = j.value("out_dir", c.out_dir);
  } catch (const json::exception& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  return c;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write file: " + path.string());
  out << text;
  if (!out) throw FormatError("write failed: " + path.string());
}

}  // namespace

std::string config_to_json(const ExperimentConfig& cfg) {
  return config_to_json_obj(cfg).dump(2);
}

ExperimentConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  return config_from_json_obj(j);
}

ExperimentConfig load_config(const std::string& path) {
  return config_from_json(read_text(path));
}

void validate_config(const ExperimentConfig& cfg) {
  auto bad = [](const std::string& what) { throw ConfigError(what); };

  if (cfg.dataset.source != "blobs" && cfg.dataset.source != "csv" &&
      cfg.dataset.source != "idx")
    bad("dataset.source must be blobs, csv, or idx (got '" +
        cfg.dataset.source + "')");
  if (cfg.dataset.source == "blobs") {
    if (cfg.dataset.class_count < 2) bad("blobs need at least 2 classes");
    if (cfg.dataset.per_class < 1 || cfg.dataset.dim < 1)
      bad("blobs per_class and dim must be positive");
    if (cfg.dataset.spread < 0) bad("blobs spread must be non-negative");
  }
  if (cfg.dataset.source == "csv" && cfg.dataset.csv_path.empty())
    bad("csv source needs dataset.csv_path");
  if (cfg.dataset.source == "idx" &&
      (cfg.dataset.idx_images.empty() || cfg.dataset.idx_labels.empty()))
    bad("idx source needs dataset.idx_images and dataset.idx_labels");
  if (cfg.dataset.label_noise < 0.0 || cfg.dataset.label_noise > 1.0)
    bad("dataset.label_noise must be in [0,1]");

  if (!(cfg.target_fraction > 0.0 && cfg.target_fraction < 1.0))
    bad("repartition.target_fraction must be in (0,1)");
  if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0))
    bad("repartition.train_fraction must be in (0,1)");

  auto check_dims = [&](const std::vector<int>& dims, const char* name) {
    for (const int d : dims)
      if (d < 1) bad(std::string(name) + " entries must be positive");
  };
  check_dims(cfg.hidden_dims, "model.hidden_dims");
  check_dims(cfg.attack_hidden_dims, "attack.hidden_dims");

  auto check_train = [&](const TrainConfig& t, const char* role) {
    if (t.epochs < 0) bad(std::string("train.") + role + ": negative epochs");
    if (t.batch_size < 1)
      bad(std::string("train.") + role + ": batch_size must be >= 1");
    if (!(t.learning_rate > 0))
      bad(std::string("train.") + role + ": learning_rate must be > 0");
    if (t.momentum < 0.0 || t.momentum >= 1.0)
      bad(std::string("train.") + role + ": momentum must be in [0,1)");
  };
  check_train(cfg.baseline_train, "baseline");
  check_train(cfg.pase_train, "pase");
  check_train(cfg.teacher_train, "teacher");
  check_train(cfg.student_train, "student");
  check_train(cfg.shadow_train, "shadow");
  check_train(cfg.attack_train, "attack");

  if (cfg.k < 2) bad("pase.k must be >= 2");
  if (cfg.n_teachers < 2) bad("pate.n_teachers must be >= 2");
  if (!(cfg.student_fraction > 0.0 && cfg.student_fraction < 1.0))
    bad("pate.student_fraction must be in (0,1)");
  if (cfg.vote_noise_scale < 0) bad("pate.noise_scale must be non-negative");
  if (cfg.n_shadows < 1) bad("attack.n_shadows must be >= 1");
  if (cfg.per_shadow_n < 0) bad("attack.per_shadow_n must be non-negative");
  if (cfg.timing_repetitions < 3) bad("timing_repetitions must be >= 3");
  if (cfg.out_dir.empty()) bad("out_dir must not be empty");
}

std::string config_hash(const ExperimentConfig& cfg) {
  json j = config_to_json_obj(cfg);
  j.erase("out_dir");  // location does not change results
  const std::string s = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (const unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

// --- report JSON ----------------------------------------------------------

namespace {

json attack_report_to_json(const AttackReport& r) {
  return json{{"accuracy", r.accuracy},
              {"confusion",
               {{"tp", r.tp}, {"fp", r.fp}, {"fn", r.fn}, {"tn", r.tn}}},
              {"per_class_correct", r.per_class_correct},
              {"per_class_total", r.per_class_total}};
}

AttackReport attack_report_from_json(const json& j) {
  AttackReport r;
  r.accuracy = j.at("accuracy").get<double>();
  const json& c = j.at("confusion");
  r.tp = c.at("tp").get<long>();
  r.fp = c.at("fp").get<long>();
  r.fn = c.at("fn").get<long>();
  r.tn = c.at("tn").get<long>();
  r.per_class_correct = j.at("per_class_correct").get<std::vector<long>>();
  r.per_class_total = j.at("per_class_total").get<std::vector<long>>();
  return r;
}

}  // namespace

std::string report_to_json_text(const ExperimentReport& r) {
  json j;
  j["format_version"] = 1;
  j["dataset_name"] = r.dataset_name;
  j["config"] = json::parse(r.config_echo);
  j["config_hash"] = r.config_hash_hex;
  j["sizes"] = {{"n_full", r.n_full},   {"n_train", r.n_train},
                {"n_test", r.n_test},   {"n_pool", r.n_pool},
                {"dim", r.dim},         {"class_count", r.class_count}};
  j["utility"] = {{"baseline_train", r.baseline_train_acc},
                  {"baseline_test", r.baseline_test_acc},
                  {"pase_train", r.pase_train_acc},
                  {"pase_test", r.pase_test_acc},
                  {"pate_student", r.pate_student_acc},
                  {"pate_test", r.pate_test_acc}};
  j["attack"] = {{"baseline", attack_report_to_json(r.attack_baseline)},
                 {"pase", attack_report_to_json(r.attack_pase)},
                 {"pate", attack_report_to_json(r.attack_pate)}};
  j["train_seconds"] = {{"baseline", r.baseline_train_seconds},
                        {"pase", r.pase_train_seconds},
                        {"pate", r.pate_train_seconds}};
  j["train_time_ratio"] = {{"baseline", 1.0},
                           {"pase", r.pase_train_ratio},
                           {"pate", r.pate_train_ratio}};
  j["inference_ms_per_sample"] = {{"baseline", r.baseline_infer_ms},
                                  {"pase", r.pase_infer_ms},
                                  {"pate", r.pate_infer_ms}};
  j["meta"] = {{"started_at", r.started_at},
               {"total_seconds", r.total_seconds},
               {"cached_stages", r.cached_stages}};
  return j.dump(2);
}

ExperimentReport report_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("report: ") + e.what());
  }
  ExperimentReport r;
  try {
    r.dataset_name = j.at("dataset_name").get<std::string>();
    r.config_echo = j.at("config").dump(2);
    r.config_hash_hex = j.at("config_hash").get<std::string>();
    const json& s = j.at("sizes");
    r.n_full = s.at("n_full").get<std::size_t>();
    r.n_train = s.at("n_train").get<std::size_t>();
    r.n_test = s.at("n_test").get<std::size_t>();
    r.n_pool = s.at("n_pool").get<std::size_t>();
    r.dim = s.at("dim").get<int>();
    r.class_count = s.at("class_count").get<int>();
    const json& u = j.at("utility");
    r.baseline_train_acc = u.at("baseline_train").get<double>();
    r.baseline_test_acc = u.at("baseline_test").get<double>();
    r.pase_train_acc = u.at("pase_train").get<double>();
    r.pase_test_acc = u.at("pase_test").get<double>();
    r.pate_student_acc = u.at("pate_student").get<double>();
    r.pate_test_acc = u.at("pate_test").get<double>();
    const json& a = j.at("attack");
    r.attack_baseline = attack_report_from_json(a.at("baseline"));
    r.attack_pase = attack_report_from_json(a.at("pase"));
    r.attack_pate = attack_report_from_json(a.at("pate"));
    const json& ts = j.at("train_seconds");
    r.baseline_train_seconds = ts.at("baseline").get<double>();
    r.pase_train_seconds = ts.at("pase").get<double>();
    r.pate_train_seconds = ts.at("pate").get<double>();
    const json& tr = j.at("train_time_ratio");
    r.pase_train_ratio = tr.at("pase").get<double>();
    r.pate_train_ratio = tr.at("pate").get<double>();
    const json& it = j.at("inference_ms_per_sample");
    r.baseline_infer_ms = it.at("baseline").get<double>();
    r.pase_infer_ms = it.at("pase").get<double>();
    r.pate_infer_ms = it.at("pate").get<double>();
    const json& m = j.at("meta");
    r.started_at = m.at("started_at").get<std::string>();
    r.total_seconds = m.at("total_seconds").get<double>();
    r.cached_stages = m.at("cached_stages").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("report: ") + e.what());
  }
  return r;
}

// --- measurement helpers ---------------------------------------------------

TrainRatios measure_training_ratio(const TrainTimings& timings) {
  if (!(timings.baseline_seconds > 0.0))
    throw InputError("measure_training_ratio: baseline timing must be > 0");
  TrainRatios r;
  r.baseline = 1.0;
  r.pase = timings.pase_seconds / timings.baseline_seconds;
  r.pate = timings.pate_seconds / timings.baseline_seconds;
  return r;
}

double measure_inference_time(const PredictFn& predict, const Dataset& test,
                              int repetitions, std::vector<double>* rep_ms) {
  if (repetitions < 3)
    throw ConfigError("measure_inference_time: repetitions must be >= 3");
  if (test.empty()) throw InputError("measure_inference_time: empty test set");

  using clock = std::chrono::steady_clock;
  auto pass = [&] {
    for (std::size_t i = 0; i < test.size(); ++i) {
      volatile double sink = predict(test.row(i))[0];
      (void)sink;
    }
  };

  // warm-up pass doubles as a duration estimate
  const auto w0 = clock::now();
  pass();
  const double est =
      std::chrono::duration<double>(clock::now() - w0).count();

  // loop the set until one repetition is long enough to time reliably
  int loops = 1;
  if (est < 0.03)
    loops = static_cast<int>(std::min(
        10000.0, std::ceil(0.03 / std::max(est, 1e-7))));

  std::vector<double> ms_per_sample;
  for (int rep = 0; rep < repetitions; ++rep) {
    const auto t0 = clock::now();
    for (int l = 0; l < loops; ++l) pass();
    const double seconds =
        std::chrono::duration<double>(clock::now() - t0).count();
    ms_per_sample.push_back(seconds * 1000.0 /
                            (static_cast<double>(test.size()) * loops));
  }
  if (rep_ms) *rep_ms = ms_per_sample;
  std::sort(ms_per_sample.begin(), ms_per_sample.end());
  return ms_per_sample[ms_per_sample.size() / 2];
}

// --- pipeline ---------------------------------------------------------------

namespace {

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::string now_iso8601() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

double accuracy_of(const PredictFn& predict, const Dataset& data) {
  if (data.empty()) throw InputError("accuracy_of: empty dataset");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const ConfidenceVector probs = predict(data.row(i));
    if (argmax_lowest(probs) == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

// Lazily computed, disk-cached pipeline stages. Everything lives under
// out_dir/<config-hash>/, so a cache hit is by construction the same config.
class Pipeline {
 public:
  explicit Pipeline(const ExperimentConfig& cfg)
      : cfg_(cfg), hash_(config_hash(cfg)), dir_(fs::path(cfg.out_dir) / hash_) {
    try {
      validate_config(cfg_);
    } catch (const std::exception& e) {
      throw StageError("config", e.what());
    }
    fs::create_directories(dir_);
    write_text(dir_ / "config.json", config_to_json(cfg_));
  }

  const std::string& hash() const { return hash_; }
  const fs::path& dir() const { return dir_; }
  const std::vector<std::string>& cached_stages() const { return cached_; }

  std::uint64_t eff(std::uint64_t seed) const { return seed + cfg_.master_seed; }

  TrainConfig eff_train(TrainConfig t) const {
    t.seed += cfg_.master_seed;
    return t;
  }

  std::vector<int> utility_dims() const {
    std::vector<int> dims{bundle_.target_train.dim};
    dims.insert(dims.end(), cfg_.hidden_dims.begin(), cfg_.hidden_dims.end());
    dims.push_back(bundle_.target_train.class_count);
    return dims;
  }

  void ensure_data() {
    if (data_ready_) return;
    const std::string stage = "data";
    try {
      const fs::path ds_path = dir_ / "dataset.json";
      const fs::path split_path = dir_ / "split.json";
      if (cfg_.use_cache && fs::exists(ds_path) && fs::exists(split_path)) {
        full_ = load_dataset(ds_path.string());
        bundle_ = apply_split_manifest(full_, split_path.string());
        cached_.push_back(stage);
      } else {
        full_ = make_dataset();
        bundle_ = repartition(full_, cfg_.target_fraction, cfg_.train_fraction,
                              eff(cfg_.repartition_seed));
        save_dataset(full_, ds_path.string());
        save_split_manifest(bundle_, split_path.string());
      }
      data_ready_ = true;
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(stage, e.what());
    }
  }

  void ensure_baseline() {
    if (baseline_ready_) return;
    ensure_data();
    const std::string stage = "baseline";
    try {
      const fs::path model_path = dir_ / "baseline_model.json";
      const fs::path meta_path = dir_ / "baseline_meta.json";
      if (cfg_.use_cache && fs::exists(model_path) && fs::exists(meta_path)) {
        baseline_ = load_model(model_path.string());
        baseline_seconds_ =
            json::parse(read_text(meta_path.string())).at("seconds").get<double>();
        cached_.push_back(stage);
      } else {
        const TrainConfig tc = eff_train(cfg_.baseline_train);
        const auto t0 = std::chrono::steady_clock::now();
        baseline_ = train(init_mlp(utility_dims(), tc.seed),
                          bundle_.target_train, tc);
        baseline_seconds_ = seconds_since(t0);
        save_model(baseline_, model_path.string());
        write_text(meta_path, json{{"seconds", baseline_seconds_}}.dump(2));
      }
      baseline_ready_ = true;
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(stage, e.what());
    }
  }

  void ensure_pase() {
    if (pase_ready_) return;
    ensure_data();
    const std::string stage = "pase";
    try {
      const fs::path ens_dir = dir_ / "pase";
      const fs::path meta_path = dir_ / "pase_meta.json";
      if (cfg_.use_cache && fs::exists(ens_dir / "folds.json") &&
          fs::exists(meta_path)) {
        ensemble_ = load_ensemble(ens_dir.string());
        pase_seconds_ =
            json::parse(read_text(meta_path.string())).at("seconds").get<double>();
        cached_.push_back(stage);
      } else {
        const TrainConfig tc = eff_train(cfg_.pase_train);
        const auto t0 = std::chrono::steady_clock::now();
        const DuplicateGroups dups = find_duplicates(bundle_.target_train);
        const FoldAssignment folds = assign_folds(
            bundle_.target_train, cfg_.k, eff(cfg_.pase_fold_seed), dups);
        ensemble_ = train_pase(bundle_.target_train, folds, utility_dims(), tc);
        pase_seconds_ = seconds_since(t0);
        save_ensemble(ensemble_, ens_dir.string());
        write_text(meta_path, json{{"seconds", pase_seconds_}}.dump(2));
      }
      pase_ready_ = true;
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(stage, e.what());
    }
  }

  void ensure_pate() {
    if (pate_ready_) return;
    ensure_data();
    const std::string stage = "pate";
    try {
      const fs::path pate_dir = dir_ / "pate";
      const fs::path meta_path = dir_ / "pate_meta.json";
      if (cfg_.use_cache && fs::exists(pate_dir / "teachers.json") &&
          fs::exists(pate_dir / "student_model.json") && fs::exists(meta_path)) {
        teachers_ = load_teacher_ensemble(pate_dir.string());
        student_ = load_model((pate_dir / "student_model.json").string());
        pate_seconds_ =
            json::parse(read_text(meta_path.string())).at("seconds").get<double>();
        rebuild_pate_pools();
        cached_.push_back(stage);
      } else {
        split_pate_pools();
        const auto t0 = std::chrono::steady_clock::now();
        teachers_ = train_teachers(teacher_pool_, cfg_.n_teachers,
                                   utility_dims(), eff_train(cfg_.teacher_train));
        student_ = train_student(teachers_, student_pool_, utility_dims(),
                                 eff_train(cfg_.student_train),
                                 cfg_.vote_noise_scale, eff(cfg_.vote_noise_seed));
        pate_seconds_ = seconds_since(t0);
        save_teacher_ensemble(teachers_, pate_dir.string());
        save_model(student_, (pate_dir / "student_model.json").string());
        write_text(meta_path, json{{"seconds", pate_seconds_}}.dump(2));
      }
      pate_ready_ = true;
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(stage, e.what());
    }
  }

  void ensure_attack() {
    if (attack_ready_) return;
    ensure_data();
    const std::string stage = "attack";
    try {
      const fs::path atk_dir = dir_ / "attack";
      if (cfg_.use_cache && fs::exists(atk_dir / "attack.json")) {
        attack_ = load_attack_model(atk_dir.string());
        cached_.push_back(stage);
      } else {
        const Dataset& pool = bundle_.attack_pool;
        int per_shadow = cfg_.per_shadow_n;
        if (per_shadow <= 0)
          per_shadow = static_cast<int>(std::min(bundle_.target_train.size(),
                                                 pool.size() / 2));
        const ShadowSet shadows = train_shadows(
            pool, cfg_.n_shadows, per_shadow, utility_dims(),
            eff_train(cfg_.shadow_train), eff(cfg_.shadow_seed));
        const std::vector<AttackRecord> records =
            build_attack_records(shadows, pool);
        fs::create_directories(atk_dir);
        save_attack_records(records, (atk_dir / "records.json").string());
        std::vector<int> attack_dims{pool.class_count};
        attack_dims.insert(attack_dims.end(), cfg_.attack_hidden_dims.begin(),
                           cfg_.attack_hidden_dims.end());
        attack_dims.push_back(2);
        attack_ = train_attack(records, pool.class_count, attack_dims,
                               eff_train(cfg_.attack_train));
        save_attack_model(attack_, atk_dir.string());
      }
      attack_ready_ = true;
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(stage, e.what());
    }
  }

  ExperimentReport evaluate_all() {
    const auto run_t0 = std::chrono::steady_clock::now();
    ExperimentReport rep;
    rep.started_at = now_iso8601();

    ensure_baseline();
    ensure_pase();
    ensure_pate();
    ensure_attack();

    const std::string stage = "evaluate";
    try {
      rep.dataset_name = dataset_name();
      rep.config_echo = config_to_json(cfg_);
      rep.config_hash_hex = hash_;
      rep.n_full = full_.size();
      rep.n_train = bundle_.target_train.size();
      rep.n_test = bundle_.target_test.size();
      rep.n_pool = bundle_.attack_pool.size();
      rep.dim = full_.dim;
      rep.class_count = full_.class_count;

      const PredictFn baseline_fn = [this](std::span<const double> x) {
        return forward(baseline_, x);
      };
      const PredictFn pase_fn = [this](std::span<const double> x) {
        return pase_predict(ensemble_, x);
      };
      const PredictFn pate_fn = [this](std::span<const double> x) {
        return forward(student_, x);
      };

      rep.baseline_train_acc = evaluate(baseline_, bundle_.target_train);
      rep.baseline_test_acc = evaluate(baseline_, bundle_.target_test);
      rep.pase_train_acc = accuracy_of(pase_fn, bundle_.target_train);
      rep.pase_test_acc = accuracy_of(pase_fn, bundle_.target_test);
      rep.pate_student_acc = evaluate(student_, student_pool_);
      rep.pate_test_acc = evaluate(student_, bundle_.target_test);

      const std::uint64_t eval_seed = eff(cfg_.attack_eval_seed);
      rep.attack_baseline =
          attack_accuracy(attack_, baseline_fn, bundle_.target_train,
                          bundle_.target_test, eval_seed);
      rep.attack_pase = attack_accuracy(attack_, pase_fn, bundle_.target_train,
                                        bundle_.target_test, eval_seed);
      // the PATE model's training data, in the attack's sense, is the
      // teacher side of the split
      rep.attack_pate = attack_accuracy(attack_, pate_fn, teacher_pool_,
                                        bundle_.target_test, eval_seed);

      rep.baseline_train_seconds = baseline_seconds_;
      rep.pase_train_seconds = pase_seconds_;
      rep.pate_train_seconds = pate_seconds_;
      const TrainRatios ratios = measure_training_ratio(
          {baseline_seconds_, pase_seconds_, pate_seconds_});
      rep.pase_train_ratio = ratios.pase;
      rep.pate_train_ratio = ratios.pate;

      rep.baseline_infer_ms = measure_inference_time(
          baseline_fn, bundle_.target_test, cfg_.timing_repetitions);
      rep.pase_infer_ms = measure_inference_time(
          pase_fn, bundle_.target_test, cfg_.timing_repetitions);
      rep.pate_infer_ms = measure_inference_time(
          pate_fn, bundle_.target_test, cfg_.timing_repetitions);

      rep.cached_stages = cached_;
      rep.total_seconds = seconds_since(run_t0);
      write_text(dir_ / "report.json", report_to_json_text(rep));
      // convenience copy at the output root, pointing at the latest run
      write_text(fs::path(cfg_.out_dir) / "report.json",
                 report_to_json_text(rep));
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(stage, e.what());
    }
    return rep;
  }

 private:
  std::string dataset_name() const {
    if (cfg_.dataset.source == "csv")
      return fs::path(cfg_.dataset.csv_path).stem().string();
    if (cfg_.dataset.source == "idx") return "idx";
    return "blobs";
  }

  Dataset make_dataset() const {
    Dataset ds;
    if (cfg_.dataset.source == "blobs") {
      ds = gen_blobs(cfg_.dataset.class_count, cfg_.dataset.per_class,
                     cfg_.dataset.dim, cfg_.dataset.spread,
                     eff(cfg_.dataset.seed));
    } else if (cfg_.dataset.source == "csv") {
      ds = load_csv(cfg_.dataset.csv_path, cfg_.dataset.csv_has_header,
                    cfg_.dataset.csv_label_column);
    } else if (cfg_.dataset.source == "idx") {
      ds = load_idx(cfg_.dataset.idx_images, cfg_.dataset.idx_labels);
    } else {
      throw ConfigError("unknown dataset source: " + cfg_.dataset.source);
    }
    if (cfg_.dataset.label_noise > 0.0)
      apply_label_noise(ds, cfg_.dataset.label_noise,
                        eff(cfg_.dataset.noise_seed));
    return ds;
  }

  // seeded shuffle of target_train, teacher share first
  void split_pate_pools() {
    const Dataset& train = bundle_.target_train;
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(eff(cfg_.pate_split_seed));
    shuffle(order, rng);
    auto student_n = static_cast<std::size_t>(
        cfg_.student_fraction * static_cast<double>(train.size()));
    if (student_n == 0 || student_n >= train.size())
      throw ConfigError("pate: student_fraction leaves an empty pool");
    const std::size_t teacher_n = train.size() - student_n;
    teacher_pool_ = subset(
        train, std::span<const std::size_t>(order.data(), teacher_n));
    student_pool_ = subset(train, std::span<const std::size_t>(
                                      order.data() + teacher_n, student_n));
  }

  // teacher ids are recorded in the ensemble; the student pool is the rest
  void rebuild_pate_pools() {
    const Dataset& train = bundle_.target_train;
    std::vector<std::size_t> teacher_rows, student_rows;
    for (std::size_t i = 0; i < train.size(); ++i)
      (teachers_.partition.count(train.ids[i]) ? teacher_rows : student_rows)
          .push_back(i);
    teacher_pool_ = subset(train, teacher_rows);
    student_pool_ = subset(train, student_rows);
  }

  ExperimentConfig cfg_;
  std::string hash_;
  fs::path dir_;
  std::vector<std::string> cached_;

  Dataset full_;
  SplitBundle bundle_;
  bool data_ready_ = false;

  MlpModel baseline_;
  double baseline_seconds_ = 0.0;
  bool baseline_ready_ = false;

  SwitchEnsemble ensemble_;
  double pase_seconds_ = 0.0;
  bool pase_ready_ = false;

  TeacherEnsemble teachers_;
  MlpModel student_;
  Dataset teacher_pool_, student_pool_;
  double pate_seconds_ = 0.0;
  bool pate_ready_ = false;

  AttackModel attack_;
  bool attack_ready_ = false;
};

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  Pipeline p(cfg);
  return p.evaluate_all();
}

std::vector<std::string> stage_gen_data(const ExperimentConfig& cfg) {
  Pipeline p(cfg);
  p.ensure_data();
  return {(p.dir() / "dataset.json").string(), (p.dir() / "split.json").string()};
}

std::vector<std::string> stage_train_baseline(const ExperimentConfig& cfg) {
  Pipeline p(cfg);
  p.ensure_baseline();
  return {(p.dir() / "baseline_model.json").string()};
}

std::vector<std::string> stage_train_pase(const ExperimentConfig& cfg) {
  Pipeline p(cfg);
  p.ensure_pase();
  return {(p.dir() / "pase").string()};
}

std::vector<std::string> stage_train_pate(const ExperimentConfig& cfg) {
  Pipeline p(cfg);
  p.ensure_pate();
  return {(p.dir() / "pate").string()};
}

// --- rendering --------------------------------------------------------------

namespace {

std::string pct(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", fraction * 100.0);
  return buf;
}

std::string num(double v, const char* fmt = "%.2f") {
  char buf[32];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

}  // namespace

std::string render_report(const ExperimentReport& r, const std::string& format) {
  if (format == "json") return report_to_json_text(r);

  if (format == "markdown" || format == "md") {
    std::ostringstream out;
    out << "# Privacy/utility tradeoff report (" << r.dataset_name << ")\n\n";
    out << "## Utility accuracy\n\n";
    out << "| Dataset | Baseline | PASE | PATE |\n|---|---|---|---|\n";
    out << "| " << r.dataset_name << " | " << pct(r.baseline_test_acc) << " | "
        << pct(r.pase_test_acc) << " | " << pct(r.pate_test_acc) << " |\n\n";
    out << "## Attack accuracy\n\n";
    out << "| Dataset | Baseline | PASE | PATE |\n|---|---|---|---|\n";
    out << "| " << r.dataset_name << " | " << pct(r.attack_baseline.accuracy)
        << " | " << pct(r.attack_pase.accuracy) << " | "
        << pct(r.attack_pate.accuracy) << " |\n\n";
    out << "## Training time (ratio over baseline)\n\n";
    out << "| Dataset | Baseline | PASE | PATE |\n|---|---|---|---|\n";
    out << "| " << r.dataset_name << " | 1 | " << num(r.pase_train_ratio)
        << " | " << num(r.pate_train_ratio) << " |\n\n";
    out << "## Inference time (ms per sample)\n\n";
    out << "| Dataset | Baseline | PASE | PATE |\n|---|---|---|---|\n";
    out << "| " << r.dataset_name << " | " << num(r.baseline_infer_ms, "%.4f")
        << " | " << num(r.pase_infer_ms, "%.4f") << " | "
        << num(r.pate_infer_ms, "%.4f") << " |\n";
    return out.str();
  }

  if (format == "csv") {
    std::ostringstream out;
    out << "dataset,model,metric,value\n";
    const struct {
      const char* model;
      double utility, attack, ratio, infer;
    } rows[] = {
        {"baseline", r.baseline_test_acc, r.attack_baseline.accuracy, 1.0,
         r.baseline_infer_ms},
        {"pase", r.pase_test_acc, r.attack_pase.accuracy, r.pase_train_ratio,
         r.pase_infer_ms},
        {"pate", r.pate_test_acc, r.attack_pate.accuracy, r.pate_train_ratio,
         r.pate_infer_ms},
    };
    char buf[64];
    for (const auto& row : rows) {
      auto emit = [&](const char* metric, double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << r.dataset_name << ',' << row.model << ',' << metric << ',' << buf
            << '\n';
      };
      emit("utility_accuracy", row.utility);
      emit("attack_accuracy", row.attack);
      emit("train_time_ratio", row.ratio);
      emit("inference_ms_per_sample", row.infer);
    }
    return out.str();
  }

  throw UsageError("unknown report format: " + format +
                   " (expected json, markdown, or csv)");
}

}  // namespace pase
