#include "pase/attack.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "json.hpp"
#include "pase/errors.hpp"
#include "pase/rng.hpp"

namespace fs = std::filesystem;

namespace pase {

std::vector<double> AttackReport::per_class_accuracy() const {
  std::vector<double> out(per_class_total.size(), 0.0);
  for (std::size_t c = 0; c < per_class_total.size(); ++c)
    out[c] = per_class_total[c] > 0
                 ? static_cast<double>(per_class_correct[c]) /
                       static_cast<double>(per_class_total[c])
                 : std::numeric_limits<double>::quiet_NaN();
  return out;
}

ShadowSet train_shadows(const Dataset& pool, int n_shadows, int per_shadow_n,
                        const std::vector<int>& layer_dims,
                        const TrainConfig& cfg, std::uint64_t seed) {
  if (n_shadows < 1) throw ConfigError("train_shadows: n_shadows must be >= 1");
  if (per_shadow_n < 1)
    throw ConfigError("train_shadows: per_shadow_n must be >= 1");
  if (2 * static_cast<std::size_t>(per_shadow_n) > pool.size())
    throw ConfigError(
        "train_shadows: pool of " + std::to_string(pool.size()) +
        " cannot supply " + std::to_string(per_shadow_n) +
        " disjoint in and out samples per shadow");

  ShadowSet out;
  Rng sampler(seed);
  std::vector<std::size_t> order(pool.size());

  for (int s = 0; s < n_shadows; ++s) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle(order, sampler);

    std::vector<std::size_t> in_rows(order.begin(), order.begin() + per_shadow_n);
    std::vector<std::size_t> out_rows(order.begin() + per_shadow_n,
                                      order.begin() + 2 * per_shadow_n);

    TrainConfig shadow_cfg = cfg;
    shadow_cfg.seed = seed + static_cast<std::uint64_t>(s) + 1;
    const Dataset train_part = subset(pool, in_rows);
    MlpModel model = init_mlp(layer_dims, shadow_cfg.seed);
    out.models.push_back(train(std::move(model), train_part, shadow_cfg));
    out.train_rows.push_back(std::move(in_rows));
    out.out_rows.push_back(std::move(out_rows));
  }
  return out;
}

std::vector<AttackRecord> build_attack_records(const ShadowSet& shadows,
                                               const Dataset& pool) {
  std::vector<AttackRecord> out;
  for (std::size_t s = 0; s < shadows.models.size(); ++s) {
    const MlpModel& model = shadows.models[s];
    for (const std::size_t r : shadows.train_rows[s])
      out.push_back({forward(model, pool.row(r)), pool.labels[r], 1});
    for (const std::size_t r : shadows.out_rows[s])
      out.push_back({forward(model, pool.row(r)), pool.labels[r], 0});
  }
  return out;
}

AttackModel train_attack(const std::vector<AttackRecord>& records,
                         int class_count, const std::vector<int>& layer_dims,
                         const TrainConfig& cfg) {
  if (records.empty()) throw InputError("train_attack: no records");
  if (layer_dims.size() < 2 || layer_dims.front() != class_count ||
      layer_dims.back() != 2)
    throw ConfigError(
        "train_attack: layer_dims must map class_count inputs to 2 outputs");

  AttackModel out;
  out.class_count = class_count;
  out.per_class.resize(class_count);

  for (int c = 0; c < class_count; ++c) {
    Dataset ds;
    ds.dim = class_count;
    ds.class_count = 2;
    long in_count = 0, out_count = 0;
    for (const AttackRecord& rec : records) {
      if (rec.true_class != c) continue;
      ds.features.insert(ds.features.end(), rec.confidence.begin(),
                         rec.confidence.end());
      ds.labels.push_back(rec.membership);
      ds.ids.push_back(ds.labels.size() - 1);
      (rec.membership == 1 ? in_count : out_count)++;
    }

    PerClassAttacker& atk = out.per_class[c];
    if (in_count == 0 || out_count == 0) {
      std::cerr << "warning: attack class " << c
                << " has single-label records (in=" << in_count
                << ", out=" << out_count << "); using majority stub\n";
      atk.stub = true;
      atk.majority = in_count >= out_count ? 1 : 0;
      continue;
    }

    TrainConfig class_cfg = cfg;
    class_cfg.seed = cfg.seed + static_cast<std::uint64_t>(c);
    MlpModel model = init_mlp(layer_dims, class_cfg.seed);
    atk.model = train(std::move(model), ds, class_cfg);
  }
  return out;
}

int predict_membership(const AttackModel& attack,
                       const ConfidenceVector& confidence, int true_class) {
  if (true_class < 0 || true_class >= attack.class_count)
    throw InputError("predict_membership: class " +
                     std::to_string(true_class) + " out of range");
  const PerClassAttacker& atk = attack.per_class[true_class];
  if (atk.stub) return atk.majority;
  return argmax_lowest(forward(atk.model, confidence));
}

AttackReport attack_accuracy(const AttackModel& attack,
                             const PredictFn& target_query,
                             const Dataset& member_set,
                             const Dataset& nonmember_set,
                             std::uint64_t seed) {
  if (member_set.empty() || nonmember_set.empty())
    throw InputError("attack_accuracy: empty evaluation set");

  // balance by truncating the larger side to a seeded subsample
  const std::size_t m = std::min(member_set.size(), nonmember_set.size());
  Rng rng(seed);
  auto pick_rows = [&](const Dataset& ds) {
    std::vector<std::size_t> rows(ds.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    if (ds.size() > m) {
      shuffle(rows, rng);
      rows.resize(m);
      std::sort(rows.begin(), rows.end());
    }
    return rows;
  };
  const std::vector<std::size_t> member_rows = pick_rows(member_set);
  const std::vector<std::size_t> nonmember_rows = pick_rows(nonmember_set);

  AttackReport rep;
  rep.per_class_correct.assign(attack.class_count, 0);
  rep.per_class_total.assign(attack.class_count, 0);

  auto eval_side = [&](const Dataset& ds, const std::vector<std::size_t>& rows,
                       int membership) {
    for (const std::size_t r : rows) {
      const ConfidenceVector conf = target_query(ds.row(r));
      const int cls = ds.labels[r];
      const int said = predict_membership(attack, conf, cls);
      if (membership == 1) {
        said == 1 ? ++rep.tp : ++rep.fn;
      } else {
        said == 1 ? ++rep.fp : ++rep.tn;
      }
      ++rep.per_class_total[cls];
      if (said == membership) ++rep.per_class_correct[cls];
    }
  };
  eval_side(member_set, member_rows, 1);
  eval_side(nonmember_set, nonmember_rows, 0);

  rep.accuracy =
      static_cast<double>(rep.tp + rep.tn) / static_cast<double>(rep.total());
  return rep;
}

// --- persistence ---------------------------------------------------------

void save_attack_model(const AttackModel& attack, const std::string& dir) {
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["format_version"] = 1;
  manifest["class_count"] = attack.class_count;
  nlohmann::json classes = nlohmann::json::array();
  for (int c = 0; c < attack.class_count; ++c) {
    const PerClassAttacker& atk = attack.per_class[c];
    nlohmann::json e;
    e["stub"] = atk.stub;
    e["majority"] = atk.majority;
    if (!atk.stub) {
      const std::string file = "attack_class_" + std::to_string(c) + ".json";
      save_model(atk.model, (fs::path(dir) / file).string());
      e["model"] = file;
    }
    classes.push_back(e);
  }
  manifest["classes"] = classes;
  std::ofstream out(fs::path(dir) / "attack.json", std::ios::trunc);
  out << manifest.dump(2);
}

void save_attack_records(const std::vector<AttackRecord>& records,
                         const std::string& path) {
  nlohmann::json j;
  j["format_version"] = 1;
  nlohmann::json items = nlohmann::json::array();
  for (const AttackRecord& r : records)
    items.push_back({{"confidence", r.confidence},
                     {"true_class", r.true_class},
                     {"membership", r.membership}});
  j["records"] = std::move(items);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write file: " + path);
  out << j.dump();
}

std::vector<AttackRecord> load_attack_records(const std::string& path) {
  nlohmann::json j;
  try {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open file: " + path);
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  std::vector<AttackRecord> out;
  try {
    for (const auto& e : j.at("records"))
      out.push_back({e.at("confidence").get<ConfidenceVector>(),
                     e.at("true_class").get<int>(),
                     e.at("membership").get<int>()});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  return out;
}

AttackModel load_attack_model(const std::string& dir) {
  nlohmann::json manifest;
  try {
    std::ifstream in(fs::path(dir) / "attack.json");
    if (!in) throw FormatError(dir + ": missing attack.json");
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(dir + ": " + e.what());
  }

  AttackModel out;
  try {
    out.class_count = manifest.at("class_count").get<int>();
    for (const auto& e : manifest.at("classes")) {
      PerClassAttacker atk;
      atk.stub = e.at("stub").get<bool>();
      atk.majority = e.at("majority").get<int>();
      if (!atk.stub)
        atk.model = load_model(
            (fs::path(dir) / e.at("model").get<std::string>()).string());
      out.per_class.push_back(std::move(atk));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(dir + ": " + e.what());
  }
  if (static_cast<int>(out.per_class.size()) != out.class_count)
    throw FormatError(dir + ": class count mismatch in attack.json");
  return out;
}

}  // namespace pase
