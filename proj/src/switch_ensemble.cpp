#include "pase/switch_ensemble.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "pase/errors.hpp"
#include "pase/rng.hpp"

namespace fs = std::filesystem;

namespace pase {

FoldAssignment assign_folds(const Dataset& train, int k, std::uint64_t seed,
                            const DuplicateGroups& dups) {
  if (k < 2) throw ConfigError("assign_folds: k must be >= 2");
  if (k > dups.group_count())
    throw ConfigError("assign_folds: k=" + std::to_string(k) +
                      " exceeds the " + std::to_string(dups.group_count()) +
                      " distinct feature groups");
  for (std::size_t i = 0; i < train.size(); ++i)
    if (!dups.group_of.count(train.ids[i]))
      throw InputError("assign_folds: duplicate groups do not cover id " +
                       std::to_string(train.ids[i]));

  std::vector<int> group_order(dups.group_count());
  for (std::size_t g = 0; g < group_order.size(); ++g)
    group_order[g] = static_cast<int>(g);
  Rng rng(seed);
  shuffle(group_order, rng);

  // Deal each group to the currently smallest fold (ties to the lowest fold
  // index). For singleton groups this is round-robin; larger groups keep the
  // imbalance bounded by the largest group size.
  FoldAssignment out;
  out.k = k;
  out.fold_of.reserve(train.size());
  std::vector<std::size_t> fold_sizes(k, 0);
  for (const int g : group_order) {
    int target = 0;
    for (int f = 1; f < k; ++f)
      if (fold_sizes[f] < fold_sizes[target]) target = f;
    for (const std::uint64_t id : dups.members[g]) out.fold_of[id] = target;
    fold_sizes[target] += dups.members[g].size();
  }
  return out;
}

SwitchIndex SwitchIndex::build(const Dataset& train) {
  if (train.empty()) throw InputError("SwitchIndex: empty training set");
  SwitchIndex idx;
  idx.features_ = train.features;
  idx.ids_ = train.ids;
  idx.dim_ = train.dim;
  idx.norms_.resize(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto row = train.row(i);
    double s = 0.0;
    for (const double v : row) s += v * v;
    idx.norms_[i] = s;
  }
  return idx;
}

SwitchIndex::Hit SwitchIndex::nearest(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != dim_)
    throw InputError("nearest: query has dim " + std::to_string(x.size()) +
                     ", index expects " + std::to_string(dim_));

  double x_norm = 0.0;
  for (const double v : x) x_norm += v * v;

  Hit best{0, 0.0};
  bool have = false;
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    const double* row = features_.data() + i * dim_;
    double dot = 0.0;
    for (int j = 0; j < dim_; ++j) dot += row[j] * x[j];
    double d = norms_[i] - 2.0 * dot + x_norm;
    if (d < 0.0) d = 0.0;
    if (!have || d < best.squared_distance ||
        (d == best.squared_distance && ids_[i] < best.id)) {
      best = {ids_[i], d};
      have = true;
    }
  }
  return best;
}

SwitchEnsemble train_pase(const Dataset& train, const FoldAssignment& folds,
                          const std::vector<int>& layer_dims,
                          const TrainConfig& cfg) {
  if (folds.k < 2) throw ConfigError("train_pase: fold assignment has k < 2");
  for (std::size_t i = 0; i < train.size(); ++i)
    if (!folds.fold_of.count(train.ids[i]))
      throw InputError("train_pase: fold assignment does not cover id " +
                       std::to_string(train.ids[i]));

  SwitchEnsemble ens;
  ens.folds = folds;
  ens.models.reserve(folds.k);
  ens.trained_ids.resize(folds.k);

  for (int j = 0; j < folds.k; ++j) {
    std::vector<std::size_t> rows;
    rows.reserve(train.size());
    for (std::size_t i = 0; i < train.size(); ++i)
      if (folds.fold_of.at(train.ids[i]) != j) rows.push_back(i);
    if (rows.empty())
      throw ConfigError("train_pase: fold " + std::to_string(j) +
                        " holds the entire training set");
    const Dataset part = subset(train, rows);

    TrainConfig model_cfg = cfg;
    model_cfg.seed = cfg.seed + static_cast<std::uint64_t>(j);
    MlpModel model = init_mlp(layer_dims, model_cfg.seed);
    ens.models.push_back(pase::train(std::move(model), part, model_cfg));

    ens.trained_ids[j] = part.ids;
    std::sort(ens.trained_ids[j].begin(), ens.trained_ids[j].end());
  }

  ens.index = SwitchIndex::build(train);
  return ens;
}

std::pair<SwitchIndex::Hit, int> nearest_with_fold(const SwitchEnsemble& ens,
                                                   std::span<const double> x) {
  const SwitchIndex::Hit hit = ens.index.nearest(x);
  const auto it = ens.folds.fold_of.find(hit.id);
  if (it == ens.folds.fold_of.end())
    throw InputError("ensemble fold assignment is missing id " +
                     std::to_string(hit.id));
  return {hit, it->second};
}

int select_model(const SwitchEnsemble& ens, std::span<const double> x) {
  return nearest_with_fold(ens, x).second;
}

ConfidenceVector pase_predict(const SwitchEnsemble& ens,
                              std::span<const double> x) {
  return forward(ens.models[select_model(ens, x)], x);
}

// --- persistence ---------------------------------------------------------

void save_ensemble(const SwitchEnsemble& ens, const std::string& dir) {
  fs::create_directories(dir);
  for (std::size_t j = 0; j < ens.models.size(); ++j)
    save_model(ens.models[j], (fs::path(dir) / ("model_" + std::to_string(j) + ".json")).string());

  // fold manifest, aligned id/fold arrays in index row order
  nlohmann::json folds;
  folds["format_version"] = 1;
  folds["k"] = ens.folds.k;
  std::vector<std::uint64_t> ids = ens.index.ids();
  std::vector<int> fold_list;
  fold_list.reserve(ids.size());
  for (const auto id : ids) fold_list.push_back(ens.folds.fold_of.at(id));
  folds["ids"] = ids;
  folds["folds"] = fold_list;
  std::ofstream fj(fs::path(dir) / "folds.json", std::ios::trunc);
  fj << folds.dump(2);

  const std::string matrix_file = "features.bin";
  save_matrix((fs::path(dir) / matrix_file).string(), ens.index.features(),
              ens.index.size(), ens.index.dim());
  nlohmann::json index;
  index["format_version"] = 1;
  index["matrix"] = matrix_file;
  std::ofstream ij(fs::path(dir) / "index.json", std::ios::trunc);
  ij << index.dump(2);
}

SwitchEnsemble load_ensemble(const std::string& dir) {
  nlohmann::json folds, index;
  try {
    std::ifstream fj(fs::path(dir) / "folds.json");
    if (!fj) throw FormatError(dir + ": missing folds.json");
    fj >> folds;
    std::ifstream ij(fs::path(dir) / "index.json");
    if (!ij) throw FormatError(dir + ": missing index.json");
    ij >> index;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(dir + ": " + e.what());
  }

  SwitchEnsemble ens;
  try {
    ens.folds.k = folds.at("k").get<int>();
    const auto ids = folds.at("ids").get<std::vector<std::uint64_t>>();
    const auto fold_list = folds.at("folds").get<std::vector<int>>();
    if (ids.size() != fold_list.size())
      throw FormatError(dir + ": folds.json id/fold arrays differ in length");
    for (std::size_t i = 0; i < ids.size(); ++i)
      ens.folds.fold_of[ids[i]] = fold_list[i];

    std::uint64_t rows = 0, cols = 0;
    const std::string matrix_file = index.at("matrix").get<std::string>();
    Dataset train;
    train.features =
        load_matrix((fs::path(dir) / matrix_file).string(), rows, cols);
    train.dim = static_cast<int>(cols);
    train.ids = ids;
    train.labels.assign(rows, 0);  // labels are not part of the index
    if (rows != ids.size())
      throw FormatError(dir + ": feature matrix rows do not match fold ids");
    ens.index = SwitchIndex::build(train);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(dir + ": " + e.what());
  }

  for (int j = 0; j < ens.folds.k; ++j) {
    const auto path = fs::path(dir) / ("model_" + std::to_string(j) + ".json");
    ens.models.push_back(load_model(path.string()));
  }

  // reconstruct the per-model training id lists from the fold assignment
  ens.trained_ids.assign(ens.folds.k, {});
  for (const auto& [id, fold] : ens.folds.fold_of)
    for (int j = 0; j < ens.folds.k; ++j)
      if (j != fold) ens.trained_ids[j].push_back(id);
  for (auto& v : ens.trained_ids) std::sort(v.begin(), v.end());
  return ens;
}

}  // namespace pase
