#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "pase/dataset.hpp"
#include "pase/mlp.hpp"

namespace pase {

// Partition of the training ids into k near-equal folds. All members of a
// duplicate group share a fold.
struct FoldAssignment {
  int k = 0;
  std::unordered_map<std::uint64_t, int> fold_of;
};

// Exact nearest-neighbor search over the training features, squared L2 with
// cached row norms. Ties break to the lowest sample id.
class SwitchIndex {
 public:
  struct Hit {
    std::uint64_t id = 0;
    double squared_distance = 0.0;
  };

  SwitchIndex() = default;
  static SwitchIndex build(const Dataset& train);

  Hit nearest(std::span<const double> x) const;

  int dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  const std::vector<double>& features() const { return features_; }
  const std::vector<std::uint64_t>& ids() const { return ids_; }

 private:
  std::vector<double> features_;  // n x dim, row-major copy of the train set
  std::vector<std::uint64_t> ids_;
  std::vector<double> norms_;  // cached squared row norms
  int dim_ = 0;
};

// The deployed switching ensemble: k models, each trained on the data minus
// one fold, plus the switch index over all of it. A query is answered by the
// model whose excluded fold holds the training point nearest to the query,
// so a query equal to a training sample is never answered by a model that
// saw it. Immutable once trained; concurrent queries are safe.
struct SwitchEnsemble {
  std::vector<MlpModel> models;
  FoldAssignment folds;
  SwitchIndex index;
  // Recorded per-model training ids (sorted), for audit and tests.
  std::vector<std::vector<std::uint64_t>> trained_ids;

  int k() const { return folds.k; }
};

// Seeded shuffle of the duplicate groups, then each group goes to the
// currently smallest fold. With singleton groups this is plain round-robin
// and fold sizes differ by at most one; with duplicates the imbalance is
// bounded by the largest group.
FoldAssignment assign_folds(const Dataset& train, int k, std::uint64_t seed,
                            const DuplicateGroups& dups);

// Trains model j on every row whose fold differs from j, with per-model seed
// cfg.seed + j, and builds the index over the full training set.
SwitchEnsemble train_pase(const Dataset& train, const FoldAssignment& folds,
                          const std::vector<int>& layer_dims,
                          const TrainConfig& cfg);

std::pair<SwitchIndex::Hit, int> nearest_with_fold(const SwitchEnsemble& ens,
                                                   std::span<const double> x);

// Index of the model answering for x: the fold of x's nearest training point.
int select_model(const SwitchEnsemble& ens, std::span<const double> x);

// Full confidence vector from the selected model.
ConfidenceVector pase_predict(const SwitchEnsemble& ens,
                              std::span<const double> x);

// Directory layout: model_<j>.json per model, folds.json (id -> fold),
// index.json referencing the feature matrix file.
void save_ensemble(const SwitchEnsemble& ens, const std::string& dir);
SwitchEnsemble load_ensemble(const std::string& dir);

}  // namespace pase
