#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pase/dataset.hpp"
#include "pase/mlp.hpp"

namespace pase {

// The only view the attack gets of a target: query in, confidences out.
using PredictFn = std::function<ConfidenceVector(std::span<const double>)>;

// Shadow models trained on attacker-held data, with their in/out row indices
// into the pool they were drawn from. In and out rows are disjoint within a
// shadow; shadows may overlap each other.
struct ShadowSet {
  std::vector<MlpModel> models;
  std::vector<std::vector<std::size_t>> train_rows;  // rows into the pool
  std::vector<std::vector<std::size_t>> out_rows;
};

// One labeled example for the attack model: what a shadow predicted on a
// sample it did (membership=1) or did not (membership=0) train on.
struct AttackRecord {
  ConfidenceVector confidence;
  int true_class = 0;
  int membership = 0;
};

// One binary in/out classifier per target class. A class whose records carry
// only one membership label degenerates to a majority-vote stub.
struct PerClassAttacker {
  bool stub = false;
  int majority = 0;
  MlpModel model;
};

struct AttackModel {
  int class_count = 0;
  std::vector<PerClassAttacker> per_class;
};

// Balanced membership evaluation. accuracy == (tp+tn)/total exactly;
// 50% is the chance floor.
struct AttackReport {
  double accuracy = 0.0;
  long tp = 0, fp = 0, fn = 0, tn = 0;
  std::vector<long> per_class_correct;
  std::vector<long> per_class_total;

  long total() const { return tp + fp + fn + tn; }
  std::vector<double> per_class_accuracy() const;
};

// Each shadow draws per_shadow_n in and per_shadow_n out rows from the pool
// (disjoint within the shadow) and trains with the baseline's architecture
// and config; per-shadow seeds derive from `seed`.
ShadowSet train_shadows(const Dataset& pool, int n_shadows, int per_shadow_n,
                        const std::vector<int>& layer_dims,
                        const TrainConfig& cfg, std::uint64_t seed);

// Queries every shadow on its own in and out rows; equal counts per shadow.
std::vector<AttackRecord> build_attack_records(const ShadowSet& shadows,
                                               const Dataset& pool);

// layer_dims must map a confidence vector (class_count wide) to 2 outputs.
AttackModel train_attack(const std::vector<AttackRecord>& records,
                         int class_count, const std::vector<int>& layer_dims,
                         const TrainConfig& cfg);

int predict_membership(const AttackModel& attack,
                       const ConfidenceVector& confidence, int true_class);

// Queries the target on members and non-members (balanced by seeded
// truncation of the larger side), routes each confidence vector through the
// attacker of the sample's true class, and tallies the confusion matrix.
AttackReport attack_accuracy(const AttackModel& attack,
                             const PredictFn& target_query,
                             const Dataset& member_set,
                             const Dataset& nonmember_set, std::uint64_t seed);

void save_attack_model(const AttackModel& attack, const std::string& dir);
AttackModel load_attack_model(const std::string& dir);

void save_attack_records(const std::vector<AttackRecord>& records,
                         const std::string& path);
std::vector<AttackRecord> load_attack_records(const std::string& path);

}  // namespace pase
