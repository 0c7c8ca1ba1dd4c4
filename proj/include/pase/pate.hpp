#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "pase/dataset.hpp"
#include "pase/mlp.hpp"

namespace pase {

// Disjoint-shard teachers. The student, not the teachers, is what gets
// deployed and attacked.
struct TeacherEnsemble {
  std::vector<MlpModel> teachers;
  std::unordered_map<std::uint64_t, int> partition;  // sample id -> teacher
};

// Per-query vote counts. With noise_scale = 0 each row sums to the teacher
// count.
struct VoteTally {
  std::vector<std::vector<int>> counts;  // one row per query
  double noise_scale = 0.0;
};

// Seeded shuffle, contiguous near-equal shards, per-teacher seed
// cfg.seed + t.
TeacherEnsemble train_teachers(const Dataset& train, int n_teachers,
                               const std::vector<int>& layer_dims,
                               const TrainConfig& cfg);

VoteTally tally_votes(const TeacherEnsemble& ens,
                      const std::vector<double>& queries, int dim);

// Plurality vote per query; ties break to the lowest class. noise_scale > 0
// adds seeded Laplace noise to each count before the argmax; noise_scale = 0
// consumes no randomness.
std::vector<int> aggregate_labels(const TeacherEnsemble& ens,
                                  const std::vector<double>& queries, int dim,
                                  double noise_scale, std::uint64_t seed);

// Student trained on the pool's features with teacher-voted labels. The pool
// must be disjoint from the teachers' training ids.
MlpModel train_student(const TeacherEnsemble& ens, const Dataset& student_pool,
                       const std::vector<int>& layer_dims,
                       const TrainConfig& cfg, double noise_scale,
                       std::uint64_t seed);

void save_teacher_ensemble(const TeacherEnsemble& ens, const std::string& dir);
TeacherEnsemble load_teacher_ensemble(const std::string& dir);

}  // namespace pase
