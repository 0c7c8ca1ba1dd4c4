#include <algorithm>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "pase/dataset.hpp"
#include "pase/errors.hpp"
#include "pase/rng.hpp"
#include "pase/switch_ensemble.hpp"

using namespace pase;

namespace {

// independent oracle: plain double loop over (t - x)^2
std::pair<std::uint64_t, double> naive_nearest(const Dataset& train,
                                               std::span<const double> x) {
  std::uint64_t best_id = 0;
  double best_d = 0.0;
  bool have = false;
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto row = train.row(i);
    double d = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      const double diff = row[j] - x[j];
      d += diff * diff;
    }
    if (!have || d < best_d || (d == best_d && train.ids[i] < best_id)) {
      best_id = train.ids[i];
      best_d = d;
      have = true;
    }
  }
  return {best_id, best_d};
}

std::vector<std::size_t> fold_sizes(const FoldAssignment& f) {
  std::vector<std::size_t> sizes(f.k, 0);
  for (const auto& [id, fold] : f.fold_of) ++sizes[fold];
  return sizes;
}

}  // namespace

TEST_CASE("assign_folds balances singleton groups") {
  const Dataset train = gen_blobs(2, 5, 3, 1.0, 1);  // 10 unique samples
  const DuplicateGroups dups = find_duplicates(train);
  const FoldAssignment folds = assign_folds(train, 5, 7, dups);
  CHECK(folds.k == 5);
  CHECK(folds.fold_of.size() == 10);
  for (const std::size_t s : fold_sizes(folds)) CHECK(s == 2);
}

TEST_CASE("assign_folds keeps duplicates together") {
  Dataset train = gen_blobs(2, 6, 3, 1.0, 2);
  for (int j = 0; j < train.dim; ++j)
    train.features[5 * train.dim + j] = train.features[j];
  const DuplicateGroups dups = find_duplicates(train);
  const FoldAssignment folds = assign_folds(train, 3, 9, dups);
  CHECK(folds.fold_of.at(train.ids[0]) == folds.fold_of.at(train.ids[5]));
}

TEST_CASE("assign_folds size invariants over random shapes") {
  Rng rng(99);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = 10 + static_cast<int>(rng.below(80));
    const int k = 2 + static_cast<int>(rng.below(6));
    Dataset train = gen_blobs(2, (n + 1) / 2, 2, 1.0, trial + 100);
    const DuplicateGroups dups = find_duplicates(train);
    if (k > dups.group_count()) continue;
    const FoldAssignment folds = assign_folds(train, k, rng.next_u64(), dups);
    const auto sizes = fold_sizes(folds);
    const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
    CHECK(*hi - *lo <= 1);
  }
}

TEST_CASE("assign_folds imbalance is bounded by the largest duplicate group") {
  // 4 copies of one point plus 8 unique ones, k = 3
  Dataset train = gen_blobs(3, 4, 2, 1.0, 5);
  for (const std::size_t r : {1u, 2u, 3u})
    for (int j = 0; j < train.dim; ++j)
      train.features[r * train.dim + j] = train.features[j];
  const DuplicateGroups dups = find_duplicates(train);
  REQUIRE(dups.group_count() == 9);
  const FoldAssignment folds = assign_folds(train, 3, 4, dups);
  const auto sizes = fold_sizes(folds);
  const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
  CHECK(*hi - *lo <= 4);
}

TEST_CASE("assign_folds rejects k larger than the group count") {
  const Dataset train = gen_blobs(2, 2, 2, 0.0, 1);  // 2 distinct points
  const DuplicateGroups dups = find_duplicates(train);
  CHECK_THROWS_AS(assign_folds(train, 3, 1, dups), ConfigError);
  CHECK_THROWS_AS(assign_folds(train, 1, 1, dups), ConfigError);
}

TEST_CASE("nearest: self-match is exact zero") {
  const Dataset train = gen_blobs(3, 10, 6, 1.5, 11);
  const SwitchIndex idx = SwitchIndex::build(train);
  const auto hit = idx.nearest(train.row(17));
  CHECK(hit.id == train.ids[17]);
  CHECK(hit.squared_distance == 0.0);
}

TEST_CASE("nearest: equidistant points resolve to the lowest id") {
  Dataset train;
  train.dim = 2;
  train.class_count = 2;
  // ids 3 and 9 both at distance 1 from the origin, exactly representable
  train.features = {5.0, 5.0, 1.0, 0.0, -3.0, 4.0, 0.0, 1.0};
  train.labels = {0, 0, 0, 0};
  train.ids = {7, 3, 5, 9};
  const SwitchIndex idx = SwitchIndex::build(train);
  const auto hit = idx.nearest(std::vector<double>{0.0, 0.0});
  CHECK(hit.id == 3);
  CHECK(hit.squared_distance == 1.0);
}

TEST_CASE("nearest agrees with the naive scan") {
  Rng rng(2025);
  for (int round = 0; round < 5; ++round) {
    const Dataset train = gen_blobs(5, 10, 8, 2.0, 300 + round);  // 50 points
    const SwitchIndex idx = SwitchIndex::build(train);
    for (int q = 0; q < 20; ++q) {
      std::vector<double> x(train.dim);
      for (double& v : x) v = rng.uniform(-6, 6);
      const auto fast = idx.nearest(x);
      const auto [naive_id, naive_d] = naive_nearest(train, x);
      CHECK(fast.id == naive_id);
      CHECK(fast.squared_distance ==
            doctest::Approx(naive_d).epsilon(1e-9));
    }
  }
  const Dataset train = gen_blobs(2, 5, 3, 1.0, 1);
  const SwitchIndex idx = SwitchIndex::build(train);
  CHECK_THROWS_AS(idx.nearest(std::vector<double>{1.0}), InputError);
}

TEST_CASE("train_pase: each model skips exactly its fold and fits the rest") {
  const Dataset train = gen_blobs(2, 30, 4, 0.4, 21);  // separable, n = 60
  const DuplicateGroups dups = find_duplicates(train);
  const FoldAssignment folds = assign_folds(train, 2, 3, dups);
  TrainConfig cfg;
  cfg.epochs = 80;
  cfg.batch_size = 8;
  cfg.seed = 50;
  const SwitchEnsemble ens = train_pase(train, folds, {4, 16, 2}, cfg);

  REQUIRE(ens.models.size() == 2);
  for (int j = 0; j < 2; ++j) {
    // bookkeeping: the recorded ids are exactly the complement of fold j
    std::set<std::uint64_t> recorded(ens.trained_ids[j].begin(),
                                     ens.trained_ids[j].end());
    for (const auto& [id, fold] : folds.fold_of)
      CHECK(recorded.count(id) == (fold != j ? 1u : 0u));

    // the model fits its own training subset
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < train.size(); ++i)
      if (folds.fold_of.at(train.ids[i]) != j) rows.push_back(i);
    CHECK(evaluate(ens.models[j], subset(train, rows)) >= 0.95);
  }
}

TEST_CASE("switching invariant: training queries never hit their own model") {
  const Dataset train = gen_blobs(3, 20, 5, 1.0, 31);
  const DuplicateGroups dups = find_duplicates(train);
  const FoldAssignment folds = assign_folds(train, 3, 13, dups);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 8;
  const SwitchEnsemble ens = train_pase(train, folds, {5, 8, 3}, cfg);

  for (std::size_t i = 0; i < train.size(); ++i) {
    const int j = select_model(ens, train.row(i));
    CHECK(j == folds.fold_of.at(train.ids[i]));
    CHECK(!std::binary_search(ens.trained_ids[j].begin(),
                              ens.trained_ids[j].end(), train.ids[i]));
  }
}

TEST_CASE("region coherence: same nearest id means same model") {
  const Dataset train = gen_blobs(2, 10, 3, 2.0, 41);
  const DuplicateGroups dups = find_duplicates(train);
  const FoldAssignment folds = assign_folds(train, 4, 2, dups);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 5;
  const SwitchEnsemble ens = train_pase(train, folds, {3, 8, 2}, cfg);

  // k = 4: each model trains on exactly three quarters of the data
  for (const auto& ids : ens.trained_ids)
    CHECK(ids.size() == train.size() * 3 / 4);

  Rng rng(4242);
  for (int q = 0; q < 100; ++q) {
    std::vector<double> x(train.dim);
    for (double& v : x) v = rng.uniform(-6, 6);
    const auto [hit, fold] = nearest_with_fold(ens, x);
    CHECK(fold == ens.folds.fold_of.at(hit.id));
    CHECK(select_model(ens, x) == fold);
    CHECK(fold >= 0);
    CHECK(fold < ens.k());
  }
}

TEST_CASE("degenerate ensemble of identical models predicts like one") {
  const Dataset train = gen_blobs(2, 5, 3, 1.0, 51);
  const MlpModel one = init_mlp({3, 6, 2}, 77);
  SwitchEnsemble ens;
  ens.models = {one, one};
  ens.folds.k = 2;
  for (std::size_t i = 0; i < train.size(); ++i)
    ens.folds.fold_of[train.ids[i]] = static_cast<int>(i % 2);
  ens.index = SwitchIndex::build(train);

  Rng rng(1);
  for (int q = 0; q < 20; ++q) {
    std::vector<double> x(train.dim);
    for (double& v : x) v = rng.uniform(-5, 5);
    CHECK(pase_predict(ens, x) == forward(one, x));
  }
}

TEST_CASE("ensemble persistence round-trips predictions") {
  const Dataset train = gen_blobs(2, 15, 4, 1.0, 61);
  const DuplicateGroups dups = find_duplicates(train);
  const FoldAssignment folds = assign_folds(train, 3, 17, dups);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.seed = 23;
  const SwitchEnsemble ens = train_pase(train, folds, {4, 8, 2}, cfg);

  const auto dir =
      (std::filesystem::temp_directory_path() / "pase_test_ensemble").string();
  std::filesystem::remove_all(dir);
  save_ensemble(ens, dir);
  const SwitchEnsemble back = load_ensemble(dir);

  CHECK(back.k() == ens.k());
  CHECK(back.folds.fold_of == ens.folds.fold_of);
  CHECK(back.trained_ids == ens.trained_ids);

  Rng rng(3);
  for (int q = 0; q < 25; ++q) {
    std::vector<double> x(train.dim);
    for (double& v : x) v = rng.uniform(-6, 6);
    CHECK(pase_predict(back, x) == pase_predict(ens, x));
  }
}
