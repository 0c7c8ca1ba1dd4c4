#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace pase {

// A labeled sample matrix with stable ids. Ids survive subsetting, so split
// disjointness and membership bookkeeping are checked on ids, never on row
// positions. Immutable by convention once built.
struct Dataset {
  std::vector<double> features;    // n x dim, row-major
  std::vector<int> labels;         // in [0, class_count)
  std::vector<std::uint64_t> ids;  // unique stable sample ids
  int dim = 0;
  int class_count = 0;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * static_cast<std::size_t>(dim),
            static_cast<std::size_t>(dim)};
  }
};

// The three disjoint parts of the re-partitioning protocol: one side for the
// defended models, the other for the attacker's shadow models.
struct SplitBundle {
  Dataset target_train;
  Dataset target_test;
  Dataset attack_pool;
};

// Groups of bit-identical feature rows. Samples in one group must share a
// fold, otherwise switching is ill-defined on duplicate queries.
struct DuplicateGroups {
  std::unordered_map<std::uint64_t, int> group_of;  // sample id -> group id
  std::vector<std::vector<std::uint64_t>> members;  // group id -> member ids
  int group_count() const { return static_cast<int>(members.size()); }
};

// label_column < 0 addresses the last column.
Dataset load_csv(const std::string& path, bool has_header, int label_column);

// IDX pair (big-endian, magic-checked); pixel bytes scaled to [0,1],
// images flattened row-major.
Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path);

// Isotropic Gaussian blob per class: seeded random center, std = spread.
// Centers are drawn uniformly from [-4,4]^dim, so spread controls overlap.
Dataset gen_blobs(int class_count, int per_class, int dim, double spread,
                  std::uint64_t seed);

// Reassigns a seeded fraction of labels to a different random class.
void apply_label_noise(Dataset& data, double fraction, std::uint64_t seed);

// Seeded shuffle, then: first n*target_fraction ids form the target side
// (split again by train_fraction into train/test), the rest is the attack
// pool. Throws ConfigError if any part comes out empty.
SplitBundle repartition(const Dataset& full, double target_fraction,
                        double train_fraction, std::uint64_t seed);

// Exact bitwise feature equality, except signed zeros collapse: rows at
// squared distance zero must land in one group or switching breaks.
DuplicateGroups find_duplicates(const Dataset& data);

// Row selection preserving ids and class_count.
Dataset subset(const Dataset& data, std::span<const std::size_t> rows);

// Flat binary of little-endian 64-bit floats with a shape header.
void save_matrix(const std::string& path, const std::vector<double>& data,
                 std::uint64_t rows, std::uint64_t cols);
std::vector<double> load_matrix(const std::string& path, std::uint64_t& rows,
                                std::uint64_t& cols);

// Dataset persistence: JSON sidecar (labels, ids, class_count) plus the
// feature matrix in the binary format above. Round-trips exactly.
void save_dataset(const Dataset& data, const std::string& json_path);
Dataset load_dataset(const std::string& json_path);

// Split manifests are id lists, so experiments can resume from disk.
void save_split_manifest(const SplitBundle& bundle, const std::string& path);
SplitBundle apply_split_manifest(const Dataset& full, const std::string& path);

}  // namespace pase
