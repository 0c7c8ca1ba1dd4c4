#include "pase/pate.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "pase/errors.hpp"
#include "pase/rng.hpp"

namespace fs = std::filesystem;

namespace pase {

TeacherEnsemble train_teachers(const Dataset& train, int n_teachers,
                               const std::vector<int>& layer_dims,
                               const TrainConfig& cfg) {
  if (n_teachers < 2) throw ConfigError("train_teachers: need at least 2 teachers");
  if (train.size() < static_cast<std::size_t>(n_teachers))
    throw ConfigError("train_teachers: " + std::to_string(n_teachers) +
                      " teachers would leave an empty shard (n=" +
                      std::to_string(train.size()) + ")");

  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(cfg.seed);
  shuffle(order, rng);

  TeacherEnsemble out;
  out.teachers.reserve(n_teachers);
  const std::size_t base = train.size() / n_teachers;
  const std::size_t extra = train.size() % n_teachers;

  std::size_t start = 0;
  for (int t = 0; t < n_teachers; ++t) {
    const std::size_t shard_n = base + (static_cast<std::size_t>(t) < extra);
    const std::span<const std::size_t> rows(order.data() + start, shard_n);
    start += shard_n;

    const Dataset shard = subset(train, rows);
    for (const auto id : shard.ids) out.partition[id] = t;

    TrainConfig teacher_cfg = cfg;
    teacher_cfg.seed = cfg.seed + static_cast<std::uint64_t>(t);
    MlpModel model = init_mlp(layer_dims, teacher_cfg.seed);
    out.teachers.push_back(pase::train(std::move(model), shard, teacher_cfg));
  }
  return out;
}

VoteTally tally_votes(const TeacherEnsemble& ens,
                      const std::vector<double>& queries, int dim) {
  if (ens.teachers.empty()) throw InputError("tally_votes: no teachers");
  if (dim < 1 || queries.size() % dim != 0)
    throw InputError("tally_votes: query matrix shape mismatch");
  const std::size_t n = queries.size() / dim;
  const int classes = ens.teachers.front().class_count();

  VoteTally out;
  out.counts.assign(n, std::vector<int>(classes, 0));
  for (std::size_t q = 0; q < n; ++q) {
    const std::span<const double> x(queries.data() + q * dim,
                                    static_cast<std::size_t>(dim));
    for (const MlpModel& teacher : ens.teachers)
      ++out.counts[q][argmax_lowest(forward(teacher, x))];
  }
  return out;
}

std::vector<int> aggregate_labels(const TeacherEnsemble& ens,
                                  const std::vector<double>& queries, int dim,
                                  double noise_scale, std::uint64_t seed) {
  VoteTally tally = tally_votes(ens, queries, dim);
  tally.noise_scale = noise_scale;

  std::vector<int> labels(tally.counts.size());
  if (noise_scale > 0.0) {
    Rng rng(seed);
    std::vector<double> noisy;
    for (std::size_t q = 0; q < tally.counts.size(); ++q) {
      noisy.assign(tally.counts[q].begin(), tally.counts[q].end());
      for (double& v : noisy) v += rng.laplace(noise_scale);
      labels[q] = argmax_lowest(noisy);
    }
  } else {
    for (std::size_t q = 0; q < tally.counts.size(); ++q) {
      const auto& counts = tally.counts[q];
      int best = 0;
      for (int c = 1; c < static_cast<int>(counts.size()); ++c)
        if (counts[c] > counts[best]) best = c;
      labels[q] = best;
    }
  }
  return labels;
}

MlpModel train_student(const TeacherEnsemble& ens, const Dataset& student_pool,
                       const std::vector<int>& layer_dims,
                       const TrainConfig& cfg, double noise_scale,
                       std::uint64_t seed) {
  if (student_pool.empty()) throw InputError("train_student: empty pool");
  for (const auto id : student_pool.ids)
    if (ens.partition.count(id))
      throw InputError("train_student: pool id " + std::to_string(id) +
                       " overlaps teacher training data");

  Dataset labeled = student_pool;
  labeled.labels = aggregate_labels(ens, student_pool.features,
                                    student_pool.dim, noise_scale, seed);

  MlpModel model = init_mlp(layer_dims, cfg.seed);
  return train(std::move(model), labeled, cfg);
}

// --- persistence ---------------------------------------------------------

void save_teacher_ensemble(const TeacherEnsemble& ens, const std::string& dir) {
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["format_version"] = 1;
  manifest["n_teachers"] = ens.teachers.size();
  // stable order: sort by id
  std::vector<std::pair<std::uint64_t, int>> pairs(ens.partition.begin(),
                                                   ens.partition.end());
  std::sort(pairs.begin(), pairs.end());
  std::vector<std::uint64_t> ids;
  std::vector<int> shard;
  for (const auto& [id, t] : pairs) {
    ids.push_back(id);
    shard.push_back(t);
  }
  manifest["ids"] = ids;
  manifest["teacher_of"] = shard;
  for (std::size_t t = 0; t < ens.teachers.size(); ++t)
    save_model(ens.teachers[t],
               (fs::path(dir) / ("teacher_" + std::to_string(t) + ".json")).string());
  std::ofstream out(fs::path(dir) / "teachers.json", std::ios::trunc);
  out << manifest.dump(2);
}

TeacherEnsemble load_teacher_ensemble(const std::string& dir) {
  nlohmann::json manifest;
  try {
    std::ifstream in(fs::path(dir) / "teachers.json");
    if (!in) throw FormatError(dir + ": missing teachers.json");
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(dir + ": " + e.what());
  }

  TeacherEnsemble out;
  try {
    const auto n = manifest.at("n_teachers").get<std::size_t>();
    const auto ids = manifest.at("ids").get<std::vector<std::uint64_t>>();
    const auto shard = manifest.at("teacher_of").get<std::vector<int>>();
    if (ids.size() != shard.size())
      throw FormatError(dir + ": ids/teacher_of arrays differ in length");
    for (std::size_t i = 0; i < ids.size(); ++i)
      out.partition[ids[i]] = shard[i];
    for (std::size_t t = 0; t < n; ++t)
      out.teachers.push_back(load_model(
          (fs::path(dir) / ("teacher_" + std::to_string(t) + ".json")).string()));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(dir + ": " + e.what());
  }
  return out;
}

}  // namespace pase
