#include "pase/dataset.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <filesystem>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "pase/errors.hpp"
#include "pase/rng.hpp"

namespace pase {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write file: " + path);
  out << text;
  if (!out) throw FormatError("write failed: " + path);
}

double parse_double(std::string_view field, std::size_t line_no,
                    const std::string& path) {
  // trim surrounding spaces and CR
  while (!field.empty() && (field.front() == ' ' || field.front() == '\t'))
    field.remove_prefix(1);
  while (!field.empty() &&
         (field.back() == ' ' || field.back() == '\t' || field.back() == '\r'))
    field.remove_suffix(1);
  double value = 0.0;
  const auto* end = field.data() + field.size();
  const auto res = std::from_chars(field.data(), end, value);
  if (res.ec != std::errc{} || res.ptr != end)
    throw FormatError(path + ": line " + std::to_string(line_no) +
                      ": cannot parse number '" + std::string(field) + "'");
  if (!std::isfinite(value))
    throw FormatError(path + ": line " + std::to_string(line_no) +
                      ": non-finite value");
  return value;
}

std::uint32_t read_be_u32(const unsigned char* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
         (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

}  // namespace

Dataset load_csv(const std::string& path, bool has_header, int label_column) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open file: " + path);

  Dataset out;
  std::string line;
  std::size_t line_no = 0;
  int columns = -1;
  int max_label = -1;

  while (std::getline(in, line)) {
    ++line_no;
    if (has_header && line_no == 1) continue;
    if (line.empty() || line == "\r") continue;

    std::vector<std::string_view> fields;
    std::string_view rest(line);
    for (;;) {
      const auto comma = rest.find(',');
      if (comma == std::string_view::npos) {
        fields.push_back(rest);
        break;
      }
      fields.push_back(rest.substr(0, comma));
      rest.remove_prefix(comma + 1);
    }

    if (columns < 0) {
      columns = static_cast<int>(fields.size());
      if (columns < 2)
        throw FormatError(path + ": line " + std::to_string(line_no) +
                          ": need at least one feature and a label column");
      out.dim = columns - 1;
    } else if (static_cast<int>(fields.size()) != columns) {
      throw FormatError(path + ": line " + std::to_string(line_no) +
                        ": expected " + std::to_string(columns) +
                        " columns, got " + std::to_string(fields.size()));
    }

    int label_idx = label_column < 0 ? columns - 1 : label_column;
    if (label_idx >= columns)
      throw FormatError(path + ": label column " + std::to_string(label_idx) +
                        " out of range for " + std::to_string(columns) +
                        " columns");

    for (int c = 0; c < columns; ++c) {
      const double v = parse_double(fields[c], line_no, path);
      if (c == label_idx) {
        if (v != std::trunc(v) || v < 0 || v > 1e9)
          throw FormatError(path + ": line " + std::to_string(line_no) +
                            ": label must be a non-negative integer, got '" +
                            std::string(fields[c]) + "'");
        const int label = static_cast<int>(v);
        out.labels.push_back(label);
        max_label = std::max(max_label, label);
      } else {
        out.features.push_back(v);
      }
    }
  }

  if (out.labels.empty()) throw FormatError(path + ": no data rows");
  out.ids.resize(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) out.ids[i] = i;
  out.class_count = max_label + 1;
  return out;
}

Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path) {
  const std::string img = read_file(images_path);
  const std::string lbl = read_file(labels_path);
  const auto* ip = reinterpret_cast<const unsigned char*>(img.data());
  const auto* lp = reinterpret_cast<const unsigned char*>(lbl.data());

  if (img.size() < 16)
    throw FormatError(images_path + ": truncated IDX header");
  if (lbl.size() < 8) throw FormatError(labels_path + ": truncated IDX header");

  if (read_be_u32(ip) != 0x00000803u)
    throw FormatError(images_path + ": bad IDX image magic");
  if (read_be_u32(lp) != 0x00000801u)
    throw FormatError(labels_path + ": bad IDX label magic");

  const std::uint32_t n_img = read_be_u32(ip + 4);
  const std::uint32_t rows = read_be_u32(ip + 8);
  const std::uint32_t cols = read_be_u32(ip + 12);
  const std::uint32_t n_lbl = read_be_u32(lp + 4);
  if (n_img != n_lbl)
    throw FormatError("IDX count mismatch: " + std::to_string(n_img) +
                      " images vs " + std::to_string(n_lbl) + " labels");
  if (n_img == 0) throw FormatError(images_path + ": empty IDX file");

  const std::size_t d = std::size_t(rows) * cols;
  if (img.size() < 16 + std::size_t(n_img) * d)
    throw FormatError(images_path + ": truncated IDX payload");
  if (lbl.size() < 8 + std::size_t(n_lbl))
    throw FormatError(labels_path + ": truncated IDX payload");

  Dataset out;
  out.dim = static_cast<int>(d);
  out.features.resize(std::size_t(n_img) * d);
  out.labels.resize(n_img);
  out.ids.resize(n_img);
  int max_label = 0;
  for (std::uint32_t i = 0; i < n_img; ++i) {
    const unsigned char* px = ip + 16 + std::size_t(i) * d;
    for (std::size_t j = 0; j < d; ++j)
      out.features[std::size_t(i) * d + j] = px[j] / 255.0;
    out.labels[i] = lp[8 + i];
    max_label = std::max(max_label, out.labels[i]);
    out.ids[i] = i;
  }
  out.class_count = max_label + 1;
  return out;
}

Dataset gen_blobs(int class_count, int per_class, int dim, double spread,
                  std::uint64_t seed) {
  if (class_count < 1 || per_class < 1 || dim < 1)
    throw ConfigError("gen_blobs: counts and dim must be positive");
  if (spread < 0) throw ConfigError("gen_blobs: spread must be non-negative");

  Rng rng(seed);
  Dataset out;
  out.dim = dim;
  out.class_count = class_count;
  const std::size_t n = std::size_t(class_count) * per_class;
  out.features.reserve(n * dim);
  out.labels.reserve(n);
  out.ids.reserve(n);

  for (int c = 0; c < class_count; ++c) {
    std::vector<double> center(dim);
    for (int j = 0; j < dim; ++j) center[j] = rng.uniform(-4.0, 4.0);
    for (int s = 0; s < per_class; ++s) {
      for (int j = 0; j < dim; ++j)
        out.features.push_back(center[j] + spread * rng.gaussian());
      out.labels.push_back(c);
      out.ids.push_back(out.labels.size() - 1);
    }
  }
  return out;
}

void apply_label_noise(Dataset& data, double fraction, std::uint64_t seed) {
  if (fraction < 0.0 || fraction > 1.0)
    throw ConfigError("label noise fraction must be in [0,1]");
  if (fraction == 0.0 || data.empty()) return;
  if (data.class_count < 2)
    throw ConfigError("label noise needs at least two classes");

  const auto n_noisy =
      static_cast<std::size_t>(fraction * static_cast<double>(data.size()));
  Rng rng(seed);
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle(order, rng);
  for (std::size_t i = 0; i < n_noisy; ++i) {
    const std::size_t row = order[i];
    // uniform over the other classes
    int offset = static_cast<int>(rng.below(data.class_count - 1));
    int noisy = offset >= data.labels[row] ? offset + 1 : offset;
    data.labels[row] = noisy;
  }
}

Dataset subset(const Dataset& data, std::span<const std::size_t> rows) {
  Dataset out;
  out.dim = data.dim;
  out.class_count = data.class_count;
  out.features.reserve(rows.size() * data.dim);
  out.labels.reserve(rows.size());
  out.ids.reserve(rows.size());
  for (const std::size_t r : rows) {
    const auto row = data.row(r);
    out.features.insert(out.features.end(), row.begin(), row.end());
    out.labels.push_back(data.labels[r]);
    out.ids.push_back(data.ids[r]);
  }
  return out;
}

SplitBundle repartition(const Dataset& full, double target_fraction,
                        double train_fraction, std::uint64_t seed) {
  if (!(target_fraction > 0.0 && target_fraction < 1.0))
    throw ConfigError("target_fraction must be in (0,1)");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("train_fraction must be in (0,1)");

  const std::size_t n = full.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  shuffle(order, rng);

  const auto target_n =
      static_cast<std::size_t>(target_fraction * static_cast<double>(n));
  const auto train_n =
      static_cast<std::size_t>(train_fraction * static_cast<double>(target_n));
  if (train_n == 0 || train_n == target_n || target_n == n)
    throw ConfigError("repartition would leave an empty part (n=" +
                      std::to_string(n) + ")");

  SplitBundle out;
  out.target_train = subset(
      full, std::span<const std::size_t>(order.data(), train_n));
  out.target_test = subset(
      full,
      std::span<const std::size_t>(order.data() + train_n, target_n - train_n));
  out.attack_pool = subset(
      full, std::span<const std::size_t>(order.data() + target_n, n - target_n));
  return out;
}

DuplicateGroups find_duplicates(const Dataset& data) {
  DuplicateGroups out;
  out.group_of.reserve(data.size());
  std::unordered_map<std::string, int> seen;
  seen.reserve(data.size());

  std::string key;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto row = data.row(i);
    key.resize(row.size() * sizeof(double));
    for (std::size_t j = 0; j < row.size(); ++j) {
      // collapse -0.0 onto +0.0: rows at distance zero must share a group
      const double v = row[j] == 0.0 ? 0.0 : row[j];
      std::memcpy(key.data() + j * sizeof(double), &v, sizeof(double));
    }
    auto [it, inserted] = seen.emplace(key, out.group_count());
    if (inserted) out.members.emplace_back();
    out.group_of[data.ids[i]] = it->second;
    out.members[it->second].push_back(data.ids[i]);
  }
  return out;
}

// --- persistence ---------------------------------------------------------

namespace {
constexpr char kMatrixMagic[8] = {'P', 'A', 'S', 'E', 'M', 'A', 'T', '1'};

void put_u64_le(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(char((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}
}  // namespace

void save_matrix(const std::string& path, const std::vector<double>& data,
                 std::uint64_t rows, std::uint64_t cols) {
  if (data.size() != rows * cols)
    throw InputError("save_matrix: data size does not match shape");
  std::string buf;
  buf.reserve(24 + data.size() * 8);
  buf.append(kMatrixMagic, 8);
  put_u64_le(buf, rows);
  put_u64_le(buf, cols);
  for (const double d : data) put_u64_le(buf, std::bit_cast<std::uint64_t>(d));
  write_file(path, buf);
}

std::vector<double> load_matrix(const std::string& path, std::uint64_t& rows,
                                std::uint64_t& cols) {
  const std::string buf = read_file(path);
  if (buf.size() < 24 || std::memcmp(buf.data(), kMatrixMagic, 8) != 0)
    throw FormatError(path + ": bad matrix header");
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
  rows = get_u64_le(p + 8);
  cols = get_u64_le(p + 16);
  if (buf.size() != 24 + rows * cols * 8)
    throw FormatError(path + ": matrix payload size mismatch");
  std::vector<double> out(rows * cols);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::bit_cast<double>(get_u64_le(p + 24 + i * 8));
  return out;
}

void save_dataset(const Dataset& data, const std::string& json_path) {
  save_matrix(json_path + ".bin", data.features, data.size(), data.dim);

  nlohmann::json j;
  j["format_version"] = 1;
  // stored relative to the manifest, so artifact directories can move
  j["matrix"] = std::filesystem::path(json_path + ".bin").filename().string();
  j["labels"] = data.labels;
  j["ids"] = data.ids;
  j["class_count"] = data.class_count;
  write_file(json_path, j.dump(2));
}

Dataset load_dataset(const std::string& json_path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(json_path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(json_path + ": " + e.what());
  }
  Dataset out;
  try {
    std::uint64_t rows = 0, cols = 0;
    std::filesystem::path matrix(j.at("matrix").get<std::string>());
    if (matrix.is_relative())
      matrix = std::filesystem::path(json_path).parent_path() / matrix;
    out.features = load_matrix(matrix.string(), rows, cols);
    out.dim = static_cast<int>(cols);
    out.labels = j.at("labels").get<std::vector<int>>();
    out.ids = j.at("ids").get<std::vector<std::uint64_t>>();
    out.class_count = j.at("class_count").get<int>();
    if (out.labels.size() != rows || out.ids.size() != rows)
      throw FormatError(json_path + ": label/id count does not match matrix");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(json_path + ": " + e.what());
  }
  return out;
}

void save_split_manifest(const SplitBundle& bundle, const std::string& path) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["target_train"] = bundle.target_train.ids;
  j["target_test"] = bundle.target_test.ids;
  j["attack_pool"] = bundle.attack_pool.ids;
  write_file(path, j.dump(2));
}

SplitBundle apply_split_manifest(const Dataset& full, const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }

  std::unordered_map<std::uint64_t, std::size_t> row_of;
  row_of.reserve(full.size());
  for (std::size_t i = 0; i < full.size(); ++i) row_of[full.ids[i]] = i;

  auto pick = [&](const char* key) {
    std::vector<std::size_t> rows;
    for (const auto& id : j.at(key)) {
      const auto it = row_of.find(id.get<std::uint64_t>());
      if (it == row_of.end())
        throw FormatError(path + ": id " + id.dump() +
                          " not present in dataset");
      rows.push_back(it->second);
    }
    return subset(full, rows);
  };

  SplitBundle out;
  try {
    out.target_train = pick("target_train");
    out.target_test = pick("target_test");
    out.attack_pool = pick("attack_pool");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }

  // the parts must be pairwise disjoint and together cover the dataset
  std::unordered_map<std::uint64_t, int> seen_count;
  for (const Dataset* part :
       {&out.target_train, &out.target_test, &out.attack_pool})
    for (const auto id : part->ids)
      if (++seen_count[id] > 1)
        throw FormatError(path + ": id " + std::to_string(id) +
                          " appears in more than one part");
  if (seen_count.size() != full.size())
    throw FormatError(path + ": manifest covers " +
                      std::to_string(seen_count.size()) + " of " +
                      std::to_string(full.size()) + " dataset ids");
  return out;
}

}  // namespace pase
