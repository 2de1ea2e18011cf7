#include "dpp/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>

#include "dpp/binary_io.hpp"
#include "dpp/error.hpp"
#include "dpp/rng.hpp"
#include "unit_directions.hpp"

namespace dpp {

namespace {

constexpr std::string_view kDatasetMagic = "DPDS";

std::string row_context(std::size_t row) { return "row " + std::to_string(row); }

double narrow_to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

Dataset::Dataset(std::size_t num_classes, Matrix features, std::vector<Label> observed_labels,
                 std::vector<Label> true_labels)
    : num_classes_(num_classes),
      features_(std::move(features)),
      observed_(std::move(observed_labels)),
      true_(std::move(true_labels)) {
  const std::size_t n = features_.rows();
  if (n == 0) throw ValidationError("dataset must contain at least one sample");
  if (features_.cols() == 0) throw ValidationError("feature dimension must be at least 1");
  if (num_classes_ < 2) throw ValidationError("dataset needs at least 2 classes");
  if (observed_.size() != n || true_.size() != n) {
    throw ValidationError("label columns have " + std::to_string(observed_.size()) + "/" +
                          std::to_string(true_.size()) + " entries, expected " + std::to_string(n));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (observed_[i] >= num_classes_) {
      throw ValidationError(row_context(i) + ": observed label " + std::to_string(observed_[i]) +
                            " >= num_classes " + std::to_string(num_classes_));
    }
    if (true_[i] >= num_classes_) {
      throw ValidationError(row_context(i) + ": true label " + std::to_string(true_[i]) +
                            " >= num_classes " + std::to_string(num_classes_));
    }
    const auto row = features_.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (!std::isfinite(row[j])) {
        throw ValidationError(row_context(i) + ": non-finite feature in column " + std::to_string(j));
      }
    }
  }
}

Sample Dataset::sample(std::size_t i) const {
  return Sample{i, features(i), observed_[i], true_[i], is_noisy(i)};
}

std::size_t Dataset::noisy_count() const {
  std::size_t count = 0;
  for (std::size_t i = 0; i < size(); ++i) count += is_noisy(i) ? 1 : 0;
  return count;
}

Dataset Dataset::with_observed_labels(std::vector<Label> observed) const {
  return Dataset(num_classes_, features_, std::move(observed), true_);
}

std::size_t count_from_ratio(double ratio, std::size_t n) {
  return static_cast<std::size_t>(std::round(ratio * static_cast<double>(n)));
}

// ---------------------------------------------------------------------------
// Serialization

std::vector<std::uint8_t> encode_dpds(const Dataset& ds) {
  binio::Writer w;
  w.magic(kDatasetMagic);
  w.u32(static_cast<std::uint32_t>(ds.size()));
  w.u32(static_cast<std::uint32_t>(ds.feature_dim()));
  w.u32(static_cast<std::uint32_t>(ds.num_classes()));
  w.f32_array(ds.feature_matrix().data());
  for (Label l : ds.observed_labels()) w.u32(l);
  for (Label l : ds.true_labels()) w.u32(l);
  return w.bytes();
}

namespace {

Dataset load_dpds(const std::filesystem::path& path) {
  auto r = binio::Reader::open(path);
  r.expect_header(kDatasetMagic);
  const std::size_t n = r.u32();
  const std::size_t d = r.u32();
  const std::size_t c = r.u32();
  Matrix features(n, d);
  auto values = r.f32_array(n * d);
  std::copy(values.begin(), values.end(), features.data().begin());
  auto observed = r.u32_array(n);
  auto truth = r.u32_array(n);
  r.expect_end();
  try {
    return Dataset(c, std::move(features), std::move(observed), std::move(truth));
  } catch (const ValidationError& e) {
    throw ValidationError("'" + path.string() + "': " + e.what());
  }
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_field(std::string_view text, const std::string& where) {
  text = trim(text);
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw FormatError(where + ": cannot parse '" + std::string(text) + "'");
  }
  return value;
}

Dataset load_csv(const std::filesystem::path& path, std::optional<std::size_t> num_classes) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  const std::string origin = "'" + path.string() + "'";

  std::string line;
  if (!std::getline(in, line)) throw FormatError(origin + ": empty CSV file");
  const auto header = split_commas(trim(line));
  if (header.size() < 3) throw FormatError(origin + ": header needs at least one feature column");
  const std::size_t d = header.size() - 2;
  for (std::size_t j = 0; j < d; ++j) {
    if (trim(header[j]) != "f" + std::to_string(j)) {
      throw FormatError(origin + ": header column " + std::to_string(j) + " should be f" + std::to_string(j));
    }
  }
  if (trim(header[d]) != "label" || trim(header[d + 1]) != "true_label") {
    throw FormatError(origin + ": header must end with label,true_label");
  }

  std::vector<double> values;
  std::vector<Label> observed;
  std::vector<Label> truth;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const std::string where = origin + " " + row_context(row);
    const auto fields = split_commas(trim(line));
    if (fields.size() != d + 2) {
      throw FormatError(where + ": expected " + std::to_string(d + 2) + " fields, got " +
                        std::to_string(fields.size()));
    }
    for (std::size_t j = 0; j < d; ++j) values.push_back(narrow_to_f32(parse_field<double>(fields[j], where)));
    observed.push_back(parse_field<Label>(fields[d], where));
    truth.push_back(parse_field<Label>(fields[d + 1], where));
    ++row;
  }

  std::size_t c = 2;
  if (num_classes) {
    c = *num_classes;
  } else {
    for (std::size_t i = 0; i < observed.size(); ++i) {
      c = std::max<std::size_t>({c, std::size_t{observed[i]} + 1, std::size_t{truth[i]} + 1});
    }
  }
  Matrix features(row, d);
  std::copy(values.begin(), values.end(), features.data().begin());
  try {
    return Dataset(c, std::move(features), std::move(observed), std::move(truth));
  } catch (const ValidationError& e) {
    throw ValidationError(origin + ": " + e.what());
  }
}

bool has_csv_extension(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return ext == ".csv";
}

std::string format_f32(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), static_cast<float>(v));
  return std::string(buf, ptr);
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& path, std::optional<std::size_t> num_classes) {
  if (!std::filesystem::exists(path)) throw IoError("dataset file '" + path.string() + "' does not exist");
  if (binio::has_magic(path, kDatasetMagic)) {
    Dataset ds = load_dpds(path);
    if (num_classes && *num_classes != ds.num_classes()) {
      throw ValidationError("'" + path.string() + "': file declares " + std::to_string(ds.num_classes()) +
                            " classes, expected " + std::to_string(*num_classes));
    }
    return ds;
  }
  if (has_csv_extension(path)) return load_csv(path, num_classes);
  throw FormatError("'" + path.string() + "': neither a DPDS file nor a .csv file");
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  if (!has_csv_extension(path)) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    const auto bytes = encode_dpds(ds);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.close();
    if (!out) throw IoError("failed writing '" + path.string() + "'");
    return;
  }
  std::ostringstream text;
  for (std::size_t j = 0; j < ds.feature_dim(); ++j) text << 'f' << j << ',';
  text << "label,true_label\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (double v : ds.features(i)) text << format_f32(v) << ',';
    text << ds.observed_label(i) << ',' << ds.true_label(i) << '\n';
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text.str();
  out.close();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Generators

namespace {

/// Rows are unit vectors; orthonormal when dim >= count.
Matrix random_directions(std::size_t count, std::size_t dim, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix dirs(count, dim);
  for (std::size_t r = 0; r < count; ++r) {
    auto row = dirs.row(r);
    while (true) {
      for (auto& v : row) v = gauss(rng);
      if (dim >= count) {
        // Modified Gram-Schmidt against the earlier rows.
        for (std::size_t p = 0; p < r; ++p) {
          const auto prev = dirs.row(p);
          double proj = 0.0;
          for (std::size_t j = 0; j < dim; ++j) proj += row[j] * prev[j];
          for (std::size_t j = 0; j < dim; ++j) row[j] -= proj * prev[j];
        }
      }
      double norm = 0.0;
      for (double v : row) norm += v * v;
      norm = std::sqrt(norm);
      if (norm > 1e-6) {
        for (auto& v : row) v /= norm;
        break;
      }
    }
  }
  return dirs;
}

}  // namespace

Matrix unit_directions(std::size_t count, std::size_t dim, Rng& rng) {
  return random_directions(count, dim, rng);
}

Dataset generate_gaussian_blobs(const BlobConfig& config) {
  if (config.n_per_class < 1) throw ValidationError("n_per_class must be >= 1");
  if (config.num_classes < 2) throw ValidationError("num_classes must be >= 2");
  if (config.feature_dim < 1) throw ValidationError("feature_dim must be >= 1");
  if (!(config.class_separation > 0.0) || !std::isfinite(config.class_separation)) {
    throw ValidationError("class_separation must be positive");
  }
  if (!(config.noise_std > 0.0) || !std::isfinite(config.noise_std)) {
    throw ValidationError("noise_std must be positive");
  }

  Rng rng = make_rng(config.seed, StreamTag::kBlobs);
  const std::size_t c = config.num_classes;
  const std::size_t d = config.feature_dim;
  Matrix means = random_directions(c, d, rng);

  double min_dist = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < c; ++a) {
    for (std::size_t b = a + 1; b < c; ++b) {
      double sq = 0.0;
      for (std::size_t j = 0; j < d; ++j) sq += (means(a, j) - means(b, j)) * (means(a, j) - means(b, j));
      min_dist = std::min(min_dist, std::sqrt(sq));
    }
  }
  if (!(min_dist > 0.0)) throw ValidationError("cannot place distinct class means in dimension " + std::to_string(d));
  const double scale = config.class_separation / min_dist;
  for (auto& v : means.data()) v *= scale;

  const std::size_t n = config.n_per_class * c;
  Matrix features(n, d);
  std::vector<Label> labels(n);
  std::normal_distribution<double> gauss(0.0, config.noise_std);
  for (std::size_t cls = 0; cls < c; ++cls) {
    for (std::size_t k = 0; k < config.n_per_class; ++k) {
      const std::size_t i = cls * config.n_per_class + k;
      labels[i] = static_cast<Label>(cls);
      auto row = features.row(i);
      for (std::size_t j = 0; j < d; ++j) row[j] = narrow_to_f32(means(cls, j) + gauss(rng));
    }
  }
  return Dataset(c, std::move(features), labels, labels);
}

Dataset inject_label_noise(const Dataset& ds, double rate, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw ValidationError("label noise rate must lie in [0, 1]");
  const std::size_t n = ds.size();
  const std::size_t flips = count_from_ratio(rate, n);

  Rng rng = make_rng(seed, StreamTag::kLabelNoise);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Partial Fisher-Yates: the first `flips` entries are a uniform sample without replacement.
  for (std::size_t i = 0; i < flips; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(order[i], order[pick(rng)]);
  }

  std::vector<Label> observed(ds.observed_labels().begin(), ds.observed_labels().end());
  std::uniform_int_distribution<Label> other(0, static_cast<Label>(ds.num_classes() - 2));
  for (std::size_t i = 0; i < flips; ++i) {
    const std::size_t id = order[i];
    Label l = other(rng);
    if (l >= ds.true_label(id)) ++l;
    observed[id] = l;
  }
  return ds.with_observed_labels(std::move(observed));
}

}  // namespace dpp
