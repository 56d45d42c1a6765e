// Copyright 2026 The onchip Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "onchip/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/SVD>
#include <fmt/format.h>

#include "onchip/errors.hpp"
#include "onchip/mesh.hpp"
#include "onchip/optim.hpp"

namespace onchip::data {
namespace {

constexpr char kWeightsMagic[8] = {'O', 'N', 'C', 'H', 'I', 'P', 'W', '1'};

std::vector<std::uint8_t> read_compressed(const std::filesystem::path& path) {
  // gzread passes uncompressed files through unchanged.
  gzFile file = gzopen(path.string().c_str(), "rb");
  if (file == nullptr) throw IoError(fmt::format("cannot open {}", path.string()));
  std::vector<std::uint8_t> bytes;
  std::uint8_t chunk[1 << 16];
  for (;;) {
    const int n = gzread(file, chunk, sizeof(chunk));
    if (n < 0) {
      const std::size_t at = bytes.size();
      gzclose(file);
      throw FormatError(fmt::format("{}: corrupt compressed stream", path.string()), at);
    }
    if (n == 0) break;
    bytes.insert(bytes.end(), chunk, chunk + n);
  }
  gzclose(file);
  return bytes;
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

bool parse_int(std::string_view s, int& out) {
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return !s.empty() && ec == std::errc() && ptr == s.data() + s.size();
}

void scale_columns(Matrix& x) {
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double lo = x.col(c).minCoeff();
    const double hi = x.col(c).maxCoeff();
    if (hi - lo > 0.0) {
      x.col(c) = (x.col(c).array() - lo) / (hi - lo);
    } else {
      x.col(c).setZero();
    }
  }
}

Matrix clip_relu(const Matrix& z, double ceiling) {
  return z.unaryExpr([ceiling](double v) { return network::relu_clip(v, ceiling); });
}

void cap_singular_values(Matrix& w, double cap) {
  const Eigen::MatrixXd dense = w;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(dense, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  if (s.size() == 0 || s(0) <= cap) return;
  const Eigen::VectorXd capped = s.cwiseMin(cap);
  w = svd.matrixU() * capped.asDiagonal() * svd.matrixV().transpose();
}

template <typename T>
void put(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  // Little-endian on disk regardless of host order.
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  U bits = std::bit_cast<U>(value);
  for (std::size_t k = 0; k < sizeof(T); ++k) {
    out.put(static_cast<char>(bits & 0xFF));
    bits >>= 8;
  }
}

class ByteReader {
 public:
  explicit ByteReader(std::vector<std::uint8_t> bytes) : bytes_(std::move(bytes)) {}

  std::size_t offset() const { return at_; }
  bool done() const { return at_ == bytes_.size(); }

  const std::uint8_t* take(std::size_t n, std::string_view what) {
    if (bytes_.size() - at_ < n) {
      throw FormatError(fmt::format("truncated weights file while reading {}", what),
                        bytes_.size());
    }
    const std::uint8_t* p = bytes_.data() + at_;
    at_ += n;
    return p;
  }

  template <typename T>
  T get(std::string_view what) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    const std::uint8_t* p = take(sizeof(T), what);
    U bits = 0;
    for (std::size_t k = sizeof(T); k-- > 0;) bits = (bits << 8) | p[k];
    return std::bit_cast<T>(bits);
  }

 private:
  std::vector<std::uint8_t> bytes_;
  std::size_t at_ = 0;
};

}  // namespace

void Dataset::check() const {
  const std::size_t n = labels.size();
  if (static_cast<std::size_t>(features.rows()) != n) {
    throw ValidationError(fmt::format("{}: {} feature rows for {} labels", name,
                                      features.rows(), n));
  }
  for (int y : labels) {
    if (y < 0 || y >= class_count) {
      throw ValidationError(fmt::format("{}: label {} outside [0, {})", name, y, class_count));
    }
  }
  if (n > 0 && (features.minCoeff() < 0.0 || features.maxCoeff() > 1.0)) {
    throw ValidationError(fmt::format("{}: features outside [0, 1]", name));
  }
  std::vector<char> seen(n, 0);
  for (const auto* part : {&train, &test}) {
    for (std::size_t i : *part) {
      if (i >= n || seen[i]) {
        throw ValidationError(fmt::format("{}: split is not a partition", name));
      }
      seen[i] = 1;
    }
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
    throw ValidationError(fmt::format("{}: split does not cover every sample", name));
  }
}

network::Batch gather(const Dataset& dataset, std::span<const std::size_t> rows) {
  network::Batch batch;
  batch.inputs.resize(static_cast<Eigen::Index>(rows.size()), dataset.features.cols());
  batch.labels.resize(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    batch.inputs.row(static_cast<Eigen::Index>(k)) =
        dataset.features.row(static_cast<Eigen::Index>(rows[k]));
    batch.labels[k] = dataset.labels[rows[k]];
  }
  return batch;
}

IdxArray read_idx(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_compressed(path);
  const std::string where = path.string();
  if (bytes.size() < 4) throw FormatError(fmt::format("{}: truncated IDX header", where), bytes.size());
  if (bytes[0] != 0 || bytes[1] != 0) {
    throw FormatError(fmt::format("{}: bad IDX magic", where), bytes[0] != 0 ? 0 : 1);
  }
  IdxArray out;
  out.type = bytes[2];
  if (out.type != 0x08) {
    throw FormatError(fmt::format("{}: unsupported IDX element type 0x{:02x}", where, out.type), 2);
  }
  const int ndims = bytes[3];
  if (ndims < 1) throw FormatError(fmt::format("{}: IDX file without dimensions", where), 3);
  const std::size_t header = 4 + 4 * static_cast<std::size_t>(ndims);
  if (bytes.size() < header) {
    throw FormatError(fmt::format("{}: truncated IDX header", where), bytes.size());
  }
  std::size_t count = 1;
  for (int d = 0; d < ndims; ++d) {
    out.dims.push_back(read_be32(bytes, 4 + 4 * static_cast<std::size_t>(d)));
    count *= out.dims.back();
  }
  if (bytes.size() < header + count) {
    throw FormatError(fmt::format("{}: truncated IDX payload ({} of {} bytes)", where,
                                  bytes.size() - header, count),
                      bytes.size());
  }
  if (bytes.size() > header + count) {
    throw FormatError(fmt::format("{}: trailing bytes after IDX payload", where), header + count);
  }
  out.values.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
  return out;
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const IdxArray img = read_idx(images);
  const IdxArray lab = read_idx(labels);
  if (img.dims.size() != 3) {
    throw FormatError(fmt::format("{}: expected magic 0x00000803 (3-d images)", images.string()), 3);
  }
  if (lab.dims.size() != 1) {
    throw FormatError(fmt::format("{}: expected magic 0x00000801 (labels)", labels.string()), 3);
  }
  if (img.dims[0] != lab.dims[0]) {
    throw FormatError(fmt::format("{} images but {} labels", img.dims[0], lab.dims[0]), 4);
  }
  const auto n = static_cast<Eigen::Index>(img.dims[0]);
  const auto d = static_cast<Eigen::Index>(img.dims[1]) * img.dims[2];
  Dataset out;
  out.name = images.filename().string();
  out.image_side = img.dims[1] == img.dims[2] ? static_cast<int>(img.dims[1]) : 0;
  out.features.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      out.features(i, j) = img.values[static_cast<std::size_t>(i * d + j)] / 255.0;
    }
  }
  out.labels.assign(lab.values.begin(), lab.values.end());
  out.class_count = n > 0 ? *std::max_element(out.labels.begin(), out.labels.end()) + 1 : 0;
  out.train.resize(static_cast<std::size_t>(n));
  std::iota(out.train.begin(), out.train.end(), std::size_t{0});
  return out;
}

Dataset load_mnist(const std::filesystem::path& dir) {
  auto pick = [&dir](const std::string& stem) {
    for (const char* suffix : {".gz", ""}) {
      const std::filesystem::path p = dir / (stem + suffix);
      if (std::filesystem::exists(p)) return p;
    }
    throw IoError(fmt::format("{} not found in {}", stem, dir.string()));
  };
  Dataset train = load_idx(pick("train-images-idx3-ubyte"), pick("train-labels-idx1-ubyte"));
  const Dataset test = load_idx(pick("t10k-images-idx3-ubyte"), pick("t10k-labels-idx1-ubyte"));
  if (train.features.cols() != test.features.cols()) {
    throw FormatError("train and test images differ in size", 8);
  }
  Dataset out;
  out.name = "mnist";
  out.image_side = train.image_side;
  out.class_count = std::max(train.class_count, test.class_count);
  out.features.resize(train.features.rows() + test.features.rows(), train.features.cols());
  out.features << train.features, test.features;
  out.labels = std::move(train.labels);
  out.labels.insert(out.labels.end(), test.labels.begin(), test.labels.end());
  out.train = std::move(train.train);
  for (std::size_t i = 0; i < test.size(); ++i) out.test.push_back(out.train.size() + i);
  return out;
}

Dataset downsample(const Dataset& dataset, int side) {
  const int src = dataset.image_side;
  if (src <= 0) throw ArgumentError("downsample needs square image features");
  if (side < 1 || side > src) {
    throw ArgumentError(fmt::format("cannot pool a {0}x{0} image to {1}x{1}", src, side));
  }
  const int down = (src / side) * side;
  const int up = ((src + side - 1) / side) * side;
  const int frame = (src - down <= up - src) ? down : up;
  const int factor = frame / side;
  const int offset = (src - frame) / 2;  // negative when padding

  Dataset out = dataset;
  out.image_side = side;
  out.features.resize(dataset.features.rows(), static_cast<Eigen::Index>(side) * side);
  const double norm = 1.0 / (factor * factor);
  for (Eigen::Index n = 0; n < dataset.features.rows(); ++n) {
    for (int oy = 0; oy < side; ++oy) {
      for (int ox = 0; ox < side; ++ox) {
        double acc = 0.0;
        for (int dy = 0; dy < factor; ++dy) {
          for (int dx = 0; dx < factor; ++dx) {
            const int y = offset + oy * factor + dy;
            const int x = offset + ox * factor + dx;
            if (y >= 0 && y < src && x >= 0 && x < src) {
              acc += dataset.features(n, static_cast<Eigen::Index>(y) * src + x);
            }
          }
        }
        out.features(n, static_cast<Eigen::Index>(oy) * side + ox) = acc * norm;
      }
    }
  }
  return out;
}

void assign_split(Dataset& dataset, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
    throw ArgumentError("test fraction must lie in [0, 1)");
  }
  const std::size_t n = dataset.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t k = n; k > 1; --k) {
    std::uniform_int_distribution<std::size_t> pick(0, k - 1);
    std::swap(order[k - 1], order[pick(rng)]);
  }
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  dataset.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  dataset.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(dataset.test.begin(), dataset.test.end());
  std::sort(dataset.train.begin(), dataset.train.end());
}

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (header.empty() && std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    for (std::string_view f : split_fields(line)) header.emplace_back(f);
  }
  if (header.empty()) throw FormatError(fmt::format("{}: missing header row", path.string()), 1);
  const auto label_it = std::find(header.begin(), header.end(), schema.label_column);
  if (label_it == header.end()) {
    throw ValidationError(
        fmt::format("{}: no label column named '{}'", path.string(), schema.label_column));
  }
  const std::size_t label_col = static_cast<std::size_t>(label_it - header.begin());
  const std::size_t width = header.size();

  std::vector<std::vector<double>> rows;
  std::vector<std::string> raw_labels;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::vector<std::string_view> fields = split_fields(line);
    if (fields.size() != width) {
      throw FormatError(fmt::format("{}:{}: expected {} fields, found {}", path.string(), line_no,
                                    width, fields.size()),
                        line_no);
    }
    std::vector<double> row;
    row.reserve(width - 1);
    for (std::size_t c = 0; c < width; ++c) {
      if (c == label_col) {
        raw_labels.emplace_back(fields[c]);
        continue;
      }
      double v = 0.0;
      if (!parse_double(fields[c], v)) {
        throw FormatError(fmt::format("{}:{}: non-numeric value '{}' in column '{}'",
                                      path.string(), line_no, fields[c], header[c]),
                          line_no);
      }
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }

  Dataset out;
  out.name = path.filename().string();
  out.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width - 1));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c + 1 < width; ++c) {
      out.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  scale_columns(out.features);

  bool integral = true;
  std::vector<int> ints(raw_labels.size());
  for (std::size_t r = 0; r < raw_labels.size() && integral; ++r) {
    integral = parse_int(raw_labels[r], ints[r]) && ints[r] >= 0;
  }
  if (integral) {
    out.labels = std::move(ints);
  } else {
    std::map<std::string, int> ids;
    for (const std::string& s : raw_labels) ids.emplace(s, 0);
    int next = 0;
    for (auto& [key, id] : ids) id = next++;
    for (const std::string& s : raw_labels) out.labels.push_back(ids.at(s));
  }
  out.class_count =
      out.labels.empty() ? 0 : *std::max_element(out.labels.begin(), out.labels.end()) + 1;
  assign_split(out, schema.test_fraction, schema.split_seed);
  return out;
}

Dataset synthetic_clusters(const ClusterSpec& spec) {
  if (spec.features < 1 || spec.classes < 2 || spec.samples_per_class < 1 || !(spec.spread >= 0)) {
    throw ArgumentError("invalid cluster specification");
  }
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> centre(0.2, 0.8);
  std::normal_distribution<double> jitter(0.0, spec.spread);
  Matrix centres(spec.classes, spec.features);
  for (Eigen::Index i = 0; i < centres.size(); ++i) centres.data()[i] = centre(rng);

  Dataset out;
  out.name = fmt::format("clusters-{}x{}", spec.features, spec.classes);
  out.class_count = spec.classes;
  const Eigen::Index n = static_cast<Eigen::Index>(spec.classes) * spec.samples_per_class;
  out.features.resize(n, spec.features);
  Eigen::Index row = 0;
  for (int c = 0; c < spec.classes; ++c) {
    for (int k = 0; k < spec.samples_per_class; ++k, ++row) {
      for (int f = 0; f < spec.features; ++f) {
        out.features(row, f) = std::clamp(centres(c, f) + jitter(rng), 0.0, 1.0);
      }
      out.labels.push_back(c);
    }
  }
  assign_split(out, spec.test_fraction, spec.seed ^ 0x9e3779b97f4a7c15ULL);
  return out;
}

std::vector<int> parse_arch(std::string_view arch) {
  std::vector<int> widths;
  std::size_t start = 0;
  for (;;) {
    const std::size_t dash = arch.find('-', start);
    const std::string_view part = arch.substr(start, dash - start);
    int w = 0;
    if (!parse_int(part, w) || w < 1) {
      throw ArgumentError(fmt::format("bad architecture string '{}'", arch));
    }
    widths.push_back(w);
    if (dash == std::string_view::npos) break;
    start = dash + 1;
  }
  if (widths.size() < 2) throw ArgumentError(fmt::format("architecture '{}' has no layers", arch));
  return widths;
}

std::string format_arch(std::span<const int> widths) { return fmt::format("{}", fmt::join(widths, "-")); }

void PretrainedModel::check() const {
  const std::vector<int> widths = parse_arch(arch);
  if (weights.size() + 1 != widths.size()) {
    throw ValidationError(fmt::format("arch '{}' needs {} layers, model has {}", arch,
                                      widths.size() - 1, weights.size()));
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != widths[l + 1] || weights[l].cols() != widths[l]) {
      throw ValidationError(fmt::format("layer {} is {}x{}, arch expects {}x{}", l,
                                        weights[l].rows(), weights[l].cols(), widths[l + 1],
                                        widths[l]));
    }
  }
}

Matrix dense_forward(const PretrainedModel& model, const Matrix& inputs, double relu_ceiling) {
  Matrix h = inputs;
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    Matrix z = h * model.weights[l].transpose();
    h = (l + 1 < model.weights.size()) ? clip_relu(z, relu_ceiling) : std::move(z);
  }
  return h;
}

double dense_accuracy(const PretrainedModel& model, const Dataset& dataset,
                      std::span<const std::size_t> rows) {
  if (rows.empty()) return 0.0;
  const network::Batch batch = gather(dataset, rows);
  const std::vector<int> guess = network::predict(dense_forward(model, batch.inputs));
  std::size_t hits = 0;
  for (std::size_t k = 0; k < guess.size(); ++k) hits += guess[k] == batch.labels[k];
  return static_cast<double>(hits) / static_cast<double>(guess.size());
}

PretrainedModel pretrain_mlp(const Dataset& dataset, std::span<const int> arch,
                             const PretrainConfig& config) {
  if (arch.size() < 2) throw ArgumentError("architecture needs at least two widths");
  if (static_cast<std::size_t>(arch.front()) != dataset.feature_count()) {
    throw ArgumentError(fmt::format("architecture input {} does not match {} features",
                                    arch.front(), dataset.feature_count()));
  }
  if (arch.back() < dataset.class_count) {
    throw ArgumentError("architecture output is narrower than the class count");
  }
  if (config.epochs < 0 || config.batch_size < 1 || !(config.lr >= 0.0)) {
    throw ArgumentError("invalid pretraining settings");
  }

  std::mt19937_64 rng(config.seed);
  PretrainedModel model;
  model.arch = format_arch(arch);
  for (std::size_t l = 0; l + 1 < arch.size(); ++l) {
    const double a = std::sqrt(6.0 / (arch[l] + arch[l + 1]));
    std::uniform_real_distribution<double> init(-a, a);
    Matrix w(arch[l + 1], arch[l]);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = init(rng);
    if (config.sigma_cap > 0.0) cap_singular_values(w, config.sigma_cap);
    model.weights.push_back(std::move(w));
  }
  if (config.lr == 0.0) return model;

  const std::size_t layers = model.weights.size();
  std::vector<std::size_t> order = dataset.train;
  std::vector<Matrix> acts(layers + 1);
  std::vector<Matrix> pre(layers);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t k = order.size(); k > 1; --k) {
      std::uniform_int_distribution<std::size_t> pick(0, k - 1);
      std::swap(order[k - 1], order[pick(rng)]);
    }
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const network::Batch batch =
          gather(dataset, std::span<const std::size_t>(order).subspan(start, stop - start));
      const auto b = static_cast<double>(stop - start);

      acts[0] = batch.inputs;
      for (std::size_t l = 0; l < layers; ++l) {
        pre[l] = acts[l] * model.weights[l].transpose();
        acts[l + 1] = (l + 1 < layers) ? clip_relu(pre[l], network::kReluCeiling) : pre[l];
      }
      // Softmax cross-entropy gradient with respect to the logits.
      Matrix delta = acts[layers];
      for (Eigen::Index r = 0; r < delta.rows(); ++r) {
        const double top = delta.row(r).maxCoeff();
        delta.row(r) = (delta.row(r).array() - top).exp();
        delta.row(r) /= delta.row(r).sum();
        delta(r, batch.labels[static_cast<std::size_t>(r)]) -= 1.0;
      }
      delta /= b;
      for (std::size_t l = layers; l-- > 0;) {
        const Matrix grad = delta.transpose() * acts[l];
        if (l > 0) {
          Matrix back = delta * model.weights[l];
          const Matrix& z = pre[l - 1];
          for (Eigen::Index i = 0; i < back.size(); ++i) {
            const double zi = z.data()[i];
            if (!(zi > 0.0 && zi < network::kReluCeiling)) back.data()[i] = 0.0;
          }
          delta = std::move(back);
        }
        model.weights[l] -= config.lr * grad;
        if (config.sigma_cap > 0.0) cap_singular_values(model.weights[l], config.sigma_cap);
      }
    }
  }
  return model;
}

void save_pretrained(const PretrainedModel& model, const std::filesystem::path& path) {
  model.check();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
  out.write(kWeightsMagic, sizeof(kWeightsMagic));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.arch.size()));
  out.write(model.arch.data(), static_cast<std::streamsize>(model.arch.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.weights.size()));
  for (const Matrix& w : model.weights) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(w.rows()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(w.cols()));
    for (Eigen::Index i = 0; i < w.size(); ++i) put<double>(out, w.data()[i]);
  }
  if (!out) throw IoError(fmt::format("write to {} failed", path.string()));
}

PretrainedModel load_pretrained(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  ByteReader reader(std::move(bytes));
  const std::uint8_t* magic = reader.take(sizeof(kWeightsMagic), "magic");
  if (!std::equal(magic, magic + sizeof(kWeightsMagic), kWeightsMagic,
                  [](std::uint8_t a, char b) { return a == static_cast<std::uint8_t>(b); })) {
    throw FormatError(fmt::format("{}: not a weights file", path.string()), 0);
  }
  PretrainedModel model;
  const auto arch_len = reader.get<std::uint32_t>("arch length");
  const std::uint8_t* arch = reader.take(arch_len, "arch");
  model.arch.assign(reinterpret_cast<const char*>(arch), arch_len);
  const auto count = reader.get<std::uint32_t>("layer count");
  for (std::uint32_t l = 0; l < count; ++l) {
    const auto rows = reader.get<std::uint32_t>("rows");
    const auto cols = reader.get<std::uint32_t>("cols");
    Matrix w(rows, cols);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = reader.get<double>("weights");
    model.weights.push_back(std::move(w));
  }
  if (!reader.done()) {
    throw FormatError(fmt::format("{}: trailing bytes", path.string()), reader.offset());
  }
  try {
    model.check();
  } catch (const std::exception& e) {
    throw FormatError(fmt::format("{}: {}", path.string(), e.what()), reader.offset());
  }
  return model;
}

mesh::MeshLayer map_layer(const Matrix& weight, double sigma_bound, std::size_t* clamped) {
  if (!(sigma_bound > 0.0)) throw ArgumentError("sigma bound must be positive");
  const Eigen::MatrixXd dense = weight;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(dense, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::VectorXd& s = svd.singularValues();

  mesh::MeshLayer layer;
  layer.rows = static_cast<int>(weight.rows());
  layer.cols = static_cast<int>(weight.cols());
  layer.sigma_bound = sigma_bound;
  const mesh::Decomposition u = mesh::decompose_orthogonal(svd.matrixU());
  const mesh::Decomposition v = mesh::decompose_orthogonal(svd.matrixV().transpose());
  const std::vector<double> sigma(s.data(), s.data() + s.size());
  mesh::SingularPhases sp = mesh::phases_from_singular(sigma, sigma_bound);
  layer.phi_u = u.phases;
  layer.d_u = u.signs;
  layer.phi_v = v.phases;
  layer.d_v = v.signs;
  layer.phi_s = std::move(sp.phases);
  if (clamped != nullptr) *clamped += sp.clamped;
  return layer;
}

DeployedOnn deploy(const PretrainedModel& model, const DeploySettings& settings) {
  model.check();
  std::vector<mesh::MeshLayer> layers;
  std::size_t clamped = 0;
  for (const Matrix& w : model.weights) layers.push_back(map_layer(w, settings.sigma_bound, &clamped));
  network::OnnModel onn(std::move(layers));
  ActiveMask mask = optim::select_active(onn.layout(), settings.alpha, settings.mask_seed);
  noise::NoiseSpec spec;
  spec.sigma_gamma = settings.sigma_gamma;
  spec.omega = settings.omega;
  spec.adjacency = noise::Adjacency::from_layout(onn.layout());
  spec.validate();
  noise::NoiseRealization realization = noise::realize(spec, mask, settings.noise_seed);
  return DeployedOnn{std::move(onn), std::move(mask), std::move(realization), clamped};
}

}  // namespace onchip::data
