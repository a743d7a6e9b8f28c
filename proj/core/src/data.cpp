#include "mcpath/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <stdexcept>

#include "mcpath/rng.hpp"

namespace mcpath {

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset, const std::string& path) {
  if (bytes.size() < offset + 4) throw ParseError(path + ": truncated header", bytes.size());
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void expect_magic(const std::vector<std::uint8_t>& bytes, std::uint32_t magic, const std::string& path) {
  if (read_be32(bytes, 0, path) != magic) throw ParseError(path + ": bad IDX magic number", 0);
}

void expect_payload(const std::vector<std::uint8_t>& bytes, std::size_t header, std::size_t payload,
                    const std::string& path) {
  if (bytes.size() < header + payload) throw ParseError(path + ": truncated payload", bytes.size());
}

}  // namespace

std::string to_string(DataKind k) {
  switch (k) {
    case DataKind::Blobs: return "blobs";
    case DataKind::Moons: return "moons";
    case DataKind::PlantedSeparable: return "planted-separable";
    case DataKind::Xor: return "xor";
    case DataKind::MnistSubset: return "mnist-subset";
  }
  return "blobs";
}

DataKind parse_data_kind(const std::string& s) {
  for (auto k : {DataKind::Blobs, DataKind::Moons, DataKind::PlantedSeparable, DataKind::Xor, DataKind::MnistSubset}) {
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument("unknown data kind '" + s + "'");
}

void DataSpec::validate() const {
  if (samples < 1) throw std::invalid_argument("samples must be >= 1");
  if (classes < 2) throw std::invalid_argument("classes must be >= 2");
  if (samples < classes) throw std::invalid_argument("samples must be >= classes");
  if (input_dim < 1) throw std::invalid_argument("input_dim must be >= 1");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw std::invalid_argument("noise must be finite and >= 0");
  switch (kind) {
    case DataKind::Blobs:
      if (classes > 2 * input_dim) throw std::invalid_argument("blobs need classes <= 2 * input_dim");
      break;
    case DataKind::Moons:
    case DataKind::Xor:
      if (classes != 2 || input_dim < 2) throw std::invalid_argument(to_string(kind) + " needs 2 classes and input_dim >= 2");
      break;
    case DataKind::PlantedSeparable:
      if (classes > input_dim) throw std::invalid_argument("planted-separable needs classes <= input_dim");
      if (noise <= 0.0) throw std::invalid_argument("planted-separable needs a positive margin (noise)");
      break;
    case DataKind::MnistSubset:
      if (images_path.empty() || labels_path.empty()) throw std::invalid_argument("mnist-subset needs IDX paths");
      if (classes != 10 || input_dim != 784) throw std::invalid_argument("mnist-subset has 784 inputs and 10 classes");
      break;
  }
}

Matrix one_hot(const std::vector<int>& labels, int classes) {
  Matrix y = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) throw std::out_of_range("label outside class range");
    y(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return y;
}

Dataset generate(const DataSpec& spec) {
  spec.validate();
  if (spec.kind == DataKind::MnistSubset) {
    return load_idx_subset(spec.images_path, spec.labels_path, spec.samples, spec.seed);
  }
  Rng rng(spec.seed);
  const int n = spec.samples;
  const int d = spec.input_dim;
  Matrix x = Matrix::Zero(n, d);
  std::vector<int> labels(static_cast<std::size_t>(n));

  Matrix directions;
  if (spec.kind == DataKind::PlantedSeparable) {
    // Gram-Schmidt on Gaussian vectors.
    directions = Matrix::Zero(d, spec.classes);
    for (int k = 0; k < spec.classes; ++k) {
      Vector v(d);
      do {
        for (int i = 0; i < d; ++i) v(i) = rng.normal();
        for (int j = 0; j < k; ++j) v -= directions.col(j).dot(v) * directions.col(j);
      } while (v.norm() < 1e-6);
      directions.col(k) = v.normalized();
    }
  }

  for (int i = 0; i < n; ++i) {
    const int label = i % spec.classes;
    labels[static_cast<std::size_t>(i)] = label;
    auto row = x.row(i);
    switch (spec.kind) {
      case DataKind::Blobs: {
        row(label / 2 % d) = label % 2 == 0 ? 3.0 : -3.0;
        for (int j = 0; j < d; ++j) row(j) += spec.noise * rng.normal();
        break;
      }
      case DataKind::Moons: {
        const double a = std::numbers::pi * rng.uniform();
        if (label == 0) {
          row(0) = std::cos(a);
          row(1) = std::sin(a);
        } else {
          row(0) = 1.0 - std::cos(a);
          row(1) = 0.5 - std::sin(a);
        }
        for (int j = 0; j < d; ++j) row(j) += spec.noise * rng.normal();
        break;
      }
      case DataKind::Xor: {
        const int corner = (i / 2) % 2;
        const double s0 = corner == 0 ? 1.0 : -1.0;
        const double s1 = label == 1 ? -s0 : s0;
        row(0) = s0;
        row(1) = s1;
        for (int j = 0; j < d; ++j) row(j) += spec.noise * rng.normal();
        break;
      }
      case DataKind::PlantedSeparable: {
        Vector g(d);
        for (int j = 0; j < d; ++j) g(j) = rng.normal();
        for (int k = 0; k < spec.classes; ++k) g -= directions.col(k).dot(g) * directions.col(k);
        Vector p = g;
        for (int k = 0; k < spec.classes; ++k) {
          const double z = spec.noise + std::abs(rng.normal());
          p += (k == label ? z : -z) * directions.col(k);
        }
        row = p.transpose();
        break;
      }
      case DataKind::MnistSubset:
        break;
    }
  }
  return {std::move(x), one_hot(labels, spec.classes)};
}

IdxImages read_idx_images(const std::string& path) {
  const auto bytes = read_file(path);
  expect_magic(bytes, kImagesMagic, path);
  const std::uint32_t count = read_be32(bytes, 4, path);
  const std::uint32_t rows = read_be32(bytes, 8, path);
  const std::uint32_t cols = read_be32(bytes, 12, path);
  if (rows == 0 || cols == 0 || rows > 4096 || cols > 4096) throw ParseError(path + ": implausible image dims", 8);
  const std::size_t payload = std::size_t{count} * rows * cols;
  expect_payload(bytes, 16, payload, path);
  IdxImages out;
  out.rows = static_cast<int>(rows);
  out.cols = static_cast<int>(cols);
  out.pixels.assign(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(payload));
  return out;
}

std::vector<std::uint8_t> read_idx_labels(const std::string& path) {
  const auto bytes = read_file(path);
  expect_magic(bytes, kLabelsMagic, path);
  const std::uint32_t count = read_be32(bytes, 4, path);
  expect_payload(bytes, 8, count, path);
  return {bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(count)};
}

Dataset load_idx_subset(const std::string& images_path, const std::string& labels_path, int count,
                        std::uint64_t seed) {
  const auto images = read_idx_images(images_path);
  const auto labels = read_idx_labels(labels_path);
  const int total = images.count();
  if (static_cast<int>(labels.size()) != total) {
    throw std::invalid_argument("image and label files disagree on the example count");
  }
  if (count < 1 || count > total) {
    throw std::invalid_argument("requested " + std::to_string(count) + " of " + std::to_string(total) + " examples");
  }
  Rng rng(seed);
  const auto picked = count == total ? [&] {
    std::vector<int> all(static_cast<std::size_t>(total));
    for (int i = 0; i < total; ++i) all[static_cast<std::size_t>(i)] = i;
    return all;
  }() : rng.sample_without_replacement(total, count);

  const int dim = images.rows * images.cols;
  Dataset out;
  out.inputs.resize(count, dim);
  std::vector<int> y;
  y.reserve(static_cast<std::size_t>(count));
  for (int r = 0; r < count; ++r) {
    const auto src = static_cast<std::size_t>(picked[static_cast<std::size_t>(r)]);
    for (int c = 0; c < dim; ++c) {
      out.inputs(r, c) = static_cast<double>(images.pixels[src * static_cast<std::size_t>(dim) + static_cast<std::size_t>(c)]) / 127.5 - 1.0;
    }
    const int label = labels[src];
    if (label > 9) throw ParseError(labels_path + ": label outside 0..9", 8 + src);
    y.push_back(label);
  }
  out.targets = one_hot(y, 10);
  return out;
}

}  // namespace mcpath
