#pragma once

// Synthetic datasets and the MNIST IDX reader. Every generator is a pure
// function of its spec, seed included.

#include <cstdint>
#include <string>
#include <vector>

#include "mcpath/network.hpp"

namespace mcpath {

enum class DataKind { Blobs, Moons, PlantedSeparable, Xor, MnistSubset };

std::string to_string(DataKind k);
DataKind parse_data_kind(const std::string& s);

struct DataSpec {
  DataKind kind = DataKind::Blobs;
  int samples = 200;
  int input_dim = 2;
  int classes = 2;
  double noise = 0.5;  // Gaussian scale; also the margin of planted-separable data
  std::uint64_t seed = 0;
  std::string images_path;  // mnist-subset only
  std::string labels_path;

  // Throws std::invalid_argument on inconsistent fields.
  void validate() const;
};

// Blobs: class k centred at 3 s_k e_{floor(k/2)} with s_k = +1 for even k,
// -1 for odd k (needs classes <= 2 d); labels cycle through the classes.
// Moons: the two interleaved half circles in the first two coordinates.
// Xor: corners (+-1, +-1) in the first two coordinates, label 1 when the
// signs differ. PlantedSeparable: orthonormal directions u_k, class-k points
// have u_k . x >= margin and u_j . x <= -margin for j != k (needs classes <= d).
Dataset generate(const DataSpec& spec);

Matrix one_hot(const std::vector<int>& labels, int classes);

// Uniform sample of `count` examples without replacement (sorted by original
// index). Pixels map to x / 127.5 - 1; labels become one-hot over 10 classes.
// Throws ParseError with the byte offset on bad magic, dims or truncation.
Dataset load_idx_subset(const std::string& images_path, const std::string& labels_path, int count,
                        std::uint64_t seed);

struct IdxImages {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> pixels;  // count * rows * cols, row-major per image
  int count() const { return rows * cols == 0 ? 0 : static_cast<int>(pixels.size() / (rows * cols)); }
};

IdxImages read_idx_images(const std::string& path);
std::vector<std::uint8_t> read_idx_labels(const std::string& path);

}  // namespace mcpath
