// ksd/data.hpp

// Copyright 2026  The ksd authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef KSD_DATA_HPP_
#define KSD_DATA_HPP_

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "ksd/errors.hpp"
#include "ksd/network.hpp"
#include "ksd/rng.hpp"

// Dataset ingestion (IDX binary files), the synthetic curves dataset, and
// the per-iteration A/B/C subset draws.  Subset index lists are returned
// sorted so that gathering a batch is a deterministic function of the
// draw, independent of sampling order.

namespace ksd {

enum class SplitTag { train, validation, test };

/// In-memory dataset: inputs in [0,1], one sample per row, with either a
/// label per sample (classification) or a target row per sample
/// (autoencoder/regression).
struct Dataset {
  Eigen::MatrixXd inputs;
  Eigen::MatrixXd targets;
  Eigen::VectorXi labels;
  SplitTag tag = SplitTag::train;

  int num_samples() const { return static_cast<int>(inputs.rows()); }
  int input_dim() const { return static_cast<int>(inputs.cols()); }
  bool has_labels() const { return labels.size() > 0; }

  void validate() const {
    if (has_labels() && labels.size() != inputs.rows())
      throw InvalidInput("Dataset: label count mismatch");
    if (targets.size() > 0 && targets.rows() != inputs.rows())
      throw InvalidInput("Dataset: target count mismatch");
  }
};

/// Gathers the listed samples into a batch, rows in list order.
inline Batch gather(const Dataset &data, const std::vector<int> &indices) {
  if (indices.empty()) throw InvalidInput("gather: empty index list");
  Batch batch;
  batch.inputs.resize(indices.size(), data.input_dim());
  if (data.targets.size() > 0)
    batch.targets.resize(indices.size(), data.targets.cols());
  if (data.has_labels()) batch.labels.resize(indices.size());
  for (int i = 0; i < static_cast<int>(indices.size()); ++i) {
    const int idx = indices[i];
    if (idx < 0 || idx >= data.num_samples())
      throw InvalidInput("gather: index out of range");
    batch.inputs.row(i) = data.inputs.row(idx);
    if (data.targets.size() > 0) batch.targets.row(i) = data.targets.row(idx);
    if (data.has_labels()) batch.labels[i] = data.labels[idx];
  }
  return batch;
}

namespace detail {

inline std::uint32_t read_u32_be(std::istream &in, const std::string &what) {
  unsigned char bytes[4];
  in.read(reinterpret_cast<char *>(bytes), 4);
  if (in.gcount() != 4) throw FormatError("IDX: truncated " + what);
  return (std::uint32_t(bytes[0]) << 24) | (std::uint32_t(bytes[1]) << 16) |
         (std::uint32_t(bytes[2]) << 8) | std::uint32_t(bytes[3]);
}

inline void write_u32_be(std::ostream &out, std::uint32_t v) {
  unsigned char bytes[4] = {static_cast<unsigned char>(v >> 24),
                            static_cast<unsigned char>(v >> 16),
                            static_cast<unsigned char>(v >> 8),
                            static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<char *>(bytes), 4);
}

}  // namespace detail

/// Loads an IDX image/label file pair (the MNIST container format:
/// big-endian headers, byte payload).  Pixels are scaled to [0,1] by 255.
inline Dataset load_idx(const std::string &images_path,
                        const std::string &labels_path) {
  std::ifstream images(images_path, std::ios::binary);
  if (!images) throw FormatError("load_idx: cannot open " + images_path);
  if (detail::read_u32_be(images, "image magic") != 0x00000803u)
    throw FormatError("load_idx: bad image magic in " + images_path);
  const std::uint32_t count = detail::read_u32_be(images, "image count");
  const std::uint32_t rows = detail::read_u32_be(images, "image rows");
  const std::uint32_t cols = detail::read_u32_be(images, "image cols");
  if (count == 0 || rows == 0 || cols == 0)
    throw FormatError("load_idx: empty image dimensions");
  const std::size_t pixels = std::size_t(count) * rows * cols;
  std::vector<unsigned char> payload(pixels);
  images.read(reinterpret_cast<char *>(payload.data()), pixels);
  if (static_cast<std::size_t>(images.gcount()) != pixels)
    throw FormatError("load_idx: truncated image payload in " + images_path);

  std::ifstream labels(labels_path, std::ios::binary);
  if (!labels) throw FormatError("load_idx: cannot open " + labels_path);
  if (detail::read_u32_be(labels, "label magic") != 0x00000801u)
    throw FormatError("load_idx: bad label magic in " + labels_path);
  const std::uint32_t label_count = detail::read_u32_be(labels, "label count");
  if (label_count != count)
    throw FormatError("load_idx: image/label count mismatch");
  std::vector<unsigned char> raw_labels(count);
  labels.read(reinterpret_cast<char *>(raw_labels.data()), count);
  if (static_cast<std::size_t>(labels.gcount()) != count)
    throw FormatError("load_idx: truncated label payload in " + labels_path);

  Dataset data;
  data.inputs.resize(count, rows * cols);
  for (std::uint32_t i = 0; i < count; ++i)
    for (std::uint32_t j = 0; j < rows * cols; ++j)
      data.inputs(i, j) = payload[std::size_t(i) * rows * cols + j] / 255.0;
  data.labels.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    if (raw_labels[i] > 9)
      throw FormatError("load_idx: label value out of range");
    data.labels[i] = raw_labels[i];
  }
  return data;
}

/// Writes the dataset as an IDX pair, quantizing inputs to bytes.  Images
/// are stored `rows` x `cols` row-major, so rows*cols must equal the input
/// dimension.  Datasets without labels get an all-zero label file.
inline void write_idx(const Dataset &data, const std::string &images_path,
                      const std::string &labels_path, int rows, int cols) {
  if (rows * cols != data.input_dim())
    throw InvalidInput("write_idx: rows*cols != input dim");
  std::ofstream images(images_path, std::ios::binary);
  if (!images) throw FormatError("write_idx: cannot open " + images_path);
  detail::write_u32_be(images, 0x00000803u);
  detail::write_u32_be(images, static_cast<std::uint32_t>(data.num_samples()));
  detail::write_u32_be(images, static_cast<std::uint32_t>(rows));
  detail::write_u32_be(images, static_cast<std::uint32_t>(cols));
  for (int i = 0; i < data.num_samples(); ++i)
    for (int j = 0; j < data.input_dim(); ++j) {
      const long q = std::lround(data.inputs(i, j) * 255.0);
      const unsigned char byte =
          static_cast<unsigned char>(std::clamp(q, 0l, 255l));
      images.write(reinterpret_cast<const char *>(&byte), 1);
    }

  std::ofstream labels(labels_path, std::ios::binary);
  if (!labels) throw FormatError("write_idx: cannot open " + labels_path);
  detail::write_u32_be(labels, 0x00000801u);
  detail::write_u32_be(labels, static_cast<std::uint32_t>(data.num_samples()));
  for (int i = 0; i < data.num_samples(); ++i) {
    const unsigned char byte =
        data.has_labels() ? static_cast<unsigned char>(data.labels[i]) : 0;
    labels.write(reinterpret_cast<const char *>(&byte), 1);
  }
}

/// Thresholds inputs to {0,1}; strictly-greater comparison, so applying it
/// twice is the same as once for any threshold in (0,1).
inline Dataset binarize(const Dataset &data, double threshold = 0.5) {
  Dataset out = data;
  out.inputs = (data.inputs.array() > threshold).cast<double>();
  return out;
}

/// Synthetic curves dataset: each sample draws three control points in
/// the unit square and rasterizes the quadratic Bezier curve they define
/// onto a resolution x resolution binary grid.  Targets equal inputs
/// (reconstruction task).
inline Dataset generate_curves(int num_samples, int resolution, uint64_t seed) {
  if (num_samples < 1) throw InvalidInput("generate_curves: num_samples < 1");
  if (resolution < 2) throw InvalidInput("generate_curves: resolution < 2");
  Rng rng(mix_seed(seed, 0xc04e));
  const int dim = resolution * resolution;
  Dataset data;
  data.inputs = Eigen::MatrixXd::Zero(num_samples, dim);
  const int steps = 20 * resolution;
  for (int i = 0; i < num_samples; ++i) {
    double px[3], py[3];
    for (int c = 0; c < 3; ++c) {
      px[c] = rng.uniform01();
      py[c] = rng.uniform01();
    }
    for (int s = 0; s <= steps; ++s) {
      const double t = double(s) / steps;
      const double u = 1.0 - t;
      const double x = u * u * px[0] + 2.0 * u * t * px[1] + t * t * px[2];
      const double y = u * u * py[0] + 2.0 * u * t * py[1] + t * t * py[2];
      const int col = std::min(resolution - 1, int(x * resolution));
      const int row = std::min(resolution - 1, int(y * resolution));
      data.inputs(i, row * resolution + col) = 1.0;
    }
  }
  data.targets = data.inputs;
  return data;
}

/// Per-iteration sampling scheme for the three optimization subsets.
struct SubsetPlan {
  enum class AMode { full, fraction };
  AMode a_mode = AMode::full;
  double a_fraction = 1.0;
  double b_fraction = 0.05;
  double c_fraction = 0.05;
  bool disjoint_bc = true;
  std::uint64_t seed = 0;

  void validate() const {
    const auto in_unit = [](double f) { return f > 0.0 && f <= 1.0; };
    if (!in_unit(b_fraction) || !in_unit(c_fraction) || !in_unit(a_fraction))
      throw InvalidPlan("SubsetPlan: fractions must lie in (0, 1]");
    if (disjoint_bc && b_fraction + c_fraction > 1.0)
      throw InvalidPlan(
          "SubsetPlan: disjoint B and C need b_fraction + c_fraction <= 1");
  }
};

struct Subsets {
  std::vector<int> a, b, c;
};

/// Draws the iteration's subsets.  Sizes are floor(fraction * n), at
/// least 1.  The draw is keyed by (plan.seed, iteration) only, and every
/// returned list is sorted ascending.
inline Subsets draw_subsets(int num_samples, const SubsetPlan &plan,
                            int iteration) {
  plan.validate();
  if (num_samples < 1) throw InvalidInput("draw_subsets: empty dataset");
  const auto size_of = [&](double fraction) {
    return std::max(1, static_cast<int>(fraction * num_samples));
  };
  const int nb = size_of(plan.b_fraction);
  const int nc = size_of(plan.c_fraction);
  if (plan.disjoint_bc && nb + nc > num_samples)
    throw InvalidPlan("draw_subsets: disjoint B and C exceed the dataset");

  Rng rng(mix_seed(plan.seed, 0xdada, static_cast<std::uint64_t>(iteration)));
  Subsets out;
  if (plan.a_mode == SubsetPlan::AMode::full) {
    out.a.resize(num_samples);
    for (int i = 0; i < num_samples; ++i) out.a[i] = i;
  } else {
    out.a = rng.sample_without_replacement(num_samples, size_of(plan.a_fraction));
  }
  if (plan.disjoint_bc) {
    std::vector<int> both = rng.sample_without_replacement(num_samples, nb + nc);
    out.b.assign(both.begin(), both.begin() + nb);
    out.c.assign(both.begin() + nb, both.end());
  } else {
    out.b = rng.sample_without_replacement(num_samples, nb);
    out.c = rng.sample_without_replacement(num_samples, nc);
  }
  std::sort(out.a.begin(), out.a.end());
  std::sort(out.b.begin(), out.b.end());
  std::sort(out.c.begin(), out.c.end());
  return out;
}

inline Subsets draw_subsets(const Dataset &data, const SubsetPlan &plan,
                            int iteration) {
  return draw_subsets(data.num_samples(), plan, iteration);
}

}  // namespace ksd

#endif  // KSD_DATA_HPP_
