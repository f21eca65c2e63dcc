#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flguard/linalg.hpp"
#include "flguard/rng.hpp"

namespace flguard {

// A labeled classification dataset. One example per feature row; feature
// values are in [0,1] (IDX pixels are divided by 255 on load).
struct LabeledDataset {
  DenseMatrix features;
  std::vector<int> labels;
  int num_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.cols; }
};

// Per-client index lists into one LabeledDataset. Lists are disjoint and
// non-empty; together they cover a subset (here: all) of the dataset.
struct ClientPartition {
  std::vector<std::vector<std::size_t>> assignments;

  std::size_t num_clients() const { return assignments.size(); }
};

// Loads an IDX image/label file pair (raw or gzip; gzip is detected from the
// 0x1f 0x8b magic). Pixels are scaled to [0,1].
LabeledDataset load_idx(const std::string& images_path,
                        const std::string& labels_path);

// Writes the dataset as a raw IDX pair. Features are quantized with
// round(value * 255) and clamped to [0,255]; loading a freshly loaded file
// back therefore reproduces the original bytes.
void write_idx(const LabeledDataset& ds, const std::string& images_path,
               const std::string& labels_path, std::uint32_t image_rows = 0,
               std::uint32_t image_cols = 0);

// Synthetic Gaussian class clusters with distinct means, labels balanced
// within +-1 (label of example i is i mod num_classes). cluster_spread is the
// per-coordinate noise std; features are clamped to [0,1].
LabeledDataset synth_classification(RngStream& stream, std::size_t n,
                                    std::size_t dim, int num_classes,
                                    double cluster_spread);

// Label-sorted contiguous shards dealt at random, shards_per_client each.
// Requires num_shards % shards_per_client == 0 and
// ds.size() % num_shards == 0. Ties in the label sort break by original
// index.
ClientPartition shard_noniid(const LabeledDataset& ds, std::size_t num_shards,
                             std::size_t shards_per_client, RngStream& stream);

}  // namespace flguard
