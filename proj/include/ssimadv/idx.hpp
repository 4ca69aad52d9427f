#pragma once

#include <cstdint>
#include <string>

#include "ssimadv/dataset.hpp"

namespace ssimadv {

/// Loads an IDX image/label file pair (the MNIST container format):
/// big-endian u32 magic 0x00000803 (images, dims count/rows/cols) or
/// 0x00000801 (labels, dims count), then unsigned bytes. Pixels are scaled
/// to [0,1] by /255.
Dataset<float> load_idx(const std::string& images_path, const std::string& labels_path);

/// Writes a dataset back out in the same format (test fixtures, round trips).
/// Pixels must already be exact multiples of 1/255.
void save_idx(const Dataset<float>& data, const std::string& images_path,
              const std::string& labels_path);

/// Loads CIFAR-10-style binary batches: records of 1 label byte followed by
/// 3072 channel-planar pixel bytes (32x32x3).
Dataset<float> load_cifar_batch(const std::string& path);

}  // namespace ssimadv
