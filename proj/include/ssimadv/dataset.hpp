#pragma once

#include <string>
#include <vector>

#include "ssimadv/image.hpp"

namespace ssimadv {

/// Labeled images for one split. Pixels are in [0,1].
template <typename Scalar>
struct Dataset {
  std::vector<Image<Scalar>> images;
  std::vector<int> labels;
  std::string split;

  int size() const { return static_cast<int>(images.size()); }

  void validate(int num_classes) const {
    if (images.size() != labels.size())
      throw std::invalid_argument("Dataset: image/label count mismatch");
    for (int l : labels)
      if (l < 0 || l >= num_classes)
        throw std::invalid_argument("Dataset: label " + std::to_string(l) +
                                    " out of range [0," + std::to_string(num_classes) + ")");
  }

  Dataset head(int n) const {
    Dataset out;
    out.split = split;
    const int k = std::min<int>(n, size());
    out.images.assign(images.begin(), images.begin() + k);
    out.labels.assign(labels.begin(), labels.begin() + k);
    return out;
  }
};

}  // namespace ssimadv
