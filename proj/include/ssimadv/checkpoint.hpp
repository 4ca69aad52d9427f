#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "ssimadv/model.hpp"

// Model checkpoint container, version 1. Little-endian throughout:
//   8 bytes  magic "SSIMADVM"
//   u32      version (1)
//   u32      class count
//   u32 x3   input height, width, channels
//   u32      layer count
// then per layer a u8 tag: 0 = conv, 1 = dense, 2 = relu.
//   conv:  u32 out_channels, in_channels, kernel, stride, pad,
//          f32 weights (out_channels rows x in*k*k, row-major), f32 biases
//   dense: u32 out_size, in_size, f32 weights (row-major), f32 biases
// Parameters are stored as float32 regardless of the in-memory scalar type.

namespace ssimadv {

inline constexpr std::array<char, 8> kCheckpointMagic = {'S', 'S', 'I', 'M',
                                                         'A', 'D', 'V', 'M'};
inline constexpr uint32_t kCheckpointVersion = 1;

namespace detail {

inline void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t read_u32(std::istream& is, const std::string& what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error("checkpoint: truncated while reading " + what);
  return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
         static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

inline void write_f32(std::ostream& os, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(os, bits);
}

inline float read_f32(std::istream& is, const std::string& what) {
  const uint32_t bits = read_u32(is, what);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

template <typename Scalar>
void write_params(std::ostream& os, const MatX<Scalar>& w, const VecX<Scalar>& b) {
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j) write_f32(os, static_cast<float>(w(i, j)));
  for (Eigen::Index i = 0; i < b.size(); ++i) write_f32(os, static_cast<float>(b[i]));
}

template <typename Scalar>
void read_params(std::istream& is, MatX<Scalar>& w, VecX<Scalar>& b) {
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      w(i, j) = static_cast<Scalar>(read_f32(is, "weights"));
  for (Eigen::Index i = 0; i < b.size(); ++i)
    b[i] = static_cast<Scalar>(read_f32(is, "biases"));
}

}  // namespace detail

template <typename Scalar>
void save_checkpoint(const ScoreModel<Scalar>& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
  os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::write_u32(os, kCheckpointVersion);
  detail::write_u32(os, static_cast<uint32_t>(model.num_classes()));
  const Shape in = model.input_shape();
  detail::write_u32(os, static_cast<uint32_t>(in.height));
  detail::write_u32(os, static_cast<uint32_t>(in.width));
  detail::write_u32(os, static_cast<uint32_t>(in.channels));
  detail::write_u32(os, static_cast<uint32_t>(model.layers().size()));
  for (const auto& layer : model.layers()) {
    std::visit(
        [&](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, Conv2d<Scalar>>) {
            os.put(0);
            detail::write_u32(os, static_cast<uint32_t>(l.out_channels));
            detail::write_u32(os, static_cast<uint32_t>(l.in_channels));
            detail::write_u32(os, static_cast<uint32_t>(l.kernel));
            detail::write_u32(os, static_cast<uint32_t>(l.stride));
            detail::write_u32(os, static_cast<uint32_t>(l.pad));
            detail::write_params(os, l.weight, l.bias);
          } else if constexpr (std::is_same_v<T, Dense<Scalar>>) {
            os.put(1);
            detail::write_u32(os, static_cast<uint32_t>(l.out_size));
            detail::write_u32(os, static_cast<uint32_t>(l.in_size));
            detail::write_params(os, l.weight, l.bias);
          } else {
            os.put(2);
          }
        },
        layer);
  }
  if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

template <typename Scalar>
ScoreModel<Scalar> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kCheckpointMagic)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const uint32_t version = detail::read_u32(is, "version");
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  const int classes = static_cast<int>(detail::read_u32(is, "class count"));
  Shape input;
  input.height = static_cast<int>(detail::read_u32(is, "input height"));
  input.width = static_cast<int>(detail::read_u32(is, "input width"));
  input.channels = static_cast<int>(detail::read_u32(is, "input channels"));
  const uint32_t layer_count = detail::read_u32(is, "layer count");

  std::vector<Layer<Scalar>> layers;
  Shape cur = input;
  for (uint32_t li = 0; li < layer_count; ++li) {
    const int tag = is.get();
    if (tag == std::istream::traits_type::eof())
      throw std::runtime_error("checkpoint: truncated at layer " + std::to_string(li));
    if (tag == 0) {
      Conv2d<Scalar> conv;
      conv.out_channels = static_cast<int>(detail::read_u32(is, "conv out_channels"));
      conv.in_channels = static_cast<int>(detail::read_u32(is, "conv in_channels"));
      conv.kernel = static_cast<int>(detail::read_u32(is, "conv kernel"));
      conv.stride = static_cast<int>(detail::read_u32(is, "conv stride"));
      conv.pad = static_cast<int>(detail::read_u32(is, "conv pad"));
      if (conv.in_channels != cur.channels)
        throw std::runtime_error("checkpoint: conv channel mismatch at layer " +
                                 std::to_string(li));
      conv.in_shape = cur;
      conv.out_shape = {(cur.height + 2 * conv.pad - conv.kernel) / conv.stride + 1,
                        (cur.width + 2 * conv.pad - conv.kernel) / conv.stride + 1,
                        conv.out_channels};
      conv.weight.resize(conv.out_channels, conv.in_channels * conv.kernel * conv.kernel);
      conv.bias.resize(conv.out_channels);
      detail::read_params(is, conv.weight, conv.bias);
      cur = conv.out_shape;
      layers.emplace_back(std::move(conv));
    } else if (tag == 1) {
      Dense<Scalar> dense;
      dense.out_size = static_cast<int>(detail::read_u32(is, "dense out_size"));
      dense.in_size = static_cast<int>(detail::read_u32(is, "dense in_size"));
      if (dense.in_size != cur.size())
        throw std::runtime_error("checkpoint: dense size mismatch at layer " +
                                 std::to_string(li));
      dense.weight.resize(dense.out_size, dense.in_size);
      dense.bias.resize(dense.out_size);
      detail::read_params(is, dense.weight, dense.bias);
      cur = {1, 1, dense.out_size};
      layers.emplace_back(std::move(dense));
    } else if (tag == 2) {
      layers.emplace_back(Relu{});
    } else {
      throw std::runtime_error("checkpoint: unknown layer tag " + std::to_string(tag));
    }
  }
  if (cur.size() != classes)
    throw std::runtime_error("checkpoint: layers produce " + std::to_string(cur.size()) +
                             " scores for " + std::to_string(classes) + " classes");
  return ScoreModel<Scalar>(input, classes, std::move(layers));
}

}  // namespace ssimadv
