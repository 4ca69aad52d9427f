#include "ssimadv/idx.hpp"

#include <cstdio>
#include <fstream>
#include <vector>

namespace ssimadv {

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::uint32_t read_be32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error(path + ": truncated IDX header");
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::ifstream open_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open");
  return in;
}

}  // namespace

Dataset<float> load_idx(const std::string& images_path, const std::string& labels_path) {
  auto img_in = open_binary(images_path);
  const std::uint32_t img_magic = read_be32(img_in, images_path);
  if (img_magic != kImagesMagic) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "0x%08x", img_magic);
    throw std::runtime_error(images_path + ": bad IDX image magic " + buf);
  }
  const std::uint32_t count = read_be32(img_in, images_path);
  const std::uint32_t rows = read_be32(img_in, images_path);
  const std::uint32_t cols = read_be32(img_in, images_path);

  auto lbl_in = open_binary(labels_path);
  const std::uint32_t lbl_magic = read_be32(lbl_in, labels_path);
  if (lbl_magic != kLabelsMagic) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "0x%08x", lbl_magic);
    throw std::runtime_error(labels_path + ": bad IDX label magic " + buf);
  }
  const std::uint32_t lbl_count = read_be32(lbl_in, labels_path);
  if (lbl_count != count)
    throw std::runtime_error("IDX count mismatch: " + std::to_string(count) +
                             " images vs " + std::to_string(lbl_count) + " labels");

  Dataset<float> data;
  data.images.reserve(count);
  data.labels.reserve(count);
  const Shape shape{static_cast<int>(rows), static_cast<int>(cols), 1};
  std::vector<unsigned char> buf(shape.size());
  for (std::uint32_t i = 0; i < count; ++i) {
    if (!img_in.read(reinterpret_cast<char*>(buf.data()), buf.size()))
      throw std::runtime_error(images_path + ": truncated at image " + std::to_string(i));
    ArrX<float> px(shape.size());
    for (int j = 0; j < shape.size(); ++j) px[j] = float(buf[j]) / 255.0f;
    data.images.emplace_back(std::move(px), shape);

    char lbl;
    if (!lbl_in.read(&lbl, 1))
      throw std::runtime_error(labels_path + ": truncated at label " + std::to_string(i));
    data.labels.push_back(static_cast<unsigned char>(lbl));
  }
  return data;
}

void save_idx(const Dataset<float>& data, const std::string& images_path,
              const std::string& labels_path) {
  if (data.images.size() != data.labels.size())
    throw std::invalid_argument("save_idx: image/label count mismatch");
  const Shape shape = data.images.empty() ? Shape{0, 0, 1} : data.images.front().shape;

  std::ofstream img_out(images_path, std::ios::binary);
  if (!img_out) throw std::runtime_error(images_path + ": cannot write");
  write_be32(img_out, kImagesMagic);
  write_be32(img_out, static_cast<std::uint32_t>(data.images.size()));
  write_be32(img_out, static_cast<std::uint32_t>(shape.height));
  write_be32(img_out, static_cast<std::uint32_t>(shape.width));
  std::vector<unsigned char> buf;
  for (const auto& img : data.images) {
    buf.resize(img.size());
    for (int j = 0; j < img.size(); ++j)
      buf[j] = static_cast<unsigned char>(img.data[j] * 255.0f + 0.5f);
    img_out.write(reinterpret_cast<const char*>(buf.data()), buf.size());
  }

  std::ofstream lbl_out(labels_path, std::ios::binary);
  if (!lbl_out) throw std::runtime_error(labels_path + ": cannot write");
  write_be32(lbl_out, kLabelsMagic);
  write_be32(lbl_out, static_cast<std::uint32_t>(data.labels.size()));
  for (int l : data.labels) {
    const char b = static_cast<char>(l);
    lbl_out.write(&b, 1);
  }
}

Dataset<float> load_cifar_batch(const std::string& path) {
  auto in = open_binary(path);
  Dataset<float> data;
  const Shape shape{32, 32, 3};
  std::vector<unsigned char> rec(1 + shape.size());
  while (in.read(reinterpret_cast<char*>(rec.data()), rec.size())) {
    data.labels.push_back(rec[0]);
    ArrX<float> px(shape.size());
    for (int j = 0; j < shape.size(); ++j) px[j] = float(rec[1 + j]) / 255.0f;
    data.images.emplace_back(std::move(px), shape);
  }
  if (in.gcount() != 0)
    throw std::runtime_error(path + ": truncated CIFAR record");
  if (data.images.empty()) throw std::runtime_error(path + ": empty CIFAR batch");
  return data;
}

}  // namespace ssimadv
