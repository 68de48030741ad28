#ifndef ATTRBENCH_SERIALIZE_HPP
#define ATTRBENCH_SERIALIZE_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace atb {

// Named f64 tensor container, little-endian, magic "ATB1".
// Layout: magic[4], version u32, then records until EOF:
//   name_len u32, name bytes, rank u32, dims u64[rank], payload f64[prod(dims)]
struct NamedTensor {
  std::string name;
  std::vector<int64_t> shape;
  std::vector<double> data;
};

void write_tensor_file(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensor_file(const std::string& path);

// idx containers (the MNIST wire format). Supported type/rank combos:
//   0x0801: u8 labels [n]
//   0x0803: u8 images [n,H,W]       (read as single-channel)
//   0x0804: u8 images [n,C,H,W]
struct IdxImages {
  int64_t n = 0, c = 0, h = 0, w = 0;
  std::vector<uint8_t> pixels;  // n*c*h*w
};

IdxImages read_idx_images(const std::string& path);
std::vector<uint8_t> read_idx_labels(const std::string& path);
void write_idx_images(const std::string& path, const IdxImages& img);
void write_idx_labels(const std::string& path, const std::vector<uint8_t>& labels);

// whole-file helpers
std::vector<uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const void* data, size_t size);
std::string read_file_text(const std::string& path);
void write_file_text(const std::string& path, const std::string& text);

}  // namespace atb

#endif
