#include "attrbench/serialize.hpp"

#include <cstdio>
#include <cstring>

#include "attrbench/common.hpp"

namespace atb {

namespace {

constexpr char kMagic[4] = {'A', 'T', 'B', '1'};
constexpr uint32_t kVersion = 1;

struct Reader {
  const std::vector<uint8_t>& buf;
  size_t pos = 0;
  std::string path;

  void need(size_t n, const char* what) {
    if (pos + n > buf.size()) {
      throw FormatError(path + ": truncated while reading " + std::string(what) + " at offset " +
                        std::to_string(pos) + " (need " + std::to_string(n) + " bytes, have " +
                        std::to_string(buf.size() - pos) + ")");
    }
  }
  uint32_t u32le() {
    need(4, "u32");
    uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | buf[pos + i];
    pos += 4;
    return v;
  }
  uint64_t u64le() {
    need(8, "u64");
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | buf[pos + i];
    pos += 8;
    return v;
  }
  uint32_t u32be() {
    need(4, "u32");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | buf[pos + i];
    pos += 4;
    return v;
  }
};

void put_u32le(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
void put_u64le(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
void put_u32be(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

}  // namespace

std::vector<uint8_t> read_file_bytes(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw FormatError(path + ": cannot open for reading");
  std::fseek(f, 0, SEEK_END);
  long sz = std::ftell(f);
  std::fseek(f, 0, SEEK_SET);
  std::vector<uint8_t> buf(static_cast<size_t>(sz));
  if (sz > 0 && std::fread(buf.data(), 1, buf.size(), f) != buf.size()) {
    std::fclose(f);
    throw FormatError(path + ": short read");
  }
  std::fclose(f);
  return buf;
}

void write_file_bytes(const std::string& path, const void* data, size_t size) {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw FormatError(path + ": cannot open for writing");
  if (size > 0 && std::fwrite(data, 1, size, f) != size) {
    std::fclose(f);
    throw FormatError(path + ": short write");
  }
  std::fclose(f);
}

std::string read_file_text(const std::string& path) {
  auto b = read_file_bytes(path);
  return std::string(b.begin(), b.end());
}

void write_file_text(const std::string& path, const std::string& text) {
  write_file_bytes(path, text.data(), text.size());
}

void write_tensor_file(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::vector<uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32le(out, kVersion);
  for (const auto& t : tensors) {
    int64_t numel = 1;
    for (int64_t d : t.shape) numel *= d;
    if (numel != static_cast<int64_t>(t.data.size())) {
      throw FormatError("write_tensor_file: tensor '" + t.name + "' shape " + shape_str(t.shape) +
                        " does not match " + std::to_string(t.data.size()) + " values");
    }
    put_u32le(out, static_cast<uint32_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    put_u32le(out, static_cast<uint32_t>(t.shape.size()));
    for (int64_t d : t.shape) put_u64le(out, static_cast<uint64_t>(d));
    size_t at = out.size();
    out.resize(at + t.data.size() * 8);
    // doubles are stored as raw LE bit patterns; exact round-trip
    std::memcpy(out.data() + at, t.data.data(), t.data.size() * 8);
  }
  write_file_bytes(path, out.data(), out.size());
}

std::vector<NamedTensor> read_tensor_file(const std::string& path) {
  auto buf = read_file_bytes(path);
  Reader r{buf, 0, path};
  r.need(4, "magic");
  if (std::memcmp(buf.data(), kMagic, 4) != 0) {
    throw FormatError(path + ": bad magic, not a tensor container");
  }
  r.pos = 4;
  uint32_t ver = r.u32le();
  if (ver != kVersion) {
    throw FormatError(path + ": unsupported container version " + std::to_string(ver));
  }
  std::vector<NamedTensor> out;
  while (r.pos < buf.size()) {
    NamedTensor t;
    uint32_t name_len = r.u32le();
    r.need(name_len, "tensor name");
    t.name.assign(reinterpret_cast<const char*>(buf.data() + r.pos), name_len);
    r.pos += name_len;
    uint32_t rank = r.u32le();
    if (rank > 8) {
      throw FormatError(path + ": implausible rank " + std::to_string(rank) + " for tensor '" +
                        t.name + "'");
    }
    int64_t numel = 1;
    for (uint32_t i = 0; i < rank; ++i) {
      uint64_t d = r.u64le();
      t.shape.push_back(static_cast<int64_t>(d));
      numel *= static_cast<int64_t>(d);
    }
    r.need(static_cast<size_t>(numel) * 8, "tensor payload");
    t.data.resize(static_cast<size_t>(numel));
    std::memcpy(t.data.data(), buf.data() + r.pos, static_cast<size_t>(numel) * 8);
    r.pos += static_cast<size_t>(numel) * 8;
    out.push_back(std::move(t));
  }
  return out;
}

IdxImages read_idx_images(const std::string& path) {
  auto buf = read_file_bytes(path);
  Reader r{buf, 0, path};
  uint32_t magic = r.u32be();
  IdxImages img;
  if (magic == 0x00000803) {
    img.n = r.u32be();
    img.c = 1;
    img.h = r.u32be();
    img.w = r.u32be();
  } else if (magic == 0x00000804) {
    img.n = r.u32be();
    img.c = r.u32be();
    img.h = r.u32be();
    img.w = r.u32be();
  } else {
    char hex[16];
    std::snprintf(hex, sizeof hex, "0x%08x", magic);
    throw FormatError(path + ": magic " + hex + " is not an idx image file (0x803/0x804)");
  }
  size_t count = static_cast<size_t>(img.n * img.c * img.h * img.w);
  r.need(count, "pixel data");
  img.pixels.assign(buf.begin() + r.pos, buf.begin() + r.pos + count);
  r.pos += count;
  if (r.pos != buf.size()) {
    throw FormatError(path + ": " + std::to_string(buf.size() - r.pos) +
                      " trailing bytes after pixel data");
  }
  return img;
}

std::vector<uint8_t> read_idx_labels(const std::string& path) {
  auto buf = read_file_bytes(path);
  Reader r{buf, 0, path};
  uint32_t magic = r.u32be();
  if (magic != 0x00000801) {
    char hex[16];
    std::snprintf(hex, sizeof hex, "0x%08x", magic);
    throw FormatError(path + ": magic " + hex + " is not an idx label file (0x801)");
  }
  uint32_t n = r.u32be();
  r.need(n, "label data");
  std::vector<uint8_t> labels(buf.begin() + r.pos, buf.begin() + r.pos + n);
  r.pos += n;
  if (r.pos != buf.size()) {
    throw FormatError(path + ": " + std::to_string(buf.size() - r.pos) +
                      " trailing bytes after label data");
  }
  return labels;
}

void write_idx_images(const std::string& path, const IdxImages& img) {
  if (img.pixels.size() != static_cast<size_t>(img.n * img.c * img.h * img.w)) {
    throw FormatError("write_idx_images: dims do not match pixel count");
  }
  std::vector<uint8_t> out;
  if (img.c == 1) {
    put_u32be(out, 0x00000803);
    put_u32be(out, static_cast<uint32_t>(img.n));
    put_u32be(out, static_cast<uint32_t>(img.h));
    put_u32be(out, static_cast<uint32_t>(img.w));
  } else {
    put_u32be(out, 0x00000804);
    put_u32be(out, static_cast<uint32_t>(img.n));
    put_u32be(out, static_cast<uint32_t>(img.c));
    put_u32be(out, static_cast<uint32_t>(img.h));
    put_u32be(out, static_cast<uint32_t>(img.w));
  }
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  write_file_bytes(path, out.data(), out.size());
}

void write_idx_labels(const std::string& path, const std::vector<uint8_t>& labels) {
  std::vector<uint8_t> out;
  put_u32be(out, 0x00000801);
  put_u32be(out, static_cast<uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  write_file_bytes(path, out.data(), out.size());
}

}  // namespace atb
