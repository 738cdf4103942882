#include "spt/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "spt/errors.hpp"

namespace spt {

namespace {

struct Writer {
  std::vector<uint8_t> buf;

  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<uint64_t>(v)); }
  void bytes(const void* p, size_t n) {
    const auto* b = static_cast<const uint8_t*>(p);
    buf.insert(buf.end(), b, b + n);
  }
};

struct Reader {
  const std::vector<uint8_t>& buf;
  size_t pos = 0;

  void need(size_t n) const {
    if (pos + n > buf.size())
      throw IoError("truncated checkpoint: need " + std::to_string(n) +
                    " bytes at offset " + std::to_string(pos) + ", file has " +
                    std::to_string(buf.size()));
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(buf[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
    pos += n;
    return s;
  }
};

}  // namespace

uint32_t crc32(const uint8_t* data, size_t len, uint32_t seed) {
  static const auto table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  uint32_t c = seed ^ 0xFFFFFFFFu;
  for (size_t i = 0; i < len; ++i) c = table[(c ^ data[i]) & 0xFFu] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<NamedTensor>& tensors,
                     const std::string& config_json, uint64_t seed) {
  Writer w;
  w.u32(kCheckpointVersion);
  w.u64(seed);
  w.u64(config_json.size());
  w.bytes(config_json.data(), config_json.size());
  w.u32(static_cast<uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    w.u32(static_cast<uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u32(static_cast<uint32_t>(t.shape().size()));
    for (int d : t.shape()) w.u32(static_cast<uint32_t>(d));
    w.u64(static_cast<uint64_t>(t.numel()));
    for (int64_t i = 0; i < t.numel(); ++i) w.f64(t.data()[i]);
  }
  const uint32_t crc = crc32(w.buf.data(), w.buf.size());

  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  // Write to a temp file and rename so interrupted writes never leave a
  // half-formed checkpoint at the final path.
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp + " for writing");
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    out.write(reinterpret_cast<const char*>(w.buf.data()),
              static_cast<std::streamsize>(w.buf.size()));
    Writer tail;
    tail.u32(crc);
    out.write(reinterpret_cast<const char*>(tail.buf.data()), 4);
    if (!out) throw IoError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<uint8_t> all((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());

  if (all.size() < sizeof(kCheckpointMagic) + 4)
    throw IoError("truncated checkpoint: file has only " +
                  std::to_string(all.size()) + " bytes");
  if (std::memcmp(all.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0)
    throw FormatError("bad checkpoint magic in " + path.string());

  // Parse before the checksum so a truncated file reports the offset it
  // fell off at; corruption inside intact fields is caught by the CRC below.
  const size_t body_len = all.size() - sizeof(kCheckpointMagic) - 4;
  std::vector<uint8_t> body(all.begin() + sizeof(kCheckpointMagic),
                            all.begin() + sizeof(kCheckpointMagic) +
                                static_cast<std::ptrdiff_t>(body_len));
  Reader r{body};
  Checkpoint ck;
  ck.version = r.u32();
  if (ck.version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " +
                      std::to_string(ck.version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  ck.seed = r.u64();
  const uint64_t cfg_len = r.u64();
  ck.config_json = r.str(cfg_len);
  const uint32_t count = r.u32();
  ck.tensors.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = r.u32();
    std::string name = r.str(name_len);
    const uint32_t ndim = r.u32();
    Shape shape(ndim);
    for (uint32_t dI = 0; dI < ndim; ++dI)
      shape[dI] = static_cast<int>(r.u32());
    const uint64_t numel = r.u64();
    if (static_cast<int64_t>(numel) != shape_numel(shape))
      throw FormatError("tensor '" + name + "' length " +
                        std::to_string(numel) + " does not match shape " +
                        shape_str(shape));
    r.need(numel * 8);  // before allocating, so corrupt sizes cannot OOM
    std::vector<double> data(numel);
    for (uint64_t j = 0; j < numel; ++j) data[j] = r.f64();
    ck.tensors.emplace_back(std::move(name),
                            Tensor::from_data(std::move(shape), std::move(data)));
  }
  if (r.pos != body.size())
    throw FormatError("trailing bytes in checkpoint " + path.string());

  Reader tail{all, all.size() - 4};
  const uint32_t stored_crc = tail.u32();
  const uint32_t actual_crc = crc32(body.data(), body.size());
  if (stored_crc != actual_crc)
    throw FormatError("checkpoint checksum mismatch in " + path.string());
  return ck;
}

}  // namespace spt
