#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "spt/checkpoint.hpp"
#include "spt/errors.hpp"
#include "spt/rng.hpp"

using namespace spt;

namespace {

std::filesystem::path temp_file(const std::string& tag) {
  return std::filesystem::temp_directory_path() / ("spt_ckpt_" + tag + ".ckpt");
}

std::vector<NamedTensor> sample_tensors(uint64_t seed) {
  Rng rng(seed);
  std::vector<NamedTensor> tensors;
  tensors.emplace_back("gen/W", Tensor::randn({12, 7}, rng, 1.0));
  tensors.emplace_back("gen/b", Tensor::randn({12}, rng, 1e-300));
  tensors.emplace_back("scalar", Tensor::scalar(-0.0));
  tensors.emplace_back("emb", Tensor::randn({3, 2}, rng, 1e12));
  return tensors;
}

std::vector<uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& p, const std::vector<uint8_t>& b) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(b.data()),
            static_cast<std::streamsize>(b.size()));
}

}  // namespace

TEST_CASE("checkpoints round-trip bit-exactly") {
  const auto path = temp_file("roundtrip");
  const auto tensors = sample_tensors(3);
  save_checkpoint(path, tensors, "{\"lr\":0.1}", 42);
  const Checkpoint ck = load_checkpoint(path);
  CHECK(ck.version == kCheckpointVersion);
  CHECK(ck.seed == 42);
  CHECK(ck.config_json == "{\"lr\":0.1}");
  REQUIRE(ck.tensors.size() == tensors.size());
  for (size_t i = 0; i < tensors.size(); ++i) {
    CHECK(ck.tensors[i].first == tensors[i].first);
    CHECK(ck.tensors[i].second.shape() == tensors[i].second.shape());
    // bit-wise, not approximate
    CHECK(std::memcmp(ck.tensors[i].second.data(), tensors[i].second.data(),
                      sizeof(double) *
                          static_cast<size_t>(tensors[i].second.numel())) == 0);
  }
  std::filesystem::remove(path);
}

TEST_CASE("any single corrupted byte is detected") {
  const auto path = temp_file("corrupt");
  save_checkpoint(path, sample_tensors(5), "{}", 7);
  const auto clean = read_bytes(path);
  Rng rng(17);
  for (int trial = 0; trial < 40; ++trial) {
    auto bytes = clean;
    const size_t pos =
        static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(bytes.size())));
    bytes[pos] ^= static_cast<uint8_t>(1 + rng.uniform_int(255));
    write_bytes(path, bytes);
    // A flipped length field derails the parser (IoError with an offset);
    // everything else lands in the magic or checksum checks (FormatError).
    bool detected = false;
    try {
      load_checkpoint(path);
    } catch (const FormatError&) {
      detected = true;
    } catch (const IoError&) {
      detected = true;
    }
    CHECK_MESSAGE(detected, "flip at byte " << pos << " went unnoticed");
  }
  std::filesystem::remove(path);
}

TEST_CASE("bad magic, bad version, and truncation are distinct failures") {
  const auto path = temp_file("edges");
  save_checkpoint(path, sample_tensors(9), "{}", 1);
  const auto clean = read_bytes(path);

  {
    auto bytes = clean;
    bytes[0] = 'X';
    write_bytes(path, bytes);
    CHECK_THROWS_WITH_AS(load_checkpoint(path),
                         doctest::Contains("bad checkpoint magic"),
                         FormatError);
  }
  {
    // Patch the version field and re-seal the checksum so only the version
    // check can complain.
    auto bytes = clean;
    bytes[8] = 2;
    const size_t body_len = bytes.size() - 8 - 4;
    const uint32_t crc = crc32(bytes.data() + 8, body_len);
    for (int i = 0; i < 4; ++i)
      bytes[bytes.size() - 4 + static_cast<size_t>(i)] =
          static_cast<uint8_t>(crc >> (8 * i));
    write_bytes(path, bytes);
    CHECK_THROWS_WITH_AS(load_checkpoint(path),
                         doctest::Contains("unsupported checkpoint version"),
                         FormatError);
  }
  {
    auto bytes = clean;
    bytes.resize(bytes.size() / 2);
    write_bytes(path, bytes);
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("offset"),
                         IoError);
  }
  {
    auto bytes = clean;
    bytes.resize(6);  // shorter than magic + checksum
    write_bytes(path, bytes);
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("truncated"),
                         IoError);
  }
  CHECK_THROWS_AS(load_checkpoint(temp_file("missing")), IoError);
  std::filesystem::remove(path);
}

TEST_CASE("empty tensor table and empty config are valid") {
  const auto path = temp_file("empty");
  save_checkpoint(path, {}, "", 0);
  const Checkpoint ck = load_checkpoint(path);
  CHECK(ck.tensors.empty());
  CHECK(ck.config_json.empty());
  std::filesystem::remove(path);
}
