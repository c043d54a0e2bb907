#include <bit>
#include <cstring>
#include <fstream>

#include "unwarp/error.hpp"
#include "unwarp/features.hpp"

namespace unwarp {
namespace {

constexpr char kMagic[4] = {'P', 'R', 'F', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
    auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    out.write(bytes.data(), sizeof(T));
  } else {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  std::array<char, sizeof(T)> bytes;
  in.read(bytes.data(), sizeof(T));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(T))) {
    fail(ErrorCode::kIo, "truncated feature file: " + path.string());
  }
  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
    std::reverse(bytes.begin(), bytes.end());
  }
  return std::bit_cast<T>(bytes);
}

}  // namespace

void write_features(const std::filesystem::path& path, const FeatureSet& fs) {
  fs.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(fs.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(fs.descriptor_length));
  put<std::uint8_t>(out, static_cast<std::uint8_t>(fs.type));
  for (std::size_t i = 0; i < fs.size(); ++i) {
    const Keypoint& kp = fs.keypoints[i];
    put<float>(out, static_cast<float>(kp.x));
    put<float>(out, static_cast<float>(kp.y));
    put<float>(out, static_cast<float>(kp.scale));
    put<float>(out, static_cast<float>(kp.orientation));
    put<float>(out, static_cast<float>(kp.score));
    put<std::int32_t>(out, fs.provenance[i]);
  }
  if (fs.type == DescriptorType::kFloat) {
    for (float v : fs.floats) put<float>(out, v);
  } else {
    out.write(reinterpret_cast<const char*>(fs.bits.data()),
              static_cast<std::streamsize>(fs.bits.size()));
  }
  if (!out) fail(ErrorCode::kIo, "write failed: " + path.string());
}

FeatureSet read_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    fail(ErrorCode::kParse, "not a PRFT feature file: " + path.string());
  }
  const auto version = get<std::uint32_t>(in, path);
  if (version != kVersion) {
    fail(ErrorCode::kParse, "unsupported PRFT version " + std::to_string(version));
  }
  const auto count = get<std::uint32_t>(in, path);
  const auto desc_len = get<std::uint32_t>(in, path);
  const auto type = get<std::uint8_t>(in, path);
  if (type > 1) fail(ErrorCode::kParse, "unknown descriptor type in " + path.string());

  FeatureSet fs;
  fs.type = static_cast<DescriptorType>(type);
  fs.descriptor_length = static_cast<int>(desc_len);
  fs.keypoints.resize(count);
  fs.provenance.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Keypoint& kp = fs.keypoints[i];
    kp.x = get<float>(in, path);
    kp.y = get<float>(in, path);
    kp.scale = get<float>(in, path);
    kp.orientation = get<float>(in, path);
    kp.score = get<float>(in, path);
    fs.provenance[i] = get<std::int32_t>(in, path);
  }
  if (fs.type == DescriptorType::kFloat) {
    fs.floats.resize(static_cast<std::size_t>(count) * desc_len);
    for (auto& v : fs.floats) v = get<float>(in, path);
  } else {
    fs.bits.resize(count * fs.bytes_per_descriptor());
    in.read(reinterpret_cast<char*>(fs.bits.data()),
            static_cast<std::streamsize>(fs.bits.size()));
    if (in.gcount() != static_cast<std::streamsize>(fs.bits.size())) {
      fail(ErrorCode::kIo, "truncated feature file: " + path.string());
    }
  }
  return fs;
}

}  // namespace unwarp
