#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "unwarp/keypoint.hpp"
#include "unwarp/raster.hpp"

namespace unwarp {

struct RectifiedSet;

enum class DescriptorType : std::uint8_t { kFloat = 0, kBits = 1 };

inline constexpr std::int32_t kNonPlanar = -1;

/// Keypoints with parallel descriptors and provenance tags. For kFloat,
/// descriptor_length floats per feature live in `floats`; for kBits,
/// descriptor_length bits per feature (packed LSB first) live in `bits`.
struct FeatureSet {
  std::vector<Keypoint> keypoints;
  DescriptorType type = DescriptorType::kFloat;
  int descriptor_length = 0;
  std::vector<float> floats;
  std::vector<std::uint8_t> bits;
  std::vector<std::int32_t> provenance;

  std::size_t size() const { return keypoints.size(); }
  std::size_t bytes_per_descriptor() const {
    return type == DescriptorType::kFloat ? descriptor_length * sizeof(float)
                                          : (descriptor_length + 7) / 8;
  }
  const float* float_descriptor(std::size_t i) const {
    return floats.data() + i * descriptor_length;
  }
  const std::uint8_t* bit_descriptor(std::size_t i) const {
    return bits.data() + i * bytes_per_descriptor();
  }

  /// Appends feature i of `other`, which must share the descriptor layout.
  void append(const FeatureSet& other, std::size_t i, const Keypoint& kp,
              std::int32_t tag);
  /// Throws kValidation if the parallel arrays disagree.
  void validate() const;

  bool operator==(const FeatureSet&) const = default;
};

struct ReferenceParams {
  int octaves = 4;
  int levels_per_octave = 3;
  double harris_k = 0.04;
  int max_features = 1000;
  double threshold_rel = 0.005;
  double threshold_abs = 1e-8;
  /// Descriptor half-width in units of keypoint scale.
  double support_radius = 16.0;
};

/// Multi-scale Harris corners with a rotation-normalised 16x16 intensity
/// patch descriptor (256 floats, zero mean, unit norm). Keypoints whose
/// support square leaves `mask` or the raster are discarded before the
/// top-N cut.
FeatureSet reference_extract(const Image& image, const ReferenceParams& params = {},
                             const Mask* mask = nullptr);

class Extractor {
 public:
  virtual ~Extractor() = default;
  virtual std::string id() const = 0;
  virtual double support_radius() const = 0;
  virtual FeatureSet extract(const Image& image, const Mask* mask) const = 0;
};

/// "reference" (float descriptors) or "reference_binary" (sign bits of the
/// reference descriptor, Hamming-matched). Throws kUnknownExtractor otherwise.
std::unique_ptr<Extractor> make_extractor(const std::string& id,
                                          const ReferenceParams& params = {});

/// Runs the extractor under `mask` and applies the support-square border rule.
FeatureSet detect_and_describe(const Image& image, const Mask& mask,
                               const Extractor& extractor);

/// True when the square of half-width radius*kp.scale around kp lies within
/// the raster and inside the mask.
class SupportChecker {
 public:
  explicit SupportChecker(const Mask& mask);
  bool inside(const Keypoint& kp, double radius) const;

 private:
  int width_, height_;
  std::vector<std::uint32_t> holes_;  // integral image of mask == 0
};

/// Drops features whose support square leaves the mask.
FeatureSet filter_by_support(const FeatureSet& features, const Mask& mask,
                             double radius);

/// Features from every rectified patch mapped into the original frame plus
/// plain features from the non-planar mask. Planar features carry their
/// patch index; the rest carry kNonPlanar.
FeatureSet extract_rectified_features(const Image& image, const RectifiedSet& set,
                                      const Extractor& extractor,
                                      bool transport_shape = true, int threads = 1);

/// Little-endian "PRFT" container.
void write_features(const std::filesystem::path& path, const FeatureSet& fs);
FeatureSet read_features(const std::filesystem::path& path);

}  // namespace unwarp
