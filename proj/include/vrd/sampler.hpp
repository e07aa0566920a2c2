#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vrd/io.hpp"
#include "vrd/rng.hpp"
#include "vrd/types.hpp"

namespace vrd {

/// Class-balanced sampling configuration. `cap` is the per-class ceiling N;
/// an empty optional means no cap, which reproduces the raw image-frequency
/// distribution.
struct SamplerConfig {
  std::optional<std::uint64_t> cap = 3000;
  std::uint64_t seed = 0;
};

/// Normalized class sampling distribution p(k) = min(n_k, N) / sum_i min(n_i, N).
struct ClassDistribution {
  Eigen::VectorXd probabilities;

  double operator[](int k) const { return probabilities[k]; }
  int size() const { return static_cast<int>(probabilities.size()); }
};

/// Computes the capped, normalized class distribution from per-class image
/// counts. Throws AllClassesEmpty when every count is zero.
ClassDistribution class_probabilities(const Eigen::ArrayXd& images_per_class,
                                      std::optional<std::uint64_t> cap);

/// Two-stage sampler: draw a class from the capped distribution, then an
/// image uniformly among the images containing that class.
class ImageSampler {
 public:
  ImageSampler(const AnnotationSet& annotations, const SamplerConfig& config);

  /// One (class id, image id) draw.
  std::pair<int, std::string> sample();

  /// Convenience: n image ids (classes discarded).
  std::vector<std::string> sample_images(std::size_t n);

  const ClassDistribution& distribution() const { return distribution_; }
  const std::vector<std::string>& images_with_class(int k) const { return images_by_class_[k]; }

 private:
  ClassDistribution distribution_;
  Eigen::VectorXd cdf_;
  std::vector<std::vector<std::string>> images_by_class_;
  Rng rng_;
};

}  // namespace vrd
