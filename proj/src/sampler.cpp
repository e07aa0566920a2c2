#include "vrd/sampler.hpp"

#include <algorithm>
#include <set>

namespace vrd {

ClassDistribution class_probabilities(const Eigen::ArrayXd& images_per_class,
                                      std::optional<std::uint64_t> cap) {
  const auto n = images_per_class.size();
  if (n == 0) throw Error(ErrorCode::AllClassesEmpty, "no classes to sample from");
  Eigen::ArrayXd capped = images_per_class;
  if (cap) capped = capped.min(static_cast<double>(*cap));
  const double total = capped.sum();
  if (total <= 0.0) {
    throw Error(ErrorCode::AllClassesEmpty, "every class has zero images");
  }
  ClassDistribution dist;
  dist.probabilities = (capped / total).matrix();
  return dist;
}

ImageSampler::ImageSampler(const AnnotationSet& annotations, const SamplerConfig& config)
    : rng_(config.seed) {
  distribution_ = class_probabilities(annotations.images_per_class, config.cap);
  const int num_classes = distribution_.size();

  images_by_class_.assign(num_classes, {});
  std::vector<std::set<std::string>> seen(num_classes);
  for (const auto& [image_id, detections] : annotations.boxes) {
    for (const auto& d : detections) {
      if (seen[d.class_id].insert(image_id).second) {
        images_by_class_[d.class_id].push_back(image_id);
      }
    }
  }
  // boxes maps are ordered, so each per-class list is already sorted; keep
  // the invariant explicit for draws to be reproducible.
  for (auto& images : images_by_class_) std::sort(images.begin(), images.end());

  cdf_.resize(num_classes);
  double running = 0.0;
  for (int k = 0; k < num_classes; ++k) {
    running += distribution_[k];
    cdf_[k] = running;
  }
  cdf_[num_classes - 1] = 1.0;  // guard the final bucket against rounding
}

std::pair<int, std::string> ImageSampler::sample() {
  const double u = rng_.uniform();
  // First class whose cumulative probability covers u. Classes with zero
  // probability have zero-width buckets and are never chosen.
  const int num_classes = distribution_.size();
  int k = static_cast<int>(
      std::lower_bound(cdf_.data(), cdf_.data() + num_classes, u) - cdf_.data());
  if (k >= num_classes) k = num_classes - 1;
  while (distribution_[k] == 0.0 && k + 1 < num_classes) ++k;

  const auto& images = images_by_class_[k];
  // A class with nonzero probability always has at least one image.
  const auto idx = rng_.uniform_index(images.size());
  return {k, images[idx]};
}

std::vector<std::string> ImageSampler::sample_images(std::size_t n) {
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sample().second);
  return out;
}

}  // namespace vrd
