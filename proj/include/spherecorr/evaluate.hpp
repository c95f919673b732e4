#pragma once

// Keypoint-transfer evaluation over all ordered same-category image pairs
// of a dataset: every keypoint visible in the source is queried at its
// nearest pixel and matched into the target.

#include <string>
#include <vector>

#include "spherecorr/annotations.hpp"
#include "spherecorr/features.hpp"
#include "spherecorr/geometry.hpp"
#include "spherecorr/metrics.hpp"
#include "spherecorr/models.hpp"

namespace spherecorr {

enum class Method { feature, sphere_masked, sphere_unmasked, alpha_mix };

std::string method_name(Method m);

struct EvalOptions {
  double kappa = 0.1;
  double alpha = 0.2;
  std::vector<Method> methods{Method::feature, Method::sphere_masked, Method::sphere_unmasked, Method::alpha_mix};
};

// features[i] and spheres[i] belong to ds.images[i]; spheres may be empty
// when only Method::feature is requested.
std::vector<MetricReport> evaluate(const Dataset& ds, const std::vector<DenseFeatureMap>& features,
                                   const std::vector<SphereMap>& spheres, const EvalOptions& opt);

// Sphere maps of every image under the mapper.
std::vector<SphereMap> compute_spheres(const SphereMapperParams& mapper, const std::vector<DenseFeatureMap>& features);

// Worker threads for parallel loops: SPHERECORR_THREADS when set to a
// positive integer, otherwise the hardware concurrency.
unsigned worker_threads();

}  // namespace spherecorr
