#pragma once

#include "stereosil/mesh.hpp"

namespace stereosil {

struct SimplifyResult {
  TriangleMesh mesh;
  bool used_fallback = false;  // quadric collapse could not reach the target
};

/// Reduce face count to at most ceil(target_fraction * faces) with quadric
/// error metric edge collapses, constrained so the bounding box grows by no
/// more than 2% of the input diagonal. Falls back to vertex clustering when
/// collapses alone cannot reach the target. target_fraction = 1 returns the
/// input unchanged; the face count never drops below 1.
SimplifyResult simplify_mesh(const TriangleMesh& mesh, double target_fraction);

}  // namespace stereosil
