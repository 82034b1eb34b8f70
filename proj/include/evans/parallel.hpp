#pragma once

#include <functional>
#include <vector>

#include "evans/linalg.hpp"

namespace evans {

using EvansFn = std::function<ScaledValue(Complex)>;

/// Worker count for contour-node evaluation; <= 0 restores the OpenMP default.
void setThreadCount(int n);
int threadCount();

/// f at every point, OpenMP-parallel over points. The first exception thrown
/// by any evaluation is rethrown after the loop.
std::vector<ScaledValue> evaluateNodes(const EvansFn& f, const std::vector<Complex>& points);

/// Serial reference implementation (same results, kept for tests).
std::vector<ScaledValue> evaluateNodesSerial(const EvansFn& f, const std::vector<Complex>& points);

}  // namespace evans
