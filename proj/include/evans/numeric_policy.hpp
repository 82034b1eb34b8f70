#pragma once

#include "evans/linalg.hpp"

namespace evans {

/// All numerical tolerances in one record; studies pass it down unchanged.
struct NumericPolicy {
    // propagation
    double step = 0.05;          // fixed-grid step, and initial step for adaptive mode
    bool fixedGrid = true;       // uniform grid: lambda -> result stays smooth along contours
    double absTol = 1e-12;       // adaptive mode local tolerance
    double relTol = 1e-13;
    double minStep = 1e-9;
    double fixedGridErrorLimit = 1e-6;  // local error estimate that aborts a fixed-grid run

    // conjugators
    double conditionLimit = 1e12;
    double tailTol = 1e-12;      // (H2) tail size defining the homoclinic half-period

    // splittings
    SplitOptions split{};

    // root finding and winding numbers
    int contourNodes = 64;
    int maxRefinements = 6;
    double noiseFactor = 1e3;    // noise floor = noiseFactor * relTol * value scale
};

}  // namespace evans
