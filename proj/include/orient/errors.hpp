#pragma once

#include <stdexcept>
#include <string>

namespace orient {

// Malformed or unsupported input data: bad NIfTI headers, truncated files,
// invalid manifests, checkpoint mismatches. CLI maps these to exit code 2.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Failures during optimization (e.g. divergence). CLI exit code 3.
struct TrainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor/layer shape contract violations.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace orient
