#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace lcinf {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

using Matrix = Mat<double>;
using Vector = Vec<double>;
using Index = Eigen::Index;
using IndexList = std::vector<Index>;

/// Failure categories. The CLI maps them onto exit codes 2, 3 and 4.
enum class ErrorKind {
    invalid_input,
    invalid_argument,
    invalid_partition,
    singular_design,
    degenerate,
    numerical_failure,
    too_small_cluster,
    enumeration_too_large,
    calibration_failure,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline IndexList iota_indices(Index n) {
    IndexList out(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = i;
    return out;
}

}  // namespace lcinf
