#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace relsearch {

using ImageId = std::uint32_t;
using AttributeIndex = std::uint32_t;

// Rows are images. Row-major so a single image's descriptor is contiguous.
using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
// Column m holds the predicted strength of attribute m for every image.
using AttributeMatrix = Eigen::MatrixXd;

// Strength of an attribute in one image relative to a reference image.
enum class Response : std::uint8_t { More = 0, Less = 1, Equal = 2 };

constexpr std::size_t kResponseCount = 3;

std::string_view to_string(Response r);
Response response_from_string(std::string_view s);

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input that violates a documented precondition or file format.
class InvalidInput : public Error {
public:
    using Error::Error;
};

}  // namespace relsearch
