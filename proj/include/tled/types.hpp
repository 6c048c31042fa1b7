#ifndef TLED_TYPES_HPP_
#define TLED_TYPES_HPP_

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace tled {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;

// Per-node 3D field (displacements, forces); one row per node.
using Field3 = Eigen::Matrix<double, Eigen::Dynamic, 3>;

class Error : public std::runtime_error {
public:
    explicit Error(const std::string &what) : std::runtime_error(what) {}
};

class ParseError : public Error {
public:
    ParseError(const std::string &file, int line, const std::string &what)
        : Error(file + ":" + std::to_string(line) + ": " + what) {}
};

// Raised when the explicit integrator diverges.
class InstabilityError : public Error {
public:
    explicit InstabilityError(const std::string &what) : Error(what) {}
};

// Raised when det(F) <= 0 at an element or integration point.
class InversionError : public Error {
public:
    InversionError(const std::string &where, const Mat3 &F)
        : Error("element inversion at " + where), F_(F) {}
    const Mat3 &deformation_gradient() const { return F_; }

private:
    Mat3 F_;
};

} // namespace tled

#endif // TLED_TYPES_HPP_
