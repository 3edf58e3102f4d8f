#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace gridsafe {

using Complex = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double deg) { return deg * kPi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / kPi; }

/// Wraps an angle difference into (-pi, pi].
inline double wrap_angle(double rad) {
    double a = std::remainder(rad, 2.0 * kPi);
    if (a <= -kPi) a += 2.0 * kPi;
    return a;
}

// Error hierarchy. Input-shaped problems (parsing, schemas, references,
// dimensions) and numerical ones (divergence, infeasibility) are kept
// distinct so callers can map them to different exit codes.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ParseError : Error {
    explicit ParseError(const std::string& msg) : Error(msg) {}
};

struct SchemaError : Error {
    explicit SchemaError(const std::string& msg) : Error(msg) {}
};

struct ValidationError : Error {
    explicit ValidationError(const std::string& msg) : Error(msg) {}
};

struct DimensionError : Error {
    explicit DimensionError(const std::string& msg) : Error(msg) {}
};

struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(msg) {}
};

struct TopologyError : Error {
    explicit TopologyError(const std::string& msg) : Error(msg) {}
};

struct SingularBranchError : Error {
    explicit SingularBranchError(const std::string& msg) : Error(msg) {}
};

struct DivergenceError : Error {
    DivergenceError(const std::string& msg, double residual)
        : Error(msg), last_residual(residual) {}
    double last_residual;
};

struct NumericalError : Error {
    explicit NumericalError(const std::string& msg) : Error(msg) {}
};

struct InfeasibleError : Error {
    explicit InfeasibleError(const std::string& msg) : Error(msg) {}
};

struct GenerationError : Error {
    explicit GenerationError(const std::string& msg) : Error(msg) {}
};

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file '" + path + "'");
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

}  // namespace gridsafe
