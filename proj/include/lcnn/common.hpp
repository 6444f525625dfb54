#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace lcnn {

enum class DType { F32, F64 };

inline const char* dtype_name(DType dt) { return dt == DType::F32 ? "f32" : "f64"; }

// Domain guard for acosh-style clamps (see ops.hpp).
inline double domain_guard(DType dt) { return dt == DType::F32 ? 1e-7 : 1e-12; }

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct TapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NonFiniteError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<int64_t>;

std::string shape_str(const Shape& s);
int64_t shape_numel(const Shape& s);

// Debug-mode NaN/Inf detector. When enabled, every op scans its output and
// throws NonFiniteError naming the op. The event counter survives the throw
// so harnesses can assert "zero events" over a whole run.
struct Debug {
    static bool& check_finite();
    static int64_t& nonfinite_events();
};

// Kink monitor: guarded ops (clamp, relu, abs, max) ping this when an input
// sits within `tol` of a nondifferentiable point. Used by gradcheck to tell
// subgradient choices apart from genuine gradient bugs.
struct KinkMonitor {
    static bool& armed();
    static double& tol();
    static bool& hit();
    static void ping(double distance_to_kink);
};

}  // namespace lcnn
