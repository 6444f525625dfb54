#include "lcnn/common.hpp"

#include <cmath>
#include <sstream>

namespace lcnn {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << ", ";
        os << s[i];
    }
    os << "]";
    return os.str();
}

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

bool& Debug::check_finite() {
    static thread_local bool v = false;
    return v;
}

int64_t& Debug::nonfinite_events() {
    static thread_local int64_t v = 0;
    return v;
}

bool& KinkMonitor::armed() {
    static thread_local bool v = false;
    return v;
}

double& KinkMonitor::tol() {
    static thread_local double v = 0.0;
    return v;
}

bool& KinkMonitor::hit() {
    static thread_local bool v = false;
    return v;
}

void KinkMonitor::ping(double distance_to_kink) {
    if (armed() && std::abs(distance_to_kink) < tol()) hit() = true;
}

}  // namespace lcnn
