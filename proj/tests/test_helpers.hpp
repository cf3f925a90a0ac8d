#pragma once

// Shared fixtures and random-system generators for the test suites.

#include <cstdint>

#include "zefoz/hamiltonian.hpp"
#include "zefoz/util.hpp"

namespace zefoz::testing {

// Deterministic uniform in [lo, hi) from the counter RNG.
inline double urand(std::uint64_t seed, std::uint64_t& ctr, double lo, double hi) {
    return lo + (hi - lo) * uniform01(seed, ctr++);
}

inline double sign_rand(std::uint64_t seed, std::uint64_t& ctr) {
    return uniform01(seed, ctr++) < 0.5 ? -1.0 : 1.0;
}

// Three distinct nonzero principal values with |v| in [300, 6000] MHz and a
// guaranteed pairwise separation.
inline Eigen::Vector3d random_anisotropic_A(std::uint64_t seed, std::uint64_t& ctr) {
    for (;;) {
        Eigen::Vector3d v;
        for (int i = 0; i < 3; ++i)
            v(i) = sign_rand(seed, ctr) * urand(seed, ctr, 300.0, 6000.0);
        const double scale = v.cwiseAbs().maxCoeff();
        bool ok = true;
        for (int i = 0; i < 3 && ok; ++i)
            for (int j = i + 1; j < 3 && ok; ++j)
                if (std::abs(v(i) - v(j)) < 0.05 * scale) ok = false;
        if (ok) return v;
    }
}

inline EulerAngles random_euler(std::uint64_t seed, std::uint64_t& ctr) {
    return {urand(seed, ctr, -kPi, kPi), urand(seed, ctr, 0.0, kPi), urand(seed, ctr, -kPi, kPi)};
}

// Generic anisotropic S=1/2 system with random tensors and orientations.
inline SpinSystem random_system(std::uint64_t seed, std::uint64_t& ctr, int twice_I = 1,
                                bool with_Q = false) {
    SpinSystem sys;
    sys.S = HalfInteger(1);
    sys.I = HalfInteger(twice_I);
    sys.A.principal_values = random_anisotropic_A(seed, ctr);
    sys.A.orientation = random_euler(seed, ctr);
    for (int i = 0; i < 3; ++i) sys.g.principal_values(i) = urand(seed, ctr, 0.3, 6.0);
    sys.g.orientation = random_euler(seed, ctr);
    sys.g_n = urand(seed, ctr, 0.2, 1.5);
    if (with_Q && twice_I >= 2) {
        TensorSpec q;
        const double q1 = urand(seed, ctr, 10.0, 80.0) * sign_rand(seed, ctr);
        const double q2 = urand(seed, ctr, 10.0, 80.0) * sign_rand(seed, ctr);
        q.principal_values = {q1, q2, -(q1 + q2)};  // traceless like a physical EFG
        q.orientation = random_euler(seed, ctr);
        sys.Q = q;
    }
    sys.label = "random";
    return sys;
}

// The shipped example: 171Yb ground placeholder tensors.
inline SpinSystem yb_ground() {
    SpinSystem sys;
    sys.S = HalfInteger(1);
    sys.I = HalfInteger(1);
    sys.A.principal_values = {1183.0, -127.0, 5000.0};
    sys.g.principal_values = {0.13, 1.5, 6.06};
    sys.g_n = 0.98734;
    sys.label = "yb ground";
    return sys;
}

inline SpinSystem yb_excited_placeholder() {
    SpinSystem sys;
    sys.S = HalfInteger(1);
    sys.I = HalfInteger(1);
    sys.A.principal_values = {870.0, -290.0, 4600.0};
    sys.g.principal_values = {1.0, 1.6, 2.9};
    sys.g.orientation = {0.0, deg2rad(3.0), 0.0};
    sys.g_n = 0.98734;
    sys.label = "yb excited placeholder";
    return sys;
}

} // namespace zefoz::testing
