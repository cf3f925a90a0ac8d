#pragma once

#include <Eigen/Dense>

#include "zefoz/errors.hpp"

namespace zefoz {

// Angular momentum quantum number j stored as 2j, so j in {1/2, 1, 3/2, ...}.
class HalfInteger {
public:
    explicit HalfInteger(int twice_value) : twice_(twice_value) {
        if (twice_ < 1) throw Error("quantum number must satisfy 2j >= 1");
    }
    static HalfInteger from_value(double j);

    int twice() const { return twice_; }
    double value() const { return 0.5 * twice_; }
    int multiplicity() const { return twice_ + 1; }
    // True for 1/2, 3/2, 5/2, ... (the half-integer spins of the Kramers
    // protection argument); false for integer spins 1, 2, ...
    bool is_half_odd() const { return twice_ % 2 == 1; }

    friend bool operator==(HalfInteger a, HalfInteger b) { return a.twice_ == b.twice_; }

private:
    int twice_;
};

// Intrinsic Z-Y-Z convention, radians.
struct EulerAngles {
    double alpha = 0.0;
    double beta = 0.0;
    double gamma = 0.0;
};

// Rank-2 symmetric interaction tensor: three principal values plus the
// orientation of the principal axes in the lab (D1, D2, b) frame.
struct TensorSpec {
    Eigen::Vector3d principal_values = Eigen::Vector3d::Zero();
    EulerAngles orientation;
};

// Static field in tesla, components along (D1, D2, b).
using FieldVector = Eigen::Vector3d;

// Magneton-to-frequency ratios; energies are E/h in MHz throughout.
struct Constants {
    double mu_B_mhz_per_t = 13996.2449;  // Bohr magneton / h
    double mu_n_mhz_per_t = 7.6225932;   // nuclear magneton / h
};

struct SpinMatrices {
    Eigen::MatrixXcd x, y, z;
};

// Standard |j, m> matrices, m descending. Hermitian, satisfy [Jx,Jy] = i Jz.
SpinMatrices angular_momentum_operators(HalfInteger j);

// R = Rz(alpha) Ry(beta) Rz(gamma); proper rotation.
Eigen::Matrix3d rotation_from_euler(const EulerAngles& e);

// Inverse of rotation_from_euler, with the gimbal-lock branches pinned to
// gamma = 0 so the round trip is deterministic.
EulerAngles euler_from_rotation(const Eigen::Matrix3d& R);

// Lab-frame matrix R diag(v) R^T.
Eigen::Matrix3d tensor_to_lab(const TensorSpec& t);

// Electron and nuclear operators on the product space |m_S, m_I>, m_S outer,
// m descending within each factor. dim = (2S+1)(2I+1).
struct ProductOperators {
    SpinMatrices electron;  // S_p (x) 1
    SpinMatrices nuclear;   // 1 (x) I_p
    Eigen::Index dim = 0;
};
ProductOperators embed_operators(HalfInteger S, HalfInteger I);

// Unit field direction for spherical angles in the (D1, D2, b) frame:
// theta = 0 is the D1-D2 plane, theta = +90 deg is +b.
Eigen::Vector3d direction_unit_vector(double theta_rad, double phi_rad);

} // namespace zefoz
