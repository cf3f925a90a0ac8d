#include "zefoz/spin_core.hpp"

#include <algorithm>
#include <cmath>

#include "zefoz/util.hpp"

namespace zefoz {

HalfInteger HalfInteger::from_value(double j) {
    const double twice = 2.0 * j;
    const double rounded = std::round(twice);
    if (std::abs(twice - rounded) > 1e-9 || rounded < 1.0)
        throw Error("quantum number must be a positive multiple of 1/2");
    return HalfInteger(static_cast<int>(rounded));
}

SpinMatrices angular_momentum_operators(HalfInteger j) {
    const int n = j.multiplicity();
    const double jv = j.value();

    // m runs j, j-1, ..., -j down the diagonal.
    Eigen::MatrixXcd jplus = Eigen::MatrixXcd::Zero(n, n);
    Eigen::VectorXd m(n);
    for (int k = 0; k < n; ++k) m(k) = jv - k;
    for (int k = 1; k < n; ++k) {
        // <m+1|J+|m> with m = m(k)
        jplus(k - 1, k) = std::sqrt(jv * (jv + 1.0) - m(k) * (m(k) + 1.0));
    }
    const Eigen::MatrixXcd jminus = jplus.adjoint();

    SpinMatrices out;
    out.x = 0.5 * (jplus + jminus);
    out.y = std::complex<double>(0.0, -0.5) * (jplus - jminus);
    out.z = m.cast<std::complex<double>>().asDiagonal();
    return out;
}

Eigen::Matrix3d rotation_from_euler(const EulerAngles& e) {
    const double ca = std::cos(e.alpha), sa = std::sin(e.alpha);
    const double cb = std::cos(e.beta), sb = std::sin(e.beta);
    const double cg = std::cos(e.gamma), sg = std::sin(e.gamma);

    Eigen::Matrix3d rz1, ry, rz2;
    rz1 << ca, -sa, 0, sa, ca, 0, 0, 0, 1;
    ry << cb, 0, sb, 0, 1, 0, -sb, 0, cb;
    rz2 << cg, -sg, 0, sg, cg, 0, 0, 0, 1;
    return rz1 * ry * rz2;
}

EulerAngles euler_from_rotation(const Eigen::Matrix3d& R) {
    EulerAngles e;
    const double cb = std::clamp(R(2, 2), -1.0, 1.0);
    e.beta = std::acos(cb);
    const double sb = std::sin(e.beta);
    if (sb > 1e-12) {
        e.alpha = std::atan2(R(1, 2), R(0, 2));
        e.gamma = std::atan2(R(2, 1), -R(2, 0));
    } else if (cb > 0.0) {
        // beta = 0: only alpha + gamma is defined
        e.alpha = std::atan2(R(1, 0), R(0, 0));
        e.gamma = 0.0;
    } else {
        // beta = pi: only alpha - gamma is defined
        e.alpha = std::atan2(-R(0, 1), -R(0, 0));
        e.gamma = 0.0;
    }
    return e;
}

Eigen::Matrix3d tensor_to_lab(const TensorSpec& t) {
    const Eigen::Matrix3d R = rotation_from_euler(t.orientation);
    return R * t.principal_values.asDiagonal() * R.transpose();
}

ProductOperators embed_operators(HalfInteger S, HalfInteger I) {
    const SpinMatrices s = angular_momentum_operators(S);
    const SpinMatrices i = angular_momentum_operators(I);
    const Eigen::Index dS = S.multiplicity(), dI = I.multiplicity();
    const Eigen::MatrixXcd idS = Eigen::MatrixXcd::Identity(dS, dS);
    const Eigen::MatrixXcd idI = Eigen::MatrixXcd::Identity(dI, dI);

    auto kron = [](const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) {
        Eigen::MatrixXcd out(a.rows() * b.rows(), a.cols() * b.cols());
        for (Eigen::Index r = 0; r < a.rows(); ++r)
            for (Eigen::Index q = 0; q < a.cols(); ++q)
                out.block(r * b.rows(), q * b.cols(), b.rows(), b.cols()) = a(r, q) * b;
        return out;
    };

    ProductOperators out;
    out.dim = dS * dI;
    out.electron = {kron(s.x, idI), kron(s.y, idI), kron(s.z, idI)};
    out.nuclear = {kron(idS, i.x), kron(idS, i.y), kron(idS, i.z)};
    return out;
}

Eigen::Vector3d direction_unit_vector(double theta_rad, double phi_rad) {
    const double ct = std::cos(theta_rad);
    return {ct * std::cos(phi_rad), ct * std::sin(phi_rad), std::sin(theta_rad)};
}

} // namespace zefoz
