#pragma once

#include "zefoz/hamiltonian.hpp"

namespace zefoz {

// Gradient S1 (MHz/T) and curvature S2 (MHz/T^2) of a transition frequency
// with respect to the static field, in the (D1, D2, b) frame.
struct TransitionSensitivity {
    double nu_mhz = 0.0;
    Eigen::Vector3d s1 = Eigen::Vector3d::Zero();
    Eigen::Matrix3d s2 = Eigen::Matrix3d::Zero();
    FieldVector field = FieldVector::Zero();
    TransitionId transition;
};

// Magnetic noise model input.
struct NoiseVector {
    enum class Mode { WorstCase, IsotropicAverage, FixedDirection };
    double magnitude_t = 0.0;
    Mode mode = Mode::IsotropicAverage;
    Eigen::Vector3d direction = Eigen::Vector3d::UnitZ();  // FixedDirection only
};
const char* to_string(NoiseVector::Mode m);

// Exact first derivative of nu at B via the Hellmann-Feynman theorem,
// dnu/dB_p = <f|dH/dB_p|f> - <i|dH/dB_p|i>. Both levels must be isolated by
// more than 1e-6 MHz; otherwise throws DegeneracyError naming the cluster.
Eigen::Vector3d gradient_hellmann_feynman(const SpinSystem& sys, const FieldVector& B,
                                          TransitionId t, const Constants& c = {});
Eigen::Vector3d gradient_hellmann_feynman(const SpinSystem& sys, const EigenSolution& sol,
                                          TransitionId t, const Constants& c = {});

// Independent oracle: Richardson-extrapolated central differences with
// eigenstate tracking by maximal overlap. step <= 0 selects the default
// (10 uT, reduced to 1 uT within 0.1 mT of zero field).
Eigen::Vector3d gradient_finite_difference(const SpinSystem& sys, const FieldVector& B,
                                           TransitionId t, double step_t = 0.0,
                                           const Constants& c = {});

// Hessian of nu(B) by central second differences (default step 20 uT).
Eigen::Matrix3d curvature_numeric(const SpinSystem& sys, const FieldVector& B, TransitionId t,
                                  double step_t = 0.0, const Constants& c = {});

// Analytic route: second-order perturbation sum over intermediate levels.
// Throws DegeneracyError when a gap is below 1e-3 MHz (sum diverges).
Eigen::Matrix3d curvature_perturbation(const SpinSystem& sys, const FieldVector& B,
                                       TransitionId t, const Constants& c = {});
Eigen::Matrix3d curvature_perturbation(const SpinSystem& sys, const EigenSolution& sol,
                                       TransitionId t, const Constants& c = {});

// nu + Hellmann-Feynman S1 + perturbation-sum S2 from a single solve.
TransitionSensitivity transition_sensitivity(const SpinSystem& sys, const FieldVector& B,
                                             TransitionId t, const Constants& c = {});

// Closed-form |S1| for coaligned A and g tensors (S = I = 1/2), for the
// transition between the pair split by |A_x + A_y|/2. B is given in the
// common tensor frame. eq3 is the in-plane simplification, returned only
// when B_z = 0. Rejects |A_x| = |A_z| or |A_y| = |A_z| (singular).
struct ClosedFormGradient {
    double eq2_mhz_per_t = 0.0;
    std::optional<double> eq3_mhz_per_t;
};
ClosedFormGradient closed_form_gradient(const Eigen::Vector3d& A_principal,
                                        const Eigen::Vector3d& g_principal,
                                        const Eigen::Vector3d& B_tensor_frame,
                                        const Constants& c = {});

// Sensitivity of an optical transition: nu = offset + E_e - E_g, S1/S2 are
// differences of the per-level quantities of the two electronic systems.
TransitionSensitivity optical_sensitivity(const SpinSystem& ground, const SpinSystem& excited,
                                          const FieldVector& B, int ground_level,
                                          int excited_level, double optical_offset_mhz = 0.0,
                                          const Constants& c = {});

// Worst one-sided |dnu/dB| over a deterministic direction set, valid also
// when either level sits in a degenerate cluster: the per-direction slopes
// are the eigenvalues of the cluster-projected Zeeman derivative (degenerate
// first-order perturbation theory). Reduces to |S1| for isolated levels.
double worst_directional_slope(const SpinSystem& sys, const EigenSolution& sol, TransitionId t,
                               const Constants& c = {});

// Same for an optical pair (each side projected in its own system).
double worst_directional_slope_optical(const SpinSystem& ground, const EigenSolution& gsol,
                                       int ground_level, const SpinSystem& excited,
                                       const EigenSolution& esol, int excited_level,
                                       const Constants& c = {});

// Convenience conversion: MHz/T expressed in units of mu_B/h.
double in_bohr_magneton_units(double grad_mhz_per_t, const Constants& c = {});

// max |eigenvalue| of a symmetric 3x3 (spectral norm of S2).
double spectral_radius_sym(const Eigen::Matrix3d& m);

} // namespace zefoz
