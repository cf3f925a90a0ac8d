#pragma once

#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "zefoz/spin_core.hpp"

namespace zefoz {

// One electronic level of the ion: spin quantum numbers and coupling tensors.
// A and Q in MHz, g and g_n dimensionless.
struct SpinSystem {
    HalfInteger S{1};
    HalfInteger I{1};
    TensorSpec A;
    TensorSpec g;
    double g_n = 0.0;
    std::optional<TensorSpec> g_n_tensor;  // anisotropic override of g_n
    std::optional<TensorSpec> Q;
    std::string label;

    Eigen::Index dim() const {
        return static_cast<Eigen::Index>(S.multiplicity()) * I.multiplicity();
    }
};

// Non-fatal oddities of a system (e.g. Q given for I = 1/2 where it is only
// a constant shift). The CLI prints these to stderr.
std::vector<std::string> validate_system(const SpinSystem& sys);

// H = S.A.I + mu_B B.g.S - mu_n g_n B.I (+ I.Q.I), in MHz.
Eigen::MatrixXcd build_hamiltonian(const SpinSystem& sys, const FieldVector& B,
                                   const Constants& c = {});

// dH/dB_p, independent of B. Used by every sensitivity route.
Eigen::MatrixXcd zeeman_derivative(const SpinSystem& sys, int axis, const Constants& c = {});

struct EigenSolution {
    Eigen::VectorXd energies;   // ascending, MHz
    Eigen::MatrixXcd states;    // orthonormal columns, phase-fixed
    FieldVector field = FieldVector::Zero();

    Eigen::Index dim() const { return energies.size(); }
    // Indices of levels within tol (MHz) of each other, grouped ascending.
    std::vector<std::vector<int>> clusters(double tol_mhz = 1e-6) const;
    // Smallest |E_k - E_level| over k != level.
    double gap(int level) const;
};

// Cyclic complex-Hermitian Jacobi, tolerance 1e-13 ||H||, at most 100 sweeps.
// Phase convention: largest-magnitude component of each state real positive.
// Throws Error on non-Hermitian input (reports the max asymmetry).
EigenSolution eigensolve(const Eigen::MatrixXcd& H, const FieldVector& B = FieldVector::Zero());

// Pair of levels in an EigenSolution (or a ground/excited level pair for
// optical transitions); lower/upper refer to the ascending energy order.
struct TransitionId {
    int lower = 0;
    int upper = 1;
};
TransitionId make_transition(int a, int b);

// Closed-form zero-field energies for S = I = 1/2:
//   E_psi+- = [A_z +- (A_x - A_y)]/4,  E_phi+- = [-A_z +- (A_x + A_y)]/4.
// When two of the four coincide the labels are ambiguous and `degenerate`
// is set with a note instead.
struct ZeroFieldLevels {
    double e_psi_plus = 0, e_psi_minus = 0, e_phi_plus = 0, e_phi_minus = 0;
    bool degenerate = false;
    std::string degeneracy_note;

    double psi_splitting() const { return std::abs(e_psi_plus - e_psi_minus); }
    double phi_splitting() const { return std::abs(e_phi_plus - e_phi_minus); }
};
ZeroFieldLevels zero_field_levels(const Eigen::Vector3d& A_principal);

enum class LevelLabel { PsiPlus, PsiMinus, PhiPlus, PhiMinus, Unlabeled };
const char* to_string(LevelLabel l);

// Label the four S = I = 1/2 zero-field levels by maximal overlap with the
// Bell combinations carrying the closed-form energies:
//   psi+- = (|uu> +- |dd>)/sqrt(2),  phi+- = (|ud> +- |du>)/sqrt(2)
// (u/d are m = +-1/2 of each spin). Assignment uses the A principal values
// only; orientation does not affect it. Returns Unlabeled everywhere if the
// closed-form spectrum is degenerate or the system is not S = I = 1/2.
std::vector<LevelLabel> label_levels(const SpinSystem& sys);

enum class Subsystem { Electron, Nuclear };

// Partial trace of |state><state| over the complementary factor.
Eigen::MatrixXcd reduced_density_matrix(const Eigen::VectorXcd& state, HalfInteger S,
                                        HalfInteger I, Subsystem keep);

struct SpinExpectations {
    Eigen::Vector3d S = Eigen::Vector3d::Zero();
    Eigen::Vector3d I = Eigen::Vector3d::Zero();
};
SpinExpectations spin_expectations(const Eigen::VectorXcd& state, HalfInteger S, HalfInteger I);

// Matrix element of the ac Zeeman coupling and the resulting Rabi frequency.
// Convention: Omega = 2|M| (MHz), so a resonant pi pulse lasts 1/(2 Omega).
struct TransitionMoment {
    std::complex<double> element_mhz{0.0, 0.0};
    double rabi_mhz = 0.0;
};
TransitionMoment transition_moment(const EigenSolution& sol, const SpinSystem& sys,
                                   TransitionId t, const FieldVector& B_ac,
                                   const Constants& c = {});

// The magnetically inequivalent sub-site: all tensors conjugated by the C2
// rotation (pi about b).
SpinSystem subsite_counterpart(const SpinSystem& sys);

} // namespace zefoz
