#include "zefoz/hamiltonian.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "zefoz/util.hpp"

namespace zefoz {

std::vector<std::string> validate_system(const SpinSystem& sys) {
    std::vector<std::string> warnings;
    if (sys.Q && sys.I.twice() == 1)
        warnings.push_back("system '" + sys.label +
                           "': Q given for I = 1/2 contributes only a constant shift");
    if (sys.Q) {
        const double tr = sys.Q->principal_values.sum();
        const double scale = sys.Q->principal_values.cwiseAbs().maxCoeff();
        if (scale > 0 && std::abs(tr) > 1e-6 * scale)
            warnings.push_back("system '" + sys.label + "': Q has nonzero trace " +
                               format_double(tr) + " MHz (physical EFG tensors are traceless)");
    }
    return warnings;
}

Eigen::MatrixXcd build_hamiltonian(const SpinSystem& sys, const FieldVector& B,
                                   const Constants& c) {
    const ProductOperators ops = embed_operators(sys.S, sys.I);
    const Eigen::Matrix3d A = tensor_to_lab(sys.A);
    const Eigen::Matrix3d g = tensor_to_lab(sys.g);

    Eigen::MatrixXcd H = Eigen::MatrixXcd::Zero(ops.dim, ops.dim);
    const Eigen::MatrixXcd* S[3] = {&ops.electron.x, &ops.electron.y, &ops.electron.z};
    const Eigen::MatrixXcd* I[3] = {&ops.nuclear.x, &ops.nuclear.y, &ops.nuclear.z};

    // hyperfine S.A.I
    for (int p = 0; p < 3; ++p)
        for (int q = 0; q < 3; ++q)
            if (A(p, q) != 0.0) H += A(p, q) * (*S[p] * *I[q]);

    // electronic Zeeman  mu_B B.g.S
    for (int p = 0; p < 3; ++p)
        for (int q = 0; q < 3; ++q)
            if (B(p) != 0.0 && g(p, q) != 0.0) H += c.mu_B_mhz_per_t * B(p) * g(p, q) * *S[q];

    // nuclear Zeeman  -mu_n B.g_n.I
    if (sys.g_n_tensor) {
        const Eigen::Matrix3d gn = tensor_to_lab(*sys.g_n_tensor);
        for (int p = 0; p < 3; ++p)
            for (int q = 0; q < 3; ++q)
                if (B(p) != 0.0 && gn(p, q) != 0.0)
                    H -= c.mu_n_mhz_per_t * B(p) * gn(p, q) * *I[q];
    } else if (sys.g_n != 0.0) {
        for (int p = 0; p < 3; ++p)
            if (B(p) != 0.0) H -= c.mu_n_mhz_per_t * sys.g_n * B(p) * *I[p];
    }

    // quadrupole I.Q.I
    if (sys.Q) {
        const Eigen::Matrix3d Q = tensor_to_lab(*sys.Q);
        for (int p = 0; p < 3; ++p)
            for (int q = 0; q < 3; ++q)
                if (Q(p, q) != 0.0) H += Q(p, q) * (*I[p] * *I[q]);
    }
    return H;
}

Eigen::MatrixXcd zeeman_derivative(const SpinSystem& sys, int axis, const Constants& c) {
    const ProductOperators ops = embed_operators(sys.S, sys.I);
    const Eigen::Matrix3d g = tensor_to_lab(sys.g);
    const Eigen::MatrixXcd* S[3] = {&ops.electron.x, &ops.electron.y, &ops.electron.z};
    const Eigen::MatrixXcd* I[3] = {&ops.nuclear.x, &ops.nuclear.y, &ops.nuclear.z};

    Eigen::MatrixXcd V = Eigen::MatrixXcd::Zero(ops.dim, ops.dim);
    for (int q = 0; q < 3; ++q)
        if (g(axis, q) != 0.0) V += c.mu_B_mhz_per_t * g(axis, q) * *S[q];
    if (sys.g_n_tensor) {
        const Eigen::Matrix3d gn = tensor_to_lab(*sys.g_n_tensor);
        for (int q = 0; q < 3; ++q)
            if (gn(axis, q) != 0.0) V -= c.mu_n_mhz_per_t * gn(axis, q) * *I[q];
    } else {
        V -= c.mu_n_mhz_per_t * sys.g_n * *I[axis];
    }
    return V;
}

std::vector<std::vector<int>> EigenSolution::clusters(double tol_mhz) const {
    std::vector<std::vector<int>> out;
    std::vector<int> cur{0};
    for (int k = 1; k < energies.size(); ++k) {
        if (energies(k) - energies(k - 1) < tol_mhz) {
            cur.push_back(k);
        } else {
            out.push_back(cur);
            cur = {k};
        }
    }
    out.push_back(cur);
    return out;
}

double EigenSolution::gap(int level) const {
    double best = std::numeric_limits<double>::infinity();
    for (int k = 0; k < energies.size(); ++k)
        if (k != level) best = std::min(best, std::abs(energies(k) - energies(level)));
    return best;
}

EigenSolution eigensolve(const Eigen::MatrixXcd& H, const FieldVector& B) {
    const Eigen::Index n = H.rows();
    if (H.cols() != n || n < 1) throw Error("eigensolve: matrix must be square");

    const double scale = std::max(H.cwiseAbs().maxCoeff(), 1e-300);
    const double asym = (H - H.adjoint()).cwiseAbs().maxCoeff();
    if (asym > 1e-9 * scale)
        throw Error("eigensolve: input not Hermitian, max asymmetry " + format_double(asym) +
                    " (relative " + format_double(asym / scale) + ")");

    Eigen::MatrixXcd A = 0.5 * (H + H.adjoint());
    Eigen::MatrixXcd V = Eigen::MatrixXcd::Identity(n, n);
    const double tol = 1e-13 * std::max(A.norm(), 1e-300);

    auto offdiag = [&]() {
        double s = 0.0;
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index q = p + 1; q < n; ++q) s += 2.0 * std::norm(A(p, q));
        return std::sqrt(s);
    };

    // Cyclic Jacobi with complex rotations zeroing A(p,q).
    bool converged = (n == 1);
    for (int sweep = 0; sweep < 100 && !converged; ++sweep) {
        if (offdiag() <= tol) {
            converged = true;
            break;
        }
        for (Eigen::Index p = 0; p < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                const std::complex<double> apq = A(p, q);
                const double mag = std::abs(apq);
                if (mag <= tol / static_cast<double>(n)) continue;
                const double app = A(p, p).real();
                const double aqq = A(q, q).real();
                const double theta = (aqq - app) / (2.0 * mag);
                const double sign = theta >= 0.0 ? 1.0 : -1.0;
                const double t = sign / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double cth = 1.0 / std::sqrt(t * t + 1.0);
                const double sth = t * cth;
                const std::complex<double> phase = apq / mag;

                // A <- J^H A J with the 2x2 block [[c, s e^{ia}], [-s e^{-ia}, c]]
                const Eigen::VectorXcd colp = A.col(p), colq = A.col(q);
                A.col(p) = cth * colp - sth * std::conj(phase) * colq;
                A.col(q) = sth * phase * colp + cth * colq;
                const Eigen::RowVectorXcd rowp = A.row(p), rowq = A.row(q);
                A.row(p) = cth * rowp - sth * phase * rowq;
                A.row(q) = sth * std::conj(phase) * rowp + cth * rowq;
                A(p, q) = 0.0;
                A(q, p) = 0.0;

                const Eigen::VectorXcd vp = V.col(p), vq = V.col(q);
                V.col(p) = cth * vp - sth * std::conj(phase) * vq;
                V.col(q) = sth * phase * vp + cth * vq;
            }
        }
    }
    if (!converged && offdiag() > tol) throw Error("eigensolve: Jacobi did not converge");

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return A(a, a).real() < A(b, b).real(); });

    EigenSolution sol;
    sol.energies.resize(n);
    sol.states.resize(n, n);
    sol.field = B;
    for (Eigen::Index k = 0; k < n; ++k) {
        sol.energies(k) = A(order[k], order[k]).real();
        Eigen::VectorXcd v = V.col(order[k]);
        // phase convention: largest-magnitude component real positive
        Eigen::Index imax = 0;
        double best = -1.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double a = std::abs(v(i));
            if (a > best) {
                best = a;
                imax = i;
            }
        }
        if (best > 0.0) v *= std::conj(v(imax)) / best;
        sol.states.col(k) = v;
    }

    // residual guard: H v = E v to 1e-9 ||H||
    const double hnorm = std::max(H.norm(), 1e-300);
    for (Eigen::Index k = 0; k < n; ++k) {
        const double res = (H * sol.states.col(k) - sol.energies(k) * sol.states.col(k)).norm();
        if (res > 1e-9 * hnorm)
            throw Error("eigensolve: residual " + format_double(res) + " exceeds tolerance");
    }
    return sol;
}

TransitionId make_transition(int a, int b) {
    if (a == b) throw Error("transition requires two distinct levels");
    if (a < 0 || b < 0) throw Error("transition level indices must be non-negative");
    TransitionId t;
    t.lower = std::min(a, b);
    t.upper = std::max(a, b);
    return t;
}

ZeroFieldLevels zero_field_levels(const Eigen::Vector3d& A) {
    ZeroFieldLevels out;
    out.e_psi_plus = 0.25 * (A(2) + (A(0) - A(1)));
    out.e_psi_minus = 0.25 * (A(2) - (A(0) - A(1)));
    out.e_phi_plus = 0.25 * (-A(2) + (A(0) + A(1)));
    out.e_phi_minus = 0.25 * (-A(2) - (A(0) + A(1)));

    const double e[4] = {out.e_psi_plus, out.e_psi_minus, out.e_phi_plus, out.e_phi_minus};
    const char* names[4] = {"psi+", "psi-", "phi+", "phi-"};
    for (int i = 0; i < 4 && !out.degenerate; ++i) {
        for (int j = i + 1; j < 4; ++j) {
            if (std::abs(e[i] - e[j]) < 1e-6) {
                out.degenerate = true;
                out.degeneracy_note = std::string("levels ") + names[i] + " and " + names[j] +
                                      " degenerate at " + format_double(e[i]) + " MHz";
                break;
            }
        }
    }
    return out;
}

const char* to_string(LevelLabel l) {
    switch (l) {
        case LevelLabel::PsiPlus: return "psi+";
        case LevelLabel::PsiMinus: return "psi-";
        case LevelLabel::PhiPlus: return "phi+";
        case LevelLabel::PhiMinus: return "phi-";
        default: return "-";
    }
}

std::vector<LevelLabel> label_levels(const SpinSystem& sys) {
    if (sys.S.twice() != 1 || sys.I.twice() != 1)
        return std::vector<LevelLabel>(sys.dim(), LevelLabel::Unlabeled);

    const ZeroFieldLevels zf = zero_field_levels(sys.A.principal_values);
    if (zf.degenerate) return std::vector<LevelLabel>(4, LevelLabel::Unlabeled);

    // Diagonalize in the A principal frame; labels depend only on the
    // principal values.
    SpinSystem aligned = sys;
    aligned.A.orientation = {};
    aligned.g.orientation = {};
    if (aligned.Q) aligned.Q->orientation = {};
    const EigenSolution sol = eigensolve(build_hamiltonian(aligned, FieldVector::Zero()));

    // Bell combinations in the |m_S, m_I> basis (uu, ud, du, dd).
    Eigen::MatrixXcd bell = Eigen::MatrixXcd::Zero(4, 4);
    const double r = 1.0 / std::sqrt(2.0);
    bell.col(0) << r, 0, 0, r;    // psi+
    bell.col(1) << r, 0, 0, -r;   // psi-
    bell.col(2) << 0, r, r, 0;    // phi+
    bell.col(3) << 0, r, -r, 0;   // phi-

    std::vector<LevelLabel> labels(4, LevelLabel::Unlabeled);
    const LevelLabel order[4] = {LevelLabel::PsiPlus, LevelLabel::PsiMinus, LevelLabel::PhiPlus,
                                 LevelLabel::PhiMinus};
    for (int b = 0; b < 4; ++b) {
        int best = -1;
        double bestov = 0.0;
        for (int k = 0; k < 4; ++k) {
            const double o = std::abs((bell.col(b).adjoint() * sol.states.col(k))(0));
            if (o > bestov) {
                bestov = o;
                best = k;
            }
        }
        if (best >= 0 && labels[best] == LevelLabel::Unlabeled && bestov > 0.7)
            labels[best] = order[b];
    }
    return labels;
}

Eigen::MatrixXcd reduced_density_matrix(const Eigen::VectorXcd& state, HalfInteger S,
                                        HalfInteger I, Subsystem keep) {
    const Eigen::Index dS = S.multiplicity(), dI = I.multiplicity();
    if (state.size() != dS * dI) throw Error("reduced_density_matrix: dimension mismatch");

    if (keep == Subsystem::Electron) {
        Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(dS, dS);
        for (Eigen::Index i = 0; i < dS; ++i)
            for (Eigen::Index j = 0; j < dS; ++j)
                for (Eigen::Index k = 0; k < dI; ++k)
                    rho(i, j) += state(i * dI + k) * std::conj(state(j * dI + k));
        return rho;
    }
    Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(dI, dI);
    for (Eigen::Index i = 0; i < dI; ++i)
        for (Eigen::Index j = 0; j < dI; ++j)
            for (Eigen::Index k = 0; k < dS; ++k)
                rho(i, j) += state(k * dI + i) * std::conj(state(k * dI + j));
    return rho;
}

SpinExpectations spin_expectations(const Eigen::VectorXcd& state, HalfInteger S, HalfInteger I) {
    const ProductOperators ops = embed_operators(S, I);
    if (state.size() != ops.dim) throw Error("spin_expectations: dimension mismatch");
    SpinExpectations out;
    const Eigen::MatrixXcd* Sp[3] = {&ops.electron.x, &ops.electron.y, &ops.electron.z};
    const Eigen::MatrixXcd* Ip[3] = {&ops.nuclear.x, &ops.nuclear.y, &ops.nuclear.z};
    for (int p = 0; p < 3; ++p) {
        out.S(p) = (state.adjoint() * (*Sp[p] * state))(0).real();
        out.I(p) = (state.adjoint() * (*Ip[p] * state))(0).real();
    }
    return out;
}

TransitionMoment transition_moment(const EigenSolution& sol, const SpinSystem& sys,
                                   TransitionId t, const FieldVector& B_ac, const Constants& c) {
    if (t.lower < 0 || t.upper >= sol.dim() || t.lower == t.upper)
        throw Error("transition_moment: invalid transition indices");
    Eigen::MatrixXcd op = Eigen::MatrixXcd::Zero(sol.dim(), sol.dim());
    for (int p = 0; p < 3; ++p)
        if (B_ac(p) != 0.0) op += B_ac(p) * zeeman_derivative(sys, p, c);
    TransitionMoment out;
    out.element_mhz = (sol.states.col(t.upper).adjoint() * (op * sol.states.col(t.lower)))(0);
    out.rabi_mhz = 2.0 * std::abs(out.element_mhz);
    return out;
}

namespace {

TensorSpec conjugate_by_c2b(const TensorSpec& t) {
    Eigen::Matrix3d c2;
    c2 << -1, 0, 0, 0, -1, 0, 0, 0, 1;
    const Eigen::Matrix3d R = c2 * rotation_from_euler(t.orientation);
    TensorSpec out = t;
    out.orientation = euler_from_rotation(R);
    return out;
}

} // namespace

SpinSystem subsite_counterpart(const SpinSystem& sys) {
    SpinSystem out = sys;
    out.A = conjugate_by_c2b(sys.A);
    out.g = conjugate_by_c2b(sys.g);
    if (sys.g_n_tensor) out.g_n_tensor = conjugate_by_c2b(*sys.g_n_tensor);
    if (sys.Q) out.Q = conjugate_by_c2b(*sys.Q);
    if (!sys.label.empty()) out.label = sys.label + " (sub-site)";
    return out;
}

} // namespace zefoz
