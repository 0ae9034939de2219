#include "qjump/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace qjump {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::NotHermitian: return "NotHermitian";
        case ErrorKind::DimMismatch: return "DimMismatch";
        case ErrorKind::ZeroVector: return "ZeroVector";
        case ErrorKind::NegativeRate: return "NegativeRate";
        case ErrorKind::StepTooLarge: return "StepTooLarge";
        case ErrorKind::NoJumpPossible: return "NoJumpPossible";
        case ErrorKind::MissingTargetState: return "MissingTargetState";
        case ErrorKind::NegativeWEigenvalue: return "NegativeWEigenvalue";
        case ErrorKind::NegativeROEigenvalue: return "NegativeROEigenvalue";
        case ErrorKind::DivisionByZero: return "DivisionByZero";
        case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
        case ErrorKind::SingularMap: return "SingularMap";
        case ErrorKind::NotPSD: return "NotPSD";
        case ErrorKind::DegenerateBlock: return "DegenerateBlock";
        case ErrorKind::InvalidRatePolicy: return "InvalidRatePolicy";
        case ErrorKind::GridMismatch: return "GridMismatch";
        case ErrorKind::ParseError: return "ParseError";
        case ErrorKind::UnknownModel: return "UnknownModel";
        case ErrorKind::UnknownMethod: return "UnknownMethod";
        case ErrorKind::BadAmplitudes: return "BadAmplitudes";
    }
    return "Unknown";
}

PureState PureState::from_amplitudes(const Vector& v) { return normalize(v).first; }

PureState PureState::basis(int dim, int index) {
    if (index < 0 || index >= dim) {
        throw Error(ErrorKind::IndexOutOfRange, "basis index outside dimension");
    }
    Vector v = Vector::Zero(dim);
    v[index] = 1.0;
    return PureState(std::move(v));
}

Matrix dagger(const Matrix& m) { return m.adjoint(); }

std::pair<PureState, double> normalize(const Vector& v) {
    const double n = v.norm();
    if (!(n > 1e-14)) {
        throw Error(ErrorKind::ZeroVector, "cannot normalize a zero vector");
    }
    return {PureState(v / n), n};
}

double max_abs(const Matrix& m) {
    return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

double hermiticity_defect(const Matrix& m) { return max_abs(m - m.adjoint()); }

bool is_hermitian(const Matrix& m, double tol) {
    return m.rows() == m.cols() && hermiticity_defect(m) <= tol;
}

void require_hermitian(const Matrix& m, double tol) {
    if (m.rows() != m.cols()) {
        throw Error(ErrorKind::DimMismatch, "matrix is not square");
    }
    if (hermiticity_defect(m) > tol) {
        throw Error(ErrorKind::NotHermitian, "matrix deviates from its adjoint");
    }
}

double overlap2(const Vector& a, const Vector& b) { return std::norm(a.dot(b)); }

namespace {

// Rotate so the largest-magnitude component is real and non-negative.
// Ties within 1e-12 resolve to the lowest index.
Vector fix_phase(Vector v) {
    int best = 0;
    double best_mag = -1.0;
    for (int i = 0; i < v.size(); ++i) {
        const double mag = std::abs(v[i]);
        if (mag > best_mag + 1e-12) {
            best_mag = mag;
            best = i;
        }
    }
    if (best_mag > 0.0) {
        v *= std::conj(v[best]) / best_mag;
        v[best] = best_mag;
    }
    return v;
}

bool lex_greater(const Vector& a, const Vector& b) {
    for (int i = 0; i < a.size(); ++i) {
        if (std::abs(a[i].real() - b[i].real()) > 1e-12) return a[i].real() > b[i].real();
        if (std::abs(a[i].imag() - b[i].imag()) > 1e-12) return a[i].imag() > b[i].imag();
    }
    return false;
}

// Canonical orthonormal basis of the span of `cols`: project e_0, e_1, ...
// and keep what survives Gram-Schmidt.
std::vector<Vector> canonical_basis(const Matrix& cols) {
    const int d = static_cast<int>(cols.rows());
    const int k = static_cast<int>(cols.cols());
    const Matrix proj = cols * cols.adjoint();
    std::vector<Vector> out;
    for (int i = 0; i < d && static_cast<int>(out.size()) < k; ++i) {
        Vector w = proj.col(i);
        for (const auto& u : out) w -= u * u.dot(w);
        const double n = w.norm();
        if (n > 1e-6) out.push_back(w / n);
    }
    // Numerically pathological spans fall back to the solver's vectors.
    if (static_cast<int>(out.size()) < k) {
        out.clear();
        for (int j = 0; j < k; ++j) out.push_back(cols.col(j));
    }
    return out;
}

}  // namespace

std::vector<Eigenpair> eigh(const Matrix& m) {
    require_hermitian(m);
    const Matrix h = 0.5 * (m + m.adjoint());
    Eigen::SelfAdjointEigenSolver<Matrix> solver(h);
    const Eigen::VectorXd& vals = solver.eigenvalues();
    const Matrix& vecs = solver.eigenvectors();
    const int d = static_cast<int>(h.rows());

    std::vector<int> order(d);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return vals[a] > vals[b]; });

    const double scale = std::max(1.0, vals.cwiseAbs().maxCoeff());
    const double tie = 1e-10 * scale;

    std::vector<Eigenpair> out;
    out.reserve(d);
    for (int start = 0; start < d;) {
        int stop = start + 1;
        while (stop < d && vals[order[start]] - vals[order[stop]] <= tie) ++stop;
        const int k = stop - start;
        Matrix cols(d, k);
        double mean = 0.0;
        for (int j = 0; j < k; ++j) {
            cols.col(j) = vecs.col(order[start + j]);
            mean += vals[order[start + j]];
        }
        std::vector<Vector> basis;
        if (k == 1) {
            basis.push_back(cols.col(0));
        } else {
            basis = canonical_basis(cols);
        }
        for (auto& v : basis) v = fix_phase(v);
        std::stable_sort(basis.begin(), basis.end(), lex_greater);
        for (int j = 0; j < k; ++j) {
            // Degenerate clusters share one eigenvalue, so the ordering stays monotone.
            const double value = k == 1 ? vals[order[start]] : mean / k;
            out.push_back({value, PureState::from_amplitudes(basis[j])});
        }
        start = stop;
    }
    return out;
}

std::vector<double> eigvalsh(const Matrix& m) {
    require_hermitian(m);
    const Matrix h = 0.5 * (m + m.adjoint());
    Eigen::SelfAdjointEigenSolver<Matrix> solver(h, Eigen::EigenvaluesOnly);
    std::vector<double> v(solver.eigenvalues().data(),
                          solver.eigenvalues().data() + solver.eigenvalues().size());
    std::sort(v.begin(), v.end(), std::greater<>());
    return v;
}

double trace_distance(const DensityMatrix& a, const DensityMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw Error(ErrorKind::DimMismatch, "trace_distance operands differ in dimension");
    }
    const Matrix diff = a - b;
    const Matrix h = 0.5 * (diff + diff.adjoint());
    Eigen::SelfAdjointEigenSolver<Matrix> solver(h, Eigen::EigenvaluesOnly);
    return 0.5 * solver.eigenvalues().cwiseAbs().sum();
}

Matrix sqrt_psd(const Matrix& m, double tol) {
    require_hermitian(m, 1e-9);
    const Matrix h = 0.5 * (m + m.adjoint());
    Eigen::SelfAdjointEigenSolver<Matrix> solver(h);
    Eigen::VectorXd vals = solver.eigenvalues();
    for (int i = 0; i < vals.size(); ++i) {
        if (vals[i] < -tol) {
            throw Error(ErrorKind::NotPSD, "matrix has eigenvalue " + std::to_string(vals[i]));
        }
        vals[i] = std::sqrt(std::max(vals[i], 0.0));
    }
    const Matrix& u = solver.eigenvectors();
    return u * vals.cast<cplx>().asDiagonal() * u.adjoint();
}

double operator_norm_sq(const Matrix& m) {
    if (m.size() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(m);
    const double s = svd.singularValues()[0];
    return s * s;
}

Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
        }
    }
    return out;
}

namespace pauli {

Matrix identity(int d) { return Matrix::Identity(d, d); }

Matrix sx() {
    Matrix m = Matrix::Zero(2, 2);
    m(0, 1) = 1.0;
    m(1, 0) = 1.0;
    return m;
}

Matrix sy() {
    Matrix m = Matrix::Zero(2, 2);
    m(0, 1) = -kI;
    m(1, 0) = kI;
    return m;
}

Matrix sz() {
    Matrix m = Matrix::Zero(2, 2);
    m(0, 0) = -1.0;
    m(1, 1) = 1.0;
    return m;
}

Matrix sp() {
    Matrix m = Matrix::Zero(2, 2);
    m(1, 0) = 1.0;
    return m;
}

Matrix sm() {
    Matrix m = Matrix::Zero(2, 2);
    m(0, 1) = 1.0;
    return m;
}

}  // namespace pauli

}  // namespace qjump
