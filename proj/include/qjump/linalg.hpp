#pragma once

// Dense complex linear algebra for small Hilbert spaces.

#include <complex>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qjump/error.hpp"

namespace qjump {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

/// Density matrices are plain matrices; hermiticity and trace are checked where they matter.
using DensityMatrix = Matrix;

inline constexpr double kEps = 1e-12;
inline constexpr cplx kI{0.0, 1.0};

/// Unit-norm state vector. Only constructible through normalization.
class PureState {
public:
    PureState() = default;

    /// Normalizes `v`; throws ZeroVector when ||v|| <= 1e-14.
    static PureState from_amplitudes(const Vector& v);
    static PureState basis(int dim, int index);

    int dim() const { return static_cast<int>(amps_.size()); }
    const Vector& vec() const { return amps_; }
    cplx operator[](int i) const { return amps_[i]; }
    Matrix projector() const { return amps_ * amps_.adjoint(); }

private:
    explicit PureState(Vector v) : amps_(std::move(v)) {}
    Vector amps_;
    friend std::pair<PureState, double> normalize(const Vector& v);
};

struct Eigenpair {
    double value;
    PureState vector;
};

Matrix dagger(const Matrix& m);

/// Returns the state and the norm it had before normalization.
std::pair<PureState, double> normalize(const Vector& v);

/// Hermitian eigendecomposition. Eigenvalues descending; each eigenvector's
/// largest-magnitude component is real and non-negative; degenerate
/// eigenspaces get a canonical basis (projected computational basis,
/// Gram-Schmidt in index order).
std::vector<Eigenpair> eigh(const Matrix& m);

/// Eigenvalues only, descending.
std::vector<double> eigvalsh(const Matrix& m);

double trace_distance(const DensityMatrix& a, const DensityMatrix& b);

/// Principal square root of a PSD matrix. Eigenvalues in (-tol, 0) are clipped;
/// anything below -tol throws NotPSD.
Matrix sqrt_psd(const Matrix& m, double tol = 1e-9);

double max_abs(const Matrix& m);
double hermiticity_defect(const Matrix& m);
bool is_hermitian(const Matrix& m, double tol = 1e-9);
void require_hermitian(const Matrix& m, double tol = 1e-9);

/// Squared fidelity |<a|b>|^2 for normalized vectors.
double overlap2(const Vector& a, const Vector& b);

/// Largest singular value squared, i.e. ||m||_inf^2 in operator norm.
double operator_norm_sq(const Matrix& m);

Matrix kron(const Matrix& a, const Matrix& b);

namespace pauli {
Matrix identity(int d = 2);
Matrix sx();
Matrix sy();
/// sigma_z = |1><1| - |0><0|
Matrix sz();
/// sigma_+ = |1><0|
Matrix sp();
/// sigma_- = |0><1|
Matrix sm();
}  // namespace pauli

}  // namespace qjump
