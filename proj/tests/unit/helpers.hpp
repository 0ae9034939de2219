#pragma once

#include <random>

#include "doctest.h"
#include "qjump/qjump.hpp"

namespace qjump::test {

#define CHECK_ERROR_KIND(expr, expected_kind)                  \
    do {                                                        \
        bool thrown_ = false;                                   \
        try {                                                   \
            (void)(expr);                                       \
        } catch (const ::qjump::Error& e_) {                    \
            thrown_ = true;                                     \
            CHECK(e_.kind() == (expected_kind));                \
        }                                                       \
        CHECK_MESSAGE(thrown_, "expected an exception");        \
    } while (false)

inline Vector ket(std::initializer_list<cplx> amps) {
    Vector v(static_cast<Eigen::Index>(amps.size()));
    int i = 0;
    for (const auto& a : amps) v[i++] = a;
    return v;
}

inline Matrix random_matrix(int d, std::mt19937_64& gen) {
    std::normal_distribution<double> n;
    Matrix m(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) m(i, j) = cplx(n(gen), n(gen));
    return m;
}

inline Matrix random_hermitian(int d, std::mt19937_64& gen) {
    const Matrix m = random_matrix(d, gen);
    return 0.5 * (m + m.adjoint());
}

inline Matrix random_density(int d, std::mt19937_64& gen) {
    const Matrix m = random_matrix(d, gen);
    const Matrix rho = m * m.adjoint();
    return rho / rho.trace().real();
}

inline Vector random_ket(int d, std::mt19937_64& gen) {
    std::normal_distribution<double> n;
    Vector v(d);
    for (int i = 0; i < d; ++i) v[i] = cplx(n(gen), n(gen));
    return v.normalized();
}

inline Matrix random_unitary(int d, std::mt19937_64& gen) {
    Eigen::HouseholderQR<Matrix> qr(random_matrix(d, gen));
    return qr.householderQ();
}

inline Matrix mat2(cplx a, cplx b, cplx c, cplx d) {
    Matrix m(2, 2);
    m << a, b, c, d;
    return m;
}

inline Matrix ketbra(int d, int i, int j) {
    Matrix m = Matrix::Zero(d, d);
    m(i, j) = 1.0;
    return m;
}

}  // namespace qjump::test
