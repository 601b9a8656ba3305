#pragma once

// Extended parallel-Hammerstein model
//   y(n) = sum_{p odd <= P} h_p * psi_p(x)(n) + sum_{q odd <= Q} h_q * psi_q(x*)(n)
// expanded into a linear-in-parameters basis
//   |x(n-m)|^{p-1} x(n-m),   m < L_p      (non-conjugate branch)
//   |x(n-m)|^{q-1} x*(n-m),  m < L_q      (conjugate branch)
// Column order: non-conjugate orders ascending, then conjugate orders
// ascending; delays vary fastest.

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "error.hpp"
#include "signals.hpp"

namespace dpdlab::volterra {

struct PhShape {
    int P = 1;                        // odd, >= 1
    int Q = 0;                        // odd, or 0 to drop the conjugate branch
    std::map<int, int> lengths_p;     // order -> L_p
    std::map<int, int> lengths_q;     // order -> L_q

    /// Same filter length for every order.
    static PhShape uniform(int P, int Q, int L) {
        PhShape s;
        s.P = P;
        s.Q = Q;
        for (int p = 1; p <= P; p += 2) s.lengths_p[p] = L;
        for (int q = 1; q <= Q; q += 2) s.lengths_q[q] = L;
        s.validate();
        return s;
    }

    void validate() const {
        if (P < 1 || P % 2 == 0) throw std::invalid_argument("PhShape: P must be odd and >= 1");
        if (Q < 0 || (Q != 0 && Q % 2 == 0)) throw std::invalid_argument("PhShape: Q must be odd or zero");
        auto check = [](const std::map<int, int>& lengths, int order, const char* name) {
            if (static_cast<int>(lengths.size()) != (order + 1) / 2)
                throw std::invalid_argument(std::string("PhShape: need one filter length per odd order in ") + name);
            for (int o = 1; o <= order; o += 2) {
                const auto it = lengths.find(o);
                if (it == lengths.end() || it->second < 1)
                    throw std::invalid_argument(std::string("PhShape: missing or non-positive length in ") + name);
            }
        };
        check(lengths_p, P, "lengths_p");
        check(lengths_q, Q, "lengths_q");
    }

    [[nodiscard]] Eigen::Index num_columns() const {
        Eigen::Index c = 0;
        for (const auto& [o, l] : lengths_p) c += l;
        for (const auto& [o, l] : lengths_q) c += l;
        return c;
    }

    [[nodiscard]] int max_length() const {
        int m = 1;
        for (const auto& [o, l] : lengths_p) m = std::max(m, l);
        for (const auto& [o, l] : lengths_q) m = std::max(m, l);
        return m;
    }

    /// Compact descriptor, e.g. "P7Q3L2" for uniform shapes.
    [[nodiscard]] std::string descriptor() const {
        std::ostringstream os;
        os << 'P' << P << 'Q' << Q;
        int common = -1;
        bool uniform = true;
        for (const auto* m : {&lengths_p, &lengths_q})
            for (const auto& [o, l] : *m) {
                if (common < 0) common = l;
                uniform = uniform && l == common;
            }
        if (uniform) {
            os << 'L' << common;
        } else {
            os << 'L';
            for (const auto& [o, l] : lengths_p) os << l << '.';
            os << '/';
            for (const auto& [o, l] : lengths_q) os << l << '.';
        }
        return os.str();
    }
};

struct PhModel {
    PhShape shape;
    Eigen::VectorXcd coeffs;

    void validate() const {
        shape.validate();
        if (coeffs.size() != shape.num_columns())
            throw std::invalid_argument("PhModel: coefficient count does not match the basis size");
    }
};

/// Rows are the time indices n in [Lmax-1, len).
inline Eigen::MatrixXcd ph_basis(const ComplexSignal& x, const PhShape& shape) {
    shape.validate();
    const auto lmax = static_cast<std::size_t>(shape.max_length());
    if (x.size() <= lmax) throw std::invalid_argument("ph_basis: signal not longer than the longest filter");
    const auto rows = static_cast<Eigen::Index>(x.size() - (lmax - 1));
    Eigen::MatrixXcd basis(rows, shape.num_columns());
    Eigen::Index col = 0;
    auto fill = [&](const std::map<int, int>& lengths, bool conjugate) {
        for (const auto& [order, len] : lengths) {
            for (int m = 0; m < len; ++m, ++col) {
                for (Eigen::Index r = 0; r < rows; ++r) {
                    const cplx v = x.samples[static_cast<std::size_t>(r) + lmax - 1 - static_cast<std::size_t>(m)];
                    const double env = std::pow(std::abs(v), order - 1);
                    basis(r, col) = env * (conjugate ? std::conj(v) : v);
                }
            }
        }
    };
    fill(shape.lengths_p, false);
    fill(shape.lengths_q, true);
    return basis;
}

struct LsOptions {
    // Normal equations are used while the Gram matrix condition stays below this.
    double normal_eq_condition_limit = 1e8;
    // Anything worse than this is reported as rank deficient.
    double rank_condition_limit = 1e13;
};

/// Complex least squares with column equilibration. Solves via the normal
/// equations when well conditioned, otherwise via column-pivoted QR.
inline Eigen::VectorXcd ls_fit(const Eigen::MatrixXcd& basis, const Eigen::VectorXcd& target, const LsOptions& opts = {}) {
    const auto rows = basis.rows();
    const auto cols = basis.cols();
    if (cols == 0) throw std::invalid_argument("ls_fit: empty basis");
    if (rows < cols) throw std::invalid_argument("ls_fit: fewer rows than columns");
    if (target.size() != rows) throw std::invalid_argument("ls_fit: target length does not match basis rows");

    Eigen::VectorXd scale = basis.colwise().norm().transpose();
    for (Eigen::Index c = 0; c < cols; ++c) {
        if (!(scale(c) > 0.0)) {
            std::ostringstream os;
            os << "ls_fit: basis column " << c << " is identically zero (condition estimate inf)";
            throw NumericalError(os.str());
        }
    }
    const Eigen::MatrixXcd A = basis * scale.cwiseInverse().asDiagonal();

    const Eigen::MatrixXcd gram = A.adjoint() * A;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(gram, Eigen::EigenvaluesOnly);
    const double lmin = eig.eigenvalues().minCoeff();
    const double lmax = eig.eigenvalues().maxCoeff();
    const double gram_cond = lmin > 0.0 ? lmax / lmin : std::numeric_limits<double>::infinity();

    Eigen::VectorXcd sol;
    if (gram_cond <= opts.normal_eq_condition_limit) {
        sol = gram.ldlt().solve(A.adjoint() * target);
    } else {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXcd> qr(A);
        const auto& R = qr.matrixR();
        const double rmax = std::abs(R(0, 0));
        const double rmin = std::abs(R(cols - 1, cols - 1));
        const double qr_cond = rmin > 0.0 ? rmax / rmin : std::numeric_limits<double>::infinity();
        if (qr.rank() < cols || !(qr_cond <= opts.rank_condition_limit)) {
            std::ostringstream os;
            os << "ls_fit: basis is rank deficient (condition estimate " << qr_cond << ")";
            throw NumericalError(os.str());
        }
        sol = qr.solve(target);
    }
    return scale.cwiseInverse().asDiagonal() * sol;
}

inline Eigen::VectorXcd tail_vector(const ComplexSignal& s, Eigen::Index rows) {
    Eigen::VectorXcd v(rows);
    const auto offset = s.size() - static_cast<std::size_t>(rows);
    for (Eigen::Index r = 0; r < rows; ++r) v(r) = s.samples[offset + static_cast<std::size_t>(r)];
    return v;
}

/// Target given as a signal; its last basis.rows() samples are used.
inline Eigen::VectorXcd ls_fit(const Eigen::MatrixXcd& basis, const ComplexSignal& target, const LsOptions& opts = {}) {
    if (target.size() < static_cast<std::size_t>(basis.rows()))
        throw std::invalid_argument("ls_fit: target shorter than the basis");
    return ls_fit(basis, tail_vector(target, basis.rows()), opts);
}

/// Identifies a model mapping x to y. `skip` leading rows are dropped from
/// the regression to keep start-up transients out of the fit.
inline PhModel ph_identify(const ComplexSignal& x, const ComplexSignal& y, const PhShape& shape, std::size_t skip = 0) {
    if (x.size() != y.size()) throw std::invalid_argument("ph_identify: length mismatch");
    const Eigen::MatrixXcd basis = ph_basis(x, shape);
    const auto usable = basis.rows() - static_cast<Eigen::Index>(skip);
    if (usable < basis.cols()) throw std::invalid_argument("ph_identify: not enough samples after transient skip");
    const Eigen::VectorXcd target = tail_vector(y, usable);
    return PhModel{shape, ls_fit(basis.bottomRows(usable), target)};
}

/// Warm-up samples before the longest filter is filled are copied from x.
inline ComplexSignal ph_predict(const ComplexSignal& x, const PhModel& model) {
    model.validate();
    ComplexSignal out = x;
    const auto lmax = static_cast<std::size_t>(model.shape.max_length());
    if (x.size() <= lmax) return out;
    const Eigen::VectorXcd y = ph_basis(x, model.shape) * model.coeffs;
    for (Eigen::Index r = 0; r < y.size(); ++r) out.samples[static_cast<std::size_t>(r) + lmax - 1] = y(r);
    return out;
}

struct PhComplexity {
    double n_poly = 0.0;
    long long n_filter = 0;
    long long flops = 0;
};

/// Running complexity of the extended PH in real FLOPs:
///   N_poly   = (1 + (P+1)/2)(P+1)/4 + (1 + (Q+1)/2)(Q+1)/4
///   N_filter = sum L_p + sum L_q + 1
///   C        = 8 (N_poly + N_filter) - 4 + 3 + (max(P, Q) - 1)
/// Q = 0 drops the conjugate terms.
inline PhComplexity ph_complexity(const PhShape& shape) {
    shape.validate();
    auto poly = [](int order) {
        if (order == 0) return 0.0;
        const double h = (order + 1) / 2.0;
        return (1.0 + h) * (order + 1) / 4.0;
    };
    PhComplexity c;
    c.n_poly = poly(shape.P) + poly(shape.Q);
    c.n_filter = 1;
    for (const auto& [o, l] : shape.lengths_p) c.n_filter += l;
    for (const auto& [o, l] : shape.lengths_q) c.n_filter += l;
    const double total = 8.0 * (c.n_poly + static_cast<double>(c.n_filter)) - 4.0 + 3.0 + (std::max(shape.P, shape.Q) - 1);
    c.flops = std::llround(total);
    return c;
}

inline long long ph_flops(const PhShape& shape) { return ph_complexity(shape).flops; }

}  // namespace dpdlab::volterra
