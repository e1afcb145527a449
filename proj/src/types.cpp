#include "nlqmm/types.hpp"

#include <cmath>
#include <set>

namespace nlqmm {

void ClusteredDataset::validate() const {
    if (clusters.empty())
        throw invalid_parameter("dataset must contain at least one cluster");
    std::set<std::string> ids;
    for (const auto& c : clusters) {
        if (c.y.size() < 1)
            throw invalid_parameter("cluster '" + c.id + "' is empty");
        if (c.x.rows() != c.y.size())
            throw invalid_parameter("cluster '" + c.id +
                                    "': covariate row count differs from response length");
        if (!c.y.allFinite())
            throw invalid_parameter("cluster '" + c.id + "': non-finite response value");
        if (!ids.insert(c.id).second)
            throw invalid_parameter("duplicate cluster id '" + c.id + "'");
    }
}

Matrix materialize_psi(const Vector& xi, const VarianceSpec& spec) {
    if (xi.size() != spec.num_params())
        throw invalid_parameter("xi has length " + std::to_string(xi.size()) +
                                ", expected " + std::to_string(spec.num_params()));
    if (!xi.allFinite()) throw invalid_parameter("non-finite entry in xi");

    const int q = spec.q;
    if (spec.structure == VarianceStructure::Diagonal) {
        Matrix psi = Matrix::Zero(q, q);
        for (int k = 0; k < q; ++k) psi(k, k) = std::exp(2.0 * xi(k));
        return psi;
    }
    // Log-Cholesky: diagonal of L first, then the strict lower triangle
    // column-major.
    Matrix L = Matrix::Zero(q, q);
    for (int k = 0; k < q; ++k) L(k, k) = std::exp(xi(k));
    int pos = q;
    for (int j = 0; j < q; ++j)
        for (int i = j + 1; i < q; ++i) L(i, j) = xi(pos++);
    return L * L.transpose();
}

Vector extract_xi(const Matrix& psi, const VarianceSpec& spec) {
    const int q = spec.q;
    Vector xi(spec.num_params());
    if (spec.structure == VarianceStructure::Diagonal) {
        for (int k = 0; k < q; ++k) {
            if (psi(k, k) <= 0.0) throw numerical_error("non-positive diagonal in psi");
            xi(k) = 0.5 * std::log(psi(k, k));
        }
        return xi;
    }
    Eigen::LLT<Matrix> llt(psi);
    if (llt.info() != Eigen::Success) throw numerical_error("psi is not positive definite");
    Matrix L = llt.matrixL();
    for (int k = 0; k < q; ++k) xi(k) = std::log(L(k, k));
    int pos = q;
    for (int j = 0; j < q; ++j)
        for (int i = j + 1; i < q; ++i) xi(pos++) = L(i, j);
    return xi;
}

Matrix precision_factor(const Matrix& psi) {
    Eigen::LLT<Matrix> llt(psi);
    if (llt.info() != Eigen::Success)
        throw numerical_error("Cholesky factorization failed: psi is not SPD");
    Matrix L = llt.matrixL();
    return L.triangularView<Eigen::Lower>().solve(Matrix::Identity(psi.rows(), psi.cols()));
}

}  // namespace nlqmm
