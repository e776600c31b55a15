#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "fsdm/tensor.hpp"

namespace fsdm {

/// A non-empty set of D-dimensional points in flat row-major storage.
struct PointSet {
    int dim = 0;
    std::vector<double> coords;  // size() * dim entries

    PointSet() = default;
    explicit PointSet(int d) : dim(d) {
        if (d < 1) throw std::invalid_argument("PointSet: dimension must be >= 1");
    }

    int size() const { return dim == 0 ? 0 : static_cast<int>(coords.size()) / dim; }

    double& coord(int i, int k) { return coords[static_cast<std::size_t>(i) * dim + k]; }
    double coord(int i, int k) const { return coords[static_cast<std::size_t>(i) * dim + k]; }

    void add(const std::vector<double>& p) {
        if (static_cast<int>(p.size()) != dim) throw std::invalid_argument("PointSet: point dimension mismatch");
        coords.insert(coords.end(), p.begin(), p.end());
    }

    std::vector<double> centroid() const {
        if (size() == 0) throw std::invalid_argument("PointSet: empty set has no centroid");
        std::vector<double> c(dim, 0.0);
        for (int i = 0; i < size(); ++i)
            for (int k = 0; k < dim; ++k) c[k] += coord(i, k);
        for (double& v : c) v /= size();
        return c;
    }

    /// Copy with the centroid subtracted from every point.
    PointSet centered() const {
        std::vector<double> c = centroid();
        PointSet out(dim);
        out.coords = coords;
        for (int i = 0; i < size(); ++i)
            for (int k = 0; k < dim; ++k) out.coord(i, k) -= c[k];
        return out;
    }

    /// Root-mean-square point norm; a natural scale for drift normalization.
    double rms_norm() const {
        double acc = 0.0;
        for (double v : coords) acc += v * v;
        return std::sqrt(acc / size());
    }

    Eigen::MatrixXd as_matrix() const {
        Eigen::MatrixXd m(size(), dim);
        for (int i = 0; i < size(); ++i)
            for (int k = 0; k < dim; ++k) m(i, k) = coord(i, k);
        return m;
    }
};

/// Symmetric Euclidean distance matrix with zero diagonal.
inline Tensor pairwise_distances(const PointSet& p) {
    const int n = p.size();
    if (n < 2) throw std::invalid_argument("pairwise_distances: need at least 2 points");
    Tensor d = Tensor::zeros({n, n});
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            double acc = 0.0;
            for (int k = 0; k < p.dim; ++k) {
                double diff = p.coord(i, k) - p.coord(j, k);
                acc += diff * diff;
            }
            double dist = std::sqrt(acc);
            d[static_cast<std::size_t>(i) * n + j] = dist;
            d[static_cast<std::size_t>(j) * n + i] = dist;
        }
    }
    return d;
}

struct ProcrustesResult {
    double rotation_deg = 0.0;  // D=2: in-plane angle; D=3: geodesic angle. In [0, 180].
    double residual = 0.0;      // RMS distance after alignment
    bool degenerate = false;    // rank-deficient cross-covariance; rotation_deg forced to 0
};

/// Best proper rotation aligning A onto B (both expected pre-centered),
/// via SVD of the cross-covariance with determinant-sign correction.
inline ProcrustesResult orthogonal_procrustes(const PointSet& a, const PointSet& b) {
    if (a.size() != b.size()) throw std::invalid_argument("orthogonal_procrustes: point counts differ");
    if (a.dim != b.dim) throw std::invalid_argument("orthogonal_procrustes: dimensions differ");
    const int d = a.dim;
    if (d != 2 && d != 3) throw std::invalid_argument("orthogonal_procrustes: only D=2 and D=3 supported");

    const Eigen::MatrixXd ma = a.as_matrix();
    const Eigen::MatrixXd mb = b.as_matrix();
    const Eigen::MatrixXd h = ma.transpose() * mb;  // d x d cross-covariance

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::VectorXd sv = svd.singularValues();

    ProcrustesResult res;
    const double smax = sv(0);
    if (smax <= 0.0 || sv(d - 1) <= 1e-12 * smax) {
        // Rotation is not uniquely determined; report identity alignment.
        res.degenerate = true;
        res.residual = std::sqrt((ma - mb).squaredNorm() / a.size());
        return res;
    }

    Eigen::MatrixXd r = svd.matrixV() * svd.matrixU().transpose();
    if (r.determinant() < 0.0) {
        Eigen::MatrixXd flip = Eigen::MatrixXd::Identity(d, d);
        flip(d - 1, d - 1) = -1.0;
        r = svd.matrixV() * flip * svd.matrixU().transpose();
    }

    if (d == 2) {
        res.rotation_deg = std::abs(std::atan2(r(1, 0), r(0, 0))) * 180.0 / M_PI;
    } else {
        double c = (r.trace() - 1.0) / 2.0;
        c = std::min(1.0, std::max(-1.0, c));
        res.rotation_deg = std::acos(c) * 180.0 / M_PI;
    }
    res.residual = std::sqrt((ma * r.transpose() - mb).squaredNorm() / a.size());
    return res;
}

}  // namespace fsdm
