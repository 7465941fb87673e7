#include "p2preg/matching.hpp"

#include <cmath>

#include <Eigen/SVD>

namespace p2preg {

Eigen::MatrixXd score_matrix(const FeatureMatrix& xs, const FeatureMatrix& xt) {
    if (xs.dim() != xt.dim())
        throw ParameterError("score_matrix: feature dimension mismatch");
    return xs.values * xt.values.transpose();
}

Eigen::MatrixXd dual_softmax(const Eigen::MatrixXd& scores, double temperature) {
    if (scores.size() == 0) throw ParameterError("dual_softmax: empty score matrix");
    if (!(temperature > 0.0)) throw ParameterError("dual_softmax: temperature must be > 0");

    Eigen::MatrixXd logits = scores / temperature;

    // row softmax (over targets), max-subtracted for stability
    Eigen::VectorXd row_max = logits.rowwise().maxCoeff();
    Eigen::MatrixXd row_sm = (logits.colwise() - row_max).array().exp();
    Eigen::VectorXd row_sum = row_sm.rowwise().sum();
    row_sm.array().colwise() /= row_sum.array();

    // column softmax (over sources)
    Eigen::RowVectorXd col_max = logits.colwise().maxCoeff();
    Eigen::MatrixXd col_sm = (logits.rowwise() - col_max).array().exp();
    Eigen::RowVectorXd col_sum = col_sm.colwise().sum();
    col_sm.array().rowwise() /= col_sum.array();

    return row_sm.cwiseProduct(col_sm);
}

DualSoftmaxTables dual_softmax_tables(const Eigen::MatrixXd& scores, double temperature) {
    if (scores.size() == 0) throw ParameterError("dual_softmax_tables: empty score matrix");
    if (!(temperature > 0.0))
        throw ParameterError("dual_softmax_tables: temperature must be > 0");

    DualSoftmaxTables t;
    RowMajorMatrixXd logits = scores / temperature;
    t.subset_safe = logits.maxCoeff() - logits.minCoeff() < 500.0;

    Eigen::VectorXd row_max = logits.rowwise().maxCoeff();
    t.row_softmax = (logits.colwise() - row_max).array().exp();
    Eigen::VectorXd row_sum = t.row_softmax.rowwise().sum();
    t.row_softmax.array().colwise() /= row_sum.array();

    Eigen::RowVectorXd col_max = logits.colwise().maxCoeff();
    t.col_exp = (logits.rowwise() - col_max).array().exp();
    return t;
}

Eigen::MatrixXd DualSoftmaxTables::confidence() const {
    Eigen::RowVectorXd col_sum = col_exp.colwise().sum();
    RowMajorMatrixXd conf = row_softmax.cwiseProduct(col_exp);
    conf.array().rowwise() /= col_sum.array();
    return conf;
}

CorrespondenceSet mutual_nn_matches(const Eigen::MatrixXd& confidence) {
    if (confidence.size() == 0) throw ParameterError("mutual_nn_matches: empty matrix");

    const Eigen::Index rows = confidence.rows(), cols = confidence.cols();
    // strict argmax per row; -1 when the maximum is tied
    std::vector<Eigen::Index> row_arg(rows, -1);
    for (Eigen::Index i = 0; i < rows; ++i) {
        Eigen::Index arg = 0;
        double best = confidence(i, 0);
        bool tie = false;
        for (Eigen::Index j = 1; j < cols; ++j) {
            double v = confidence(i, j);
            if (v > best) {
                best = v;
                arg = j;
                tie = false;
            } else if (v == best) {
                tie = true;
            }
        }
        row_arg[i] = tie ? -1 : arg;
    }
    std::vector<Eigen::Index> col_arg(cols, -1);
    for (Eigen::Index j = 0; j < cols; ++j) {
        Eigen::Index arg = 0;
        double best = confidence(0, j);
        bool tie = false;
        for (Eigen::Index i = 1; i < rows; ++i) {
            double v = confidence(i, j);
            if (v > best) {
                best = v;
                arg = i;
                tie = false;
            } else if (v == best) {
                tie = true;
            }
        }
        col_arg[j] = tie ? -1 : arg;
    }

    CorrespondenceSet out;
    for (Eigen::Index i = 0; i < rows; ++i) {
        Eigen::Index j = row_arg[i];
        if (j >= 0 && col_arg[j] == i)
            out.pairs.push_back({static_cast<int>(i), static_cast<int>(j), confidence(i, j)});
    }
    return out;
}

CorrespondenceSet mutual_nn_from_tables(const DualSoftmaxTables& tables,
                                        const std::vector<int>& rows) {
    const Eigen::Index cols = tables.col_exp.cols();
    const Eigen::Index nrows = rows.empty() ? tables.col_exp.rows()
                                            : static_cast<Eigen::Index>(rows.size());
    if (cols == 0 || nrows == 0)
        throw ParameterError("mutual_nn_from_tables: empty matrix");
    auto row_of = [&](Eigen::Index i) {
        return rows.empty() ? i : static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)]);
    };

    // column sums of the subset, accumulated in row order
    Eigen::RowVectorXd col_sum = Eigen::RowVectorXd::Zero(cols);
    for (Eigen::Index i = 0; i < nrows; ++i) col_sum += tables.col_exp.row(row_of(i));

    // single streaming pass: per-row argmax plus running per-column argmax,
    // with the same strict-tie semantics as mutual_nn_matches
    std::vector<Eigen::Index> row_arg(static_cast<std::size_t>(nrows), -1);
    std::vector<double> row_best(static_cast<std::size_t>(nrows), 0.0);
    std::vector<double> col_best(static_cast<std::size_t>(cols), -1.0);
    std::vector<Eigen::Index> col_arg(static_cast<std::size_t>(cols), -1);
    std::vector<char> col_tie(static_cast<std::size_t>(cols), 0);
    Eigen::RowVectorXd v(cols);
    for (Eigen::Index i = 0; i < nrows; ++i) {
        const Eigen::Index r = row_of(i);
        v = tables.row_softmax.row(r)
                .cwiseProduct(tables.col_exp.row(r))
                .cwiseQuotient(col_sum);
        Eigen::Index arg = 0;
        double best = v[0];
        bool tie = false;
        for (Eigen::Index j = 1; j < cols; ++j) {
            double x = v[j];
            if (x > best) {
                best = x;
                arg = j;
                tie = false;
            } else if (x == best) {
                tie = true;
            }
        }
        row_arg[static_cast<std::size_t>(i)] = tie ? -1 : arg;
        row_best[static_cast<std::size_t>(i)] = best;
        for (Eigen::Index j = 0; j < cols; ++j) {
            double x = v[j];
            std::size_t js = static_cast<std::size_t>(j);
            if (x > col_best[js]) {
                col_best[js] = x;
                col_arg[js] = i;
                col_tie[js] = 0;
            } else if (x == col_best[js]) {
                col_tie[js] = 1;
            }
        }
    }

    CorrespondenceSet out;
    for (Eigen::Index i = 0; i < nrows; ++i) {
        Eigen::Index j = row_arg[static_cast<std::size_t>(i)];
        if (j >= 0 && !col_tie[static_cast<std::size_t>(j)] &&
            col_arg[static_cast<std::size_t>(j)] == i)
            out.pairs.push_back({static_cast<int>(i), static_cast<int>(j),
                                 row_best[static_cast<std::size_t>(i)]});
    }
    return out;
}

RigidTransform weighted_svd(const std::vector<Vec3>& source_points,
                            const std::vector<Vec3>& target_points,
                            const CorrespondenceSet& corr) {
    if (corr.size() < 3)
        throw DegenerateConfigurationError("weighted_svd: fewer than 3 correspondences", 0);

    double wsum = 0.0;
    Vec3 cs = Vec3::Zero(), ct = Vec3::Zero();
    for (const Correspondence& c : corr.pairs) {
        if (c.weight <= 0.0) throw ParameterError("weighted_svd: non-positive weight");
        cs += c.weight * source_points[c.source];
        ct += c.weight * target_points[c.target];
        wsum += c.weight;
    }
    cs /= wsum;
    ct /= wsum;

    Mat3 cov = Mat3::Zero();
    for (const Correspondence& c : corr.pairs)
        cov += c.weight * (target_points[c.target] - ct) *
               (source_points[c.source] - cs).transpose();

    Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::Vector3d& sv = svd.singularValues();
    // rank of the cross-covariance; rank < 2 leaves the rotation unconstrained
    double tol = std::max(sv[0], 1.0) * 1e-12;
    int rank = 0;
    for (int i = 0; i < 3; ++i)
        if (sv[i] > tol) ++rank;
    if (rank < 2)
        throw DegenerateConfigurationError("weighted_svd: rank-deficient configuration", rank);

    Mat3 u = svd.matrixU(), v = svd.matrixV();
    Mat3 d = Mat3::Identity();
    if ((u * v.transpose()).determinant() < 0.0) d(2, 2) = -1.0;

    RigidTransform t;
    t.rotation = u * d * v.transpose();
    t.translation = ct - t.rotation * cs;
    return t;
}

RegistrationResult match_and_estimate(const FeatureMatrix& xs, const FeatureMatrix& xt,
                                      const PointCloud& source, const PointCloud& target,
                                      double temperature) {
    if (xs.rows() != static_cast<int>(source.size()) ||
        xt.rows() != static_cast<int>(target.size()))
        throw ParameterError("match_and_estimate: feature/cloud row count mismatch");

    if (temperature <= 0.0) temperature = default_temperature(xs.dim());
    Eigen::MatrixXd scores = score_matrix(xs, xt);
    Eigen::MatrixXd conf = dual_softmax(scores, temperature);
    CorrespondenceSet corr = mutual_nn_matches(conf);
    RigidTransform t = weighted_svd(source.points, target.points, corr);

    RegistrationResult result;
    result.transform = t;
    result.correspondences = std::move(corr);
    CandidateDiagnostics diag;
    diag.node_index = -1;
    diag.match_count = static_cast<int>(result.correspondences.size());
    diag.transform = t;
    result.candidates.push_back(diag);
    result.selected = 0;
    result.selection_rule = "baseline";
    return result;
}

}  // namespace p2preg
