#include "p2preg/features.hpp"

#include <cmath>
#include <fstream>

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "p2preg/kdtree.hpp"
#include "p2preg/rng.hpp"

namespace p2preg {

FeatureMatrix FeatureMatrix::from_rows(Eigen::MatrixXd m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        double norm = m.row(i).norm();
        if (norm > 0.0) {
            m.row(i) /= norm;
        } else {
            m.row(i).setConstant(1.0 / std::sqrt(static_cast<double>(m.cols())));
        }
    }
    return FeatureMatrix{std::move(m)};
}

void FeatureMatrix::validate() const {
    if (!values.allFinite()) throw ParameterError("FeatureMatrix: non-finite value");
    for (Eigen::Index i = 0; i < values.rows(); ++i)
        if (std::abs(values.row(i).norm() - 1.0) > 1e-6)
            throw ParameterError("FeatureMatrix: row not unit norm");
}

FeatureMatrix FeatureMatrix::slice(const std::vector<int>& indices) const {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(indices.size()), values.cols());
    for (std::size_t i = 0; i < indices.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) = values.row(indices[i]);
    return FeatureMatrix{std::move(out)};
}

void save_features(const std::string& path, const FeatureMatrix& f) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParameterError("save_features: cannot open " + path);
    nlohmann::json header{{"rows", f.rows()}, {"dim", f.dim()}, {"layout", "row-major"}};
    out << header.dump() << "\n";
    for (int i = 0; i < f.rows(); ++i) {
        Eigen::RowVectorXd row = f.values.row(i);
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(sizeof(double)) * f.dim());
    }
}

FeatureMatrix load_features(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParameterError("load_features: cannot open " + path);
    std::string line;
    std::getline(in, line);
    nlohmann::json header = nlohmann::json::parse(line);
    int rows = header.at("rows").get<int>();
    int dim = header.at("dim").get<int>();
    Eigen::MatrixXd m(rows, dim);
    std::vector<double> row(dim);
    for (int i = 0; i < rows; ++i) {
        in.read(reinterpret_cast<char*>(row.data()),
                static_cast<std::streamsize>(sizeof(double)) * dim);
        if (!in) throw ParameterError("load_features: truncated file " + path);
        for (int j = 0; j < dim; ++j) m(i, j) = row[j];
    }
    return FeatureMatrix{std::move(m)};
}

PointCloud estimate_normals(const PointCloud& cloud, int k, std::vector<int>* degenerate) {
    if (k < 3) throw ParameterError("estimate_normals: k must be >= 3");
    if (cloud.size() < static_cast<std::size_t>(k))
        throw ParameterError("estimate_normals: cloud smaller than k");

    KdTree tree(cloud);
    PointCloud out = cloud;
    out.normals.assign(cloud.size(), Vec3(0, 0, 1));
    if (degenerate) degenerate->clear();

    std::vector<int> idx;
    std::vector<double> dist;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        tree.knn(cloud.points[i], k, idx, dist);
        Vec3 mean = Vec3::Zero();
        for (int j : idx) mean += cloud.points[j];
        mean /= k;
        Mat3 cov = Mat3::Zero();
        for (int j : idx) {
            Vec3 d = cloud.points[j] - mean;
            cov += d * d.transpose();
        }
        Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
        // rank < 2 when the two smallest eigenvalues both vanish
        double scale = eig.eigenvalues()[2];
        if (scale <= 0.0 || eig.eigenvalues()[1] <= 1e-12 * scale) {
            if (degenerate) degenerate->push_back(static_cast<int>(i));
            continue;  // fallback +z already set
        }
        Vec3 n = eig.eigenvectors().col(0);
        // orient away from the local centroid
        if (n.dot(cloud.points[i] - mean) < 0.0) n = -n;
        out.normals[i] = n;
    }
    return out;
}

FeatureMatrix compute_local_descriptor(const PointCloud& cloud, double radius, int dim,
                                       std::vector<int>* isolated) {
    if (!cloud.has_normals())
        throw ParameterError("compute_local_descriptor: cloud has no normals");
    if (!(radius > 0.0)) throw ParameterError("compute_local_descriptor: radius must be > 0");
    if (dim < 3 || dim % 3 != 0)
        throw ParameterError("compute_local_descriptor: dim must be a positive multiple of 3");

    const int bins = dim / 3;
    KdTree tree(cloud);
    Eigen::MatrixXd values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cloud.size()), dim);
    if (isolated) isolated->clear();

    auto bin_of = [bins](double v, double lo, double hi) {
        int b = static_cast<int>((v - lo) / (hi - lo) * bins);
        return std::clamp(b, 0, bins - 1);
    };

    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Vec3& p = cloud.points[i];
        const Vec3& np = cloud.normals[i];
        std::vector<int> nbrs = tree.radius_search(p, radius);
        int used = 0;
        for (int j : nbrs) {
            if (static_cast<std::size_t>(j) == i) continue;
            Vec3 d = cloud.points[j] - p;
            double len = d.norm();
            if (len <= 0.0) continue;
            d /= len;
            // Darboux frame at p
            Vec3 u = np;
            Vec3 v = d.cross(u);
            double vlen = v.norm();
            if (vlen <= 1e-12) continue;  // neighbor along the normal axis
            v /= vlen;
            Vec3 w = u.cross(v);
            const Vec3& nq = cloud.normals[j];
            double alpha = v.dot(nq);                    // [-1, 1]
            double phi = u.dot(d);                       // [-1, 1]
            double theta = std::atan2(w.dot(nq), u.dot(nq));  // [-pi, pi]
            values(static_cast<Eigen::Index>(i), bin_of(alpha, -1.0, 1.0)) += 1.0;
            values(static_cast<Eigen::Index>(i), bins + bin_of(phi, -1.0, 1.0)) += 1.0;
            values(static_cast<Eigen::Index>(i), 2 * bins + bin_of(theta, -M_PI, M_PI)) += 1.0;
            ++used;
        }
        if (used == 0) {
            values.row(static_cast<Eigen::Index>(i)).setOnes();
            if (isolated) isolated->push_back(static_cast<int>(i));
        }
    }
    return FeatureMatrix::from_rows(std::move(values));
}

Eigen::RowVectorXd oracle_unit_vector(uint64_t seed, uint64_t index, int dim) {
    Rng rng = Rng::derive(seed, index);
    Eigen::RowVectorXd v(dim);
    for (int j = 0; j < dim; ++j) v[j] = rng.normal();
    double norm = v.norm();
    if (norm > 0.0) v /= norm;
    else v.setConstant(1.0 / std::sqrt(static_cast<double>(dim)));
    return v;
}

Eigen::RowVectorXd OracleField::row(const Vec3& position) const {
    Eigen::RowVectorXd v = (frequencies * position + phases).array().cos();
    double norm = v.norm();
    if (norm > 0.0) v /= norm;
    else v.setConstant(1.0 / std::sqrt(static_cast<double>(v.size())));
    return v;
}

OracleField make_oracle_field(uint64_t seed, int dim, double correlation_length) {
    if (dim < 1) throw ParameterError("make_oracle_field: dim must be >= 1");
    if (!(correlation_length > 0.0))
        throw ParameterError("make_oracle_field: correlation_length must be > 0");
    Rng rng = Rng::derive(seed, 0x0f1e2d3c4b5a6978ULL);
    OracleField field;
    field.frequencies.resize(dim, 3);
    field.phases.resize(dim);
    for (int c = 0; c < dim; ++c) {
        for (int a = 0; a < 3; ++a)
            field.frequencies(c, a) = rng.normal() / correlation_length;
        field.phases[c] = rng.uniform(0.0, 2.0 * M_PI);
    }
    return field;
}

OracleFeatures oracle_descriptor(int source_count, const std::vector<int>& target_to_source,
                                 const OracleNoiseSpec& spec) {
    if (source_count < 1) throw ParameterError("oracle_descriptor: empty source");
    if (target_to_source.empty())
        throw ParameterError("oracle_descriptor: missing ground-truth correspondence map");
    if (spec.corruption_sigma < 0.0)
        throw ParameterError("oracle_descriptor: corruption_sigma must be >= 0");
    for (int s : target_to_source)
        if (s < 0 || s >= source_count)
            throw ParameterError("oracle_descriptor: correspondence index out of range");

    const int d = spec.feature_dim;
    Eigen::MatrixXd src(source_count, d);
    for (int i = 0; i < source_count; ++i)
        src.row(i) = oracle_unit_vector(spec.seed, static_cast<uint64_t>(i), d);
    FeatureMatrix source{std::move(src)};

    Eigen::MatrixXd tgt(static_cast<Eigen::Index>(target_to_source.size()), d);
    for (std::size_t t = 0; t < target_to_source.size(); ++t) {
        Rng rng = Rng::derive(spec.seed ^ 0x7a65cf1d2b4e9380ULL, static_cast<uint64_t>(t));
        Eigen::RowVectorXd row = source.values.row(target_to_source[t]);
        if (spec.corruption_sigma > 0.0)
            for (int j = 0; j < d; ++j) row[j] += spec.corruption_sigma * rng.normal();
        tgt.row(static_cast<Eigen::Index>(t)) = row;
    }
    // sigma 0 keeps target rows bit-equal to their source rows
    FeatureMatrix target = spec.corruption_sigma > 0.0
                               ? FeatureMatrix::from_rows(std::move(tgt))
                               : FeatureMatrix{std::move(tgt)};
    return OracleFeatures{std::move(source), std::move(target)};
}

}  // namespace p2preg
