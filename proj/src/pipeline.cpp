#include "p2preg/pipeline.hpp"

#include <chrono>
#include <fstream>

#include <json.hpp>

#include "p2preg/kdtree.hpp"
#include "p2preg/rng.hpp"

namespace p2preg {

PreprocessedPair preprocess(const PointCloud& source_mm, const PointCloud& target_mm,
                            double voxel_size) {
    NormalizedPair normalized = normalize_pair(source_mm, target_mm);

    PreprocessedPair out;
    out.info = normalized.info;
    out.source = voxel_downsample(normalized.source, voxel_size);
    out.target = voxel_downsample(normalized.target, voxel_size);
    out.source.role = CloudRole::Source;
    out.target.role = CloudRole::Target;

    KdTree source_tree(normalized.source);
    out.source_origin.reserve(out.source.size());
    for (const Vec3& p : out.source.points) out.source_origin.push_back(source_tree.nearest(p));
    KdTree target_tree(normalized.target);
    out.target_origin.reserve(out.target.size());
    for (const Vec3& p : out.target.points) out.target_origin.push_back(target_tree.nearest(p));
    return out;
}

OracleFeatures oracle_features_for(const BenchmarkSample& sample,
                                   const PreprocessedPair& pair,
                                   const OracleNoiseSpec& spec) {
    if (sample.correspondence.empty())
        throw ParameterError("oracle_features_for: sample lacks a correspondence map");

    const int d = spec.feature_dim;
    const bool smooth = spec.correlation_length > 0.0;
    OracleField field;
    if (smooth) field = make_oracle_field(spec.seed, d, spec.correlation_length);

    // a raw source index always maps to the same row, whether it is looked up
    // for a source point or for a target point's ground-truth correspondent
    auto source_row = [&](int raw_source) -> Eigen::RowVectorXd {
        if (smooth)
            return field.row(pair.info.to_normalized(sample.source.points[raw_source]));
        return oracle_unit_vector(spec.seed, static_cast<uint64_t>(raw_source), d);
    };

    Eigen::MatrixXd src(static_cast<Eigen::Index>(pair.source.size()), d);
    for (std::size_t i = 0; i < pair.source.size(); ++i)
        src.row(static_cast<Eigen::Index>(i)) = source_row(pair.source_origin[i]);

    Eigen::MatrixXd tgt(static_cast<Eigen::Index>(pair.target.size()), d);
    for (std::size_t j = 0; j < pair.target.size(); ++j) {
        int raw_target = pair.target_origin[j];
        int raw_source = sample.correspondence.at(static_cast<std::size_t>(raw_target));
        Eigen::RowVectorXd row = source_row(raw_source);
        if (spec.corruption_sigma > 0.0) {
            Rng rng = Rng::derive(spec.seed ^ 0x7a65cf1d2b4e9380ULL, static_cast<uint64_t>(j));
            for (int c = 0; c < d; ++c) row[c] += spec.corruption_sigma * rng.normal();
            double norm = row.norm();
            if (norm > 0.0) row /= norm;
        }
        tgt.row(static_cast<Eigen::Index>(j)) = row;
    }
    return OracleFeatures{FeatureMatrix{std::move(src)}, FeatureMatrix{std::move(tgt)}};
}

namespace {

OracleFeatures build_features(const BenchmarkSample& sample, const PreprocessedPair& pair,
                              const DescriptorConfig& cfg) {
    if (cfg.type == "oracle") {
        double sigma = cfg.sigma + cfg.noise_sensitivity * sample.noise_level_mm;
        OracleNoiseSpec spec{cfg.dim, sigma, cfg.seed, cfg.correlation};
        return oracle_features_for(sample, pair, spec);
    }
    if (cfg.type == "fpfh") {
        PointCloud src = estimate_normals(pair.source, cfg.normal_k);
        PointCloud tgt = estimate_normals(pair.target, cfg.normal_k);
        int dim = cfg.dim - cfg.dim % 3;
        if (dim < 3) dim = 33;
        return OracleFeatures{compute_local_descriptor(src, cfg.radius, dim),
                              compute_local_descriptor(tgt, cfg.radius, dim)};
    }
    throw ParameterError("unknown descriptor type: " + cfg.type);
}

}  // namespace

RunResult run_method(const BenchmarkSample& sample, const MethodConfig& method,
                     double voxel_size) {
    RunResult result;
    auto start = std::chrono::steady_clock::now();
    try {
        PreprocessedPair pair = preprocess(sample.source, sample.target, voxel_size);
        result.source_points = static_cast<int>(pair.source.size());
        result.target_points = static_cast<int>(pair.target.size());

        if (method.type == "icp") {
            RigidTransform init;
            if (method.icp_init_ground_truth)
                init = pair.info.transform_to_normalized(sample.ground_truth);
            IcpResult icp_result = icp(pair.source, pair.target, init, method.icp);
            result.transform_normalized = icp_result.transform;
        } else {
            OracleFeatures features = build_features(sample, pair, method.descriptor);
            if (method.type == "baseline") {
                result.registration =
                    match_and_estimate(features.source, features.target, pair.source,
                                       pair.target, method.temperature);
                result.transform_normalized = result.registration.transform;
            } else if (method.type == "p2p") {
                P2PConfig cfg = method.p2p;
                if (cfg.temperature <= 0.0) cfg.temperature = method.temperature;
                result.registration = p2p_register(pair.source, pair.target, features.source,
                                                   features.target, cfg);
                result.transform_normalized = result.registration.transform;
            } else if (method.type == "ransac") {
                double temperature = method.temperature > 0.0
                                         ? method.temperature
                                         : default_temperature(features.source.dim());
                Eigen::MatrixXd conf = dual_softmax(
                    score_matrix(features.source, features.target), temperature);
                CorrespondenceSet corr = mutual_nn_matches(conf);
                result.transform_normalized =
                    ransac_registration(corr, pair.source, pair.target, method.ransac)
                        .transform;
            } else {
                throw ParameterError("unknown method type: " + method.type);
            }
        }
        result.transform_mm = pair.info.transform_to_mm(result.transform_normalized);
    } catch (const DegenerateConfigurationError& e) {
        result.failed = true;
        result.error = e.what();
    } catch (const IcpStallError& e) {
        result.failed = true;
        result.error = e.what();
    } catch (const StateError& e) {
        result.failed = true;
        result.error = e.what();
    }
    result.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

namespace {

nlohmann::json transform_to_json(const RigidTransform& t) {
    nlohmann::json rows = nlohmann::json::array();
    for (int r = 0; r < 3; ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (int c = 0; c < 3; ++c) row.push_back(t.rotation(r, c));
        row.push_back(t.translation[r]);
        rows.push_back(row);
    }
    return rows;
}

RigidTransform transform_from_json(const nlohmann::json& rows) {
    RigidTransform t;
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) t.rotation(r, c) = rows[r][c].get<double>();
        t.translation[r] = rows[r][3].get<double>();
    }
    return t;
}

}  // namespace

void write_result_json(const std::string& path, const std::string& sample_id,
                       const std::string& method_name, const RunResult& result) {
    nlohmann::json j{{"sample", sample_id},
                     {"method", method_name},
                     {"failed", result.failed},
                     {"wall_time_s", result.wall_time_s},
                     {"source_points", result.source_points},
                     {"target_points", result.target_points}};
    if (result.failed) {
        j["error"] = result.error;
    } else {
        j["transform_mm"] = transform_to_json(result.transform_mm);
        j["transform_normalized"] = transform_to_json(result.transform_normalized);
    }
    if (!result.registration.candidates.empty()) {
        nlohmann::json candidates = nlohmann::json::array();
        for (const CandidateDiagnostics& c : result.registration.candidates) {
            nlohmann::json cj{{"node", c.node_index},
                              {"failed", c.failed},
                              {"matches", c.match_count}};
            if (!c.failed && std::isfinite(c.selection_score))
                cj["selection_score"] = c.selection_score;
            candidates.push_back(cj);
        }
        j["diagnostics"] = {{"candidates", candidates},
                            {"selected", result.registration.selected},
                            {"selection_rule", result.registration.selection_rule}};
    }
    std::ofstream out(path);
    if (!out) throw ParameterError("write_result_json: cannot open " + path);
    out << j.dump(2) << "\n";
}

LoadedResult read_result_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParameterError("read_result_json: cannot open " + path);
    nlohmann::json j;
    in >> j;
    LoadedResult r;
    r.sample_id = j.at("sample").get<std::string>();
    r.method = j.at("method").get<std::string>();
    r.failed = j.at("failed").get<bool>();
    r.wall_time_s = j.at("wall_time_s").get<double>();
    if (!r.failed) r.transform_mm = transform_from_json(j.at("transform_mm"));
    return r;
}

}  // namespace p2preg
