#include "p2preg/benchgen.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>

#include <json.hpp>

#include "p2preg/io.hpp"
#include "p2preg/kdtree.hpp"
#include "p2preg/matching.hpp"
#include "p2preg/rng.hpp"

namespace fs = std::filesystem;

namespace p2preg {

namespace {

// ---------------------------------------------------------------------------
// icosphere
// ---------------------------------------------------------------------------

struct IcoMesh {
    std::vector<Vec3> vertices;  // unit directions
    std::vector<std::array<int, 3>> triangles;
};

IcoMesh icosahedron() {
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    IcoMesh m;
    m.vertices = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0},
                  {0, -1, t}, {0, 1, t}, {0, -1, -t}, {0, 1, -t},
                  {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    for (Vec3& v : m.vertices) v.normalize();
    m.triangles = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                   {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                   {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                   {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
    return m;
}

IcoMesh subdivide(const IcoMesh& in) {
    IcoMesh out;
    out.vertices = in.vertices;
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
        auto key = std::minmax(a, b);
        auto it = midpoint.find(key);
        if (it != midpoint.end()) return it->second;
        Vec3 v = (out.vertices[a] + out.vertices[b]).normalized();
        int idx = static_cast<int>(out.vertices.size());
        out.vertices.push_back(v);
        midpoint.emplace(key, idx);
        return idx;
    };
    for (const auto& tri : in.triangles) {
        int a = mid(tri[0], tri[1]), b = mid(tri[1], tri[2]), c = mid(tri[2], tri[0]);
        out.triangles.push_back({tri[0], a, c});
        out.triangles.push_back({tri[1], b, a});
        out.triangles.push_back({tri[2], c, b});
        out.triangles.push_back({a, b, c});
    }
    return out;
}

IcoMesh icosphere(int subdivisions) {
    IcoMesh m = icosahedron();
    for (int i = 0; i < subdivisions; ++i) m = subdivide(m);
    return m;
}

// ---------------------------------------------------------------------------
// low-order real spherical harmonics (unnormalized polynomial forms; the
// coefficient vector is rescaled afterwards, so normalization is irrelevant)
// ---------------------------------------------------------------------------

constexpr int kHarmonics = 12;  // l = 2 (5 terms) and l = 3 (7 terms)

double harmonic(int idx, const Vec3& u) {
    const double x = u.x(), y = u.y(), z = u.z();
    switch (idx) {
        case 0: return x * y;
        case 1: return y * z;
        case 2: return z * x;
        case 3: return x * x - y * y;
        case 4: return 3.0 * z * z - 1.0;
        case 5: return (3.0 * x * x - y * y) * y;
        case 6: return x * y * z;
        case 7: return y * (4.0 * z * z - x * x - y * y);
        case 8: return z * (2.0 * z * z - 3.0 * x * x - 3.0 * y * y);
        case 9: return x * (4.0 * z * z - x * x - y * y);
        case 10: return z * (x * x - y * y);
        case 11: return x * (x * x - 3.0 * y * y);
        default: return 0.0;
    }
}

struct BlobShape {
    Vec3 semi_axes;                         // mm
    std::array<double, kHarmonics> coeffs;  // radial perturbation

    double radial(const Vec3& u) const {
        double r = 1.0;
        for (int i = 0; i < kHarmonics; ++i) r += coeffs[i] * harmonic(i, u);
        return r;
    }

    bool contains(const Vec3& p, double margin) const {
        Vec3 v = p.cwiseQuotient(semi_axes);
        double len = v.norm();
        if (len <= 0.0) return true;
        return len < margin * radial(v / len);
    }
};

BlobShape draw_blob(uint64_t seed) {
    BlobShape blob;
    Rng axes_rng = Rng::derive(seed, 1);
    for (int a = 0; a < 3; ++a) blob.semi_axes[a] = axes_rng.uniform(60.0, 100.0);

    Rng coeff_rng = Rng::derive(seed, 2);
    double raw_max = 0.0;
    for (double& c : blob.coeffs) c = coeff_rng.uniform(-1.0, 1.0);
    // rescale so the largest radial deviation hits the drawn amplitude
    IcoMesh probe = icosphere(2);
    for (const Vec3& u : probe.vertices) {
        double dev = 0.0;
        for (int i = 0; i < kHarmonics; ++i) dev += blob.coeffs[i] * harmonic(i, u);
        raw_max = std::max(raw_max, std::abs(dev));
    }
    double amplitude = coeff_rng.uniform(0.10, 0.22);
    if (raw_max > 0.0)
        for (double& c : blob.coeffs) c *= amplitude / raw_max;
    return blob;
}

void write_fiducials_csv(const std::string& path, const std::vector<Vec3>& fiducials) {
    std::ofstream out(path);
    if (!out) throw ParameterError("cannot open " + path);
    out << "x,y,z\n";
    char buf[256];
    for (const Vec3& f : fiducials) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", f.x(), f.y(), f.z());
        out << buf;
    }
}

std::vector<Vec3> read_fiducials_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParameterError("cannot open " + path);
    std::vector<Vec3> out;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        double x, y, z;
        if (std::sscanf(line.c_str(), "%lg,%lg,%lg", &x, &y, &z) == 3)
            out.emplace_back(x, y, z);
    }
    return out;
}

}  // namespace

SyntheticMesh generate_shape(uint64_t seed) {
    BlobShape blob = draw_blob(seed);
    IcoMesh base = icosphere(4);  // 2562 vertices, 5120 faces

    SyntheticMesh mesh;
    mesh.triangles = base.triangles;
    mesh.vertices.reserve(base.vertices.size());
    for (const Vec3& u : base.vertices)
        mesh.vertices.push_back(blob.semi_axes.cwiseProduct(u) * blob.radial(u));

    Rng fid_rng = Rng::derive(seed, 3);
    const int fiducial_count = 120;
    mesh.fiducials.reserve(fiducial_count);
    while (static_cast<int>(mesh.fiducials.size()) < fiducial_count) {
        Vec3 v(fid_rng.uniform(-1.3, 1.3), fid_rng.uniform(-1.3, 1.3),
               fid_rng.uniform(-1.3, 1.3));
        Vec3 p = blob.semi_axes.cwiseProduct(v);
        if (blob.contains(p, 0.9)) mesh.fiducials.push_back(p);
    }
    return mesh;
}

SyntheticMesh apply_scaling_augmentation(const SyntheticMesh& mesh, uint64_t seed) {
    Rng rng = Rng::derive(seed, 4);
    Vec3 factors(rng.uniform(0.5, 1.0), rng.uniform(0.5, 1.0), rng.uniform(0.5, 1.0));
    SyntheticMesh out = mesh;
    for (Vec3& v : out.vertices) v = v.cwiseProduct(factors);
    for (Vec3& f : out.fiducials) f = f.cwiseProduct(factors);
    return out;
}

Vec3 DisplacementField::evaluate(const Vec3& x) const {
    Vec3 u = Vec3::Zero();
    double inv = 1.0 / (2.0 * sigma * sigma);
    for (std::size_t c = 0; c < centers.size(); ++c)
        u += weights[c] * std::exp(-(x - centers[c]).squaredNorm() * inv);
    return u;
}

double DisplacementField::gradient_bound() const {
    // |grad of a Gaussian bump| peaks at distance sigma with value e^{-1/2}/sigma
    double sum = 0.0;
    for (const Vec3& w : weights) sum += w.norm();
    return sum * std::exp(-0.5) / sigma;
}

SyntheticMesh deform(const SyntheticMesh& mesh, const DeformationSpec& spec,
                     DisplacementField* field_out) {
    if (spec.control_points < 1) throw ParameterError("deform: control_points must be >= 1");
    if (!(spec.kernel_width_mm > 0.0)) throw ParameterError("deform: kernel width must be > 0");
    if (spec.amplitude_mm < 0.0) throw ParameterError("deform: amplitude must be >= 0");

    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (const Vec3& v : mesh.vertices) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }

    DisplacementField field;
    field.sigma = spec.kernel_width_mm;
    Rng rng = Rng::derive(spec.seed, 5);
    for (int c = 0; c < spec.control_points; ++c) {
        field.centers.emplace_back(rng.uniform(lo.x(), hi.x()), rng.uniform(lo.y(), hi.y()),
                                   rng.uniform(lo.z(), hi.z()));
        Vec3 w;
        do {
            w = Vec3(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
        } while (w.squaredNorm() > 1.0);
        field.weights.push_back(w * spec.amplitude_mm);
    }
    if (field.gradient_bound() >= 1.0)
        throw ParameterError(
            "deform: displacement gradient bound >= 1 (field may fold); resample with a "
            "smaller amplitude or wider kernel");

    SyntheticMesh out = mesh;
    for (Vec3& v : out.vertices) v += field.evaluate(v);
    for (Vec3& f : out.fiducials) f += field.evaluate(f);
    if (field_out) *field_out = std::move(field);
    return out;
}

RigidRemovalResult remove_rigid_component(const std::vector<Vec3>& undeformed_fiducials,
                                          const SyntheticMesh& deformed) {
    if (undeformed_fiducials.size() != deformed.fiducials.size())
        throw ParameterError("remove_rigid_component: fiducial count mismatch");
    if (undeformed_fiducials.size() < 3)
        throw ParameterError("remove_rigid_component: need at least 3 fiducials");

    CorrespondenceSet corr;
    for (int i = 0; i < static_cast<int>(undeformed_fiducials.size()); ++i)
        corr.pairs.push_back({i, i, 1.0});
    // aligns deformed fiducials onto the undeformed ones
    RigidTransform t = weighted_svd(deformed.fiducials, undeformed_fiducials, corr);

    RigidRemovalResult result;
    result.removed = t;
    result.mesh = deformed;
    for (Vec3& v : result.mesh.vertices) v = t.apply(v);
    for (Vec3& f : result.mesh.fiducials) f = t.apply(f);

    double sum = 0.0;
    for (std::size_t i = 0; i < undeformed_fiducials.size(); ++i)
        sum += (result.mesh.fiducials[i] - undeformed_fiducials[i]).squaredNorm();
    result.residual_rms = std::sqrt(sum / static_cast<double>(undeformed_fiducials.size()));
    return result;
}

CropResult crop_visibility(const PointCloud& surface, double ratio, uint64_t seed) {
    if (!(ratio > 0.0) || ratio > 1.0)
        throw ParameterError("crop_visibility: ratio must be in (0, 1]");
    int n = static_cast<int>(surface.size());
    int m = static_cast<int>(std::ceil(ratio * n));
    m = std::min(std::max(m, 1), n);

    CropResult out;
    if (m == n) {
        out.source_indices.resize(n);
        std::iota(out.source_indices.begin(), out.source_indices.end(), 0);
    } else {
        int seed_point = static_cast<int>(Rng::derive(seed, 6).uniform_index(n));
        KdTree tree(surface);
        std::vector<double> dist;
        tree.knn(surface.points[seed_point], m, out.source_indices, dist);
    }
    out.target.role = CloudRole::Target;
    out.target.points.reserve(m);
    for (int i : out.source_indices) out.target.points.push_back(surface.points[i]);
    out.achieved_ratio = static_cast<double>(m) / static_cast<double>(n);
    return out;
}

RigidTransform random_rigid(uint64_t seed) {
    Rng rng = Rng::derive(seed, 7);
    double ax = rng.uniform(0.0, 2.0 * M_PI);
    double ay = rng.uniform(0.0, 2.0 * M_PI);
    double az = rng.uniform(0.0, 2.0 * M_PI);
    RigidTransform t;
    t.rotation = (Eigen::AngleAxisd(ax, Vec3::UnitX()) * Eigen::AngleAxisd(ay, Vec3::UnitY()) *
                  Eigen::AngleAxisd(az, Vec3::UnitZ()))
                     .toRotationMatrix();
    for (int a = 0; a < 3; ++a) t.translation[a] = rng.uniform(-100.0, 100.0);
    return t;
}

PointCloud add_noise(const PointCloud& cloud, double level_mm, uint64_t seed) {
    if (level_mm < 0.0) throw ParameterError("add_noise: level must be >= 0");
    PointCloud out = cloud;
    if (level_mm == 0.0) return out;
    Rng rng = Rng::derive(seed, 8);
    for (Vec3& p : out.points)
        for (int a = 0; a < 3; ++a) p[a] += rng.uniform(-0.5, 0.5) * level_mm;
    return out;
}

BenchmarkSample build_sample(const SampleSpec& spec) {
    SyntheticMesh base = generate_shape(spec.shape_seed);
    SyntheticMesh scaled = apply_scaling_augmentation(base, spec.scale_seed);
    SyntheticMesh deformed = deform(scaled, spec.deformation);
    RigidRemovalResult aligned = remove_rigid_component(scaled.fiducials, deformed);

    CropResult crop = crop_visibility(aligned.mesh.surface_cloud(CloudRole::Target),
                                      spec.visibility_ratio, spec.crop_seed);
    PointCloud noised = add_noise(crop.target, spec.noise_level_mm,
                                  spec.crop_seed ^ 0x9e3779b97f4a7c15ULL);
    RigidTransform rigid = random_rigid(spec.rigid_seed);

    BenchmarkSample sample;
    sample.spec = spec;
    sample.source = scaled.surface_cloud(CloudRole::Source);
    sample.source_fiducials = scaled.fiducials;
    sample.target = apply_transform(noised, rigid);
    sample.target.role = CloudRole::Target;
    sample.target_fiducials.reserve(aligned.mesh.fiducials.size());
    for (const Vec3& f : aligned.mesh.fiducials)
        sample.target_fiducials.push_back(rigid.apply(f));
    sample.ground_truth = rigid;
    sample.correspondence = crop.source_indices;
    sample.visibility_ratio = crop.achieved_ratio;
    sample.deformation_rms = aligned.residual_rms;
    sample.noise_level_mm = spec.noise_level_mm;
    return sample;
}

namespace {

nlohmann::json spec_to_json(const SampleSpec& spec) {
    return {{"id", spec.id},
            {"shape_seed", spec.shape_seed},
            {"scale_seed", spec.scale_seed},
            {"deformation",
             {{"control_points", spec.deformation.control_points},
              {"kernel_width_mm", spec.deformation.kernel_width_mm},
              {"amplitude_mm", spec.deformation.amplitude_mm},
              {"seed", spec.deformation.seed}}},
            {"visibility_ratio", spec.visibility_ratio},
            {"noise_level_mm", spec.noise_level_mm},
            {"crop_seed", spec.crop_seed},
            {"rigid_seed", spec.rigid_seed}};
}

SampleSpec spec_from_json(const nlohmann::json& j) {
    SampleSpec spec;
    spec.id = j.at("id").get<std::string>();
    spec.shape_seed = j.at("shape_seed").get<uint64_t>();
    spec.scale_seed = j.at("scale_seed").get<uint64_t>();
    const auto& d = j.at("deformation");
    spec.deformation.control_points = d.at("control_points").get<int>();
    spec.deformation.kernel_width_mm = d.at("kernel_width_mm").get<double>();
    spec.deformation.amplitude_mm = d.at("amplitude_mm").get<double>();
    spec.deformation.seed = d.at("seed").get<uint64_t>();
    spec.visibility_ratio = j.at("visibility_ratio").get<double>();
    spec.noise_level_mm = j.at("noise_level_mm").get<double>();
    spec.crop_seed = j.at("crop_seed").get<uint64_t>();
    spec.rigid_seed = j.at("rigid_seed").get<uint64_t>();
    return spec;
}

}  // namespace

void save_sample(const BenchmarkSample& sample, const std::string& dir) {
    fs::create_directories(dir);
    write_ply(dir + "/source.ply", sample.source);
    write_ply(dir + "/target.ply", sample.target);
    write_fiducials_csv(dir + "/source_fiducials.csv", sample.source_fiducials);
    write_fiducials_csv(dir + "/target_fiducials.csv", sample.target_fiducials);
    write_transform_json(dir + "/gt_transform.json", sample.ground_truth);

    std::ofstream corr(dir + "/correspondence.csv");
    corr << "source_index\n";
    for (int i : sample.correspondence) corr << i << "\n";

    nlohmann::json manifest{{"spec", spec_to_json(sample.spec)},
                            {"visibility_ratio", sample.visibility_ratio},
                            {"deformation_rms_mm", sample.deformation_rms},
                            {"noise_level_mm", sample.noise_level_mm},
                            {"source_points", sample.source.size()},
                            {"target_points", sample.target.size()}};
    std::ofstream meta(dir + "/sample.json");
    meta << manifest.dump(2) << "\n";
}

BenchmarkSample load_sample(const std::string& dir) {
    BenchmarkSample sample;
    sample.source = read_ply(dir + "/source.ply");
    sample.source.role = CloudRole::Source;
    sample.target = read_ply(dir + "/target.ply");
    sample.target.role = CloudRole::Target;
    sample.source_fiducials = read_fiducials_csv(dir + "/source_fiducials.csv");
    sample.target_fiducials = read_fiducials_csv(dir + "/target_fiducials.csv");
    sample.ground_truth = read_transform_json(dir + "/gt_transform.json");

    std::ifstream corr(dir + "/correspondence.csv");
    if (!corr) throw ParameterError("load_sample: missing correspondence.csv in " + dir);
    std::string line;
    std::getline(corr, line);
    while (std::getline(corr, line))
        if (!line.empty()) sample.correspondence.push_back(std::stoi(line));

    std::ifstream meta(dir + "/sample.json");
    if (!meta) throw ParameterError("load_sample: missing sample.json in " + dir);
    nlohmann::json j;
    meta >> j;
    sample.spec = spec_from_json(j.at("spec"));
    sample.visibility_ratio = j.at("visibility_ratio").get<double>();
    sample.deformation_rms = j.at("deformation_rms_mm").get<double>();
    sample.noise_level_mm = j.at("noise_level_mm").get<double>();
    return sample;
}

SampleSpec read_sample_spec(const std::string& json_path) {
    std::ifstream in(json_path);
    if (!in) throw ParameterError("read_sample_spec: cannot open " + json_path);
    nlohmann::json j;
    in >> j;
    return spec_from_json(j.contains("spec") ? j.at("spec") : j);
}

}  // namespace p2preg
