#include "p2preg/io.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include <json.hpp>

namespace p2preg {

namespace {

struct PlyProperty {
    std::string name;
    std::string type;
    bool is_list = false;
};

int scalar_size(const std::string& type) {
    if (type == "char" || type == "uchar" || type == "int8" || type == "uint8") return 1;
    if (type == "short" || type == "ushort" || type == "int16" || type == "uint16") return 2;
    if (type == "int" || type == "uint" || type == "int32" || type == "uint32" ||
        type == "float" || type == "float32")
        return 4;
    if (type == "double" || type == "float64") return 8;
    throw ParameterError("PLY: unsupported property type '" + type + "'");
}

double read_binary_scalar(std::istream& in, const std::string& type) {
    char buf[8];
    int n = scalar_size(type);
    in.read(buf, n);
    if (type == "float" || type == "float32") {
        float v;
        std::memcpy(&v, buf, 4);
        return v;
    }
    if (type == "double" || type == "float64") {
        double v;
        std::memcpy(&v, buf, 8);
        return v;
    }
    // integer types; sign does not matter for skipped fields
    int64_t v = 0;
    std::memcpy(&v, buf, n);
    return static_cast<double>(v);
}

}  // namespace

PointCloud read_ply(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParameterError("read_ply: cannot open " + path);

    std::string line;
    std::getline(in, line);
    if (line.rfind("ply", 0) != 0) throw ParameterError("read_ply: not a PLY file: " + path);

    PlyFormat format = PlyFormat::Ascii;
    struct Element {
        std::string name;
        long count = 0;
        std::vector<PlyProperty> props;
    };
    std::vector<Element> elements;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        if (tok == "comment" || tok.empty()) continue;
        if (tok == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt == "ascii") format = PlyFormat::Ascii;
            else if (fmt == "binary_little_endian") format = PlyFormat::BinaryLittleEndian;
            else throw ParameterError("read_ply: unsupported format " + fmt);
        } else if (tok == "element") {
            Element e;
            ls >> e.name >> e.count;
            elements.push_back(e);
        } else if (tok == "property") {
            if (elements.empty()) throw ParameterError("read_ply: property before element");
            PlyProperty p;
            ls >> p.type;
            if (p.type == "list") {
                p.is_list = true;
                std::string count_type, value_type;
                ls >> count_type >> value_type >> p.name;
                p.type = count_type + ":" + value_type;
            } else {
                ls >> p.name;
            }
            elements.back().props.push_back(p);
        } else if (tok == "end_header") {
            break;
        }
    }

    PointCloud cloud;
    for (const Element& elem : elements) {
        if (elem.name != "vertex") {
            if (format == PlyFormat::Ascii) {
                for (long i = 0; i < elem.count; ++i) std::getline(in, line);
                continue;
            }
            // binary: only fixed-size elements can be skipped
            bool fixed = true;
            long row = 0;
            for (const PlyProperty& p : elem.props) {
                if (p.is_list) fixed = false;
                else row += scalar_size(p.type);
            }
            if (!fixed) break;  // lists (e.g. faces) end what we can parse
            in.seekg(row * elem.count, std::ios::cur);
            continue;
        }

        int ix = -1, iy = -1, iz = -1, inx = -1, iny = -1, inz = -1;
        for (std::size_t i = 0; i < elem.props.size(); ++i) {
            const std::string& n = elem.props[i].name;
            int idx = static_cast<int>(i);
            if (n == "x") ix = idx;
            else if (n == "y") iy = idx;
            else if (n == "z") iz = idx;
            else if (n == "nx") inx = idx;
            else if (n == "ny") iny = idx;
            else if (n == "nz") inz = idx;
        }
        if (ix < 0 || iy < 0 || iz < 0)
            throw ParameterError("read_ply: vertex element lacks x/y/z");
        bool with_normals = inx >= 0 && iny >= 0 && inz >= 0;

        cloud.points.reserve(elem.count);
        std::vector<double> row(elem.props.size());
        for (long v = 0; v < elem.count; ++v) {
            if (format == PlyFormat::Ascii) {
                std::getline(in, line);
                std::istringstream ls(line);
                for (double& val : row) ls >> val;
            } else {
                for (std::size_t i = 0; i < elem.props.size(); ++i)
                    row[i] = read_binary_scalar(in, elem.props[i].type);
            }
            cloud.points.emplace_back(row[ix], row[iy], row[iz]);
            if (with_normals) cloud.normals.emplace_back(row[inx], row[iny], row[inz]);
        }
    }
    if (!in && cloud.points.empty()) throw ParameterError("read_ply: truncated file " + path);
    return cloud;
}

void write_ply(const std::string& path, const PointCloud& cloud, PlyFormat format) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParameterError("write_ply: cannot open " + path);

    bool with_normals = cloud.has_normals();
    out << "ply\nformat "
        << (format == PlyFormat::Ascii ? "ascii" : "binary_little_endian") << " 1.0\n"
        << "element vertex " << cloud.size() << "\n"
        << "property double x\nproperty double y\nproperty double z\n";
    if (with_normals)
        out << "property double nx\nproperty double ny\nproperty double nz\n";
    out << "end_header\n";

    if (format == PlyFormat::Ascii) {
        char buf[512];
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            const Vec3& p = cloud.points[i];
            if (with_normals) {
                const Vec3& n = cloud.normals[i];
                std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g %.17g %.17g %.17g\n",
                              p.x(), p.y(), p.z(), n.x(), n.y(), n.z());
            } else {
                std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", p.x(), p.y(), p.z());
            }
            out << buf;
        }
    } else {
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            std::array<double, 6> row{cloud.points[i].x(), cloud.points[i].y(),
                                      cloud.points[i].z(), 0, 0, 0};
            int n = 3;
            if (with_normals) {
                row[3] = cloud.normals[i].x();
                row[4] = cloud.normals[i].y();
                row[5] = cloud.normals[i].z();
                n = 6;
            }
            out.write(reinterpret_cast<const char*>(row.data()), n * sizeof(double));
        }
    }
}

PointCloud read_xyz(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParameterError("read_xyz: cannot open " + path);
    PointCloud cloud;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        double x, y, z;
        if (!(ls >> x >> y >> z)) continue;
        cloud.points.emplace_back(x, y, z);
        double nx, ny, nz;
        if (ls >> nx >> ny >> nz) cloud.normals.emplace_back(nx, ny, nz);
    }
    if (!cloud.normals.empty() && cloud.normals.size() != cloud.points.size())
        throw ParameterError("read_xyz: inconsistent normal columns in " + path);
    return cloud;
}

void write_xyz(const std::string& path, const PointCloud& cloud) {
    std::ofstream out(path);
    if (!out) throw ParameterError("write_xyz: cannot open " + path);
    char buf[512];
    bool with_normals = cloud.has_normals();
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Vec3& p = cloud.points[i];
        if (with_normals) {
            const Vec3& n = cloud.normals[i];
            std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g %.17g %.17g %.17g\n",
                          p.x(), p.y(), p.z(), n.x(), n.y(), n.z());
        } else {
            std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", p.x(), p.y(), p.z());
        }
        out << buf;
    }
}

PointCloud read_cloud(const std::string& path) {
    auto dot = path.rfind('.');
    std::string ext = dot == std::string::npos ? "" : path.substr(dot);
    if (ext == ".ply") return read_ply(path);
    if (ext == ".xyz") return read_xyz(path);
    throw ParameterError("read_cloud: unsupported extension on " + path);
}

RigidTransform read_transform_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParameterError("read_transform_json: cannot open " + path);
    nlohmann::json j;
    in >> j;
    const auto& m = j.at("matrix");
    if (m.size() != 3) throw ParameterError("read_transform_json: need 3 rows");
    RigidTransform t;
    for (int r = 0; r < 3; ++r) {
        if (m[r].size() != 4) throw ParameterError("read_transform_json: need 4 columns");
        for (int c = 0; c < 3; ++c) t.rotation(r, c) = m[r][c].get<double>();
        t.translation[r] = m[r][3].get<double>();
    }
    return t;
}

void write_transform_json(const std::string& path, const RigidTransform& t) {
    nlohmann::json rows = nlohmann::json::array();
    for (int r = 0; r < 3; ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (int c = 0; c < 3; ++c) row.push_back(t.rotation(r, c));
        row.push_back(t.translation[r]);
        rows.push_back(row);
    }
    std::ofstream out(path);
    if (!out) throw ParameterError("write_transform_json: cannot open " + path);
    out << nlohmann::json{{"matrix", rows}}.dump(2) << "\n";
}

}  // namespace p2preg
