#include "meshcompose/mesh.hpp"

#include "meshcompose/errors.hpp"
#include "meshcompose/geometry.hpp"
#include "meshcompose/rng.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string_view>

namespace meshcompose {

void TriangleMesh::finalize() {
    const auto n_vertices = static_cast<int>(vertices.size());
    face_areas.resize(faces.size());
    total_area = 0.0;
    for (size_t i = 0; i < faces.size(); ++i) {
        const auto& f = faces[i];
        for (int k = 0; k < 3; ++k) {
            if (f[k] < 0 || f[k] >= n_vertices) {
                throw UnsupportedFormatError("face references vertex " + std::to_string(f[k]) +
                                             " out of range");
            }
        }
        if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) {
            throw UnsupportedFormatError("face with repeated vertex indices");
        }
        face_areas[i] = triangle_area(vertices[f[0]], vertices[f[1]], vertices[f[2]]);
        total_area += face_areas[i];
    }
}

std::pair<Eigen::Vector3d, Eigen::Vector3d> TriangleMesh::bounding_box() const {
    Aabb box;
    for (const auto& v : vertices) box.expand(v);
    return {box.min, box.max};
}

double TriangleMesh::bounding_diagonal() const {
    if (vertices.empty()) return 0.0;
    const auto [lo, hi] = bounding_box();
    return (hi - lo).norm();
}

std::pair<Eigen::Vector3d, Eigen::Vector3d> PointCloud::bounding_box() const {
    Aabb box;
    for (const auto& p : points) box.expand(p);
    return {box.min, box.max};
}

double PointCloud::bounding_diagonal() const {
    if (points.empty()) return 0.0;
    const auto [lo, hi] = bounding_box();
    return (hi - lo).norm();
}

// ---------------------------------------------------------------------------
// OBJ
// ---------------------------------------------------------------------------

namespace {

int parse_obj_index(std::string_view token, size_t n_vertices) {
    // "v", "v/vt", "v//vn", "v/vt/vn"; negative indices are relative.
    const size_t slash = token.find('/');
    if (slash != std::string_view::npos) token = token.substr(0, slash);
    int idx = 0;
    try {
        idx = std::stoi(std::string(token));
    } catch (const std::exception&) {
        throw UnsupportedFormatError("bad OBJ face index '" + std::string(token) + "'");
    }
    if (idx < 0) idx = static_cast<int>(n_vertices) + idx; // -1 = last vertex
    else idx -= 1;
    return idx;
}

TriangleMesh load_obj(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FileNotFoundError("cannot open " + path);

    TriangleMesh mesh;
    std::string line;
    std::vector<int> poly;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) continue;
        if (tag == "v") {
            Eigen::Vector3d v;
            if (!(ls >> v.x() >> v.y() >> v.z())) {
                throw UnsupportedFormatError("bad OBJ vertex line: " + line);
            }
            mesh.vertices.push_back(v);
        } else if (tag == "f") {
            poly.clear();
            std::string token;
            while (ls >> token) {
                poly.push_back(parse_obj_index(token, mesh.vertices.size()));
            }
            if (poly.size() < 3) throw UnsupportedFormatError("OBJ face with < 3 vertices");
            for (size_t k = 1; k + 1 < poly.size(); ++k) { // fan triangulation
                const std::array<int, 3> tri = {poly[0], poly[k], poly[k + 1]};
                if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) continue;
                mesh.faces.push_back(tri);
            }
        }
        // vt/vn/usemtl/etc. ignored
    }
    return mesh;
}

// ---------------------------------------------------------------------------
// PLY (ascii + binary little-endian)
// ---------------------------------------------------------------------------

struct PlyProperty {
    std::string name;
    std::string type;      // scalar type, or element type for lists
    std::string count_type; // non-empty for lists
    bool is_list = false;
};

struct PlyElement {
    std::string name;
    size_t count = 0;
    std::vector<PlyProperty> properties;
};

size_t ply_type_size(const std::string& t) {
    if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
    if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
    if (t == "int" || t == "uint" || t == "int32" || t == "uint32" || t == "float" ||
        t == "float32")
        return 4;
    if (t == "double" || t == "float64") return 8;
    throw UnsupportedFormatError("unknown PLY type '" + t + "'");
}

double ply_read_binary_scalar(std::ifstream& in, const std::string& type) {
    unsigned char buf[8];
    const size_t n = ply_type_size(type);
    in.read(reinterpret_cast<char*>(buf), static_cast<std::streamsize>(n));
    if (!in) throw UnsupportedFormatError("truncated PLY payload");
    auto as = [&](auto v) {
        std::memcpy(&v, buf, sizeof(v));
        return static_cast<double>(v);
    };
    if (type == "char" || type == "int8") return as(std::int8_t{});
    if (type == "uchar" || type == "uint8") return as(std::uint8_t{});
    if (type == "short" || type == "int16") return as(std::int16_t{});
    if (type == "ushort" || type == "uint16") return as(std::uint16_t{});
    if (type == "int" || type == "int32") return as(std::int32_t{});
    if (type == "uint" || type == "uint32") return as(std::uint32_t{});
    if (type == "float" || type == "float32") return as(float{});
    return as(double{});
}

TriangleMesh load_ply(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileNotFoundError("cannot open " + path);

    std::string line;
    std::getline(in, line);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "ply") throw UnsupportedFormatError("missing 'ply' magic in " + path);

    bool binary = false;
    std::vector<PlyElement> elements;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "comment" || tag == "obj_info") continue;
        if (tag == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt == "ascii") binary = false;
            else if (fmt == "binary_little_endian") binary = true;
            else throw UnsupportedFormatError("unsupported PLY format '" + fmt + "'");
        } else if (tag == "element") {
            PlyElement el;
            ls >> el.name >> el.count;
            elements.push_back(el);
        } else if (tag == "property") {
            if (elements.empty()) throw UnsupportedFormatError("PLY property before element");
            PlyProperty prop;
            std::string t;
            ls >> t;
            if (t == "list") {
                prop.is_list = true;
                ls >> prop.count_type >> prop.type >> prop.name;
            } else {
                prop.type = t;
                ls >> prop.name;
            }
            elements.back().properties.push_back(prop);
        } else if (tag == "end_header") {
            break;
        } else {
            throw UnsupportedFormatError("unexpected PLY header line: " + line);
        }
    }

    TriangleMesh mesh;
    std::vector<double> list_values;
    for (const auto& el : elements) {
        const bool is_vertex = el.name == "vertex";
        const bool is_face = el.name == "face";
        for (size_t i = 0; i < el.count; ++i) {
            Eigen::Vector3d v = Eigen::Vector3d::Zero();
            std::istringstream ascii_ls;
            if (!binary) {
                if (!std::getline(in, line)) throw UnsupportedFormatError("truncated PLY payload");
                ascii_ls.str(line);
            }
            auto read_scalar = [&](const std::string& type) -> double {
                if (binary) return ply_read_binary_scalar(in, type);
                double d = 0.0;
                if (!(ascii_ls >> d)) throw UnsupportedFormatError("truncated PLY row");
                (void)type;
                return d;
            };
            for (const auto& prop : el.properties) {
                if (prop.is_list) {
                    const auto n = static_cast<size_t>(read_scalar(prop.count_type));
                    list_values.clear();
                    for (size_t k = 0; k < n; ++k) list_values.push_back(read_scalar(prop.type));
                    if (is_face &&
                        (prop.name == "vertex_indices" || prop.name == "vertex_index")) {
                        if (list_values.size() < 3) {
                            throw UnsupportedFormatError("PLY face with < 3 vertices");
                        }
                        for (size_t k = 1; k + 1 < list_values.size(); ++k) {
                            const std::array<int, 3> tri = {static_cast<int>(list_values[0]),
                                                            static_cast<int>(list_values[k]),
                                                            static_cast<int>(list_values[k + 1])};
                            if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) continue;
                            mesh.faces.push_back(tri);
                        }
                    }
                } else {
                    const double d = read_scalar(prop.type);
                    if (is_vertex) {
                        if (prop.name == "x") v.x() = d;
                        else if (prop.name == "y") v.y() = d;
                        else if (prop.name == "z") v.z() = d;
                    }
                }
            }
            if (is_vertex) mesh.vertices.push_back(v);
        }
    }
    return mesh;
}

std::string lowercase_extension(const std::string& path) {
    std::string ext = std::filesystem::path(path).extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext;
}

} // namespace

TriangleMesh load_mesh(const std::string& path) {
    if (!std::filesystem::exists(path)) {
        throw FileNotFoundError("no such file: " + path);
    }
    const std::string ext = lowercase_extension(path);
    TriangleMesh mesh;
    if (ext == ".obj") mesh = load_obj(path);
    else if (ext == ".ply") mesh = load_ply(path);
    else throw UnsupportedFormatError("unsupported mesh format '" + ext + "' (" + path + ")");

    mesh.finalize();
    if (mesh.faces.empty() || !(mesh.total_area > 0.0)) {
        throw DegenerateMeshError("mesh has zero total surface area: " + path);
    }
    return mesh;
}

void save_obj(const TriangleMesh& mesh, const std::string& path) {
    save_obj_groups({{"mesh", mesh}}, path);
}

void save_obj_groups(const std::vector<std::pair<std::string, TriangleMesh>>& groups,
                     const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FileNotFoundError("cannot write " + path);
    out.precision(17);
    size_t offset = 1; // OBJ is 1-based
    for (const auto& [name, mesh] : groups) {
        out << "g " << name << "\n";
        for (const auto& v : mesh.vertices) {
            out << "v " << v.x() << " " << v.y() << " " << v.z() << "\n";
        }
        for (const auto& f : mesh.faces) {
            out << "f " << f[0] + offset << " " << f[1] + offset << " " << f[2] + offset << "\n";
        }
        offset += mesh.vertices.size();
    }
}

PointCloud sample_surface(const TriangleMesh& mesh, size_t n, std::uint64_t seed) {
    if (n < 1) throw InsufficientPointsError("sample_surface requires n >= 1");
    if (mesh.faces.empty() || !(mesh.total_area > 0.0)) {
        throw DegenerateMeshError("cannot sample a mesh with zero surface area");
    }

    // Cumulative area table for proportional face selection.
    std::vector<double> cumulative(mesh.faces.size());
    double acc = 0.0;
    for (size_t i = 0; i < mesh.faces.size(); ++i) {
        acc += mesh.face_areas[i];
        cumulative[i] = acc;
    }

    const std::uint64_t s = derive_seed(seed, 0x73616D706C650001ull);
    PointCloud cloud;
    cloud.points.resize(n);
    cloud.source_faces.resize(n);
    for (size_t i = 0; i < n; ++i) {
        // Each point draws counters 3i..3i+2, so the result is independent
        // of evaluation order.
        const double pick = rand_uniform(s, 3 * i) * acc;
        const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
        const size_t face =
            std::min(static_cast<size_t>(it - cumulative.begin()), mesh.faces.size() - 1);

        const double u = rand_uniform(s, 3 * i + 1);
        const double v = rand_uniform(s, 3 * i + 2);
        const double su = std::sqrt(u);
        const auto& f = mesh.faces[face];
        cloud.points[i] = (1.0 - su) * mesh.vertices[f[0]] +
                          su * (1.0 - v) * mesh.vertices[f[1]] + su * v * mesh.vertices[f[2]];
        cloud.source_faces[i] = static_cast<int>(face);
    }
    return cloud;
}

TriangleMesh transform_mesh(const TriangleMesh& mesh, const SimilarityTransform& t) {
    TriangleMesh out;
    out.vertices.reserve(mesh.vertices.size());
    for (const auto& v : mesh.vertices) out.vertices.push_back(t.apply(v));
    out.faces = mesh.faces;
    out.finalize();
    return out;
}

PointCloud transform_cloud(const PointCloud& cloud, const SimilarityTransform& t) {
    PointCloud out;
    out.points.reserve(cloud.points.size());
    for (const auto& p : cloud.points) out.points.push_back(t.apply(p));
    out.source_faces = cloud.source_faces;
    return out;
}

} // namespace meshcompose
