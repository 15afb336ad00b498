#include "meshcompose/sdf.hpp"

#include "meshcompose/bvh.hpp"
#include "meshcompose/errors.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <thread>

static_assert(std::endian::native == std::endian::little,
              "SDF container I/O assumes a little-endian host");

namespace meshcompose {

SdfGrid bake_sdf(const TriangleMesh& mesh, int resolution, double padding_fraction,
                 BakeStats* stats) {
    if (mesh.faces.empty() || !(mesh.total_area > 0.0)) {
        throw DegenerateMeshError("cannot bake an SDF for a mesh with zero surface area");
    }
    if (resolution < 8) throw OutOfRangeError("SDF resolution must be >= 8");
    if (padding_fraction < 0.0) throw OutOfRangeError("padding_fraction must be >= 0");

    const auto [lo, hi] = mesh.bounding_box();
    const double pad = padding_fraction * (hi - lo).norm();
    const Eigen::Vector3d box_lo = lo - Eigen::Vector3d::Constant(pad);
    const Eigen::Vector3d box_hi = hi + Eigen::Vector3d::Constant(pad);
    const Eigen::Vector3d extent = box_hi - box_lo;

    const double spacing = extent.maxCoeff() / static_cast<double>(resolution - 1);
    SdfGrid grid;
    grid.spacing = spacing;
    for (int a = 0; a < 3; ++a) {
        grid.dims[a] = std::max<std::uint32_t>(
            2, static_cast<std::uint32_t>(std::ceil(extent[a] / spacing)) + 1);
    }
    // Center the (possibly slightly larger) lattice on the padded box.
    for (int a = 0; a < 3; ++a) {
        const double grid_extent = spacing * (grid.dims[a] - 1);
        grid.origin[a] = 0.5 * (box_lo[a] + box_hi[a]) - 0.5 * grid_extent;
    }

    const TriangleBvh bvh(mesh);
    grid.values.resize(static_cast<size_t>(grid.dims[0]) * grid.dims[1] * grid.dims[2]);

    std::atomic<std::uint64_t> disagreements{0};
    auto bake_slab = [&](std::uint32_t z0, std::uint32_t z1) {
        std::uint64_t local_disagree = 0;
        for (std::uint32_t z = z0; z < z1; ++z) {
            for (std::uint32_t y = 0; y < grid.dims[1]; ++y) {
                for (std::uint32_t x = 0; x < grid.dims[0]; ++x) {
                    const Eigen::Vector3d p = grid.origin + spacing * Eigen::Vector3d(x, y, z);
                    const double dist = bvh.distance(p);
                    bool disagree = false;
                    const bool inside = bvh.contains(p, &disagree);
                    if (disagree) ++local_disagree;
                    grid.values[grid.index(x, y, z)] =
                        static_cast<float>(inside ? -dist : dist);
                }
            }
        }
        disagreements += local_disagree;
    };

    // Each lattice point is independent, so slab-parallel baking is
    // bit-identical to the serial result.
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const auto n_threads = static_cast<std::uint32_t>(
        std::min<std::uint64_t>(hw, grid.dims[2]));
    if (n_threads <= 1) {
        bake_slab(0, grid.dims[2]);
    } else {
        std::vector<std::thread> workers;
        const std::uint32_t chunk = (grid.dims[2] + n_threads - 1) / n_threads;
        for (std::uint32_t t = 0; t < n_threads; ++t) {
            const std::uint32_t z0 = t * chunk;
            const std::uint32_t z1 = std::min(grid.dims[2], z0 + chunk);
            if (z0 < z1) workers.emplace_back(bake_slab, z0, z1);
        }
        for (auto& w : workers) w.join();
    }

    if (stats) {
        stats->parity_disagreement_rate =
            static_cast<double>(disagreements.load()) / static_cast<double>(grid.values.size());
        stats->watertight_warning = stats->parity_disagreement_rate > 0.01;
    }
    return grid;
}

FieldSample query(const SdfGrid& grid, const Eigen::Vector3d& p) {
    const Aabb box = grid.box();
    const Eigen::Vector3d clamped = box.clamp(p);
    const Eigen::Vector3d outside_offset = p - clamped;
    const double outside_dist = outside_offset.norm();

    // Cell coordinates of the clamped point.
    Eigen::Vector3d local = (clamped - grid.origin) / grid.spacing;
    std::array<std::uint32_t, 3> cell{};
    Eigen::Vector3d frac;
    for (int a = 0; a < 3; ++a) {
        const double max_cell = static_cast<double>(grid.dims[a] - 2);
        const double c = std::clamp(std::floor(local[a]), 0.0, max_cell);
        cell[a] = static_cast<std::uint32_t>(c);
        frac[a] = std::clamp(local[a] - c, 0.0, 1.0);
    }

    // Corner values of the enclosing cell.
    double corner[2][2][2];
    for (int dz = 0; dz < 2; ++dz) {
        for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
                corner[dx][dy][dz] = grid.at(cell[0] + dx, cell[1] + dy, cell[2] + dz);
            }
        }
    }

    const double fx = frac[0], fy = frac[1], fz = frac[2];
    auto lerp = [](double a, double b, double t) { return a + (b - a) * t; };

    const double c00 = lerp(corner[0][0][0], corner[1][0][0], fx);
    const double c10 = lerp(corner[0][1][0], corner[1][1][0], fx);
    const double c01 = lerp(corner[0][0][1], corner[1][0][1], fx);
    const double c11 = lerp(corner[0][1][1], corner[1][1][1], fx);
    const double c0 = lerp(c00, c10, fy);
    const double c1 = lerp(c01, c11, fy);
    const double value = lerp(c0, c1, fz);

    FieldSample out;
    if (outside_dist > 0.0) {
        out.value = value + outside_dist;
        out.gradient = outside_offset / outside_dist;
        return out;
    }

    // Analytic gradient of the trilinear form.
    const double dx0 = lerp(corner[1][0][0] - corner[0][0][0], corner[1][1][0] - corner[0][1][0], fy);
    const double dx1 = lerp(corner[1][0][1] - corner[0][0][1], corner[1][1][1] - corner[0][1][1], fy);
    const double dy0 = lerp(c10 - c00, c11 - c01, fz); // d/dfy at fx fixed
    const double dz0 = c1 - c0;

    out.value = value;
    out.gradient = Eigen::Vector3d(lerp(dx0, dx1, fz), dy0, dz0) / grid.spacing;
    return out;
}

FieldSample UnionField::sample(const Eigen::Vector3d& p) const {
    FieldSample best;
    best.value = std::numeric_limits<double>::infinity();
    for (const SdfGrid* g : grids_) {
        const FieldSample s = query(*g, p);
        if (s.value < best.value) best = s;
    }
    return best;
}

void save_sdf(const SdfGrid& grid, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FileNotFoundError("cannot write " + path);
    out.write("SDF1", 4);
    out.write(reinterpret_cast<const char*>(grid.origin.data()), 3 * sizeof(double));
    out.write(reinterpret_cast<const char*>(&grid.spacing), sizeof(double));
    out.write(reinterpret_cast<const char*>(grid.dims.data()), 3 * sizeof(std::uint32_t));
    out.write(reinterpret_cast<const char*>(grid.values.data()),
              static_cast<std::streamsize>(grid.values.size() * sizeof(float)));
    if (!out) throw FileNotFoundError("short write to " + path);
}

SdfGrid load_sdf(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileNotFoundError("cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "SDF1", 4) != 0) {
        throw UnsupportedFormatError("bad SDF magic in " + path);
    }
    SdfGrid grid;
    in.read(reinterpret_cast<char*>(grid.origin.data()), 3 * sizeof(double));
    in.read(reinterpret_cast<char*>(&grid.spacing), sizeof(double));
    in.read(reinterpret_cast<char*>(grid.dims.data()), 3 * sizeof(std::uint32_t));
    if (!in) throw UnsupportedFormatError("truncated SDF header in " + path);
    for (const auto d : grid.dims) {
        if (d < 2) throw UnsupportedFormatError("SDF dims must be >= 2");
    }
    grid.values.resize(static_cast<size_t>(grid.dims[0]) * grid.dims[1] * grid.dims[2]);
    in.read(reinterpret_cast<char*>(grid.values.data()),
            static_cast<std::streamsize>(grid.values.size() * sizeof(float)));
    if (!in) throw UnsupportedFormatError("truncated SDF payload in " + path);
    return grid;
}

} // namespace meshcompose
