#include "gsocc/io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

namespace gsocc {

using ordered_json = nlohmann::ordered_json;

namespace {

constexpr std::uint32_t kOccgVersion = 1;
constexpr std::uint32_t kOccgConfidenceBit = 1u << 16;

template <typename T>
void write_le(std::ostream& os, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw ValidationError("OCCG: truncated file");
    return v;
}

ordered_json box_to_json(const SceneBox& box) {
    ordered_json j;
    j["origin"] = {box.origin.x(), box.origin.y(), box.origin.z()};
    j["extent"] = {box.extent.x(), box.extent.y(), box.extent.z()};
    j["voxel_size"] = box.voxel_size;
    return j;
}

SceneBox box_from_json(const ordered_json& j) {
    SceneBox box;
    for (int a = 0; a < 3; ++a) {
        box.origin[a] = j.at("origin").at(a).get<double>();
        box.extent[a] = j.at("extent").at(a).get<double>();
    }
    box.voxel_size = j.at("voxel_size").get<double>();
    box.validate();
    return box;
}

}  // namespace

void write_occg(const std::string& path, const OccupancyGrid& grid) {
    grid.box.validate();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ValidationError("cannot open for writing: " + path);
    const Vec3i dims = grid.box.dims();
    os.write("OCCG", 4);
    std::uint32_t version = kOccgVersion;
    if (grid.has_confidence()) version |= kOccgConfidenceBit;
    write_le(os, version);
    write_le(os, static_cast<std::uint32_t>(dims.x()));
    write_le(os, static_cast<std::uint32_t>(dims.y()));
    write_le(os, static_cast<std::uint32_t>(dims.z()));
    write_le(os, static_cast<float>(grid.box.voxel_size));
    for (int a = 0; a < 3; ++a) write_le(os, static_cast<float>(grid.box.origin[a]));
    os.write(reinterpret_cast<const char*>(grid.labels.data()),
             static_cast<std::streamsize>(grid.labels.size()));
    if (grid.has_confidence()) {
        for (double c : grid.confidence) write_le(os, static_cast<float>(c));
    }
    if (!os) throw ValidationError("write failed: " + path);
}

OccupancyGrid read_occg(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ValidationError("cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "OCCG", 4) != 0) {
        throw ValidationError("OCCG: bad magic in " + path);
    }
    const std::uint32_t version = read_le<std::uint32_t>(is);
    if ((version & 0xffffu) != kOccgVersion) {
        throw ValidationError("OCCG: unsupported version");
    }
    const auto x = read_le<std::uint32_t>(is);
    const auto y = read_le<std::uint32_t>(is);
    const auto z = read_le<std::uint32_t>(is);
    OccupancyGrid grid;
    grid.box.voxel_size = read_le<float>(is);
    for (int a = 0; a < 3; ++a) grid.box.origin[a] = read_le<float>(is);
    grid.box.extent = Vec3(x, y, z) * grid.box.voxel_size;
    grid.box.validate();
    const std::size_t n = static_cast<std::size_t>(x) * y * z;
    grid.labels.resize(n);
    is.read(reinterpret_cast<char*>(grid.labels.data()), static_cast<std::streamsize>(n));
    if (!is) throw ValidationError("OCCG: truncated labels in " + path);
    if (version & kOccgConfidenceBit) {
        grid.confidence.resize(n);
        for (std::size_t i = 0; i < n; ++i) grid.confidence[i] = read_le<float>(is);
    }
    return grid;
}

void write_gaussians_json(const std::string& path, const std::vector<GaussianAnchor>& anchors,
                          const SceneBox& box, double s_max) {
    ordered_json j;
    j["count"] = anchors.size();
    j["s_max"] = s_max;
    j["box"] = box_to_json(box);
    ordered_json rows = ordered_json::array();
    for (const auto& a : anchors) {
        ordered_json row = ordered_json::array();
        for (int i = 0; i < 3; ++i) row.push_back(a.mean[i]);
        for (int i = 0; i < 3; ++i) row.push_back(a.scale[i]);
        for (int i = 0; i < 4; ++i) row.push_back(a.rotation[i]);
        row.push_back(a.opacity);
        for (int i = 0; i < a.semantics.size(); ++i) row.push_back(a.semantics[i]);
        rows.push_back(std::move(row));
    }
    j["anchors"] = std::move(rows);
    std::ofstream os(path);
    if (!os) throw ValidationError("cannot open for writing: " + path);
    os << j.dump(2) << "\n";
}

GaussianSet read_gaussians_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("cannot open: " + path);
    ordered_json j;
    try {
        is >> j;
    } catch (const std::exception& e) {
        throw ValidationError(std::string("gaussians json parse error: ") + e.what());
    }
    GaussianSet set;
    set.s_max = j.at("s_max").get<double>();
    set.box = box_from_json(j.at("box"));
    const auto& rows = j.at("anchors");
    const std::size_t count = j.at("count").get<std::size_t>();
    if (rows.size() != count) throw ValidationError("gaussians json: count mismatch");
    for (const auto& row : rows) {
        if (row.size() < 12) throw ValidationError("gaussians json: short anchor row");
        GaussianAnchor a;
        int i = 0;
        for (int k = 0; k < 3; ++k) a.mean[k] = row.at(i++).get<double>();
        for (int k = 0; k < 3; ++k) a.scale[k] = row.at(i++).get<double>();
        for (int k = 0; k < 4; ++k) a.rotation[k] = row.at(i++).get<double>();
        a.opacity = row.at(i++).get<double>();
        a.semantics = VecX(static_cast<int>(row.size()) - i);
        for (int k = 0; i < static_cast<int>(row.size()); ++k) {
            a.semantics[k] = row.at(i++).get<double>();
        }
        set.anchors.push_back(std::move(a));
    }
    return set;
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    // Shortest representation that round-trips, stable across runs.
    ordered_json j = v;
    return j.dump();
}

void write_grid_csv(const std::string& path, const OccupancyGrid& grid) {
    std::ofstream os(path);
    if (!os) throw ValidationError("cannot open for writing: " + path);
    os << "x,y,z,label\n";
    const Vec3i dims = grid.box.dims();
    for (int x = 0; x < dims.x(); ++x)
        for (int y = 0; y < dims.y(); ++y)
            for (int z = 0; z < dims.z(); ++z) {
                os << x << ',' << y << ',' << z << ','
                   << static_cast<int>(grid.label_at(x, y, z)) << '\n';
            }
}

void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows) {
    std::ofstream os(path);
    if (!os) throw ValidationError("cannot open for writing: " + path);
    os << "metric,class,value\n";
    for (const auto& r : rows) {
        os << r.metric << ',' << r.cls << ',' << format_double(r.value) << '\n';
    }
}

void write_losses_csv(const std::string& path, const std::vector<LossRow>& rows) {
    std::ofstream os(path);
    if (!os) throw ValidationError("cannot open for writing: " + path);
    os << "step,loss,focal,lovasz,geo,sem\n";
    for (const auto& r : rows) {
        os << r.step << ',' << format_double(r.loss) << ',' << format_double(r.focal) << ','
           << format_double(r.lovasz) << ',' << format_double(r.geo) << ','
           << format_double(r.sem) << '\n';
    }
}

}  // namespace gsocc
