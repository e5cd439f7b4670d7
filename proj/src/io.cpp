#include "boxfit/io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace boxfit {

namespace {

std::ifstream open_input(const std::filesystem::path& path, bool binary = false) {
    std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
    if (!in) throw IoError("cannot open file: " + path.string());
    return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open file for writing: " + path.string());
    out.precision(17);
    return out;
}

}  // namespace

PointCloud read_point_cloud(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    for (auto& c : ext) c = char(std::tolower(c));
    if (ext == ".ply") return read_ply(path);
    return read_xyz(path);
}

PointCloud read_xyz(const std::filesystem::path& path) {
    auto in = open_input(path);
    PointCloud cloud;
    std::string line;
    std::size_t lineno = 0;
    bool labeled = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        Point3 p;
        if (!(ss >> p.x >> p.y >> p.z))
            throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected 'x y z'");
        int label;
        if (ss >> label) {
            if (!labeled && !cloud.points.empty())
                throw IoError(path.string() + ":" + std::to_string(lineno) + ": mixed labeled/unlabeled rows");
            labeled = true;
            cloud.labels.push_back(label);
        } else if (labeled) {
            throw IoError(path.string() + ":" + std::to_string(lineno) + ": mixed labeled/unlabeled rows");
        }
        cloud.points.push_back(p);
    }
    if (cloud.empty()) throw IoError(path.string() + ": no points");
    return cloud;
}

namespace {

struct PlyProperty {
    std::string type;
    std::string name;
    bool is_list = false;
    std::string count_type;
};

std::size_t ply_type_size(const std::string& t) {
    if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
    if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
    if (t == "int" || t == "uint" || t == "int32" || t == "uint32" || t == "float" || t == "float32") return 4;
    if (t == "double" || t == "float64") return 8;
    throw IoError("unsupported PLY property type: " + t);
}

double ply_read_scalar(std::istream& in, const std::string& type) {
    char buf[8];
    std::size_t sz = ply_type_size(type);
    in.read(buf, std::streamsize(sz));
    if (!in) throw IoError("truncated PLY file");
    if (type == "float" || type == "float32") {
        float f;
        std::memcpy(&f, buf, 4);
        return f;
    }
    if (type == "double" || type == "float64") {
        double d;
        std::memcpy(&d, buf, 8);
        return d;
    }
    if (sz == 1) return double(*reinterpret_cast<unsigned char*>(buf));
    if (sz == 2) {
        std::uint16_t v;
        std::memcpy(&v, buf, 2);
        return v;
    }
    std::uint32_t v;
    std::memcpy(&v, buf, 4);
    return v;
}

}  // namespace

PointCloud read_ply(const std::filesystem::path& path) {
    auto in = open_input(path, true);
    std::string line;
    if (!std::getline(in, line) || line.substr(0, 3) != "ply")
        throw IoError(path.string() + ": not a PLY file");

    std::string format;
    std::size_t vertex_count = 0;
    std::vector<PlyProperty> vertex_props;
    bool in_vertex = false;
    std::vector<std::pair<std::size_t, std::vector<PlyProperty>>> other_elements;

    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ss(line);
        std::string tok;
        ss >> tok;
        if (tok == "comment" || tok.empty()) continue;
        if (tok == "format") {
            ss >> format;
        } else if (tok == "element") {
            std::string name;
            std::size_t count;
            ss >> name >> count;
            in_vertex = (name == "vertex");
            if (in_vertex)
                vertex_count = count;
            else
                other_elements.push_back({count, {}});
        } else if (tok == "property") {
            PlyProperty prop;
            ss >> prop.type;
            if (prop.type == "list") {
                prop.is_list = true;
                ss >> prop.count_type >> prop.type >> prop.name;
            } else {
                ss >> prop.name;
            }
            if (in_vertex)
                vertex_props.push_back(prop);
            else if (!other_elements.empty())
                other_elements.back().second.push_back(prop);
        } else if (tok == "end_header") {
            break;
        }
    }
    if (vertex_count == 0) throw IoError(path.string() + ": PLY has no vertices");

    int ix = -1, iy = -1, iz = -1;
    for (std::size_t i = 0; i < vertex_props.size(); ++i) {
        if (vertex_props[i].name == "x") ix = int(i);
        if (vertex_props[i].name == "y") iy = int(i);
        if (vertex_props[i].name == "z") iz = int(i);
    }
    if (ix < 0 || iy < 0 || iz < 0) throw IoError(path.string() + ": PLY vertex element lacks x/y/z");

    PointCloud cloud;
    cloud.points.reserve(vertex_count);

    if (format == "ascii") {
        for (std::size_t v = 0; v < vertex_count; ++v) {
            if (!std::getline(in, line)) throw IoError(path.string() + ": truncated PLY vertex data");
            std::istringstream ss(line);
            std::vector<double> vals(vertex_props.size());
            for (auto& val : vals)
                if (!(ss >> val)) throw IoError(path.string() + ": malformed PLY vertex row");
            cloud.points.push_back({vals[ix], vals[iy], vals[iz]});
        }
    } else if (format == "binary_little_endian") {
        for (std::size_t v = 0; v < vertex_count; ++v) {
            Point3 p;
            for (std::size_t i = 0; i < vertex_props.size(); ++i) {
                const auto& prop = vertex_props[i];
                if (prop.is_list) throw IoError(path.string() + ": list property in vertex element");
                double val = ply_read_scalar(in, prop.type);
                if (int(i) == ix) p.x = val;
                if (int(i) == iy) p.y = val;
                if (int(i) == iz) p.z = val;
            }
            cloud.points.push_back(p);
        }
    } else {
        throw IoError(path.string() + ": unsupported PLY format '" + format + "'");
    }
    return cloud;
}

void write_xyz(const std::filesystem::path& path, const PointCloud& cloud) {
    auto out = open_output(path);
    bool labeled = cloud.has_labels();
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto& p = cloud.points[i];
        out << p.x << ' ' << p.y << ' ' << p.z;
        if (labeled) out << ' ' << cloud.labels[i];
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

Mesh read_obj(const std::filesystem::path& path) {
    auto in = open_input(path);
    Mesh mesh;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ss(line);
        std::string tok;
        if (!(ss >> tok)) continue;
        if (tok == "v") {
            Point3 p;
            if (!(ss >> p.x >> p.y >> p.z))
                throw IoError(path.string() + ":" + std::to_string(lineno) + ": malformed vertex");
            mesh.vertices.push_back(p);
        } else if (tok == "f") {
            std::vector<int> idx;
            std::string ref;
            while (ss >> ref) {
                // "v", "v/vt", "v//vn", "v/vt/vn"; negative indices count from the end
                int v = std::stoi(ref.substr(0, ref.find('/')));
                if (v < 0) v = int(mesh.vertices.size()) + v + 1;
                if (v < 1 || v > int(mesh.vertices.size()))
                    throw IoError(path.string() + ":" + std::to_string(lineno) + ": face index out of range");
                idx.push_back(v - 1);
            }
            for (std::size_t k = 2; k < idx.size(); ++k)
                mesh.faces.push_back({idx[0], int(idx[k - 1]), int(idx[k])});
        }
    }
    if (mesh.vertices.empty()) throw IoError(path.string() + ": no vertices");
    return mesh;
}

void write_obj(const std::filesystem::path& path, const Mesh& mesh) {
    auto out = open_output(path);
    for (const auto& v : mesh.vertices) out << "v " << v.x << ' ' << v.y << ' ' << v.z << '\n';
    for (const auto& f : mesh.faces) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

void write_boxes_obj(const std::filesystem::path& path, const std::vector<AABox>& boxes,
                     const std::vector<std::string>& names) {
    auto out = open_output(path);
    // Corner order: bit 0 -> x, bit 1 -> y, bit 2 -> z.
    static const int kFaces[12][3] = {
        {0, 2, 3}, {0, 3, 1},  // z min
        {4, 5, 7}, {4, 7, 6},  // z max
        {0, 1, 5}, {0, 5, 4},  // y min
        {2, 6, 7}, {2, 7, 3},  // y max
        {0, 4, 6}, {0, 6, 2},  // x min
        {1, 3, 7}, {1, 7, 5},  // x max
    };
    int base = 0;
    for (std::size_t b = 0; b < boxes.size(); ++b) {
        const auto& box = boxes[b];
        out << "g " << (b < names.size() ? names[b] : "box" + std::to_string(b)) << '\n';
        for (int c = 0; c < 8; ++c) {
            out << "v " << ((c & 1) ? box.max(0) : box.min(0)) << ' '
                << ((c & 2) ? box.max(1) : box.min(1)) << ' '
                << ((c & 4) ? box.max(2) : box.min(2)) << '\n';
        }
        for (const auto& f : kFaces)
            out << "f " << base + f[0] + 1 << ' ' << base + f[1] + 1 << ' ' << base + f[2] + 1 << '\n';
        base += 8;
    }
    if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace boxfit
