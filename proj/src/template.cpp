#include "boxfit/template.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

namespace boxfit {

namespace {

constexpr double kLogSizeClamp = 30.0;
constexpr double kMinSizeForLog = 1e-12;

/// Per-node codec roles resolved from the template structure.
struct Layout {
    enum Role { Root, Connected, GroupDerived };
    struct NodeInfo {
        Role role = Connected;
        int param_offset = -1;   // -1 for derived nodes
        int connector = -1;      // index into t.connectors (non-root nodes)
        int representative = -1; // for GroupDerived
        int mirror_mask = 0;     // bit j -> reflect on j-th sorted mirror axis
        std::vector<int> mirror_axes;
    };
    std::vector<NodeInfo> nodes;
    std::vector<int> order;  // parents before children
    int param_count = 0;
};

Layout make_layout(const Template& t) {
    int n = t.node_count();
    Layout layout;
    layout.nodes.resize(n);

    for (std::size_t c = 0; c < t.connectors.size(); ++c)
        layout.nodes[t.connectors[c].child].connector = int(c);

    for (const auto& g : t.groups) {
        auto members = g.members;
        std::sort(members.begin(), members.end());
        auto axes = g.mirror_axes;
        std::sort(axes.begin(), axes.end());
        for (std::size_t k = 1; k < members.size(); ++k) {
            auto& info = layout.nodes[members[k]];
            info.role = Layout::GroupDerived;
            info.representative = members[0];
            info.mirror_mask = int(k);
            info.mirror_axes = axes;
        }
    }
    layout.nodes[0].role = Layout::Root;

    // BFS from the root, children in id order, so parents (and group
    // representatives, which are the lowest-id siblings) come first.
    std::vector<std::vector<int>> children(n);
    for (const auto& c : t.connectors) children[c.parent].push_back(c.child);
    for (auto& ch : children) std::sort(ch.begin(), ch.end());
    layout.order.push_back(0);
    for (std::size_t head = 0; head < layout.order.size(); ++head)
        for (int ch : children[layout.order[head]]) layout.order.push_back(ch);

    int offset = 0;
    for (int i = 0; i < n; ++i) {
        auto& info = layout.nodes[i];
        if (info.role == Layout::GroupDerived) continue;
        info.param_offset = offset;
        offset += (info.role == Layout::Root) ? 6 : 5;
    }
    layout.param_count = offset;
    return layout;
}

double clamped_exp(double v) { return std::exp(std::clamp(v, -kLogSizeClamp, kLogSizeClamp)); }
double size_log(double s) { return std::log(std::max(s, kMinSizeForLog)); }

}  // namespace

std::vector<std::string> validate_template(const Template& t) {
    std::vector<std::string> violations;
    int n = t.node_count();
    if (n == 0) {
        violations.push_back("template has no nodes");
        return violations;
    }
    for (int i = 0; i < n; ++i)
        if (t.nodes[i].id != i) {
            violations.push_back("node ids are not dense 0..N-1");
            break;
        }
    {
        std::set<std::string> names;
        for (const auto& node : t.nodes)
            if (!names.insert(node.name).second)
                violations.push_back("duplicate node name '" + node.name + "'");
    }

    bool edges_ok = true;
    for (const auto& c : t.connectors) {
        if (c.parent < 0 || c.parent >= n || c.child < 0 || c.child >= n) {
            violations.push_back("connector references unknown node id");
            edges_ok = false;
        } else if (c.parent == c.child) {
            violations.push_back("connector with parent == child");
            edges_ok = false;
        }
        if (c.axis < 0 || c.axis > 2) {
            violations.push_back("connector axis out of range");
            edges_ok = false;
        }
        if (c.side != -1 && c.side != 1) {
            violations.push_back("connector side must be -1 or +1");
            edges_ok = false;
        }
    }
    if (int(t.connectors.size()) != n - 1) {
        violations.push_back("graph is not a tree (expected N-1 connectors)");
        edges_ok = false;
    }
    if (edges_ok) {
        std::vector<int> parent_of(n, -1);
        bool multi_parent = false;
        for (const auto& c : t.connectors) {
            if (parent_of[c.child] != -1) multi_parent = true;
            parent_of[c.child] = c.parent;
        }
        if (multi_parent || parent_of[0] != -1) {
            violations.push_back("graph is not a tree");
        } else {
            std::vector<std::vector<int>> children(n);
            for (const auto& c : t.connectors) children[c.parent].push_back(c.child);
            std::vector<int> stack{0};
            std::set<int> seen{0};
            while (!stack.empty()) {
                int cur = stack.back();
                stack.pop_back();
                for (int ch : children[cur])
                    if (seen.insert(ch).second) stack.push_back(ch);
            }
            if (int(seen.size()) != n) violations.push_back("graph is not a tree (unreachable nodes)");
        }
    }

    std::set<int> grouped;
    for (const auto& g : t.groups) {
        if (g.members.size() < 2) violations.push_back("group size < 2");
        std::set<int> axes(g.mirror_axes.begin(), g.mirror_axes.end());
        if (axes.size() != g.mirror_axes.size()) violations.push_back("duplicate mirror axis in group");
        for (int a : axes)
            if (a < 0 || a > 2) violations.push_back("group mirror axis out of range");
        if (g.members.size() != (std::size_t(1) << axes.size()))
            violations.push_back("group size must equal 2^|mirror_axes|");
        int shared_parent = -2;
        for (int m : g.members) {
            if (m < 0 || m >= n) {
                violations.push_back("group references unknown node id");
                continue;
            }
            if (m == 0) violations.push_back("root node cannot be a group member");
            if (!grouped.insert(m).second) violations.push_back("node in more than one group");
            for (const auto& c : t.connectors)
                if (c.child == m) {
                    if (shared_parent == -2)
                        shared_parent = c.parent;
                    else if (shared_parent != c.parent)
                        shared_parent = -3;
                }
        }
        if (shared_parent == -3) violations.push_back("group members do not share one parent");
    }

    if (violations.empty() && free_param_count(t) <= 0)
        violations.push_back("template has no free parameters");
    return violations;
}

int free_param_count(const Template& t) {
    if (t.node_count() == 0) throw ValidationError("free_param_count: empty template");
    return make_layout(t).param_count;
}

std::vector<AABox> decode(const Template& t, const ParamVector& p) {
    Layout layout = make_layout(t);
    if (int(p.size()) != layout.param_count)
        throw ValidationError("decode: parameter vector length " + std::to_string(p.size()) +
                              " does not match template (expected " + std::to_string(layout.param_count) + ")");

    std::vector<AABox> boxes(t.node_count());
    for (int i : layout.order) {
        const auto& info = layout.nodes[i];
        AABox& box = boxes[i];
        if (info.role == Layout::GroupDerived) {
            const AABox& rep = boxes[info.representative];
            const AABox& parent = boxes[t.connectors[layout.nodes[info.representative].connector].parent];
            box = rep;
            for (std::size_t j = 0; j < info.mirror_axes.size(); ++j)
                if (info.mirror_mask & (1 << j)) {
                    int a = info.mirror_axes[j];
                    box.center[a] = 2.0 * parent.center[a] - rep.center[a];
                }
            continue;
        }
        const double* q = p.data() + info.param_offset;
        if (info.role == Layout::Root) {
            box.center = {q[0], q[1], q[2]};
            box.size = {clamped_exp(q[3]), clamped_exp(q[4]), clamped_exp(q[5])};
        } else {
            const Connector& conn = t.connectors[info.connector];
            box.size = {clamped_exp(q[2]), clamped_exp(q[3]), clamped_exp(q[4])};
            const AABox& parent = boxes[conn.parent];
            int u = (conn.axis + 1) % 3, v = (conn.axis + 2) % 3;
            int t1 = std::min(u, v), t2 = std::max(u, v);
            box.center[t1] = q[0];
            box.center[t2] = q[1];
            // Flush face contact on the connector axis.
            box.center[conn.axis] =
                parent.center[conn.axis] + conn.side * 0.5 * (parent.size[conn.axis] + box.size[conn.axis]);
        }
    }
    return boxes;
}

ParamVector encode(const Template& t, const std::vector<AABox>& boxes) {
    Layout layout = make_layout(t);
    if (int(boxes.size()) != t.node_count())
        throw ValidationError("encode: box count does not match template node count");

    // Group sizes: mean over members.
    std::vector<Point3> effective_size(boxes.size());
    for (std::size_t i = 0; i < boxes.size(); ++i) effective_size[i] = boxes[i].size;
    for (const auto& g : t.groups) {
        Point3 mean;
        for (int m : g.members) mean = mean + boxes[m].size;
        mean = mean * (1.0 / double(g.members.size()));
        for (int m : g.members) effective_size[m] = mean;
    }

    ParamVector p(layout.param_count, 0.0);
    for (int i = 0; i < t.node_count(); ++i) {
        const auto& info = layout.nodes[i];
        if (info.role == Layout::GroupDerived) continue;
        double* q = p.data() + info.param_offset;
        const AABox& box = boxes[i];
        const Point3& size = effective_size[i];
        if (info.role == Layout::Root) {
            q[0] = box.center.x;
            q[1] = box.center.y;
            q[2] = box.center.z;
            q[3] = size_log(size.x);
            q[4] = size_log(size.y);
            q[5] = size_log(size.z);
        } else {
            const Connector& conn = t.connectors[info.connector];
            int u = (conn.axis + 1) % 3, v = (conn.axis + 2) % 3;
            q[0] = box.center[std::min(u, v)];
            q[1] = box.center[std::max(u, v)];
            q[2] = size_log(size.x);
            q[3] = size_log(size.y);
            q[4] = size_log(size.z);
        }
    }
    return p;
}

namespace {

using nlohmann::json;

int axis_from_string(const std::string& s) {
    if (s == "X" || s == "x") return AxisX;
    if (s == "Y" || s == "y") return AxisY;
    if (s == "Z" || s == "z") return AxisZ;
    throw IoError("bad axis '" + s + "' (expected X, Y or Z)");
}

std::string axis_to_string(int a) { return a == AxisX ? "X" : a == AxisY ? "Y" : "Z"; }

int side_from_string(const std::string& s) {
    if (s == "positive" || s == "+") return +1;
    if (s == "negative" || s == "-") return -1;
    throw IoError("bad side '" + s + "' (expected positive or negative)");
}

Template template_from_json(const json& j) {
    Template t;
    t.template_id = j.at("id").get<int>();
    t.name = j.value("name", "template" + std::to_string(t.template_id));
    for (const auto& f : j.at("families")) t.families.push_back(f.get<std::string>());
    for (const auto& nj : j.at("nodes"))
        t.nodes.push_back({nj.at("id").get<int>(), nj.at("name").get<std::string>()});
    for (const auto& cj : j.value("connectors", json::array())) {
        Connector c;
        c.parent = cj.at("parent").get<int>();
        c.child = cj.at("child").get<int>();
        c.axis = axis_from_string(cj.at("axis").get<std::string>());
        c.side = side_from_string(cj.at("side").get<std::string>());
        t.connectors.push_back(c);
    }
    for (const auto& gj : j.value("groups", json::array())) {
        SymmetryGroup g;
        for (const auto& m : gj.at("members")) g.members.push_back(m.get<int>());
        for (const auto& a : gj.at("mirror_axes")) g.mirror_axes.push_back(axis_from_string(a.get<std::string>()));
        t.groups.push_back(g);
    }
    return t;
}

json template_to_json(const Template& t) {
    json j;
    j["id"] = t.template_id;
    j["name"] = t.name;
    j["families"] = t.families;
    j["nodes"] = json::array();
    for (const auto& n : t.nodes) j["nodes"].push_back({{"id", n.id}, {"name", n.name}});
    j["connectors"] = json::array();
    for (const auto& c : t.connectors)
        j["connectors"].push_back({{"parent", c.parent},
                                   {"child", c.child},
                                   {"axis", axis_to_string(c.axis)},
                                   {"side", c.side > 0 ? "positive" : "negative"}});
    j["groups"] = json::array();
    for (const auto& g : t.groups) {
        json gj;
        gj["members"] = g.members;
        gj["mirror_axes"] = json::array();
        for (int a : g.mirror_axes) gj["mirror_axes"].push_back(axis_to_string(a));
        j["groups"].push_back(gj);
    }
    return j;
}

}  // namespace

std::vector<Template> load_template_library(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open template library: " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw IoError("template library parse error in " + path.string() + ": " + e.what());
    }

    std::vector<Template> out;
    try {
        if (doc.value("format", "") != "boxfit-templates")
            throw IoError("template library " + path.string() + ": missing or wrong format tag");
        for (const auto& tj : doc.at("templates")) out.push_back(template_from_json(tj));
    } catch (const json::exception& e) {
        throw IoError("template library parse error in " + path.string() + ": " + e.what());
    }

    std::set<int> ids;
    for (const auto& t : out) {
        if (!ids.insert(t.template_id).second)
            throw ValidationError("duplicate template id " + std::to_string(t.template_id));
        auto violations = validate_template(t);
        if (!violations.empty()) {
            std::string msg = "template " + std::to_string(t.template_id) + " invalid:";
            for (const auto& v : violations) msg += " " + v + ";";
            throw ValidationError(msg);
        }
    }
    return out;
}

void save_template_library(const std::filesystem::path& path, const std::vector<Template>& templates) {
    json doc;
    doc["format"] = "boxfit-templates";
    doc["version"] = 1;
    doc["templates"] = json::array();
    for (const auto& t : templates) doc["templates"].push_back(template_to_json(t));
    std::ofstream out(path);
    if (!out) throw IoError("cannot write template library: " + path.string());
    out << doc.dump(2) << '\n';
}

std::vector<Template> templates_for_family(const std::vector<Template>& library, const std::string& family) {
    std::vector<Template> out;
    for (const auto& t : library)
        if (std::find(t.families.begin(), t.families.end(), family) != t.families.end()) out.push_back(t);
    if (out.empty()) throw ValidationError("no templates for family '" + family + "'");
    return out;
}

const Template& find_template(const std::vector<Template>& library, int template_id) {
    for (const auto& t : library)
        if (t.template_id == template_id) return t;
    throw ValidationError("unknown template id " + std::to_string(template_id));
}

}  // namespace boxfit
