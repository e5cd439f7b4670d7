#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "boxfit/geometry.hpp"

namespace boxfit {

enum Axis : int { AxisX = 0, AxisY = 1, AxisZ = 2 };

struct TemplateNode {
    int id = 0;
    std::string name;  // semantic part tag, e.g. "seat"
};

/// Tree edge attaching the child box flush to one face of the parent box.
/// The child's center coordinate on `axis` is derived from the contact, so a
/// connector removes one positional degree of freedom from the child.
struct Connector {
    int parent = 0;
    int child = 0;
    int axis = AxisX;
    int side = +1;  // +1: child sits on the parent's positive face, -1: negative
};

/// Nodes constrained to identical sizes with mirrored placements. The lowest
/// node id is the representative; member k (in id order) is reflected across
/// the parent's center plane on the j-th mirror axis iff bit j of k is set,
/// so a group must have exactly 2^|mirror_axes| members.
struct SymmetryGroup {
    std::vector<int> members;      // node ids, >= 2
    std::vector<int> mirror_axes;  // subset of {X,Y,Z}
};

struct Template {
    int template_id = 0;
    std::string name;
    std::vector<std::string> families;
    std::vector<TemplateNode> nodes;
    std::vector<Connector> connectors;
    std::vector<SymmetryGroup> groups;

    int node_count() const { return int(nodes.size()); }
};

using ParamVector = std::vector<double>;

/// Empty iff all structural invariants hold; otherwise human-readable violations.
std::vector<std::string> validate_template(const Template& t);

/// Number of free parameters accepted by the codec.
///
/// Parameter layout, nodes in id order:
///   root:                cx cy cz  log(lx) log(ly) log(lz)      (6)
///   connected node:      t1 t2     log(lx) log(ly) log(lz)      (5)
///     t1, t2 are the center coordinates on the two axes tangential to its
///     connector axis (in axis order); the connector axis coordinate is
///     derived from flush face contact.
///   group representative: as a connected node                   (5)
///   other group members:  none (mirrored from the representative)
int free_param_count(const Template& t);

/// Instantiates the template's boxes from a parameter vector.
/// Sizes are exponentiated (log-space parameters), so decoded sizes are > 0.
std::vector<AABox> decode(const Template& t, const ParamVector& p);

/// Inverse of decode. Boxes violating the constraints are projected onto the
/// nearest satisfying configuration: group sizes are averaged over members
/// and attachment coordinates are dropped (re-derived at decode).
ParamVector encode(const Template& t, const std::vector<AABox>& boxes);

std::vector<Template> load_template_library(const std::filesystem::path& path);
void save_template_library(const std::filesystem::path& path, const std::vector<Template>& templates);

/// Templates whose family set contains `family`. Throws if none match.
std::vector<Template> templates_for_family(const std::vector<Template>& library, const std::string& family);

const Template& find_template(const std::vector<Template>& library, int template_id);

}  // namespace boxfit
