#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "boxfit/rng.hpp"
#include "boxfit/template.hpp"
#include "testutil.hpp"

using namespace boxfit;
namespace fs = std::filesystem;

namespace {

Template simple_chair() {
    Template t;
    t.template_id = 0;
    t.name = "chair_fourleg";
    t.families = {"chair"};
    t.nodes = {{0, "seat"}, {1, "backrest"}, {2, "leg_fl"}, {3, "leg_fr"}, {4, "leg_bl"}, {5, "leg_br"}};
    t.connectors = {{0, 1, AxisY, +1}, {0, 2, AxisY, -1}, {0, 3, AxisY, -1},
                    {0, 4, AxisY, -1}, {0, 5, AxisY, -1}};
    t.groups = {{{2, 3, 4, 5}, {AxisX, AxisZ}}};
    return t;
}

ParamVector random_params(const Template& t, Rng& rng) {
    int n = free_param_count(t);
    ParamVector p(n);
    // The codec interleaves positions with log sizes; both stay well behaved
    // in [-1.5, 1.5] (sizes between exp(-1.5) and exp(1.5)).
    for (int i = 0; i < n; ++i) p[i] = rng.uniform(-1.5, 1.5);
    return p;
}

}  // namespace

TEST_CASE("the shipped library validates and loads") {
    auto library = testutil::load_library();
    REQUIRE(library.size() == 9);
    for (const auto& t : library) {
        CAPTURE(t.name);
        CHECK(validate_template(t).empty());
        CHECK(free_param_count(t) > 0);
    }
    CHECK(find_template(library, 5).name == "mug");
    CHECK_THROWS_AS(find_template(library, 99), ValidationError);
    CHECK(templates_for_family(library, "table").size() == 2);
    CHECK(templates_for_family(library, "desk").size() == 2);
    CHECK_THROWS_AS(templates_for_family(library, "spaceship"), ValidationError);
}

TEST_CASE("free_param_count: 6 for the root, 5 per connected node, 0 per derived member") {
    auto library = testutil::load_library();
    for (const auto& t : library) {
        int derived = 0;
        for (const auto& g : t.groups) derived += int(g.members.size()) - 1;
        int expected = 6 + 5 * (t.node_count() - 1) - 5 * derived;
        CAPTURE(t.name);
        CHECK(free_param_count(t) == expected);
    }
    // The chair: 6 + 5 (backrest) + 5 (leg representative) = 16.
    CHECK(free_param_count(simple_chair()) == 16);
}

TEST_CASE("validate_template reports structural violations") {
    CHECK(validate_template(simple_chair()).empty());

    Template t = simple_chair();
    t.nodes[3].id = 9;  // ids no longer dense
    CHECK_FALSE(validate_template(t).empty());

    t = simple_chair();
    t.connectors.pop_back();  // not a spanning tree
    CHECK_FALSE(validate_template(t).empty());

    t = simple_chair();
    t.connectors[1].parent = 1;
    t.connectors[1].child = 0;  // cycle through the root
    CHECK_FALSE(validate_template(t).empty());

    t = simple_chair();
    t.groups[0].members = {2, 3, 4};  // 3 members cannot mirror on 2 axes
    CHECK_FALSE(validate_template(t).empty());

    t = simple_chair();
    t.groups[0].members = {0, 3, 4, 5};  // root cannot be a group member
    CHECK_FALSE(validate_template(t).empty());

    t = simple_chair();
    t.groups.push_back({{1, 2}, {AxisX}});  // overlapping groups
    CHECK_FALSE(validate_template(t).empty());

    t = simple_chair();
    t.connectors[2] = {1, 3, AxisY, -1};  // members no longer share a parent
    CHECK_FALSE(validate_template(t).empty());

    t = simple_chair();
    t.nodes[1].name = "seat";  // duplicate part name
    CHECK_FALSE(validate_template(t).empty());
}

TEST_CASE("decode satisfies flush contact and mirrored groups for random params") {
    auto library = testutil::load_library();
    Rng rng(21);
    for (const auto& t : library) {
        CAPTURE(t.name);
        for (int trial = 0; trial < 50; ++trial) {
            ParamVector p = random_params(t, rng);
            std::vector<AABox> boxes = decode(t, p);
            REQUIRE(int(boxes.size()) == t.node_count());

            for (const auto& c : t.connectors) {
                const AABox& parent = boxes[c.parent];
                const AABox& child = boxes[c.child];
                double parent_face = c.side > 0 ? parent.max(c.axis) : parent.min(c.axis);
                double child_face = c.side > 0 ? child.min(c.axis) : child.max(c.axis);
                CHECK(std::abs(parent_face - child_face) <= 1e-12);
            }
            for (const auto& g : t.groups) {
                const AABox& rep = boxes[g.members.front()];
                for (int m : g.members)
                    for (int a = 0; a < 3; ++a) CHECK(boxes[m].size[a] == rep.size[a]);
            }
            for (const auto& b : boxes)
                for (int a = 0; a < 3; ++a) CHECK(b.size[a] > 0.0);
        }
    }
}

TEST_CASE("group members mirror the representative across the parent's center planes") {
    Template t = simple_chair();
    std::vector<AABox> boxes = decode(t, encode(t, testutil::canonical_boxes(0)));
    const AABox& seat = boxes[0];
    const AABox& rep = boxes[2];
    // Member order 2,3,4,5; mirror axes sorted (X, Z): bit 0 flips X, bit 1 flips Z.
    CHECK(boxes[3].center.x == doctest::Approx(2 * seat.center.x - rep.center.x).epsilon(1e-12));
    CHECK(boxes[3].center.z == doctest::Approx(rep.center.z).epsilon(1e-12));
    CHECK(boxes[4].center.x == doctest::Approx(rep.center.x).epsilon(1e-12));
    CHECK(boxes[4].center.z == doctest::Approx(2 * seat.center.z - rep.center.z).epsilon(1e-12));
    CHECK(boxes[5].center.x == doctest::Approx(2 * seat.center.x - rep.center.x).epsilon(1e-12));
    CHECK(boxes[5].center.z == doctest::Approx(2 * seat.center.z - rep.center.z).epsilon(1e-12));
    for (int m : {3, 4, 5}) CHECK(boxes[m].center.y == doctest::Approx(rep.center.y).epsilon(1e-12));
}

TEST_CASE("encode inverts decode") {
    auto library = testutil::load_library();
    Rng rng(22);
    for (const auto& t : library) {
        CAPTURE(t.name);
        for (int trial = 0; trial < 50; ++trial) {
            ParamVector p = random_params(t, rng);
            ParamVector back = encode(t, decode(t, p));
            REQUIRE(back.size() == p.size());
            for (std::size_t i = 0; i < p.size(); ++i)
                CHECK(back[i] == doctest::Approx(p[i]).epsilon(1e-12).scale(1.0));
        }
    }
}

TEST_CASE("encode projects invalid boxes onto the constraints") {
    Template t = simple_chair();
    std::vector<AABox> boxes = testutil::canonical_boxes(0);
    // Break the constraints: detach the backrest and desynchronize leg sizes.
    boxes[1].center.y += 0.2;
    boxes[2].size = {0.06, 0.5, 0.08};
    boxes[3].size = {0.10, 0.5, 0.08};

    std::vector<AABox> projected = decode(t, encode(t, boxes));
    // Contact restored.
    CHECK(projected[1].min(1) == doctest::Approx(projected[0].max(1)).epsilon(1e-12));
    // Group sizes averaged over the members.
    CHECK(projected[2].size.x == doctest::Approx((0.06 + 0.10 + 0.08 + 0.08) / 4.0).epsilon(1e-9));
    for (int m : {3, 4, 5}) CHECK(projected[m].size == projected[2].size);
    // Tangential coordinates survive the round trip.
    CHECK(projected[1].center.x == doctest::Approx(boxes[1].center.x).epsilon(1e-12));
    CHECK(projected[1].center.z == doctest::Approx(boxes[1].center.z).epsilon(1e-12));
}

TEST_CASE("decode and encode validate their inputs") {
    Template t = simple_chair();
    CHECK_THROWS_AS(decode(t, ParamVector(free_param_count(t) - 1, 0.0)), ValidationError);
    CHECK_THROWS_AS(encode(t, std::vector<AABox>(t.node_count() - 1)), ValidationError);
}

TEST_CASE("library save and load round trip") {
    auto library = testutil::load_library();
    fs::path p = fs::temp_directory_path() / "boxfit_templates_roundtrip.json";
    save_template_library(p, library);
    auto back = load_template_library(p);
    REQUIRE(back.size() == library.size());
    for (std::size_t i = 0; i < library.size(); ++i) {
        CHECK(back[i].template_id == library[i].template_id);
        CHECK(back[i].name == library[i].name);
        CHECK(back[i].families == library[i].families);
        REQUIRE(back[i].nodes.size() == library[i].nodes.size());
        REQUIRE(back[i].connectors.size() == library[i].connectors.size());
        for (std::size_t c = 0; c < library[i].connectors.size(); ++c) {
            CHECK(back[i].connectors[c].parent == library[i].connectors[c].parent);
            CHECK(back[i].connectors[c].child == library[i].connectors[c].child);
            CHECK(back[i].connectors[c].axis == library[i].connectors[c].axis);
            CHECK(back[i].connectors[c].side == library[i].connectors[c].side);
        }
        REQUIRE(back[i].groups.size() == library[i].groups.size());
        for (std::size_t g = 0; g < library[i].groups.size(); ++g) {
            CHECK(back[i].groups[g].members == library[i].groups[g].members);
            CHECK(back[i].groups[g].mirror_axes == library[i].groups[g].mirror_axes);
        }
    }
    fs::remove(p);
}

TEST_CASE("library loading errors") {
    fs::path p = fs::temp_directory_path() / "boxfit_templates_bad.json";
    {
        std::ofstream out(p);
        out << "{\"format\": \"something-else\"}";
    }
    CHECK_THROWS_AS(load_template_library(p), IoError);
    {
        std::ofstream out(p);
        out << "{not json";
    }
    CHECK_THROWS_AS(load_template_library(p), IoError);
    {
        // Structurally broken template: validation failure, not an I/O failure.
        std::ofstream out(p);
        out << R"({"format": "boxfit-templates", "version": 1, "templates": [
            {"id": 0, "name": "bad", "families": ["x"],
             "nodes": [{"id": 0, "name": "a"}, {"id": 1, "name": "b"}],
             "connectors": [], "groups": []}]})";
    }
    CHECK_THROWS_AS(load_template_library(p), ValidationError);
    fs::remove(p);
    CHECK_THROWS_AS(load_template_library(p), IoError);
}
