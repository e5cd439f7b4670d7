#include <doctest.h>

#include <cmath>

#include "boxfit/energy.hpp"
#include "boxfit/fitting.hpp"
#include "testutil.hpp"

using namespace boxfit;

namespace {

FitConfig quick_config(std::uint64_t seed = 1) {
    FitConfig config;
    config.restarts = 2;
    config.cma.max_evals = 1200;
    config.cma.seed = seed;
    config.sample_count = 400;
    return config;
}

}  // namespace

TEST_CASE("default_init carves attachment slabs out of the cloud's bounding box") {
    auto library = testutil::load_library();
    const Template& t = find_template(library, 3);  // table_pedestal
    PointCloud cloud = sample_boxes_surface(testutil::canonical_boxes(3), 500, 41);

    ParamVector p = default_init(cloud, t);
    REQUIRE(int(p.size()) == free_param_count(t));
    std::vector<AABox> boxes = decode(t, p);
    AABox bb = bounding_box(cloud);
    // The root (tabletop) keeps the upper core of the bbox: its top face sits
    // at the bbox top, and it leaves room below for the stem and base.
    for (int a = 0; a < 3; ++a) {
        CHECK(boxes[0].min(a) >= bb.min(a) - 1e-9);
        CHECK(boxes[0].max(a) <= bb.max(a) + 1e-9);
    }
    CHECK(boxes[0].max(1) == doctest::Approx(bb.max(1)).scale(1.0).epsilon(1e-9));
    CHECK(boxes[0].min(1) > bb.min(1) + 0.1 * bb.size.y);
    // The stem hangs from the top's negative y face and reaches down.
    CHECK(boxes[1].max(1) == doctest::Approx(boxes[0].min(1)).scale(1.0).epsilon(1e-9));
    CHECK(boxes[1].min(1) < boxes[0].min(1) - 1e-6);
}

TEST_CASE("fit_template recovers an easy shape") {
    auto library = testutil::load_library();
    const Template& t = find_template(library, 5);  // mug: 11 free params
    std::vector<AABox> gt = testutil::canonical_boxes(5);
    PointCloud cloud = sample_boxes_surface(gt, 1200, 42);

    FitConfig config = quick_config(7);
    config.cma.max_evals = 4000;
    config.restarts = 3;
    FitResult fit = fit_template(cloud, t, {}, config);

    CHECK(fit.template_id == 5);
    CHECK(fit.init_source == InitSource::Default);
    CHECK(fit.evaluations > 0);
    REQUIRE(fit.boxes.size() == gt.size());

    PointCloud resampled = resample_for_fitting(cloud, config);
    double gt_e = e_total(resampled, gt, config.weights).e_total;
    CHECK(fit.breakdown.e_total <= 1.10 * gt_e);
    CHECK(testutil::mean_center_error(fit.boxes, gt) < 0.05 * testutil::shape_diagonal(gt));
}

TEST_CASE("fit_template is deterministic per seed") {
    auto library = testutil::load_library();
    const Template& t = find_template(library, 4);  // lamp
    PointCloud cloud = sample_boxes_surface(testutil::canonical_boxes(4), 600, 43);

    FitConfig config = quick_config(11);
    FitResult a = fit_template(cloud, t, {}, config);
    FitResult b = fit_template(cloud, t, {}, config);
    CHECK(a.params == b.params);
    CHECK(a.breakdown.e_total == b.breakdown.e_total);
    CHECK(a.evaluations == b.evaluations);
}

TEST_CASE("warm starts are never worse than their init") {
    auto library = testutil::load_library();
    const Template& t = find_template(library, 5);
    std::vector<AABox> gt = testutil::canonical_boxes(5);
    PointCloud cloud = sample_boxes_surface(gt, 600, 44);

    FitConfig config = quick_config(13);
    config.cma.max_evals = 300;  // tiny budget: the warm start must still win

    ParamVector warm = encode(t, gt);
    FitResult fit = fit_template(cloud, t, {warm}, config, InitSource::WarmStart);

    PointCloud resampled = resample_for_fitting(cloud, config);
    double warm_e = e_total(resampled, t, warm, config.weights).e_total;
    CHECK(fit.breakdown.e_total <= warm_e + 1e-12);
}

TEST_CASE("select_template ranks ascending by e_total and returns its argmin") {
    auto library = testutil::load_library();
    std::vector<AABox> gt = testutil::canonical_boxes(2);  // table_fourleg
    PointCloud cloud = sample_boxes_surface(gt, 800, 45);

    FitConfig config = quick_config(17);
    config.cma.max_evals = 2000;
    SelectionResult sel = select_template(cloud, templates_for_family(library, "table"), config);

    REQUIRE(sel.ranked.size() == 2);
    CHECK(sel.best.template_id == 2);
    CHECK(sel.best.breakdown.e_total == sel.ranked.front().breakdown.e_total);
    CHECK(sel.ranked[0].breakdown.e_total <= sel.ranked[1].breakdown.e_total);
}

TEST_CASE("resample_for_fitting is a deterministic size cap") {
    PointCloud cloud = sample_boxes_surface(testutil::canonical_boxes(5), 900, 46);
    FitConfig config = quick_config(19);
    config.sample_count = 256;
    PointCloud a = resample_for_fitting(cloud, config);
    PointCloud b = resample_for_fitting(cloud, config);
    CHECK(a.size() == 256);
    CHECK(a.points == b.points);
    config.sample_count = 2048;
    CHECK(resample_for_fitting(cloud, config).size() == 900);
}

TEST_CASE("fitting rejects bad inputs") {
    auto library = testutil::load_library();
    const Template& t = find_template(library, 5);
    FitConfig config = quick_config();
    CHECK_THROWS_AS(fit_template(PointCloud{}, t, {}, config), ValidationError);
    PointCloud cloud;
    cloud.points = {{0, 0, 0}};
    CHECK_THROWS_AS(fit_template(cloud, t, {ParamVector(3, 0.0)}, config), ValidationError);
    CHECK_THROWS_AS(select_template(cloud, {}, config), ValidationError);
}
