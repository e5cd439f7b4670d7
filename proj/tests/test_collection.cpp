#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <set>

#include "boxfit/collection.hpp"
#include "boxfit/rng.hpp"
#include "testutil.hpp"

using namespace boxfit;
namespace fs = std::filesystem;

namespace {

// Three well-separated blobs in 2-d parameter space.
std::vector<std::vector<double>> blob_data(int per_blob, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::vector<double>> out;
    const double centers[3][2] = {{0.0, 0.0}, {10.0, 0.0}, {0.0, 10.0}};
    for (int b = 0; b < 3; ++b)
        for (int i = 0; i < per_blob; ++i)
            out.push_back({centers[b][0] + 0.1 * rng.normal(), centers[b][1] + 0.1 * rng.normal()});
    return out;
}

std::vector<ShapeRecord> synthetic_records(const std::vector<Template>& library) {
    // Two templates; instances of each spread over two size regimes so that
    // two clusters per template are recoverable.
    std::vector<ShapeRecord> records;
    int counter = 0;
    for (int template_id : {4, 5}) {
        const Template& t = find_template(library, template_id);
        for (int mode = 0; mode < 2; ++mode)
            for (int i = 0; i < 6; ++i) {
                std::vector<AABox> boxes = testutil::canonical_boxes(template_id);
                double s = mode == 0 ? 0.6 : 1.4;
                for (auto& b : boxes) {
                    b.center = b.center * s;
                    b.size = b.size * s;
                }
                Rng rng(1000 + counter);
                for (auto& b : boxes)
                    for (int a = 0; a < 3; ++a) b.center[a] += 0.01 * rng.normal();

                ShapeRecord rec;
                rec.shape_id = "shape_" + std::to_string(counter++);
                rec.family = template_id == 4 ? "lamp" : "mug";
                rec.fit.template_id = template_id;
                rec.fit.params = encode(t, boxes);
                rec.fit.boxes = decode(t, rec.fit.params);
                records.push_back(std::move(rec));
            }
    }
    return records;
}

}  // namespace

TEST_CASE("kmeans recovers separated blobs") {
    auto data = blob_data(30, 51);
    KmeansResult r = kmeans(data, 3, 9);
    REQUIRE(r.centroids.size() == 3);
    REQUIRE(r.assignments.size() == data.size());

    // All members of a blob share an assignment, and the three differ.
    std::set<int> blob_clusters;
    for (int b = 0; b < 3; ++b) {
        int first = r.assignments[b * 30];
        for (int i = 0; i < 30; ++i) CHECK(r.assignments[b * 30 + i] == first);
        blob_clusters.insert(first);
    }
    CHECK(blob_clusters.size() == 3);
    CHECK(r.inertia < 30 * 3 * 0.1);

    // Deterministic per seed.
    KmeansResult r2 = kmeans(data, 3, 9);
    CHECK(r.assignments == r2.assignments);
    CHECK(r.centroids == r2.centroids);

    // k larger than the data collapses to one centroid per point.
    std::vector<std::vector<double>> two = {{0.0}, {5.0}};
    KmeansResult small = kmeans(two, 10, 1);
    CHECK(small.centroids.size() == 2);
    CHECK_THROWS_AS(kmeans({}, 2, 1), ValidationError);
}

TEST_CASE("build_index_from_records clusters per template with dense global ids") {
    auto library = testutil::load_library();
    CollectionIndex index = build_index_from_records(synthetic_records(library), 2, 7);

    CHECK(index.cluster_count() == 4);
    REQUIRE(index.cluster_to_template.size() == 4);
    // Templates appear in ascending id order, two clusters each.
    CHECK(index.cluster_to_template[0] == 4);
    CHECK(index.cluster_to_template[1] == 4);
    CHECK(index.cluster_to_template[2] == 5);
    CHECK(index.cluster_to_template[3] == 5);

    // Every record landed in a cluster of its own template, and the two size
    // regimes separate.
    for (const auto& rec : index.records) {
        REQUIRE(rec.cluster >= 0);
        CHECK(cluster_template(index, rec.cluster) == rec.fit.template_id);
    }
    for (int template_id : {4, 5}) {
        std::set<int> small_clusters, large_clusters;
        for (const auto& rec : index.records) {
            if (rec.fit.template_id != template_id) continue;
            int mode_small = testutil::shape_diagonal(rec.fit.boxes) <
                             testutil::shape_diagonal(testutil::canonical_boxes(template_id));
            (mode_small ? small_clusters : large_clusters).insert(rec.cluster);
        }
        CHECK(small_clusters.size() == 1);
        CHECK(large_clusters.size() == 1);
        CHECK(*small_clusters.begin() != *large_clusters.begin());
    }
}

TEST_CASE("assign_cluster picks the nearest centroid of the right template") {
    auto library = testutil::load_library();
    CollectionIndex index = build_index_from_records(synthetic_records(library), 2, 7);

    for (const auto& rec : index.records)
        CHECK(assign_cluster(index, rec.fit.template_id, rec.fit.params) == rec.cluster);
    CHECK_THROWS_AS(assign_cluster(index, 8, ParamVector(10, 0.0)), ValidationError);
}

TEST_CASE("retrieve_nearest ranks by parameter distance") {
    auto library = testutil::load_library();
    CollectionIndex index = build_index_from_records(synthetic_records(library), 2, 7);

    const ShapeRecord& probe = index.records.front();
    std::vector<int> clusters;
    for (int c = 0; c < index.cluster_count(); ++c)
        if (cluster_template(index, c) == probe.fit.template_id) clusters.push_back(c);

    auto ranked = retrieve_nearest(index, clusters, probe.fit.params);
    REQUIRE_FALSE(ranked.empty());
    CHECK(ranked.front() == probe.shape_id);  // the probe itself is closest

    auto dist = [&](const std::string& id) {
        const auto& p = index.record(id).fit.params;
        double s = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i)
            s += (p[i] - probe.fit.params[i]) * (p[i] - probe.fit.params[i]);
        return s;
    };
    for (std::size_t i = 1; i < ranked.size(); ++i) CHECK(dist(ranked[i - 1]) <= dist(ranked[i]));
}

TEST_CASE("preprocess_collection fits shapes and quarantines failures") {
    auto library = testutil::load_library();

    std::vector<ShapeInput> shapes;
    for (int i = 0; i < 3; ++i) {
        ShapeInput s;
        s.shape_id = "mug_" + std::to_string(i);
        s.family = "mug";
        // Identical clouds: later fits should reuse the first one's params.
        s.cloud = sample_boxes_surface(testutil::random_instance(find_template(library, 5), 60), 500, 60);
        shapes.push_back(std::move(s));
    }
    ShapeInput bad;
    bad.shape_id = "broken";
    bad.family = "no_such_family";
    bad.cloud = shapes[0].cloud;
    shapes.push_back(std::move(bad));

    CollectionConfig config;
    config.fit.restarts = 2;
    config.fit.cma.max_evals = 800;
    config.fit.sample_count = 300;
    config.clusters_per_template = 2;

    CollectionIndex index = preprocess_collection(shapes, library, config);
    REQUIRE(index.records.size() == 4);
    int failures = 0;
    for (const auto& rec : index.records) {
        if (!rec.error.empty()) {
            ++failures;
            CHECK(rec.shape_id == "broken");
            CHECK(rec.cluster == -1);
        } else {
            CHECK(rec.fit.template_id == 5);
            CHECK(rec.cluster >= 0);
        }
    }
    CHECK(failures == 1);

    // Later fits of the same family get warm starts from earlier successes.
    bool warm_seen = false;
    for (const auto& rec : index.records)
        warm_seen = warm_seen || rec.fit.init_source == InitSource::WarmStart;
    CHECK(warm_seen);
}

TEST_CASE("index save and load round trip") {
    auto library = testutil::load_library();
    CollectionIndex index = build_index_from_records(synthetic_records(library), 2, 7);

    fs::path dir = fs::temp_directory_path() / "boxfit_index_roundtrip";
    fs::remove_all(dir);
    fs::create_directories(dir);
    save_index(dir, index);
    CollectionIndex back = load_index(dir);

    REQUIRE(back.records.size() == index.records.size());
    CHECK(back.cluster_to_template == index.cluster_to_template);
    CHECK(back.cluster_model.clusters_per_template == index.cluster_model.clusters_per_template);
    REQUIRE(back.cluster_model.per_template.size() == index.cluster_model.per_template.size());
    for (std::size_t i = 0; i < index.cluster_model.per_template.size(); ++i) {
        const auto& a = index.cluster_model.per_template[i];
        const auto& b = back.cluster_model.per_template[i];
        CHECK(a.template_id == b.template_id);
        CHECK(a.first_global_id == b.first_global_id);
        CHECK(a.members == b.members);
        REQUIRE(a.centroids.size() == b.centroids.size());
        for (std::size_t c = 0; c < a.centroids.size(); ++c)
            for (std::size_t d = 0; d < a.centroids[c].size(); ++d)
                CHECK(b.centroids[c][d] == doctest::Approx(a.centroids[c][d]).epsilon(1e-12));
    }
    for (std::size_t i = 0; i < index.records.size(); ++i) {
        CHECK(back.records[i].shape_id == index.records[i].shape_id);
        CHECK(back.records[i].family == index.records[i].family);
        CHECK(back.records[i].cluster == index.records[i].cluster);
        CHECK(back.records[i].fit.template_id == index.records[i].fit.template_id);
        REQUIRE(back.records[i].fit.params.size() == index.records[i].fit.params.size());
        for (std::size_t d = 0; d < index.records[i].fit.params.size(); ++d)
            CHECK(back.records[i].fit.params[d] ==
                  doctest::Approx(index.records[i].fit.params[d]).epsilon(1e-12));
        CHECK(back.records[i].fit.boxes == index.records[i].fit.boxes);
    }
    CHECK_THROWS_AS(index.record("nope"), ValidationError);
    fs::remove_all(dir);
    CHECK_THROWS_AS(load_index(dir), IoError);
}

TEST_CASE("fit result save and load round trip") {
    auto library = testutil::load_library();
    const Template& t = find_template(library, 0);
    FitResult fit;
    fit.template_id = 0;
    fit.params = encode(t, testutil::canonical_boxes(0));
    fit.boxes = decode(t, fit.params);
    fit.breakdown = {1.5, 0.25, 0.75, 0.0, 1.65};
    fit.evaluations = 1234;
    fit.init_source = InitSource::ClusterMean;

    fs::path p = fs::temp_directory_path() / "boxfit_fit_roundtrip.json";
    save_fit_result(p, fit);
    FitResult back = load_fit_result(p);
    CHECK(back.template_id == fit.template_id);
    CHECK(back.evaluations == fit.evaluations);
    CHECK(back.init_source == InitSource::ClusterMean);
    CHECK(back.breakdown.e_total == doctest::Approx(fit.breakdown.e_total).epsilon(1e-12));
    CHECK(back.breakdown.e_proj == doctest::Approx(fit.breakdown.e_proj).epsilon(1e-12));
    REQUIRE(back.params.size() == fit.params.size());
    for (std::size_t i = 0; i < fit.params.size(); ++i)
        CHECK(back.params[i] == doctest::Approx(fit.params[i]).epsilon(1e-12));
    CHECK(back.boxes == fit.boxes);
    fs::remove(p);
}
