#include "hsvideo/superpixel.hpp"
#include "support.hpp"

#include <doctest.h>

#include <set>

using namespace hsvideo;

namespace {

SuperpixelMap from_labels(const IdPlane& labels, const Image& image)
{
    SuperpixelMap map;
    map.labels = labels;
    compute_region_stats(map, image);
    return map;
}

bool four_connected(const IdPlane& labels, int id)
{
    const int h = static_cast<int>(labels.rows());
    const int w = static_cast<int>(labels.cols());
    Mask seen = Mask::Constant(h, w, false);
    std::vector<std::pair<int, int>> stack;
    int total = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (labels(y, x) == id) {
                ++total;
                if (stack.empty() && !seen.any()) {
                    stack.push_back({x, y});
                    seen(y, x) = true;
                }
            }
    int reached = 0;
    while (!stack.empty()) {
        auto [x, y] = stack.back();
        stack.pop_back();
        ++reached;
        const int dx[4] = {1, -1, 0, 0}, dy[4] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
            const int nx = x + dx[k], ny = y + dy[k];
            if (nx < 0 || ny < 0 || nx >= w || ny >= h || seen(ny, nx) || labels(ny, nx) != id) continue;
            seen(ny, nx) = true;
            stack.push_back({nx, ny});
        }
    }
    return reached == total;
}

void check_map_invariants(const SuperpixelMap& map)
{
    const int n = map.size();
    REQUIRE(n > 0);
    CHECK(map.labels.minCoeff() == 0);
    CHECK(map.labels.maxCoeff() == n - 1);
    long total = 0;
    for (int i = 0; i < n; ++i) {
        const auto& r = map.regions[i];
        CHECK(r.pixel_count > 0);
        total += r.pixel_count;
        CHECK(four_connected(map.labels, i));
        CHECK(std::is_sorted(r.neighbors.begin(), r.neighbors.end()));
        for (int nb : r.neighbors) {
            const auto& other = map.regions[nb].neighbors;
            CHECK(std::binary_search(other.begin(), other.end(), i));
        }
    }
    CHECK(total == map.labels.size());
}

}  // namespace

TEST_CASE("segment: constant image splits into a regular grid")
{
    const Image img = testing::constant_image(64, 64, 0.5);
    SegmentParams p;
    p.count = 4;
    const auto map = segment(img, Plane<double>::Zero(64, 64), p);
    REQUIRE(map.size() == 4);
    for (const auto& r : map.regions) {
        CHECK(r.pixel_count == r.bbox.width() * r.bbox.height());  // rectangular
        CHECK(r.pixel_count == doctest::Approx(1024).epsilon(0.1));
    }
    check_map_invariants(map);
}

TEST_CASE("segment: boundary follows a sharp colour edge")
{
    Image img(64, 32);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 64; ++x) img.set(x, y, x < 37 ? Color(0.9, 0.2, 0.1) : Color(0.1, 0.3, 0.9));
    SegmentParams p;
    p.count = 2;
    const auto map = segment(img, Plane<double>::Zero(32, 64), p);
    REQUIRE(map.size() == 2);
    for (int y = 0; y < 32; ++y) {
        int boundary = -1;
        for (int x = 1; x < 64; ++x)
            if (map.labels(y, x) != map.labels(y, x - 1)) boundary = x;
        CHECK(std::abs(boundary - 37) <= 1);
    }
}

TEST_CASE("segment: boundary follows a motion edge when colour is uniform")
{
    const Image img = testing::constant_image(64, 32, 0.4);
    Plane<double> mag = Plane<double>::Zero(32, 64);
    mag.rightCols(64 - 27).setConstant(10.0);
    SegmentParams p;
    p.count = 2;
    p.lambda_flow = 2.0;
    const auto map = segment(img, mag, p);
    REQUIRE(map.size() == 2);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 64; ++x)
            if (std::abs(x - 27) > 1) CHECK((map.labels(y, x) == map.labels(0, 0)) == (x < 27));
}

TEST_CASE("segment: default region count tracks the mean area")
{
    const Image img = testing::textured(120, 80);
    const auto map = segment(img, Plane<double>::Zero(80, 120), {});
    const double k = 120.0 * 80.0 / 600.0;
    CHECK(map.size() >= 0.7 * k);
    CHECK(map.size() <= 1.3 * k);
}

TEST_CASE("property: segmentation invariants on varied inputs")
{
    for (unsigned seed = 1; seed <= 6; ++seed) {
        const Image img = seed % 2 ? testing::noise_image(50, 40, seed) : testing::textured(50, 40, seed);
        Plane<double> mag = testing::noise_image(50, 40, seed + 100).channel(0) * 5.0;
        SegmentParams p;
        p.count = 4 + static_cast<int>(seed) * 3;
        const auto map = segment(img, mag, p);
        check_map_invariants(map);
        CHECK(map.size() >= 0.7 * p.count);
        CHECK(map.size() <= 1.3 * p.count);
        const auto again = segment(img, mag, p);
        CHECK((again.labels == map.labels).all());
    }
}

TEST_CASE("classify counts strongly validated pixels")
{
    IdPlane labels(20, 30);
    labels.leftCols(15).setConstant(0);   // 300 px
    labels.block(0, 15, 4, 15).setConstant(1);   // 60 px... extended below
    labels.block(4, 15, 16, 15).setConstant(2);  // 240 px
    labels.block(0, 15, 4, 15).setConstant(1);
    const Image img = testing::constant_image(30, 20, 0.5);
    auto map = from_labels(labels, img);
    REQUIRE(map.size() == 3);
    WeightMap w = WeightMap::Ones(20, 30);
    CHECK(classify(map, w, 100, 0.96) == 2);
    CHECK(map.regions[0].good);
    CHECK_FALSE(map.regions[1].good);  // 60 px < h

    // 150 px region with exactly 101 strong pixels.
    IdPlane l2 = IdPlane::Zero(10, 25);
    l2.rightCols(10).setConstant(1);  // region 0: 150 px, region 1: 100 px
    auto m2 = from_labels(l2, testing::constant_image(25, 10, 0.5));
    WeightMap w2 = WeightMap::Constant(10, 25, 0.5);
    int placed = 0;
    for (int y = 0; y < 10 && placed < 101; ++y)
        for (int x = 0; x < 15 && placed < 101; ++x, ++placed) w2(y, x) = 0.97;
    classify(m2, w2, 100, 0.96);
    CHECK(m2.regions[0].good);
    w2(0, 0) = 0.96;  // not strictly above the threshold
    classify(m2, w2, 100, 0.96);
    CHECK_FALSE(m2.regions[0].good);
}

TEST_CASE("merging")
{
    // Three stripes: 0 | 1 | 2, left to right.
    IdPlane labels(10, 30);
    labels.leftCols(10).setConstant(0);
    labels.middleCols(10, 10).setConstant(1);
    labels.rightCols(10).setConstant(2);
    const Image img = testing::constant_image(30, 10, 0.5);

    SUBCASE("all good leaves the map unchanged")
    {
        auto map = from_labels(labels, img);
        for (auto& r : map.regions) r.good = true;
        const IdPlane before = map.labels;
        merge_bad(map);
        CHECK(map.groups.empty());
        CHECK((map.labels == before).all());
        for (int i = 0; i < 3; ++i) CHECK(map.regions[i].members == std::vector<int>{i});
    }
    SUBCASE("bad region with a good neighbour forms a pair")
    {
        auto map = from_labels(labels, img);
        map.regions[0].good = false;
        map.regions[1].good = true;
        map.regions[2].good = true;
        merge_bad(map);
        REQUIRE(map.groups.size() == 1);
        CHECK(map.groups[0].members == std::vector<int>{0, 1});
        CHECK(map.groups[0].rendered == std::vector<int>{0});
        CHECK(map.regions[0].members == std::vector<int>{0, 1});
    }
    SUBCASE("bad-bad-good chain merges through the intermediate")
    {
        auto map = from_labels(labels, img);
        map.regions[0].good = false;
        map.regions[1].good = false;
        map.regions[2].good = true;
        map.regions[0].mean_flow = Vec2(0, 0);
        map.regions[1].mean_flow = Vec2(1, 0);
        map.regions[2].mean_flow = Vec2(3, 0);
        merge_bad(map);
        REQUIRE(map.groups.size() == 1);  // region 1 was absorbed, so it seeds nothing
        CHECK(map.groups[0].members == std::vector<int>{0, 1, 2});
        CHECK(map.groups[0].rendered == std::vector<int>{0, 1});
    }
    SUBCASE("good neighbour preferred over a closer bad one; ties by motion")
    {
        // 0 in the middle touching 1 (bad), 2 (good, far motion) and 3 (good, near motion).
        IdPlane l(12, 12);
        l.setConstant(1);
        l.block(4, 4, 4, 4).setConstant(0);
        l.block(0, 8, 12, 4).setConstant(2);
        l.block(8, 0, 4, 8).setConstant(3);
        auto map = from_labels(l, testing::constant_image(12, 12, 0.5));
        REQUIRE(map.size() == 4);
        const int centre = map.labels(5, 5), bad = map.labels(0, 0), far = map.labels(0, 10), near = map.labels(10, 2);
        for (auto& r : map.regions) r.good = true;
        map.regions[centre].good = false;
        map.regions[bad].good = false;
        map.regions[centre].mean_flow = Vec2(0, 0);
        map.regions[bad].mean_flow = Vec2(0.1, 0);
        map.regions[far].mean_flow = Vec2(5, 0);
        map.regions[near].mean_flow = Vec2(1, 0);
        merge_bad(map);
        for (const auto& g : map.groups)
            if (g.seed == centre) CHECK(g.members == std::vector<int>{centre, near});
        // Every bad region is rendered by exactly one group and each group contains a good region.
        std::multiset<int> rendered;
        for (const auto& g : map.groups) {
            rendered.insert(g.rendered.begin(), g.rendered.end());
            CHECK(std::any_of(g.members.begin(), g.members.end(), [&](int m) { return map.regions[m].good; }));
        }
        CHECK(rendered.count(centre) == 1);
        CHECK(rendered.count(bad) == 1);
    }
    SUBCASE("no good region is an error naming the frame")
    {
        auto map = from_labels(labels, img);
        for (auto& r : map.regions) r.good = false;
        CHECK_THROWS_WITH_AS(merge_bad(map, "frame 12"), doctest::Contains("frame 12"), Error);
    }
}

TEST_CASE("property: merging on random segmentations")
{
    for (unsigned seed = 1; seed <= 5; ++seed) {
        const Image img = testing::textured(60, 45, seed);
        SegmentParams p;
        p.count = 20;
        auto map = segment(img, Plane<double>::Zero(45, 60), p);
        const IdPlane before = map.labels;
        std::mt19937 rng(seed);
        for (auto& r : map.regions) r.good = rng() % 3 == 0;
        map.regions[0].good = true;
        for (auto& r : map.regions) r.mean_flow = Vec2(rng() % 7, rng() % 5);
        merge_bad(map);
        CHECK((map.labels == before).all());  // geometry untouched
        check_map_invariants(map);
        std::vector<int> covered(map.size(), 0);
        for (const auto& g : map.groups) {
            CHECK(map.regions[g.members.back()].good);
            for (std::size_t i = 0; i + 1 < g.members.size(); ++i) CHECK_FALSE(map.regions[g.members[i]].good);
            for (int r : g.rendered) ++covered[r];
        }
        for (int i = 0; i < map.size(); ++i) CHECK(covered[i] == (map.regions[i].good ? 0 : 1));
        // Deterministic.
        auto again = map;
        merge_bad(again);
        REQUIRE(again.groups.size() == map.groups.size());
        for (std::size_t g = 0; g < map.groups.size(); ++g) CHECK(again.groups[g].members == map.groups[g].members);
    }
}

TEST_CASE("region motion uses validated pixels when available")
{
    IdPlane labels = IdPlane::Zero(4, 4);
    labels.rightCols(2).setConstant(1);
    auto map = from_labels(labels, testing::constant_image(4, 4, 0.2));
    FlowField f(4, 4);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) f.set(x, y, Vec2(x, y));
    WeightMap w = WeightMap::Zero(4, 4);
    w(0, 0) = 1.0;  // only (0,0) qualifies in region 0
    compute_region_motion(map, f, w, 0.96);
    CHECK(map.regions[0].mean_flow.isApprox(Vec2(0, 0)));
    CHECK(map.regions[1].mean_flow.isApprox(Vec2(2.5, 1.5)));  // fallback: all pixels
}
