#include "hsvideo/flow.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>

using namespace hsvideo;

namespace {

std::vector<char> slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void put_bytes(std::vector<char>& out, const void* p, std::size_t n)
{
    const char* c = static_cast<const char*>(p);
    out.insert(out.end(), c, c + n);
}

std::vector<char> flo_bytes(float magic, std::int32_t w, std::int32_t h, const std::vector<float>& payload)
{
    std::vector<char> out;
    put_bytes(out, &magic, 4);
    put_bytes(out, &w, 4);
    put_bytes(out, &h, 4);
    for (float f : payload) put_bytes(out, &f, 4);
    return out;
}

void dump(const std::filesystem::path& p, const std::vector<char>& bytes)
{
    std::ofstream(p, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

double median(std::vector<double> v)
{
    std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
    return v[v.size() / 2];
}

Image shift_image(const Image& src, double dx, double dy)
{
    // b(x) = a(x - d): content moves by +d.
    Image out(src.width(), src.height());
    for (int y = 0; y < src.height(); ++y)
        for (int x = 0; x < src.width(); ++x) out.set(x, y, sample_bilinear(src, x - dx, y - dy));
    return out;
}

}  // namespace

TEST_CASE("flo parsing")
{
    const auto dir = testing::scratch("flo");
    dump(dir / "zero.flo", flo_bytes(kFloMagic, 2, 2, std::vector<float>(8, 0.0f)));
    const FlowField z = read_flow(dir / "zero.flo");
    CHECK(z.width() == 2);
    CHECK(z.height() == 2);
    CHECK((z.u == 0.0f).all());
    CHECK((z.v == 0.0f).all());

    dump(dir / "magic.flo", flo_bytes(1.0f, 1, 1, {0.0f, 0.0f}));
    CHECK_THROWS_WITH_AS(read_flow(dir / "magic.flo"), doctest::Contains("magic"), Error);
    dump(dir / "short.flo", flo_bytes(kFloMagic, 2, 2, {0.0f, 0.0f, 1.0f}));
    CHECK_THROWS_AS(read_flow(dir / "short.flo"), Error);
    dump(dir / "nan.flo", flo_bytes(kFloMagic, 1, 1, {std::nanf(""), 0.0f}));
    CHECK_THROWS_AS(read_flow(dir / "nan.flo"), Error);
    dump(dir / "dims.flo", flo_bytes(kFloMagic, -3, 2, {}));
    CHECK_THROWS_AS(read_flow(dir / "dims.flo"), Error);
    CHECK_THROWS_AS(read_flow(dir / "absent.flo"), Error);
}

TEST_CASE("flo encoding sizes and layout")
{
    const auto dir = testing::scratch("flo_sizes");
    write_flow(FlowField(1, 1), dir / "one.flo");
    CHECK(std::filesystem::file_size(dir / "one.flo") == 12 + 8);

    FlowField f(3, 2);
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 3; ++x) f.set(x, y, Vec2(x + 10 * y, -0.5 * x));
    write_flow(f, dir / "three.flo");
    const auto bytes = slurp(dir / "three.flo");
    REQUIRE(bytes.size() == 12 + 3 * 2 * 2 * 4);
    float magic;
    std::int32_t w, h;
    std::memcpy(&magic, bytes.data(), 4);
    std::memcpy(&w, bytes.data() + 4, 4);
    std::memcpy(&h, bytes.data() + 8, 4);
    CHECK(magic == kFloMagic);
    CHECK(w == 3);
    CHECK(h == 2);
    // Row-major interleaved (u, v): pixel (2, 1) is the 6th pair.
    float u, v;
    std::memcpy(&u, bytes.data() + 12 + 5 * 8, 4);
    std::memcpy(&v, bytes.data() + 12 + 5 * 8 + 4, 4);
    CHECK(u == 12.0f);
    CHECK(v == -1.0f);
    CHECK_THROWS_AS(write_flow(f, dir / "no" / "such" / "dir.flo"), Error);
}

TEST_CASE("property: random fields round-trip bit-exactly")
{
    const auto dir = testing::scratch("flo_random");
    std::mt19937 rng(3);
    std::uniform_real_distribution<float> u(-50.0f, 50.0f);
    for (int trial = 0; trial < 10; ++trial) {
        FlowField f(1 + trial * 3, 1 + trial * 2);
        for (int y = 0; y < f.height(); ++y)
            for (int x = 0; x < f.width(); ++x) {
                f.u(y, x) = u(rng);
                f.v(y, x) = u(rng);
            }
        write_flow(f, dir / "a.flo");
        const FlowField g = read_flow(dir / "a.flo");
        CHECK(g == f);
        write_flow(g, dir / "b.flo");
        CHECK(slurp(dir / "a.flo") == slurp(dir / "b.flo"));
    }
}

TEST_CASE("fallback estimator")
{
    const Image a = testing::textured(64, 48);
    const FlowField same = estimate_flow(a, a);
    CHECK((same.u == 0.0f).all());
    CHECK((same.v == 0.0f).all());

    const Image b = shift_image(a, 3.0, 0.0);
    const FlowField f = estimate_flow(a, b);
    std::vector<double> us, vs;
    for (int y = 8; y < 40; ++y)
        for (int x = 8; x < 56; ++x) {
            us.push_back(f.u(y, x));
            vs.push_back(f.v(y, x));
        }
    CHECK(std::abs(median(us) - 3.0) <= 0.5);
    CHECK(std::abs(median(vs)) <= 0.5);

    const FlowField n = estimate_flow(testing::noise_image(40, 30, 1), testing::noise_image(40, 30, 2));
    CHECK(n.finite());
    CHECK_THROWS_AS(estimate_flow(a, testing::textured(32, 48)), Error);
}

TEST_CASE("patch distance against brute-force oracle")
{
    const auto& o = testing::frozen()["patch_msd"];
    const int w = o["width"], h = o["height"], r = o["radius"];
    Image a(w, h), b(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                a.channel(c)(y, x) = 0.5 + 0.4 * std::sin(0.37 * x + 0.23 * y + c);
                b.channel(c)(y, x) = 0.5 + 0.4 * std::cos(0.29 * x - 0.31 * y + 0.5 * c);
            }
    for (const auto& c : o["cases"]) {
        const double got = patch_msd(a, c["x1"], c["y1"], b, c["x2"], c["y2"], r);
        if (c["msd"].is_null())
            CHECK(std::isinf(got));
        else
            CHECK(got == doctest::Approx(c["msd"].get<double>()).epsilon(1e-12));
    }
}

TEST_CASE("patch distance on constant offsets")
{
    const Image a = testing::textured(20, 20);
    Image c = a;
    for (int ch = 0; ch < 3; ++ch) c.channel(ch) += 0.1;
    const std::array<const Image*, 3> frames = {&a, &a, &c};
    const auto zero = FlowBundle::zero(20, 20);
    const double expected = testing::frozen()["constant_offset_dc"];
    for (auto [x, y] : {std::pair{0, 0}, {10, 10}, {19, 5}}) {
        CHECK(patch_distance(frames, kSource, x, y, zero, 3) == doctest::Approx(expected).epsilon(1e-12));
        CHECK(patch_distance(frames, kRefNext, x, y, zero, 3) == doctest::Approx(expected).epsilon(1e-12));
    }
    const Image k = testing::constant_image(20, 20, 0.3);
    const std::array<const Image*, 3> same = {&k, &k, &k};
    CHECK(patch_distance(same, kRefPrev, 4, 4, zero, 3) == 0.0);

    // Both partners outside the frame.
    FlowBundle away = zero;
    for (auto* f : {&away.src_to_prev, &away.src_to_next}) (*f)->u.setConstant(100.0f);
    CHECK(std::isinf(patch_distance(frames, kSource, 5, 5, away, 3)));
    CHECK(validation_weight(patch_distance(frames, kSource, 5, 5, away, 3), 0.05) == 0.0);
}

TEST_CASE("validation weight curve")
{
    CHECK(validation_weight(0.0, 0.05) == 1.0);
    CHECK(validation_weight(0.05, 0.05) ==
          doctest::Approx(testing::frozen()["validation_weight_sigma"].get<double>()).epsilon(1e-15));
    double prev = 1.0;
    for (double d = 0.0; d < 0.5; d += 0.001) {
        const double w = validation_weight(d, 0.05);
        CHECK(w <= prev);
        CHECK(w >= 0.0);
        prev = w;
    }
    // Threshold crossing used for good pixels.
    CHECK(validation_weight(0.0142, 0.05) > 0.96);
    CHECK(validation_weight(0.0145, 0.05) < 0.96);
}

TEST_CASE("validate_flow: identical frames give unit weights")
{
    const Image a = testing::textured(24, 20);
    const std::array<const Image*, 3> frames = {&a, &a, &a};
    const auto maps = validate_flow(frames, FlowBundle::zero(24, 20));
    for (const auto& m : maps) CHECK((m == 1.0).all());
}

TEST_CASE("validate_flow: forward/backward failures zero the weight")
{
    const Image a = testing::constant_image(24, 20, 0.4);
    const std::array<const Image*, 3> frames = {&a, &a, &a};
    FlowBundle f = FlowBundle::zero(24, 20);
    // Source pixel (5,5) claims a 3 px jump that the reverse field does not undo.
    f.src_to_prev->set(5, 5, Vec2(3, 0));
    // Leaving the frame is a failure too.
    f.src_to_next->set(23, 10, Vec2(2, 0));
    const auto maps = validate_flow(frames, f);
    CHECK(maps[kSource](5, 5) == 0.0);
    CHECK(maps[kSource](10, 23) == 0.0);
    CHECK(maps[kSource](5, 6) == 1.0);
    CHECK(maps[kRefPrev](5, 5) == 0.0);  // its round trip goes through the broken vector
    CHECK(maps[kRefPrev](8, 8) == 1.0);

    CHECK(forward_backward_ok(*f.src_to_prev, *f.prev_to_src, 6, 5, 1.0));
    CHECK_FALSE(forward_backward_ok(*f.src_to_prev, *f.prev_to_src, 5, 5, 1.0));
}

TEST_CASE("reference pair weight ignores the source")
{
    const Image a = testing::textured(24, 20);
    const Image other = testing::constant_image(24, 20, 0.9);
    // The source disagrees everywhere; the references agree with each other.
    const std::array<const Image*, 3> frames = {&other, &a, &a};
    const auto f = FlowBundle::zero(24, 20);
    const auto three_way = validate_flow(frames, f);
    CHECK((three_way[kRefPrev].array() < 0.96).all());
    const auto pair = reference_pair_weight(frames, kRefPrev, f);
    CHECK((pair.array() == 1.0).all());

    FlowBundle broken = f;
    broken.prev_to_next->set(4, 4, Vec2(3, 0));
    CHECK(reference_pair_weight(frames, kRefPrev, broken)(4, 4) == 0.0);
    CHECK_THROWS_AS(reference_pair_weight(frames, kSource, f), Error);
}

TEST_CASE("property: weights stay in range and ignore evaluation order")
{
    const Image a = testing::textured(30, 22, 0.0);
    const Image b = testing::textured(30, 22, 0.2);
    const Image c = testing::noise_image(30, 22, 4);
    const std::array<const Image*, 3> frames = {&a, &b, &c};
    std::mt19937 rng(9);
    std::uniform_real_distribution<float> d(-2.0f, 2.0f);
    FlowBundle f = FlowBundle::zero(30, 22);
    for (auto* field : {&f.src_to_prev, &f.src_to_next, &f.prev_to_src, &f.next_to_src, &f.prev_to_next,
                        &f.next_to_prev})
        for (int y = 0; y < 22; ++y)
            for (int x = 0; x < 30; ++x) (*field)->set(x, y, Vec2(d(rng), d(rng)));
    const auto maps = validate_flow(frames, f);
    for (int s = 0; s < 3; ++s) {
        CHECK((maps[s] >= 0.0).all());
        CHECK((maps[s] <= 1.0).all());
    }
    // Pointwise recomputation in reverse raster order gives the same values.
    for (int y = 21; y >= 0; y -= 3)
        for (int x = 29; x >= 0; x -= 4) {
            const auto route = route_for(kRefNext, f);
            double w = 0.0;
            if (forward_backward_ok(*route.first, *route.first_back, x, y, 1.0) &&
                forward_backward_ok(*route.second, *route.second_back, x, y, 1.0))
                w = validation_weight(patch_distance(frames, kRefNext, x, y, f, 3), 0.05);
            CHECK(maps[kRefNext](y, x) == w);
        }
}

TEST_CASE("bundle checks")
{
    FlowBundle b;
    CHECK(b.missing_required().size() == 6);
    b = FlowBundle::zero(8, 8);
    CHECK(b.missing_required().empty());
    CHECK_NOTHROW(b.check(8, 8));
    CHECK_THROWS_AS(b.check(9, 8), Error);
    b.next_to_prev.reset();
    CHECK_THROWS_WITH_AS(b.check(8, 8), doctest::Contains("next_to_prev"), Error);
    b = FlowBundle::zero(8, 8);
    b.src_to_next->u(1, 1) = std::numeric_limits<float>::infinity();
    CHECK_THROWS_AS(b.check(8, 8), Error);
}
