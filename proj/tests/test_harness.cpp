#include "hsvideo/config.hpp"
#include "hsvideo/image_io.hpp"
#include "hsvideo/metrics.hpp"
#include "hsvideo/pipeline.hpp"
#include "hsvideo/synthetic.hpp"
#include "support.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace hsvideo;

namespace {

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

double max_abs_diff(const Image& a, const Image& b)
{
    double m = 0;
    for (int c = 0; c < 3; ++c) m = std::max(m, (a.channel(c) - b.channel(c)).abs().maxCoeff());
    return m;
}

SceneSpec small_scene()
{
    SceneSpec s;
    s.width = 64;
    s.height = 48;
    s.iterations = 3;
    s.baseline = 2.0;
    ForegroundCard card;
    card.position = Vec2(20, 14);
    card.size = Vec2(20, 18);
    card.velocity = Vec2(1.0, 0.0);
    s.foreground = card;
    return s;
}

}  // namespace

TEST_CASE("config parsing")
{
    const auto c = parse_config("# tuned\nsigma = 0.08\nsegments = 40 # inline\n\ndisable_merging = true\n"
                                "alpha_l=2.5\n");
    CHECK(c.sigma == 0.08);
    CHECK(c.segments == 40);
    CHECK(c.disable_merging);
    CHECK(c.alpha_l == 2.5);
    CHECK(c.gamma_l == 2.0);  // untouched default

    PipelineConfig o = c;
    set_config_value(o, "gamma_l", "3");
    CHECK(o.gamma_l == 3.0);
    CHECK(parse_config(format_config(o)).gamma_l == 3.0);
    CHECK(format_config(parse_config(format_config(o))) == format_config(o));

    CHECK_THROWS_WITH_AS(parse_config("sigma = 1\nbogus = 2\n"), doctest::Contains("line 2"), Error);
    CHECK_THROWS_WITH_AS(parse_config("bogus = 2"), doctest::Contains("bogus"), Error);
    CHECK_THROWS_AS(parse_config("[render]\nsigma = 1\n"), Error);
    CHECK_THROWS_AS(parse_config("sigma = fast\n"), Error);
    CHECK_THROWS_AS(parse_config("segments = 2.5\n"), Error);
    CHECK_THROWS_AS(parse_config("debug_dumps = yes\n"), Error);
    CHECK_THROWS_AS(parse_config("just words\n"), Error);
    PipelineConfig neg;
    neg.sigma = -1;
    CHECK_THROWS_AS(neg.check(), Error);
    CHECK_THROWS_AS(load_config("/nonexistent/config.toml"), Error);

    PipelineConfig a;
    apply_ablation(a, "opf");
    CHECK(a.disable_validation);
    CHECK_FALSE(a.warp().weight_by_validation);
    apply_ablation(a, "spm");
    CHECK_FALSE(a.warp().merge_source);
    apply_ablation(a, "lab");
    CHECK(a.disable_labeling);
    CHECK_THROWS_AS(apply_ablation(a, "xyz"), Error);
}

TEST_CASE("synthetic scenes")
{
    SUBCASE("zero baseline and a static scene give identical views")
    {
        SceneSpec s;
        s.width = 48;
        s.height = 40;
        s.lenses = 3;
        const Image a = render_view(s, 0, 0.0);
        CHECK(render_view(s, 2, 1.7) == a);
        CHECK(render_view(s, 1, 0.3) == a);
    }
    SUBCASE("a moving card shifts by velocity times elapsed time")
    {
        SceneSpec s;
        s.width = 96;
        s.height = 64;
        ForegroundCard card;
        card.position = Vec2(30, 20);
        card.size = Vec2(24, 24);
        card.velocity = Vec2(1.5, 0.0);
        s.foreground = card;
        const Image a = render_view(s, s.reference(), 0.0);
        const Image b = render_view(s, s.reference(), 1.0);
        CHECK(max_abs_diff(render_view(s, s.reference(), 0.0), a) == 0.0);
        // Inside the card, b(x + 1.5) equals a(x) up to interpolation.
        double err = 0;
        for (int y = 24; y < 40; ++y)
            for (int x = 34; x < 50; ++x) err = std::max(err, (sample_bilinear(b, x + 1.5, y) - a.pixel(x, y)).norm());
        CHECK(err < 0.05);
        const FlowField f = analytic_flow(s, s.reference(), 0.0, s.reference(), 1.0);
        CHECK(f.at(40, 30).isApprox(Vec2(1.5, 0)));
        CHECK(f.at(5, 5).norm() == 0.0);
    }
    SUBCASE("depth sets the disparity between lenses")
    {
        SceneSpec s;
        s.width = 96;
        s.height = 64;
        s.baseline = 4.0;
        ForegroundCard card;
        card.position = Vec2(30, 20);
        card.size = Vec2(24, 24);
        s.foreground = card;
        REQUIRE(s.reference() == 1);
        const FlowField f = analytic_flow(s, 1, 0.0, 0, 0.0);
        CHECK(f.at(5, 5).isApprox(Vec2(-2.0, 0)));     // background, depth 2
        CHECK(f.at(40, 30).isApprox(Vec2(-4.0, 0)));   // card, depth 1
        // The flow maps colours between the two views.
        const Image r = render_view(s, 1, 0.0), o = render_view(s, 0, 0.0);
        double err = 0;
        for (int y = 2; y < 62; ++y)
            for (int x = 10; x < 90; ++x) {
                if (x > 22 && x < 58) continue;  // near the card edges in either view
                err = std::max(err, (sample_bilinear(o, x + f.at(x, y).x(), y + f.at(x, y).y()) - r.pixel(x, y)).norm());
            }
        CHECK(err < 0.05);
    }
    SUBCASE("spec parsing")
    {
        const auto s = parse_scene_spec(R"({"width": 32, "height": 24, "lenses": 9, "layout": "grid",
            "baseline": 1.5, "foreground": {"position": [4, 5], "size": [8, 6], "velocity": [1, 0]}})");
        CHECK(s.lenses == 9);
        CHECK(s.grid);
        CHECK(s.foreground->size == Vec2(8, 6));
        CHECK(s.lens_offset(0) == Vec2(-2, -2));  // reference is lens 8 at (2, 2)
        CHECK_THROWS_AS(parse_scene_spec(R"({"width": -4})"), Error);
        CHECK_THROWS_AS(parse_scene_spec(R"({"layout": "ring"})"), Error);
        CHECK_THROWS_AS(parse_scene_spec("{"), Error);
    }
}

TEST_CASE("analytic flows agree with target positions")
{
    // The GT frame at the source time, sampled at a reference pixel's target
    // position, must show that reference pixel's colour.
    const SceneSpec s = small_scene();
    const auto dir = testing::scratch("analytic_targets");
    const auto out = generate_synthetic(s, dir);
    Sequence seq = load_sequence(out.manifest);
    assign_roles(seq.frames, seq.reference_lens);
    const auto& task = out.tasks.tasks.at(0);
    const auto pairs = task_flow_pairs(seq.frames, task);
    REQUIRE(pairs.size() >= 6);
    FlowBundle f;
    f.src_to_prev = read_flow(out.flows_dir / flow_file_name(pairs[0].first, pairs[0].second));
    f.src_to_next = read_flow(out.flows_dir / flow_file_name(pairs[1].first, pairs[1].second));
    f.prev_to_src = read_flow(out.flows_dir / flow_file_name(pairs[2].first, pairs[2].second));
    f.next_to_src = read_flow(out.flows_dir / flow_file_name(pairs[3].first, pairs[3].second));
    f.prev_to_next = read_flow(out.flows_dir / flow_file_name(pairs[4].first, pairs[4].second));
    f.next_to_prev = read_flow(out.flows_dir / flow_file_name(pairs[5].first, pairs[5].second));
    CHECK_NOTHROW(f.check(s.width, s.height));
    const Image gt = read_image(out.gt_dir / frame_file_name(task.source));
    const std::array<const Image*, 3> frames = {&seq.frames[task.source].image, &seq.frames[task.ref_prev].image,
                                                &seq.frames[task.ref_next].image};
    for (auto slot : {kSource, kRefPrev, kRefNext}) {
        double se = 0;
        int n = 0;
        for (int y = 2; y < s.height - 2; ++y)
            for (int x = 8; x < s.width - 8; ++x) {
                if (x > 12 && x < 50 && y > 8 && y < 38) continue;  // card and its edges
                const Vec2 q = target_position(Vec2(x, y), slot, task.t, f);
                se += (sample_bilinear(gt, q.x(), q.y()) - frames[slot]->pixel(x, y)).squaredNorm() / 3.0;
                ++n;
            }
        CHECK(psnr_from_mse(se / n) > 35.0);
    }
    // Inside the moving card the reference frames must travel with it.
    for (auto slot : {kRefPrev, kRefNext}) {
        const Vec2 corner = s.foreground->position + s.foreground->velocity * seq.frames[task.ref_prev].time;
        double se = 0;
        int n = 0;
        for (int y = static_cast<int>(corner.y()) + 4; y < corner.y() + 14; ++y)
            for (int x = static_cast<int>(corner.x()) + 4; x < corner.x() + 14; ++x) {
                const Vec2 p(x, y);
                const Vec2 home = slot == kRefPrev ? p : p + Vec2(f.next_to_prev->at(x, y));
                if (home.x() < corner.x() + 3 || home.x() > corner.x() + 15) continue;
                const Vec2 q = target_position(p, slot, task.t, f);
                se += (sample_bilinear(gt, q.x(), q.y()) - frames[slot]->pixel(x, y)).squaredNorm() / 3.0;
                ++n;
            }
        REQUIRE(n > 50);
        CHECK(psnr_from_mse(se / n) > 35.0);
    }
}

TEST_CASE("metrics against the reference implementation")
{
    const auto& o = testing::frozen()["metrics"];
    const Image base = read_image(testing::data_dir() / "metrics_base.png");
    const Image noise = read_image(testing::data_dir() / "metrics_noise.png");
    CHECK(ssim(base, base) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(ssim(base, noise) == doctest::Approx(o["ssim_noise"].get<double>()).epsilon(1e-9));
    CHECK(mse(base, noise) == doctest::Approx(o["mse_noise"].get<double>()).epsilon(1e-12));
    REQUIRE_FALSE(o["offset_clipped"].get<bool>());
    Image shifted = base;
    for (int c = 0; c < 3; ++c) shifted.channel(c) += 0.1;
    CHECK(mse(base, shifted) == doctest::Approx(o["mse_offset"].get<double>()).epsilon(1e-9));
    const auto m = evaluate(base, base);
    CHECK(std::isinf(m.psnr));
    CHECK(evaluate(base, shifted).psnr == doctest::Approx(20.0).epsilon(1e-9));
    CHECK_THROWS_AS(ssim(base, testing::textured(10, 10)), Error);
}

TEST_CASE("point tracking")
{
    std::vector<Image> still(10, testing::textured(60, 50));
    const auto t0 = track_trajectory(still, Vec2(30, 25));
    CHECK_FALSE(t0.lost);
    REQUIRE(t0.points.size() == 10);
    for (const auto& p : t0.points) CHECK((p - Vec2(30, 25)).norm() < 1e-9);

    std::vector<Image> moving;
    for (int f = 0; f < 10; ++f) {
        Image img(80, 50);
        for (int y = 0; y < 50; ++y)
            for (int x = 0; x < 80; ++x)
                for (int c = 0; c < 3; ++c)
                    img.channel(c)(y, x) = 0.5 + 0.3 * std::sin(0.35 * (x - 0.7 * f) + 0.2 * y + c) *
                                                     std::cos(0.25 * y - 0.1 * (x - 0.7 * f));
        moving.push_back(img);
    }
    const auto t1 = track_trajectory(moving, Vec2(30, 25));
    CHECK_FALSE(t1.lost);
    REQUIRE(t1.points.size() == 10);
    for (int f = 0; f < 10; ++f) CHECK((t1.points[f] - Vec2(30 + 0.7 * f, 25)).norm() < 0.25);

    std::vector<Image> flat(5, Image(40, 40, 0.5));
    CHECK(track_trajectory(flat, Vec2(20, 20)).lost);

    std::vector<Image> jump = {testing::textured(60, 50), testing::noise_image(60, 50, 3)};
    const auto t2 = track_trajectory(jump, Vec2(30, 25));
    CHECK(t2.lost);
    CHECK(t2.points.size() == 1);
}

TEST_CASE("pipeline: missing flows without the estimator name the fields")
{
    const auto dir = testing::scratch("pipeline_missing");
    SceneSpec s = small_scene();
    const auto out = generate_synthetic(s, dir / "scene");
    std::filesystem::remove_all(out.flows_dir);
    std::filesystem::create_directories(out.flows_dir);
    PipelineConfig cfg;
    cfg.estimate_missing_flows = false;
    cfg.workers = 1;
    try {
        run_pipeline(cfg, out.manifest, dir / "out", {out.flows_dir, std::nullopt});
        FAIL("expected an error");
    } catch (const Error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("src_to_prev") != std::string::npos);
        CHECK(msg.find("next_to_prev") != std::string::npos);
        CHECK(msg.find(".flo") != std::string::npos);
    }
    CHECK_THROWS_AS(run_pipeline(cfg, dir / "nope.json", dir / "out2"), Error);
}

TEST_CASE("pipeline: outputs are deterministic across worker counts")
{
    const auto dir = testing::scratch("pipeline_determinism");
    const auto out = generate_synthetic(small_scene(), dir / "scene");
    PipelineConfig one;
    one.workers = 1;
    PipelineConfig two;
    two.workers = 2;
    const PipelineOptions opts{out.flows_dir, out.gt_dir};
    const auto s1 = run_pipeline(one, out.manifest, dir / "a", opts);
    const auto s2 = run_pipeline(two, out.manifest, dir / "b", opts);
    CHECK(s1.tasks == static_cast<int>(out.tasks.tasks.size()));
    CHECK(s1.tasks == s2.tasks);
    REQUIRE(s1.mean_ssim);
    CHECK(*s1.mean_ssim > 0.9);
    CHECK(slurp(dir / "a" / "report.json") == slurp(dir / "b" / "report.json"));
    for (const auto& t : out.tasks.tasks) {
        const auto name = frame_file_name(t.source);
        REQUIRE(std::filesystem::exists(dir / "a" / name));
        CHECK(slurp(dir / "a" / name) == slurp(dir / "b" / name));
    }
    CHECK(std::filesystem::exists(dir / "a" / "timing.json"));

    const auto report = nlohmann::json::parse(slurp(dir / "a" / "report.json"));
    CHECK(report["tasks"].size() == out.tasks.tasks.size());
    CHECK(report["frames"].get<int>() == static_cast<int>(read_manifest(out.manifest).frames.size()));

    const auto eval = evaluate_directories(dir / "a", out.gt_dir, dir / "eval.json");
    CHECK(eval.size() == out.tasks.tasks.size());
    CHECK(std::filesystem::exists(dir / "eval.json"));
    CHECK_THROWS_AS(evaluate_directories(dir / "a", dir / "missing_gt", dir / "eval2.json"), Error);
}

TEST_CASE("worker count resolution")
{
    PipelineConfig c;
    c.workers = 3;
    CHECK(resolve_workers(c) == 3);
    c.workers = 0;
    setenv("HSVIDEO_WORKERS", "2", 1);
    CHECK(resolve_workers(c) == 2);
    setenv("HSVIDEO_WORKERS", "many", 1);
    CHECK_THROWS_AS(resolve_workers(c), Error);
    unsetenv("HSVIDEO_WORKERS");
    CHECK(resolve_workers(c) >= 1);
}
