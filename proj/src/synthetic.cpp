#include "hsvideo/synthetic.hpp"

#include "hsvideo/image_io.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace hsvideo {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint32_t hash3(std::int64_t x, std::int64_t y, std::uint32_t seed)
{
    std::uint64_t h = static_cast<std::uint64_t>(x) * 0x9E3779B97F4A7C15ull;
    h ^= static_cast<std::uint64_t>(y) * 0xC2B2AE3D27D4EB4Full + 0x165667B19E3779F9ull;
    h ^= static_cast<std::uint64_t>(seed) * 0x27D4EB2F165667C5ull;
    h ^= h >> 33;
    h *= 0xFF51AFD7ED558CCDull;
    h ^= h >> 33;
    h *= 0xC4CEB9FE1A85EC53ull;
    h ^= h >> 33;
    return static_cast<std::uint32_t>(h);
}

double lattice(std::int64_t x, std::int64_t y, std::uint32_t seed)
{
    return hash3(x, y, seed) / 4294967295.0;
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

// Value noise in [0,1] with features of about `scale` pixels.
double value_noise(double x, double y, double scale, std::uint32_t seed)
{
    const double fx = x / scale;
    const double fy = y / scale;
    const auto ix = static_cast<std::int64_t>(std::floor(fx));
    const auto iy = static_cast<std::int64_t>(std::floor(fy));
    const double tx = smooth(fx - static_cast<double>(ix));
    const double ty = smooth(fy - static_cast<double>(iy));
    const double a = lattice(ix, iy, seed), b = lattice(ix + 1, iy, seed);
    const double c = lattice(ix, iy + 1, seed), d = lattice(ix + 1, iy + 1, seed);
    return (1 - ty) * ((1 - tx) * a + tx * b) + ty * ((1 - tx) * c + tx * d);
}

Color texture(double x, double y, double scale, std::uint32_t seed)
{
    Color c;
    for (int ch = 0; ch < 3; ++ch) {
        const std::uint32_t s = seed * 7919u + static_cast<std::uint32_t>(ch) * 104729u;
        const double v = 0.65 * value_noise(x, y, scale, s) + 0.35 * value_noise(x, y, scale * 0.5, s + 17u);
        c[ch] = 0.1 + 0.8 * v;
    }
    return c;
}

Vec2 json_vec(const json& j, const char* key, const Vec2& fallback)
{
    if (!j.contains(key)) return fallback;
    const auto& a = j.at(key);
    if (!a.is_array() || a.size() != 2) throw Error(std::string("scene spec: ") + key + " must be [x, y]");
    return Vec2(a[0].get<double>(), a[1].get<double>());
}

// Position of the foreground card's top-left corner in a view.
Vec2 card_corner(const SceneSpec& spec, int lens, double time)
{
    const auto& fg = *spec.foreground;
    return fg.position + fg.velocity * time + spec.lens_offset(lens) * (spec.baseline / fg.depth);
}

bool on_card(const SceneSpec& spec, const Vec2& corner, double x, double y)
{
    const auto& fg = *spec.foreground;
    const double u = x - corner.x();
    const double v = y - corner.y();
    return u >= 0.0 && v >= 0.0 && u < fg.size.x() && v < fg.size.y();
}

}  // namespace

void SceneSpec::check() const
{
    if (width < 16 || height < 16) throw Error("scene spec: image must be at least 16x16");
    if (lenses < 2) throw Error("scene spec: need at least 2 lenses");
    if (grid && lenses > 9) throw Error("scene spec: grid layout holds at most 9 lenses");
    if (iterations < 2) throw Error("scene spec: need at least 2 iterations");
    if (!firing_offsets.empty() && static_cast<int>(firing_offsets.size()) != lenses)
        throw Error("scene spec: firing_offsets must list every lens");
    for (double o : firing_offsets)
        if (!(o >= 0.0 && o < 1.0)) throw Error("scene spec: firing offsets must lie in [0, 1)");
    std::set<double> distinct(firing_offsets.begin(), firing_offsets.end());
    if (distinct.size() != firing_offsets.size()) throw Error("scene spec: firing offsets must be distinct");
    if (!std::isfinite(baseline)) throw Error("scene spec: baseline must be finite");
    if (!(background_depth > 0.0)) throw Error("scene spec: background depth must be positive");
    if (!(texture_scale > 0.0)) throw Error("scene spec: texture scale must be positive");
    if (foreground) {
        if (!(foreground->depth > 0.0 && foreground->depth < background_depth))
            throw Error("scene spec: foreground depth must lie between 0 and the background depth");
        if (!foreground->velocity.allFinite()) throw Error("scene spec: velocity must be finite");
        if (!(foreground->size.x() > 0 && foreground->size.y() > 0))
            throw Error("scene spec: foreground size must be positive");
    }
    if (reference_lens && (*reference_lens < 0 || *reference_lens >= lenses))
        throw Error("scene spec: reference lens out of range");
}

double SceneSpec::firing_offset(int lens) const
{
    return firing_offsets.empty() ? static_cast<double>(lens) / lenses : firing_offsets[lens];
}

int SceneSpec::reference() const
{
    if (reference_lens) return *reference_lens;
    int best = 0;
    for (int j = 1; j < lenses; ++j)
        if (firing_offset(j) > firing_offset(best)) best = j;
    return best;
}

Vec2 SceneSpec::lens_offset(int lens) const
{
    auto pos = [this](int j) { return grid ? Vec2(j % 3, j / 3) : Vec2(j, 0); };
    return pos(lens) - pos(reference());
}

SceneSpec parse_scene_spec(const std::string& text)
{
    SceneSpec s;
    try {
        const json j = json::parse(text);
        s.width = j.value("width", s.width);
        s.height = j.value("height", s.height);
        s.lenses = j.value("lenses", s.lenses);
        const std::string layout = j.value("layout", std::string("line"));
        if (layout != "line" && layout != "grid") throw Error("scene spec: layout must be line or grid");
        s.grid = layout == "grid";
        s.baseline = j.value("baseline", s.baseline);
        if (j.contains("firing_offsets")) s.firing_offsets = j.at("firing_offsets").get<std::vector<double>>();
        s.iterations = j.value("iterations", s.iterations);
        s.seed = j.value("seed", s.seed);
        s.background_depth = j.value("background_depth", s.background_depth);
        s.texture_scale = j.value("texture_scale", s.texture_scale);
        if (j.contains("foreground") && !j.at("foreground").is_null()) {
            const auto& f = j.at("foreground");
            ForegroundCard card;
            card.position = json_vec(f, "position", card.position);
            card.size = json_vec(f, "size", card.size);
            card.depth = f.value("depth", card.depth);
            card.velocity = json_vec(f, "velocity", card.velocity);
            card.seed = f.value("seed", card.seed);
            s.foreground = card;
        }
        if (j.contains("reference_lens") && !j.at("reference_lens").is_null())
            s.reference_lens = j.at("reference_lens").get<int>();
    } catch (const json::exception& e) {
        throw Error(std::string("scene spec: ") + e.what());
    }
    s.check();
    return s;
}

SceneSpec read_scene_spec(const fs::path& file)
{
    std::ifstream in(file);
    if (!in) throw Error("cannot open scene spec " + file.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scene_spec(ss.str());
}

Image render_view(const SceneSpec& spec, int lens, double time)
{
    Image img(spec.width, spec.height);
    const Vec2 bg_shift = spec.lens_offset(lens) * (spec.baseline / spec.background_depth);
    const Vec2 corner = spec.foreground ? card_corner(spec, lens, time) : Vec2::Zero();
    for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
            if (spec.foreground && on_card(spec, corner, x, y)) {
                img.set(x, y, texture(x - corner.x(), y - corner.y(), spec.texture_scale * 0.75, spec.foreground->seed));
            } else {
                img.set(x, y, texture(x - bg_shift.x(), y - bg_shift.y(), spec.texture_scale, spec.seed));
            }
        }
    }
    return img;
}

FlowField analytic_flow(const SceneSpec& spec, int lens_a, double time_a, int lens_b, double time_b)
{
    FlowField f(spec.width, spec.height);
    const Vec2 step = spec.lens_offset(lens_b) - spec.lens_offset(lens_a);
    const Vec2 bg = step * (spec.baseline / spec.background_depth);
    Vec2 fg = Vec2::Zero();
    Vec2 corner = Vec2::Zero();
    if (spec.foreground) {
        fg = spec.foreground->velocity * (time_b - time_a) + step * (spec.baseline / spec.foreground->depth);
        corner = card_corner(spec, lens_a, time_a);
    }
    for (int y = 0; y < spec.height; ++y)
        for (int x = 0; x < spec.width; ++x)
            f.set(x, y, spec.foreground && on_card(spec, corner, x, y) ? fg : bg);
    return f;
}

std::vector<SyntheticCapture> capture_schedule(const SceneSpec& spec)
{
    std::vector<SyntheticCapture> out;
    for (int it = 0; it < spec.iterations; ++it)
        for (int j = 0; j < spec.lenses; ++j) out.push_back({j, it + spec.firing_offset(j)});
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.time < b.time; });
    return out;
}

std::vector<std::pair<int, int>> task_flow_pairs(const std::vector<CaptureFrame>& frames, const SynthesisTask& task)
{
    const int s = task.source, p = task.ref_prev, n = task.ref_next;
    std::vector<std::pair<int, int>> pairs = {{s, p}, {s, n}, {p, s}, {n, s}, {p, n}, {n, p}};
    const int lens = frames[s].lens_id;
    int before = -1, after = -1;
    for (int i = s - 1; i >= 0 && before < 0; --i)
        if (frames[i].lens_id == lens) before = i;
    for (int i = s + 1; i < static_cast<int>(frames.size()) && after < 0; ++i)
        if (frames[i].lens_id == lens) after = i;
    int next_ref = -1;
    for (int i = n + 1; i < static_cast<int>(frames.size()) && next_ref < 0; ++i)
        if (frames[i].role == Role::reference) next_ref = i;
    pairs.push_back({s, before});
    pairs.push_back({s, after});
    pairs.push_back({n, next_ref});
    return pairs;
}

std::string flow_file_name(int from, int to)
{
    return "flow_" + std::to_string(from) + "_" + std::to_string(to) + ".flo";
}

std::string frame_file_name(int index)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%04d.png", index);
    return buf;
}

SyntheticOutput generate_synthetic(const SceneSpec& spec, const fs::path& out_dir)
{
    spec.check();
    SyntheticOutput out;
    out.manifest = out_dir / "manifest.json";
    out.flows_dir = out_dir / "flows";
    out.gt_dir = out_dir / "gt";
    fs::create_directories(out_dir / "captures");
    fs::create_directories(out.flows_dir);
    fs::create_directories(out.gt_dir);

    const auto schedule = capture_schedule(spec);
    std::vector<CaptureFrame> frames;
    Manifest manifest;
    manifest.reference_lens = spec.reference();
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "cap_%04zu.png", i);
        const std::string rel = std::string("captures/") + name;
        write_image(render_view(spec, schedule[i].lens, schedule[i].time), out_dir / rel);
        manifest.frames.push_back({schedule[i].lens, schedule[i].time, rel});
        CaptureFrame f;
        f.lens_id = schedule[i].lens;
        f.time = schedule[i].time;
        f.path = rel;
        frames.push_back(std::move(f));
    }
    write_manifest(manifest, out.manifest);

    assign_roles(frames, manifest.reference_lens);
    out.tasks = build_tasks(frames);
    std::set<std::pair<int, int>> written;
    for (const auto& task : out.tasks.tasks) {
        const auto& src = frames[task.source];
        write_image(render_view(spec, spec.reference(), src.time), out.gt_dir / frame_file_name(task.source));
        for (const auto& [a, b] : task_flow_pairs(frames, task)) {
            if (a < 0 || b < 0 || !written.insert({a, b}).second) continue;
            write_flow(analytic_flow(spec, frames[a].lens_id, frames[a].time, frames[b].lens_id, frames[b].time),
                       out.flows_dir / flow_file_name(a, b));
        }
    }
    return out;
}

}  // namespace hsvideo
