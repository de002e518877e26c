#include "hsvideo/flow.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>
#include <vector>

namespace hsvideo {
namespace {

template <typename T>
T to_little(T value)
{
    if constexpr (std::endian::native == std::endian::little) {
        return value;
    } else {
        auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
        std::reverse(bytes.begin(), bytes.end());
        return std::bit_cast<T>(bytes);
    }
}

template <typename T>
void put(std::vector<char>& out, T value)
{
    const auto le = to_little(value);
    char bytes[sizeof(T)];
    std::memcpy(bytes, &le, sizeof(T));
    out.insert(out.end(), bytes, bytes + sizeof(T));
}

template <typename T>
T get(const std::vector<char>& in, std::size_t offset)
{
    T value;
    std::memcpy(&value, in.data() + offset, sizeof(T));
    return to_little(value);
}

}  // namespace

FlowField read_flow(const std::filesystem::path& file)
{
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Error("cannot open flow file '" + file.string() + "'");
    const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 12) throw Error("flow file '" + file.string() + "' is shorter than its header");

    const float magic = get<float>(bytes, 0);
    if (magic != kFloMagic) throw Error("flow file '" + file.string() + "' has a bad magic number");
    const auto width = get<std::int32_t>(bytes, 4);
    const auto height = get<std::int32_t>(bytes, 8);
    if (width <= 0 || height <= 0 || width > (1 << 16) || height > (1 << 16))
        throw Error("flow file '" + file.string() + "' has invalid dimensions");
    const std::size_t payload = static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 8;
    if (bytes.size() < 12 + payload) throw Error("flow file '" + file.string() + "' has a truncated payload");

    FlowField field(width, height);
    std::size_t offset = 12;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            field.u(y, x) = get<float>(bytes, offset);
            field.v(y, x) = get<float>(bytes, offset + 4);
            offset += 8;
        }
    if (!field.finite()) throw Error("flow file '" + file.string() + "' contains non-finite vectors");
    return field;
}

void write_flow(const FlowField& field, const std::filesystem::path& file)
{
    if (!field.finite()) throw Error("refusing to write non-finite flow to '" + file.string() + "'");
    std::vector<char> out;
    out.reserve(12 + static_cast<std::size_t>(field.width()) * field.height() * 8);
    put(out, kFloMagic);
    put(out, static_cast<std::int32_t>(field.width()));
    put(out, static_cast<std::int32_t>(field.height()));
    for (int y = 0; y < field.height(); ++y)
        for (int x = 0; x < field.width(); ++x) {
            put(out, field.u(y, x));
            put(out, field.v(y, x));
        }
    std::ofstream f(file, std::ios::binary);
    if (!f) throw Error("cannot open '" + file.string() + "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw Error("failed writing flow file '" + file.string() + "'");
}

// ---------------------------------------------------------------------------
// Fallback estimator

namespace {

Plane<double> downsample(const Plane<double>& src)
{
    static constexpr double k[5] = {1 / 16.0, 4 / 16.0, 6 / 16.0, 4 / 16.0, 1 / 16.0};
    const auto h = src.rows();
    const auto w = src.cols();
    Plane<double> tmp(h, w);
    for (Eigen::Index y = 0; y < h; ++y)
        for (Eigen::Index x = 0; x < w; ++x) {
            double s = 0;
            for (int i = -2; i <= 2; ++i) s += k[i + 2] * src(y, std::clamp<Eigen::Index>(x + i, 0, w - 1));
            tmp(y, x) = s;
        }
    const auto oh = (h + 1) / 2;
    const auto ow = (w + 1) / 2;
    Plane<double> out(oh, ow);
    for (Eigen::Index y = 0; y < oh; ++y)
        for (Eigen::Index x = 0; x < ow; ++x) {
            double s = 0;
            for (int i = -2; i <= 2; ++i) s += k[i + 2] * tmp(std::clamp<Eigen::Index>(2 * y + i, 0, h - 1), 2 * x);
            out(y, x) = s;
        }
    return out;
}

double median9(std::array<double, 9> v)
{
    std::nth_element(v.begin(), v.begin() + 4, v.end());
    return v[4];
}

Plane<double> median3x3(const Plane<double>& p)
{
    const auto h = p.rows();
    const auto w = p.cols();
    Plane<double> out(h, w);
    for (Eigen::Index y = 0; y < h; ++y)
        for (Eigen::Index x = 0; x < w; ++x) {
            std::array<double, 9> v{};
            int n = 0;
            for (int j = -1; j <= 1; ++j)
                for (int i = -1; i <= 1; ++i)
                    v[n++] = p(std::clamp<Eigen::Index>(y + j, 0, h - 1), std::clamp<Eigen::Index>(x + i, 0, w - 1));
            out(y, x) = median9(v);
        }
    return out;
}

struct LevelFlow {
    Plane<double> u, v;
};

LevelFlow match_level(const Plane<double>& a, const Plane<double>& b, const LevelFlow& pred,
                      const FlowEstimatorParams& params)
{
    const auto h = a.rows();
    const auto w = a.cols();
    const int r = params.radius;
    const int pr = params.patch_radius;
    const int side = 2 * r + 1;
    LevelFlow out{Plane<double>(h, w), Plane<double>(h, w)};
    std::vector<double> cost(static_cast<std::size_t>(side * side));

    auto at = [](const Plane<double>& p, Eigen::Index x, Eigen::Index y) {
        return p(std::clamp<Eigen::Index>(y, 0, p.rows() - 1), std::clamp<Eigen::Index>(x, 0, p.cols() - 1));
    };

    for (Eigen::Index y = 0; y < h; ++y)
        for (Eigen::Index x = 0; x < w; ++x) {
            const auto bx = static_cast<Eigen::Index>(std::lround(pred.u(y, x)));
            const auto by = static_cast<Eigen::Index>(std::lround(pred.v(y, x)));
            int best = -1;
            double best_cost = std::numeric_limits<double>::infinity();
            for (int oy = -r; oy <= r; ++oy)
                for (int ox = -r; ox <= r; ++ox) {
                    double ssd = 0;
                    for (int j = -pr; j <= pr; ++j)
                        for (int i = -pr; i <= pr; ++i) {
                            const double d = at(a, x + i, y + j) - at(b, x + bx + ox + i, y + by + oy + j);
                            ssd += d * d;
                        }
                    // Small pull toward the prediction breaks ties deterministically.
                    const double c = ssd + 1e-9 * (ox * ox + oy * oy);
                    const int idx = (oy + r) * side + (ox + r);
                    cost[idx] = ssd;
                    if (c < best_cost) {
                        best_cost = c;
                        best = idx;
                    }
                }
            const int ox = best % side - r;
            const int oy = best / side - r;
            double du = 0;
            double dv = 0;
            auto refine = [](double cm, double c0, double cp) {
                const double denom = cm - 2 * c0 + cp;
                if (denom <= 0) return 0.0;
                return std::clamp(0.5 * (cm - cp) / denom, -0.5, 0.5);
            };
            const bool exact = cost[best] == 0.0;  // nothing to refine
            if (!exact && ox > -r && ox < r) du = refine(cost[best - 1], cost[best], cost[best + 1]);
            if (!exact && oy > -r && oy < r) dv = refine(cost[best - side], cost[best], cost[best + side]);
            out.u(y, x) = static_cast<double>(bx + ox) + du;
            out.v(y, x) = static_cast<double>(by + oy) + dv;
        }
    out.u = median3x3(out.u);
    out.v = median3x3(out.v);
    return out;
}

}  // namespace

FlowField estimate_flow(const Image& a, const Image& b, const FlowEstimatorParams& params)
{
    if (a.width() != b.width() || a.height() != b.height())
        throw Error("estimate_flow: images differ in size");
    std::vector<Plane<double>> pa{a.luminance()};
    std::vector<Plane<double>> pb{b.luminance()};
    for (int l = 1; l < params.levels; ++l) {
        if (std::min(pa.back().rows(), pa.back().cols()) < 16) break;
        pa.push_back(downsample(pa.back()));
        pb.push_back(downsample(pb.back()));
    }

    LevelFlow flow{Plane<double>::Zero(pa.back().rows(), pa.back().cols()),
                   Plane<double>::Zero(pa.back().rows(), pa.back().cols())};
    for (int l = static_cast<int>(pa.size()) - 1; l >= 0; --l) {
        const auto h = pa[l].rows();
        const auto w = pa[l].cols();
        LevelFlow pred{Plane<double>(h, w), Plane<double>(h, w)};
        if (flow.u.rows() == h && flow.u.cols() == w) {
            pred = flow;
        } else {
            for (Eigen::Index y = 0; y < h; ++y)
                for (Eigen::Index x = 0; x < w; ++x) {
                    pred.u(y, x) = 2.0 * sample_bilinear(flow.u, x / 2.0, y / 2.0);
                    pred.v(y, x) = 2.0 * sample_bilinear(flow.v, x / 2.0, y / 2.0);
                }
        }
        flow = match_level(pa[l], pb[l], pred, params);
    }

    FlowField out(a.width(), a.height());
    out.u = flow.u.cast<float>();
    out.v = flow.v.cast<float>();
    return out;
}

// ---------------------------------------------------------------------------
// Bundles and validation

std::vector<std::string_view> FlowBundle::missing_required() const
{
    std::vector<std::string_view> missing;
    if (!src_to_prev) missing.emplace_back("src_to_prev");
    if (!src_to_next) missing.emplace_back("src_to_next");
    if (!prev_to_src) missing.emplace_back("prev_to_src");
    if (!next_to_src) missing.emplace_back("next_to_src");
    if (!prev_to_next) missing.emplace_back("prev_to_next");
    if (!next_to_prev) missing.emplace_back("next_to_prev");
    return missing;
}

void FlowBundle::check(int width, int height) const
{
    const auto missing = missing_required();
    if (!missing.empty()) {
        std::string msg = "flow bundle is missing required fields:";
        for (auto m : missing) msg += " " + std::string(m);
        throw Error(msg);
    }
    const std::pair<const char*, const std::optional<FlowField>*> fields[] = {
        {"src_to_prev", &src_to_prev},         {"src_to_next", &src_to_next},
        {"prev_to_src", &prev_to_src},         {"next_to_src", &next_to_src},
        {"prev_to_next", &prev_to_next},       {"next_to_prev", &next_to_prev},
        {"src_to_prev_src", &src_to_prev_src}, {"src_to_next_src", &src_to_next_src},
        {"next_to_next_ref", &next_to_next_ref}};
    for (const auto& [name, f] : fields) {
        if (!*f) continue;
        if ((*f)->width() != width || (*f)->height() != height)
            throw Error(std::string("flow field ") + name + " does not match the frame size");
        if (!(*f)->finite()) throw Error(std::string("flow field ") + name + " has non-finite vectors");
    }
}

FlowBundle FlowBundle::zero(int width, int height)
{
    FlowBundle b;
    const FlowField z(width, height);
    b.src_to_prev = b.src_to_next = b.prev_to_src = b.next_to_src = b.prev_to_next = b.next_to_prev = z;
    return b;
}

CorrespondenceRoute route_for(FrameSlot slot, const FlowBundle& f)
{
    switch (slot) {
    case kSource:
        return {kRefPrev, &*f.src_to_prev, &*f.prev_to_src, kRefNext, &*f.src_to_next, &*f.next_to_src};
    case kRefPrev:
        return {kRefNext, &*f.prev_to_next, &*f.next_to_prev, kSource, &*f.prev_to_src, &*f.src_to_prev};
    case kRefNext:
        return {kRefPrev, &*f.next_to_prev, &*f.prev_to_next, kSource, &*f.next_to_src, &*f.src_to_next};
    }
    throw Error("invalid frame slot");
}

double patch_msd(const Image& a, int x1, int y1, const Image& b, double x2, double y2, int r)
{
    const int w = b.width();
    const int h = b.height();
    // The partner patch is a rigid translate, so one set of bilinear weights
    // serves every tap.
    const double fx0 = std::floor(x2);
    const double fy0 = std::floor(y2);
    const double fx = x2 - fx0;
    const double fy = y2 - fy0;
    const int bx = static_cast<int>(fx0);
    const int by = static_cast<int>(fy0);
    double sum = 0;
    int count = 0;
    for (int j = -r; j <= r; ++j)
        for (int i = -r; i <= r; ++i) {
            const int ax = x1 + i;
            const int ay = y1 + j;
            if (!a.contains(ax, ay)) continue;
            if (!inside_frame(x2 + i, y2 + j, w, h)) continue;
            const int sx0 = bx + i;
            const int sy0 = by + j;
            const int sx1 = std::min(sx0 + 1, w - 1);
            const int sy1 = std::min(sy0 + 1, h - 1);
            for (int c = 0; c < 3; ++c) {
                const auto& p = b.channel(c);
                const double top = (1 - fx) * p(sy0, sx0) + fx * p(sy0, sx1);
                const double bottom = (1 - fx) * p(sy1, sx0) + fx * p(sy1, sx1);
                const double d = a.channel(c)(ay, ax) - ((1 - fy) * top + fy * bottom);
                sum += d * d;
            }
            ++count;
        }
    if (count == 0) return std::numeric_limits<double>::infinity();
    return sum / (3.0 * count);
}

double patch_distance(const std::array<const Image*, 3>& frames, FrameSlot slot, int x, int y,
                      const FlowBundle& flows, int patch_radius)
{
    const auto route = route_for(slot, flows);
    const Vec2 d1 = route.first->at(x, y);
    const Vec2 d2 = route.second->at(x, y);
    const Image& self = *frames[slot];
    const double a = patch_msd(self, x, y, *frames[route.first_target], x + d1.x(), y + d1.y(), patch_radius);
    const double b = patch_msd(self, x, y, *frames[route.second_target], x + d2.x(), y + d2.y(), patch_radius);
    return std::max(a, b);
}

bool forward_backward_ok(const FlowField& fwd, const FlowField& bwd, int x, int y, double threshold)
{
    const Vec2 f = fwd.at(x, y);
    const double qx = x + f.x();
    const double qy = y + f.y();
    if (!inside_frame(qx, qy, bwd.width(), bwd.height())) return false;
    return (f + bwd.sample(qx, qy)).norm() <= threshold;
}

WeightMap reference_pair_weight(const std::array<const Image*, 3>& frames, FrameSlot slot, const FlowBundle& flows,
                                const ValidationParams& params)
{
    if (slot == kSource) throw Error("reference_pair_weight: not a reference slot");
    const int w = frames[0]->width();
    const int h = frames[0]->height();
    const auto route = route_for(slot, flows);
    const Image& self = *frames[slot];
    const Image& other = *frames[route.first_target];
    WeightMap m(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!forward_backward_ok(*route.first, *route.first_back, x, y, params.fb_threshold)) {
                m(y, x) = 0.0;
                continue;
            }
            const Vec2 d = route.first->at(x, y);
            m(y, x) = validation_weight(patch_msd(self, x, y, other, x + d.x(), y + d.y(), params.patch_radius),
                                        params.sigma);
        }
    return m;
}

std::array<WeightMap, 3> validate_flow(const std::array<const Image*, 3>& frames, const FlowBundle& flows,
                                       const ValidationParams& params)
{
    const int w = frames[0]->width();
    const int h = frames[0]->height();
    flows.check(w, h);
    std::array<WeightMap, 3> maps;
    for (int s = 0; s < 3; ++s) {
        const auto slot = static_cast<FrameSlot>(s);
        const auto route = route_for(slot, flows);
        WeightMap& m = maps[s];
        m.resize(h, w);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                if (!forward_backward_ok(*route.first, *route.first_back, x, y, params.fb_threshold) ||
                    !forward_backward_ok(*route.second, *route.second_back, x, y, params.fb_threshold)) {
                    m(y, x) = 0.0;
                    continue;
                }
                const double d = patch_distance(frames, slot, x, y, flows, params.patch_radius);
                m(y, x) = validation_weight(d, params.sigma);
            }
    }
    return maps;
}

}  // namespace hsvideo
