#include "hsvideo/superpixel.hpp"

#include <limits>
#include <numeric>
#include <queue>
#include <set>

namespace hsvideo {
namespace {

double srgb_to_linear(double c)
{
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double lab_f(double t)
{
    constexpr double delta = 6.0 / 29.0;
    return t > delta * delta * delta ? std::cbrt(t) : t / (3 * delta * delta) + 4.0 / 29.0;
}

Color rgb_to_lab(const Color& rgb)
{
    const double r = srgb_to_linear(rgb[0]);
    const double g = srgb_to_linear(rgb[1]);
    const double b = srgb_to_linear(rgb[2]);
    const double x = (0.4124 * r + 0.3576 * g + 0.1805 * b) / 0.95047;
    const double y = 0.2126 * r + 0.7152 * g + 0.0722 * b;
    const double z = (0.0193 * r + 0.1192 * g + 0.9505 * b) / 1.08883;
    const double fx = lab_f(x);
    const double fy = lab_f(y);
    const double fz = lab_f(z);
    return Color(116 * fy - 16, 500 * (fx - fy), 200 * (fy - fz));
}

double percentile(std::vector<double> v, double q)
{
    if (v.empty()) return 0.0;
    const auto k = static_cast<std::size_t>(std::clamp(q * (v.size() - 1), 0.0, double(v.size() - 1)));
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
    return v[k];
}

struct Center {
    Color lab;
    double flow;
    double x, y;
};

constexpr int kDx[4] = {1, -1, 0, 0};
constexpr int kDy[4] = {0, 0, 1, -1};

/// Keeps the largest 4-connected piece of every label and hands each other
/// piece to the largest region it touches.
void enforce_connectivity(IdPlane& labels)
{
    const int h = static_cast<int>(labels.rows());
    const int w = static_cast<int>(labels.cols());
    IdPlane comp = IdPlane::Constant(h, w, -1);
    std::vector<int> comp_label;
    std::vector<int> comp_size;
    std::vector<std::pair<int, int>> stack;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (comp(y, x) >= 0) continue;
            const int id = static_cast<int>(comp_label.size());
            const int lab = labels(y, x);
            comp_label.push_back(lab);
            comp_size.push_back(0);
            stack.assign(1, {x, y});
            comp(y, x) = id;
            while (!stack.empty()) {
                const auto [cx, cy] = stack.back();
                stack.pop_back();
                ++comp_size[id];
                for (int d = 0; d < 4; ++d) {
                    const int nx = cx + kDx[d];
                    const int ny = cy + kDy[d];
                    if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                    if (comp(ny, nx) >= 0 || labels(ny, nx) != lab) continue;
                    comp(ny, nx) = id;
                    stack.push_back({nx, ny});
                }
            }
        }

    const int ncomp = static_cast<int>(comp_label.size());
    int max_label = 0;
    for (int l : comp_label) max_label = std::max(max_label, l);
    std::vector<int> keeper(static_cast<std::size_t>(max_label) + 1, -1);
    for (int c = 0; c < ncomp; ++c) {
        int& k = keeper[comp_label[c]];
        if (k < 0 || comp_size[c] > comp_size[k]) k = c;
    }

    std::vector<std::set<int>> comp_nbrs(static_cast<std::size_t>(ncomp));
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int d = 0; d < 2; ++d) {
                const int nx = x + (d == 0 ? 1 : 0);
                const int ny = y + (d == 1 ? 1 : 0);
                if (nx >= w || ny >= h) continue;
                const int a = comp(y, x);
                const int b = comp(ny, nx);
                if (a != b) {
                    comp_nbrs[a].insert(b);
                    comp_nbrs[b].insert(a);
                }
            }

    // resolved[c] is the final label of component c, -1 while pending.
    std::vector<int> resolved(static_cast<std::size_t>(ncomp), -1);
    std::vector<int> label_size(static_cast<std::size_t>(max_label) + 1, 0);
    std::vector<int> pending;
    for (int c = 0; c < ncomp; ++c) {
        if (keeper[comp_label[c]] == c) {
            resolved[c] = comp_label[c];
            label_size[comp_label[c]] += comp_size[c];
        } else {
            pending.push_back(c);
        }
    }
    while (!pending.empty()) {
        std::vector<int> still;
        for (int c : pending) {
            int best = -1;
            for (int n : comp_nbrs[c]) {
                if (resolved[n] < 0) continue;
                const int l = resolved[n];
                if (best < 0 || label_size[l] > label_size[best] || (label_size[l] == label_size[best] && l < best))
                    best = l;
            }
            if (best < 0) {
                still.push_back(c);
                continue;
            }
            resolved[c] = best;
            label_size[best] += comp_size[c];
        }
        if (still.size() == pending.size()) throw Error("connectivity pass failed to converge");
        pending.swap(still);
    }

    // Contiguous ids in raster order of first appearance.
    std::vector<int> remap(static_cast<std::size_t>(max_label) + 1, -1);
    int next = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int l = resolved[comp(y, x)];
            if (remap[l] < 0) remap[l] = next++;
            labels(y, x) = remap[l];
        }
}

}  // namespace

void compute_region_stats(SuperpixelMap& map, const Image& image)
{
    const int h = map.height();
    const int w = map.width();
    const int n = map.labels.size() ? map.labels.maxCoeff() + 1 : 0;
    std::vector<Region> regions(static_cast<std::size_t>(n));
    std::vector<std::set<int>> nbrs(static_cast<std::size_t>(n));
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int l = map.labels(y, x);
            auto& r = regions[l];
            ++r.pixel_count;
            r.mean_color += image.pixel(x, y);
            r.bbox.extend(x, y);
            if (x + 1 < w && map.labels(y, x + 1) != l) {
                nbrs[l].insert(map.labels(y, x + 1));
                nbrs[map.labels(y, x + 1)].insert(l);
            }
            if (y + 1 < h && map.labels(y + 1, x) != l) {
                nbrs[l].insert(map.labels(y + 1, x));
                nbrs[map.labels(y + 1, x)].insert(l);
            }
        }
    for (int i = 0; i < n; ++i) {
        auto& r = regions[i];
        if (r.pixel_count > 0) r.mean_color /= r.pixel_count;
        r.neighbors.assign(nbrs[i].begin(), nbrs[i].end());
        r.members = {i};
    }
    map.regions = std::move(regions);
    map.groups.clear();
}

SuperpixelMap segment(const Image& image, const Plane<double>& flow_magnitude, const SegmentParams& params)
{
    const int w = image.width();
    const int h = image.height();
    if (flow_magnitude.rows() != h || flow_magnitude.cols() != w)
        throw Error("segment: flow magnitude does not match the image size");
    const double area = static_cast<double>(w) * h;
    const int k = params.count > 0 ? params.count
                                   : std::max(1, static_cast<int>(std::lround(area / params.mean_area)));

    Plane<double> lab[3] = {Plane<double>(h, w), Plane<double>(h, w), Plane<double>(h, w)};
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const Color c = rgb_to_lab(image.pixel(x, y));
            for (int i = 0; i < 3; ++i) lab[i](y, x) = c[i];
        }

    // Motion channel: magnitude over its 95th percentile, on the Lab scale.
    std::vector<double> mags(flow_magnitude.data(), flow_magnitude.data() + flow_magnitude.size());
    double scale = percentile(mags, 0.95);
    if (scale <= 1e-12) scale = flow_magnitude.size() ? flow_magnitude.maxCoeff() : 0.0;
    const Plane<double> motion = scale > 1e-12 ? Plane<double>(flow_magnitude * (100.0 * params.lambda_flow / scale))
                                               : Plane<double>(Plane<double>::Zero(h, w));

    const int nx = std::max(1, static_cast<int>(std::lround(std::sqrt(double(k) * w / h))));
    const int ny = std::max(1, static_cast<int>(std::lround(double(k) / nx)));
    const double step_x = double(w) / nx;
    const double step_y = double(h) / ny;
    const double S = std::sqrt(area / (nx * ny));
    const double spatial = (params.compactness / S) * (params.compactness / S);

    std::vector<Center> centers;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const int cx = std::clamp(static_cast<int>((i + 0.5) * step_x), 0, w - 1);
            const int cy = std::clamp(static_cast<int>((j + 0.5) * step_y), 0, h - 1);
            centers.push_back({Color(lab[0](cy, cx), lab[1](cy, cx), lab[2](cy, cx)), motion(cy, cx),
                               (i + 0.5) * step_x - 0.5, (j + 0.5) * step_y - 0.5});
        }

    IdPlane labels = IdPlane::Constant(h, w, -1);
    Plane<double> dist(h, w);
    const double reach = std::max(step_x, step_y);
    for (int iter = 0; iter < params.iterations; ++iter) {
        dist.setConstant(std::numeric_limits<double>::infinity());
        for (int c = 0; c < static_cast<int>(centers.size()); ++c) {
            const auto& ctr = centers[c];
            const int xa = std::max(0, static_cast<int>(std::floor(ctr.x - reach)));
            const int xb = std::min(w - 1, static_cast<int>(std::ceil(ctr.x + reach)));
            const int ya = std::max(0, static_cast<int>(std::floor(ctr.y - reach)));
            const int yb = std::min(h - 1, static_cast<int>(std::ceil(ctr.y + reach)));
            for (int y = ya; y <= yb; ++y)
                for (int x = xa; x <= xb; ++x) {
                    const double dl = lab[0](y, x) - ctr.lab[0];
                    const double da = lab[1](y, x) - ctr.lab[1];
                    const double db = lab[2](y, x) - ctr.lab[2];
                    const double dm = motion(y, x) - ctr.flow;
                    const double dx = x - ctr.x;
                    const double dy = y - ctr.y;
                    const double d = dl * dl + da * da + db * db + dm * dm + spatial * (dx * dx + dy * dy);
                    if (d < dist(y, x)) {
                        dist(y, x) = d;
                        labels(y, x) = c;
                    }
                }
        }
        // Pixels no window reached join the spatially nearest center.
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                if (labels(y, x) >= 0) continue;
                double best = std::numeric_limits<double>::infinity();
                for (int c = 0; c < static_cast<int>(centers.size()); ++c) {
                    const double d = (x - centers[c].x) * (x - centers[c].x) + (y - centers[c].y) * (y - centers[c].y);
                    if (d < best) {
                        best = d;
                        labels(y, x) = c;
                    }
                }
            }

        std::vector<Center> sums(centers.size(), Center{Color::Zero(), 0, 0, 0});
        std::vector<int> counts(centers.size(), 0);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const int c = labels(y, x);
                sums[c].lab += Color(lab[0](y, x), lab[1](y, x), lab[2](y, x));
                sums[c].flow += motion(y, x);
                sums[c].x += x;
                sums[c].y += y;
                ++counts[c];
            }
        for (std::size_t c = 0; c < centers.size(); ++c) {
            if (counts[c] == 0) continue;
            const double n = counts[c];
            centers[c] = {sums[c].lab / n, sums[c].flow / n, sums[c].x / n, sums[c].y / n};
        }
    }

    enforce_connectivity(labels);
    SuperpixelMap map;
    map.labels = std::move(labels);
    compute_region_stats(map, image);
    return map;
}

void compute_region_motion(SuperpixelMap& map, const FlowField& displacement, const WeightMap& weights,
                           double threshold)
{
    const int n = map.size();
    std::vector<Vec2> good_sum(static_cast<std::size_t>(n), Vec2::Zero());
    std::vector<Vec2> all_sum(static_cast<std::size_t>(n), Vec2::Zero());
    std::vector<int> good_count(static_cast<std::size_t>(n), 0);
    for (int y = 0; y < map.height(); ++y)
        for (int x = 0; x < map.width(); ++x) {
            const int l = map.labels(y, x);
            const Vec2 d = displacement.at(x, y);
            all_sum[l] += d;
            if (weights(y, x) > threshold) {
                good_sum[l] += d;
                ++good_count[l];
            }
        }
    for (int i = 0; i < n; ++i) {
        auto& r = map.regions[i];
        if (good_count[i] > 0)
            r.mean_flow = good_sum[i] / good_count[i];
        else if (r.pixel_count > 0)
            r.mean_flow = all_sum[i] / r.pixel_count;
        else
            r.mean_flow.setZero();
    }
}

int classify(SuperpixelMap& map, const WeightMap& weights, int min_pixels, double threshold)
{
    if (weights.rows() != map.height() || weights.cols() != map.width())
        throw Error("classify: weight map does not match the label map");
    std::vector<int> strong(map.regions.size(), 0);
    for (int y = 0; y < map.height(); ++y)
        for (int x = 0; x < map.width(); ++x)
            if (weights(y, x) > threshold) ++strong[map.labels(y, x)];
    int good = 0;
    for (std::size_t i = 0; i < map.regions.size(); ++i) {
        map.regions[i].good = strong[i] > min_pixels;
        good += map.regions[i].good ? 1 : 0;
    }
    return good;
}

void merge_bad(SuperpixelMap& map, const std::string& frame_name)
{
    const int n = map.size();
    const bool any_good = std::any_of(map.regions.begin(), map.regions.end(), [](const Region& r) { return r.good; });
    if (!any_good && n > 0)
        throw Error("frame '" + frame_name + "' has no well-guided superpixel; synthesis cannot be guided");

    map.groups.clear();
    for (auto& r : map.regions) r.members = {};
    for (int i = 0; i < n; ++i) map.regions[i].members = {i};

    std::vector<bool> absorbed(static_cast<std::size_t>(n), false);
    for (int seed = 0; seed < n; ++seed) {
        if (map.regions[seed].good || absorbed[seed]) continue;
        const Vec2 seed_flow = map.regions[seed].mean_flow;
        std::vector<int> queue{seed};
        std::set<int> in_queue{seed};
        for (;;) {
            std::set<int> candidates;
            for (int q : queue)
                for (int nb : map.regions[q].neighbors)
                    if (!in_queue.count(nb)) candidates.insert(nb);
            if (candidates.empty())
                throw Error("frame '" + frame_name + "': bad superpixel " + std::to_string(seed) +
                            " cannot reach a well-guided neighbor");
            int pick = -1;
            bool pick_good = false;
            double pick_diff = std::numeric_limits<double>::infinity();
            for (int c : candidates) {
                const bool g = map.regions[c].good;
                const double diff = (map.regions[c].mean_flow - seed_flow).norm();
                // Good neighbors always win; motion difference, then id, breaks ties.
                if ((g && !pick_good) || (g == pick_good && diff < pick_diff)) {
                    pick = c;
                    pick_good = g;
                    pick_diff = diff;
                }
            }
            queue.push_back(pick);
            in_queue.insert(pick);
            if (pick_good) break;
        }
        MergedGroup group;
        group.seed = seed;
        group.members = queue;
        for (int m : queue)
            if (!map.regions[m].good && !absorbed[m]) {
                absorbed[m] = true;
                group.rendered.push_back(m);
            }
        map.regions[seed].members = queue;
        map.groups.push_back(std::move(group));
    }
}

}  // namespace hsvideo
