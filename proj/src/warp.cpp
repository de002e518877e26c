#include "hsvideo/warp.hpp"

#include <Eigen/LU>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <limits>
#include <set>

namespace hsvideo {

std::vector<std::array<int, 3>> MeshGrid::triangles() const
{
    std::vector<std::array<int, 3>> tris;
    tris.reserve(static_cast<std::size_t>(rows) * cols * 2);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const int tl = index(r, c);
            const int tr = index(r, c + 1);
            const int bl = index(r + 1, c);
            const int br = index(r + 1, c + 1);
            tris.push_back({tr, tl, br});
            tris.push_back({bl, br, tl});
        }
    return tris;
}

std::pair<int, int> MeshGrid::cell_of(const Vec2& p) const
{
    const int c = std::clamp(static_cast<int>(std::floor((p.x() - origin.x()) / cell)), 0, cols - 1);
    const int r = std::clamp(static_cast<int>(std::floor((p.y() - origin.y()) / cell)), 0, rows - 1);
    return {r, c};
}

std::array<int, 4> MeshGrid::cell_corners(int r, int c) const
{
    return {index(r, c), index(r, c + 1), index(r + 1, c), index(r + 1, c + 1)};
}

MeshGrid build_mesh(const BoundingBox& box, double cell)
{
    if (box.empty()) throw Error("build_mesh: empty region");
    MeshGrid m;
    m.cell = cell;
    m.origin = Vec2(box.x0 - 0.5, box.y0 - 0.5);
    m.cols = std::max(1, static_cast<int>(std::ceil(box.width() / cell)));
    m.rows = std::max(1, static_cast<int>(std::ceil(box.height() / cell)));
    m.vertices.resize(m.vertex_count(), 2);
    for (int r = 0; r < m.vertex_rows(); ++r)
        for (int c = 0; c < m.vertex_cols(); ++c)
            m.vertices.row(m.index(r, c)) = (m.origin + Vec2(c * cell, r * cell)).transpose();
    return m;
}

std::array<double, 4> inverse_bilinear(const Vec2& p, const std::array<Vec2, 4>& q)
{
    // p(s,t) = (1-s)(1-t) q0 + s(1-t) q1 + (1-s)t q2 + st q3, solved by Newton.
    const Vec2 e = q[1] - q[0];
    const Vec2 f = q[2] - q[0];
    const Vec2 g = q[0] - q[1] - q[2] + q[3];
    double s = 0.5;
    double t = 0.5;
    for (int it = 0; it < 50; ++it) {
        const Vec2 r = q[0] + s * e + t * f + s * t * g - p;
        if (r.norm() < 1e-15) break;
        Eigen::Matrix2d J;
        J.col(0) = e + t * g;
        J.col(1) = f + s * g;
        const double det = J.determinant();
        if (std::abs(det) < 1e-300) throw Error("inverse_bilinear: degenerate cell");
        const Vec2 step = J.inverse() * r;
        s -= step.x();
        t -= step.y();
    }
    constexpr double tol = 1e-9;
    if (!(s >= -tol && s <= 1 + tol && t >= -tol && t <= 1 + tol))
        throw Error("inverse_bilinear: point lies outside the cell");
    s = std::clamp(s, 0.0, 1.0);
    t = std::clamp(t, 0.0, 1.0);
    return {(1 - s) * (1 - t), s * (1 - t), (1 - s) * t, s * t};
}

FlowField displacement_field(FrameSlot slot, double t, const FlowBundle& flows)
{
    FlowField d;
    switch (slot) {
    case kSource:
        d.u = (1 - t) * flows.src_to_prev->u + t * flows.src_to_next->u;
        d.v = (1 - t) * flows.src_to_prev->v + t * flows.src_to_next->v;
        break;
    case kRefPrev:
        d.u = t * flows.prev_to_next->u;
        d.v = t * flows.prev_to_next->v;
        break;
    case kRefNext:
        d.u = (1 - t) * flows.next_to_prev->u;
        d.v = (1 - t) * flows.next_to_prev->v;
        break;
    }
    return d;
}

Vec2 target_position(const Vec2& p, FrameSlot slot, double t, const FlowBundle& flows)
{
    const int x = static_cast<int>(std::lround(p.x()));
    const int y = static_cast<int>(std::lround(p.y()));
    switch (slot) {
    case kSource:
        return p + (1 - t) * flows.src_to_prev->at(x, y) + t * flows.src_to_next->at(x, y);
    case kRefPrev:
        return p + t * flows.prev_to_next->at(x, y);
    case kRefNext:
        return p + (1 - t) * flows.next_to_prev->at(x, y);
    }
    throw Error("invalid frame slot");
}

// ---------------------------------------------------------------------------
// Solver

namespace {

struct SimilarityCoords {
    double u, v;
};

SimilarityCoords similarity_coords(const Vertices& V, const std::array<int, 3>& tri)
{
    const Vec2 v1 = V.row(tri[0]).transpose();
    const Vec2 v2 = V.row(tri[1]).transpose();
    const Vec2 v3 = V.row(tri[2]).transpose();
    const Vec2 e = v3 - v2;
    const Vec2 re(e.y(), -e.x());  // R = [0 1; -1 0]
    const double n2 = e.squaredNorm();
    return {(v1 - v2).dot(e) / n2, (v1 - v2).dot(re) / n2};
}

Vec2 similarity_residual(const Vertices& W, const std::array<int, 3>& tri, const SimilarityCoords& uv)
{
    const Vec2 v1 = W.row(tri[0]).transpose();
    const Vec2 v2 = W.row(tri[1]).transpose();
    const Vec2 v3 = W.row(tri[2]).transpose();
    const Vec2 e = v3 - v2;
    return v1 - (v2 + uv.u * e + uv.v * Vec2(e.y(), -e.x()));
}

struct ControlCoefficients {
    std::array<int, 4> corners;
    std::array<double, 4> coef;
};

ControlCoefficients control_coefficients(const MeshGrid& mesh, const Vec2& p)
{
    const auto [r, c] = mesh.cell_of(p);
    const auto corners = mesh.cell_corners(r, c);
    std::array<Vec2, 4> q;
    for (int i = 0; i < 4; ++i) q[i] = mesh.vertices.row(corners[i]).transpose();
    return {corners, inverse_bilinear(p, q)};
}

double control_weight(const WarpControl& c, const WarpOptions& o)
{
    return c.alpha * (o.weight_by_validation ? c.weight : 1.0);
}

}  // namespace

double similarity_energy(const MeshGrid& mesh, const Vertices& warped)
{
    double e = 0;
    for (const auto& tri : mesh.triangles())
        e += similarity_residual(warped, tri, similarity_coords(mesh.vertices, tri)).squaredNorm();
    return e;
}

double warp_energy(const MeshGrid& mesh, const std::vector<WarpControl>& controls, const Vertices& warped,
                   const WarpOptions& options)
{
    double e = similarity_energy(mesh, warped);
    for (const auto& c : controls) {
        const auto cc = control_coefficients(mesh, c.position);
        Vec2 p = Vec2::Zero();
        for (int i = 0; i < 4; ++i) p += cc.coef[i] * warped.row(cc.corners[i]).transpose();
        e += control_weight(c, options) * (p - c.target).squaredNorm();
    }
    return e;
}

WarpSolution solve_warp(const MeshGrid& mesh, const std::vector<WarpControl>& controls,
                        const WarpOptions& options, const std::string& region_name)
{
    WarpSolution sol;
    std::vector<const WarpControl*> active;
    for (const auto& c : controls)
        if (control_weight(c, options) > 0) active.push_back(&c);

    if (active.empty()) {
        // Nothing pins the translation: keep the lattice where it is.
        sol.vertices = mesh.vertices;
        sol.identity = true;
        return sol;
    }

    const bool single_point = std::all_of(active.begin(), active.end(), [&](const WarpControl* c) {
        return (c->position - active.front()->position).norm() < 1e-12;
    });
    if (single_point) {
        // Rotation and scale are free; the weighted mean translation is a minimiser.
        Vec2 d = Vec2::Zero();
        double wsum = 0;
        for (const auto* c : active) {
            const double w = control_weight(*c, options);
            d += w * (c->target - c->position);
            wsum += w;
        }
        d /= wsum;
        sol.vertices = mesh.vertices.rowwise() + d.transpose();
        sol.translation_only = true;
        return sol;
    }

    const int n = mesh.vertex_count();
    const auto tris = mesh.triangles();
    using Triplet = Eigen::Triplet<double>;
    std::vector<Triplet> trips;
    const int rows = 2 * static_cast<int>(active.size() + tris.size());
    trips.reserve(static_cast<std::size_t>(rows) * 5);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(rows);
    auto X = [](int v) { return 2 * v; };
    auto Y = [](int v) { return 2 * v + 1; };

    int row = 0;
    for (const auto* c : active) {
        const double s = std::sqrt(control_weight(*c, options));
        const auto cc = control_coefficients(mesh, c->position);
        for (int i = 0; i < 4; ++i) {
            trips.emplace_back(row, X(cc.corners[i]), s * cc.coef[i]);
            trips.emplace_back(row + 1, Y(cc.corners[i]), s * cc.coef[i]);
        }
        b[row] = s * c->target.x();
        b[row + 1] = s * c->target.y();
        row += 2;
    }
    for (const auto& tri : tris) {
        const auto uv = similarity_coords(mesh.vertices, tri);
        const int v1 = tri[0], v2 = tri[1], v3 = tri[2];
        // x: V1x - V2x - u(V3x - V2x) - v(V3y - V2y)
        trips.emplace_back(row, X(v1), 1.0);
        trips.emplace_back(row, X(v2), -1.0 + uv.u);
        trips.emplace_back(row, X(v3), -uv.u);
        trips.emplace_back(row, Y(v2), uv.v);
        trips.emplace_back(row, Y(v3), -uv.v);
        // y: V1y - V2y - u(V3y - V2y) + v(V3x - V2x)
        trips.emplace_back(row + 1, Y(v1), 1.0);
        trips.emplace_back(row + 1, Y(v2), -1.0 + uv.u);
        trips.emplace_back(row + 1, Y(v3), -uv.u);
        trips.emplace_back(row + 1, X(v3), uv.v);
        trips.emplace_back(row + 1, X(v2), -uv.v);
        row += 2;
    }

    Eigen::SparseMatrix<double> A(rows, 2 * n);
    A.setFromTriplets(trips.begin(), trips.end());
    const Eigen::SparseMatrix<double> N = A.transpose() * A;
    const Eigen::VectorXd rhs = A.transpose() * b;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(N);
    if (ldlt.info() != Eigen::Success) throw Error("warp system for " + region_name + " is rank deficient");
    Eigen::VectorXd x = ldlt.solve(rhs);
    if (ldlt.info() != Eigen::Success || !x.allFinite())
        throw Error("warp system for " + region_name + " could not be solved");
    // LDLT of a semidefinite matrix can fail silently; a pivot collapse shows here.
    if ((ldlt.vectorD().array().abs() < 1e-12 * ldlt.vectorD().cwiseAbs().maxCoeff()).any())
        throw Error("warp system for " + region_name + " is rank deficient");
    // One refinement step keeps the normal-equation residual near round-off.
    x += ldlt.solve(rhs - N * x);

    const double denom = std::max(rhs.norm(), 1e-300);
    sol.relative_residual = (N * x - rhs).norm() / denom;
    sol.vertices.resize(n, 2);
    for (int v = 0; v < n; ++v) sol.vertices.row(v) << x[X(v)], x[Y(v)];
    return sol;
}

// ---------------------------------------------------------------------------
// Rasterisation

namespace {

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

double snap(double v)
{
    const double r = std::round(v);
    return std::abs(v - r) < 1e-6 ? r : v;
}

}  // namespace

RasterStats rasterize(const Image& image, const WeightMap& weights, const Mask& mask, const MeshGrid& mesh,
                      const Vertices& warped, WarpedLayer& layer)
{
    RasterStats stats;
    const int w = image.width();
    const int h = image.height();
    for (const auto& tri : mesh.triangles()) {
        const Vec2 a = mesh.vertices.row(tri[0]).transpose();
        const Vec2 b = mesh.vertices.row(tri[1]).transpose();
        const Vec2 c = mesh.vertices.row(tri[2]).transpose();
        const Vec2 A = warped.row(tri[0]).transpose();
        const Vec2 B = warped.row(tri[1]).transpose();
        const Vec2 C = warped.row(tri[2]).transpose();
        const double area_in = cross(b - a, c - a);
        const double area_out = cross(B - A, C - A);
        if (std::abs(area_out) < 1e-9 || (area_in > 0) != (area_out > 0)) {
            ++stats.degenerate_triangles;
            continue;
        }
        const int xa = std::max(0, static_cast<int>(std::ceil(std::min({A.x(), B.x(), C.x()}) - 1e-7)));
        const int xb = std::min(w - 1, static_cast<int>(std::floor(std::max({A.x(), B.x(), C.x()}) + 1e-7)));
        const int ya = std::max(0, static_cast<int>(std::ceil(std::min({A.y(), B.y(), C.y()}) - 1e-7)));
        const int yb = std::min(h - 1, static_cast<int>(std::floor(std::max({A.y(), B.y(), C.y()}) + 1e-7)));
        const double inv = 1.0 / area_out;
        for (int y = ya; y <= yb; ++y)
            for (int x = xa; x <= xb; ++x) {
                const Vec2 q(x, y);
                const double l0 = cross(B - q, C - q) * inv;
                const double l1 = cross(C - q, A - q) * inv;
                const double l2 = 1.0 - l0 - l1;
                constexpr double eps = -1e-9;
                if (l0 < eps || l1 < eps || l2 < eps) continue;
                const Vec2 pre(snap(l0 * a.x() + l1 * b.x() + l2 * c.x()), snap(l0 * a.y() + l1 * b.y() + l2 * c.y()));
                const int px = static_cast<int>(std::lround(pre.x()));
                const int py = static_cast<int>(std::lround(pre.y()));
                if (px < 0 || py < 0 || px >= w || py >= h || !mask(py, px)) continue;
                const double wt = std::clamp(sample_bilinear(weights, pre.x(), pre.y()), 0.0, 1.0);
                if (layer.coverage(y, x) && !(wt > layer.weight(y, x))) continue;
                layer.color.set(x, y, sample_bilinear(image, pre.x(), pre.y()));
                layer.weight(y, x) = wt;
                if (!layer.coverage(y, x)) ++stats.pixels_written;
                layer.coverage(y, x) = true;
            }
    }
    return stats;
}

Plane<double> gradient_magnitude(const Image& image)
{
    const Plane<double> L = image.luminance();
    const int h = static_cast<int>(L.rows());
    const int w = static_cast<int>(L.cols());
    Plane<double> g(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double gx = 0.5 * (L(y, std::min(x + 1, w - 1)) - L(y, std::max(x - 1, 0)));
            const double gy = 0.5 * (L(std::min(y + 1, h - 1), x) - L(std::max(y - 1, 0), x));
            g(y, x) = std::sqrt(gx * gx + gy * gy);
        }
    return g;
}

// ---------------------------------------------------------------------------
// Task-level warp

namespace {

struct WarpUnit {
    int id;
    std::vector<int> guides;
    std::vector<int> rendered;
    bool drop_without_controls;
};

std::vector<WarpUnit> plan_units(FrameSlot slot, const SuperpixelMap& map, bool merge_source)
{
    std::vector<WarpUnit> units;
    if (slot != kSource) {
        for (int r = 0; r < map.size(); ++r) units.push_back({r, {r}, {r}, true});
        return units;
    }
    if (!merge_source || map.groups.empty()) {
        for (int r = 0; r < map.size(); ++r) units.push_back({r, {r}, {r}, false});
        return units;
    }
    for (int r = 0; r < map.size(); ++r)
        if (map.regions[r].good) units.push_back({r, {r}, {r}, false});
    for (const auto& g : map.groups)
        if (!g.rendered.empty()) units.push_back({g.seed, g.members, g.rendered, false});
    std::sort(units.begin(), units.end(), [](const WarpUnit& a, const WarpUnit& b) { return a.id < b.id; });
    return units;
}

}  // namespace

WarpTaskResult warp_task(const std::array<const Image*, 3>& frames, const FlowBundle& flows, double t,
                         const std::array<WeightMap, 3>& weights, const std::array<SuperpixelMap, 3>& maps,
                         const WarpParams& params)
{
    const int w = frames[0]->width();
    const int h = frames[0]->height();
    WarpTaskResult result;
    const WarpOptions options{params.weight_by_validation};
    std::array<WarpedLayer, 3> fallback;

    for (int s = 0; s < 3; ++s) {
        const auto slot = static_cast<FrameSlot>(s);
        const Image& image = *frames[s];
        const WeightMap& W = weights[s];
        const SuperpixelMap& map = maps[s];
        WarpedLayer& layer = result.layers[s];
        layer = WarpedLayer(w, h);

        const FlowField disp = displacement_field(slot, t, flows);
        const Plane<double> grad = gradient_magnitude(image);

        std::vector<std::vector<int>> pixels(static_cast<std::size_t>(map.size()));
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) pixels[map.labels(y, x)].push_back(y * w + x);

        Mask mask = Mask::Constant(h, w, false);
        Mask rejected = Mask::Constant(h, w, false);
        const bool keep_rejected = slot != kSource && params.fallback_coverage;
        WeightMap pair;
        if (keep_rejected) {
            fallback[s] = WarpedLayer(w, h);
            pair = reference_pair_weight(frames, slot, flows, params.validation);
        }
        for (const auto& unit : plan_units(slot, map, params.merge_source)) {
            BoundingBox box;
            for (int r : unit.guides) box.extend(map.regions[r].bbox);
            for (int r : unit.rendered) box.extend(map.regions[r].bbox);

            std::vector<int> qualifying;
            for (int r : unit.guides)
                for (int idx : pixels[r])
                    if (W(idx / w, idx % w) > params.good_weight) qualifying.push_back(idx);
            std::sort(qualifying.begin(), qualifying.end());
            std::vector<WarpControl> controls;
            const bool dense = static_cast<int>(qualifying.size()) < params.min_controls_dense;
            for (int idx : qualifying) {
                const int x = idx % w;
                const int y = idx / w;
                if (!dense && ((x - box.x0) % params.stride != 0 || (y - box.y0) % params.stride != 0)) continue;
                const Vec2 p(x, y);
                controls.push_back({p, p + disp.at(x, y),
                                    grad(y, x) > params.edge_threshold ? params.alpha_edge : params.alpha_flat,
                                    W(y, x)});
            }
            if (controls.empty() && unit.drop_without_controls) {
                ++result.report.regions_dropped;
                continue;
            }

            const MeshGrid mesh = build_mesh(box, params.cell);
            const auto sol = solve_warp(mesh, controls, options,
                                        "frame " + std::to_string(s) + " region " + std::to_string(unit.id));
            result.report.max_relative_residual = std::max(result.report.max_relative_residual, sol.relative_residual);
            if (sol.identity) ++result.report.identity_regions;

            for (int r : unit.rendered)
                for (int idx : pixels[r]) {
                    const int x = idx % w;
                    const int y = idx / w;
                    // Reference frames never render their own poorly validated pixels.
                    mask(y, x) = slot == kSource || W(y, x) > params.good_weight;
                }
            const auto stats = rasterize(image, W, mask, mesh, sol.vertices, layer);
            if (keep_rejected) {
                for (int r : unit.rendered)
                    for (int idx : pixels[r]) {
                        const int x = idx % w;
                        const int y = idx / w;
                        rejected(y, x) = !mask(y, x);
                    }
                rasterize(image, pair, rejected, mesh, sol.vertices, fallback[s]);
            }
            for (int r : unit.rendered)
                for (int idx : pixels[r]) mask(idx / w, idx % w) = rejected(idx / w, idx % w) = false;

            result.report.degenerate_triangles += stats.degenerate_triangles;
            ++result.report.regions_warped;
        }
    }

    if (params.fallback_coverage) {
        auto& L = result.layers;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                if (L[kRefPrev].coverage(y, x) || L[kRefNext].coverage(y, x)) continue;
                bool used = false;
                for (int s : {kRefPrev, kRefNext}) {
                    if (!fallback[s].coverage(y, x)) continue;
                    L[s].coverage(y, x) = true;
                    L[s].weight(y, x) = fallback[s].weight(y, x);
                    L[s].color.set(x, y, fallback[s].color.pixel(x, y));
                    used = true;
                }
                result.report.fallback_pixels += used;
            }
    }
    return result;
}

}  // namespace hsvideo
