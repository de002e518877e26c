#include "hsvideo/render.hpp"

#include "hsvideo/maxflow.hpp"

#include <Eigen/Sparse>

#include <cmath>

namespace hsvideo {

int label_of(int s, int prev, int next)
{
    for (int l = 1; l <= kLabelCount; ++l) {
        const auto& b = label_bits(l);
        if (b[0] == s && b[1] == prev && b[2] == next) return l;
    }
    throw Error("label_of: not a binary triple");
}

LabelSet valid_labels(const std::array<bool, 3>& covered)
{
    LabelSet set = 0;
    for (int l = 1; l <= kLabelCount; ++l) {
        const auto& b = label_bits(l);
        bool ok = true;
        for (int i = 0; i < 3; ++i)
            if (b[i] && !covered[i]) ok = false;
        if (ok) set |= static_cast<LabelSet>(1u << (l - 1));
    }
    return set;
}

double data_cost(int label, const std::array<Color, 3>& samples, const RenderParams& params)
{
    const auto& b = label_bits(label);
    const int n = b[0] + b[1] + b[2];
    if (n == 0) return params.hole_cost;
    const double e_ind = params.k_source * b[0] + params.k_reference * b[1] + params.k_reference * b[2];
    double e_sim = 0.0;
    for (int i = 0; i < 3; ++i)
        for (int j = i + 1; j < 3; ++j)
            if (b[i] && b[j]) e_sim += (samples[i] - samples[j]).squaredNorm();
    return (1.0 + e_ind + params.beta * e_sim) / std::pow(n + params.epsilon, params.alpha);
}

PixelCosts compute_costs(const std::array<WarpedLayer, 3>& layers, const RenderParams& params)
{
    PixelCosts costs;
    costs.width = layers[0].color.width();
    costs.height = layers[0].color.height();
    for (const auto& layer : layers)
        if (layer.color.width() != costs.width || layer.color.height() != costs.height)
            throw Error("compute_costs: layer size mismatch");
    const int n = costs.width * costs.height;
    costs.cost.resize(n, kLabelCount);
    costs.valid.resize(n);
    for (int y = 0; y < costs.height; ++y) {
        for (int x = 0; x < costs.width; ++x) {
            const int p = y * costs.width + x;
            std::array<bool, 3> covered;
            std::array<Color, 3> samples;
            for (int i = 0; i < 3; ++i) {
                covered[i] = layers[i].coverage(y, x);
                samples[i] = layers[i].color.pixel(x, y);
            }
            const LabelSet set = valid_labels(covered);
            costs.valid(p) = set;
            for (int l = 1; l <= kLabelCount; ++l)
                costs.cost(p, l - 1) = is_valid(set, l) ? data_cost(l, samples, params) : params.sentinel;
        }
    }
    return costs;
}

LabelMap init_labels(const PixelCosts& costs)
{
    LabelMap labels(costs.height, costs.width);
    for (int p = 0; p < costs.width * costs.height; ++p) {
        int best = 1;
        for (int l = 2; l <= kLabelCount; ++l)
            if (is_valid(costs.valid(p), l) && costs.at(p, l) < costs.at(p, best)) best = l;
        labels(p / costs.width, p % costs.width) = best;
    }
    return labels;
}

double labeling_energy(const LabelMap& labels, const PixelCosts& costs, double gamma)
{
    const int w = costs.width;
    const int h = costs.height;
    double data = 0.0;
    long smooth = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int l = labels(y, x);
            data += costs.at(y * w + x, l);
            if (x + 1 < w) smooth += smoothness_cost(l, labels(y, x + 1));
            if (y + 1 < h) smooth += smoothness_cost(l, labels(y + 1, x));
        }
    }
    return data + gamma * static_cast<double>(smooth);
}

namespace {

// One expansion move: x_p = 1 switches p to `alpha`, x_p = 0 keeps it.
LabelMap expand(const LabelMap& labels, const PixelCosts& costs, int alpha, double gamma, int& truncations)
{
    const int w = costs.width;
    const int h = costs.height;
    const int n = w * h;
    std::vector<double> unary(static_cast<std::size_t>(n));  // E(1) - E(0)
    for (int p = 0; p < n; ++p) unary[p] = costs.at(p, alpha) - costs.at(p, labels(p / w, p % w));

    MaxFlowGraph graph(n, 2 * n);
    auto pair = [&](int p, int q) {
        const int lp = labels(p / w, p % w);
        const int lq = labels(q / w, q % w);
        double a = gamma * smoothness_cost(lp, lq);
        const double b = gamma * smoothness_cost(lp, alpha);
        const double c = gamma * smoothness_cost(alpha, lq);
        const double d = 0.0;
        if (b + c < a + d) {
            a = b + c - d;
            ++truncations;
        }
        // E = A + (C-A) x_p + (D-C) x_q + (B+C-A-D) (1-x_p) x_q
        unary[p] += c - a;
        unary[q] += d - c;
        const double cap = b + c - a - d;
        if (cap > 0) graph.add_edge(p, q, cap, 0.0);
    };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int p = y * w + x;
            if (x + 1 < w) pair(p, p + 1);
            if (y + 1 < h) pair(p, p + w);
        }
    }
    for (int p = 0; p < n; ++p) {
        // Cutting source->p costs E(1) (p on the sink side), p->sink costs E(0).
        if (unary[p] > 0)
            graph.add_tweights(p, unary[p], 0.0);
        else
            graph.add_tweights(p, 0.0, -unary[p]);
    }
    graph.maxflow();

    LabelMap out = labels;
    for (int p = 0; p < n; ++p)
        if (graph.in_sink_segment(p)) out(p / w, p % w) = alpha;
    return out;
}

}  // namespace

namespace {

struct ExpansionRun {
    LabelMap labels;
    double energy;
    LabelingStats stats;
};

ExpansionRun run_expansion(LabelMap labels, const PixelCosts& costs, const RenderParams& params)
{
    ExpansionRun run{std::move(labels), 0.0, {}};
    run.energy = labeling_energy(run.labels, costs, params.gamma);
    run.stats.energies.push_back(run.energy);
    for (int sweep = 0; sweep < params.sweeps; ++sweep) {
        ++run.stats.sweeps;
        bool improved = false;
        for (int alpha = 1; alpha <= kLabelCount; ++alpha) {
            LabelMap candidate = expand(run.labels, costs, alpha, params.gamma, run.stats.truncations);
            const double e = labeling_energy(candidate, costs, params.gamma);
            if (e < run.energy) {
                run.labels = std::move(candidate);
                run.energy = e;
                improved = true;
                ++run.stats.accepted_moves;
                run.stats.energies.push_back(e);
            }
        }
        if (!improved) break;
    }
    return run;
}

}  // namespace

LabelMap optimize_labels(const LabelMap& init, const PixelCosts& costs, const RenderParams& params,
                         LabelingStats* stats)
{
    ExpansionRun best = run_expansion(init, costs, params);
    const double initial = best.stats.energies.front();
    int truncations = best.stats.truncations;
    int starts = 1;
    if (params.restarts) {
        // Further starts: all holes, then each label wherever it is usable.
        for (int alpha = 1; alpha <= kLabelCount; ++alpha) {
            LabelMap start = init;
            for (int p = 0; p < costs.width * costs.height; ++p)
                if (is_valid(costs.valid(p), alpha)) start(p / costs.width, p % costs.width) = alpha;
            if ((start == init).all()) continue;
            ExpansionRun run = run_expansion(std::move(start), costs, params);
            truncations += run.stats.truncations;
            ++starts;
            if (run.energy < best.energy) best = std::move(run);
        }
    }
    for (int p = 0; p < costs.width * costs.height; ++p)
        if (!is_valid(costs.valid(p), best.labels(p / costs.width, p % costs.width)))
            throw Error("optimize_labels: invalid label selected");
    if (stats) {
        *stats = std::move(best.stats);
        stats->truncations = truncations;
        stats->starts = starts;
        stats->initial_energy = initial;
    }
    return best.labels;
}

LabelMap all_covered_labels(const std::array<WarpedLayer, 3>& layers)
{
    const int w = layers[0].color.width();
    const int h = layers[0].color.height();
    LabelMap labels(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            labels(y, x) = label_of(layers[0].coverage(y, x), layers[1].coverage(y, x), layers[2].coverage(y, x));
    return labels;
}

BlendResult blend(const std::array<WarpedLayer, 3>& layers, const LabelMap& labels)
{
    const int w = layers[0].color.width();
    const int h = layers[0].color.height();
    BlendResult out{Image(w, h), Mask::Constant(h, w, false)};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const auto& b = label_bits(labels(y, x));
            Color sum = Color::Zero();
            Color plain = Color::Zero();
            double wsum = 0.0;
            int n = 0;
            for (int i = 0; i < 3; ++i) {
                if (!b[i]) continue;
                const Color c = layers[i].color.pixel(x, y);
                const double wi = layers[i].weight(y, x);
                sum += wi * c;
                plain += c;
                wsum += wi;
                ++n;
            }
            if (n == 0) {
                out.holes(y, x) = true;
                continue;
            }
            if (n == 1)
                out.image.set(x, y, plain);
            else if (wsum > 0.0)
                out.image.set(x, y, sum / wsum);
            else
                out.image.set(x, y, plain / n);
        }
    }
    return out;
}

Image inpaint_holes(const Image& image, const Mask& holes)
{
    const int w = image.width();
    const int h = image.height();
    if (holes.rows() != h || holes.cols() != w) throw Error("inpaint_holes: mask size mismatch");
    IdPlane index = IdPlane::Constant(h, w, -1);
    int n = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (holes(y, x)) index(y, x) = n++;
    if (n == 0) return image;
    if (n == w * h) throw Error("inpaint_holes: hole covers the entire frame");

    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(n) * 5);
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n, 3);
    const int dx[4] = {1, -1, 0, 0};
    const int dy[4] = {0, 0, 1, -1};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int i = index(y, x);
            if (i < 0) continue;
            double diag = 0.0;
            for (int k = 0; k < 4; ++k) {
                const int nx = x + dx[k];
                const int ny = y + dy[k];
                if (!image.contains(nx, ny)) continue;
                diag += 1.0;
                const int j = index(ny, nx);
                if (j >= 0)
                    triplets.emplace_back(i, j, -1.0);
                else
                    for (int c = 0; c < 3; ++c) rhs(i, c) += image.channel(c)(ny, nx);
            }
            triplets.emplace_back(i, i, diag);
        }
    }
    Eigen::SparseMatrix<double> a(n, n);
    a.setFromTriplets(triplets.begin(), triplets.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(a);
    if (solver.info() != Eigen::Success) throw Error("inpaint_holes: factorisation failed");
    Eigen::MatrixXd sol = solver.solve(rhs);
    sol += solver.solve(rhs - a * sol);
    const double scale = std::max(rhs.norm(), 1e-300);
    const double residual = (a * sol - rhs).norm() / scale;
    if (!std::isfinite(residual) || residual > 1e-6)
        throw Error("inpaint_holes: residual " + std::to_string(residual) + " above tolerance");

    Image out = image;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (const int i = index(y, x); i >= 0)
                for (int c = 0; c < 3; ++c) out.channel(c)(y, x) = sol(i, c);
    return out;
}

std::array<long, kLabelCount> label_histogram(const LabelMap& labels)
{
    std::array<long, kLabelCount> hist{};
    for (Eigen::Index i = 0; i < labels.size(); ++i) {
        const int l = labels.data()[i];
        if (l < 1 || l > kLabelCount) throw Error("label_histogram: label out of range");
        ++hist[l - 1];
    }
    return hist;
}

Image colorize_labels(const LabelMap& labels)
{
    static const std::array<Color, kLabelCount> legend = {
        Color(0.0, 0.0, 0.0),   Color(0.90, 0.10, 0.10), Color(0.10, 0.70, 0.10), Color(0.10, 0.30, 0.90),
        Color(0.10, 0.85, 0.85), Color(0.85, 0.10, 0.85), Color(0.95, 0.85, 0.10), Color(1.0, 1.0, 1.0),
    };
    Image out(static_cast<int>(labels.cols()), static_cast<int>(labels.rows()));
    for (int y = 0; y < out.height(); ++y)
        for (int x = 0; x < out.width(); ++x) out.set(x, y, legend[labels(y, x) - 1]);
    return out;
}

}  // namespace hsvideo
