#ifndef HSVIDEO_CONFIG_HPP
#define HSVIDEO_CONFIG_HPP

#include "hsvideo/flow.hpp"
#include "hsvideo/render.hpp"
#include "hsvideo/superpixel.hpp"
#include "hsvideo/warp.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace hsvideo {

struct PipelineConfig {
    // flow validation
    int patch_radius = 3;
    double sigma = 0.05;
    double fb_threshold = 1.0;
    // superpixels
    int min_good_pixels = 100;
    double good_weight = 0.96;
    int segments = 0;
    double mean_area = 600.0;
    double compactness = 10.0;
    double lambda_flow = 0.5;
    int slic_iterations = 10;
    // warp
    double cell = 16.0;
    int stride = 2;
    int min_controls_dense = 50;
    double edge_threshold = 0.1;
    double alpha_edge = 1.0;
    double alpha_flat = 0.5;
    // labeling
    double k_source = 1.0;
    double k_reference = 1.5;
    double alpha_l = 3.0;
    double beta_l = 8.0;
    double gamma_l = 2.0;
    double epsilon = 0.01;
    double hole_cost = 10.0;
    int sweeps = 10;
    bool label_restarts = true;
    bool fallback_coverage = true;
    // fallback flow estimator
    bool estimate_missing_flows = true;
    int flow_levels = 4;
    int flow_radius = 3;
    // ablations
    bool disable_validation = false;
    bool disable_merging = false;
    bool disable_labeling = false;
    // execution
    int workers = 0;  // 0: HSVIDEO_WORKERS or hardware concurrency
    bool debug_dumps = false;

    ValidationParams validation() const { return {patch_radius, sigma, fb_threshold}; }
    SegmentParams segmentation() const { return {segments, mean_area, compactness, lambda_flow, slic_iterations}; }
    WarpParams warp() const;
    RenderParams render() const;
    FlowEstimatorParams estimator() const { return {flow_levels, flow_radius, 2}; }

    /// Throws on non-positive values where a positive one is required.
    void check() const;
};

/// Assigns one `key = value` pair; the key is a PipelineConfig field name.
void set_config_value(PipelineConfig& config, std::string_view key, std::string_view value);

/// Parses a flat `key = value` document (TOML subset: comments, bare
/// numbers, booleans, quoted strings; no tables).
PipelineConfig parse_config(std::string_view text, PipelineConfig base = {});
PipelineConfig load_config(const std::filesystem::path& file, PipelineConfig base = {});

/// Serialises every field, in declaration order.
std::string format_config(const PipelineConfig& config);

/// Applies "opf", "spm" or "lab".
void apply_ablation(PipelineConfig& config, std::string_view name);

}  // namespace hsvideo

#endif  // HSVIDEO_CONFIG_HPP
