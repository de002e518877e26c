#ifndef HSVIDEO_SYNTHETIC_HPP
#define HSVIDEO_SYNTHETIC_HPP

#include "hsvideo/flow.hpp"
#include "hsvideo/sequence.hpp"
#include "hsvideo/types.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace hsvideo {

struct ForegroundCard {
    Vec2 position = Vec2(96, 96);  // top-left corner in the reference view at time 0
    Vec2 size = Vec2(64, 64);
    double depth = 1.0;
    Vec2 velocity = Vec2::Zero();  // px per iteration
    std::uint32_t seed = 7;
};

/// Two fronto-parallel textured planes observed by an array of lenses
/// that fire one after another within each iteration.
struct SceneSpec {
    int width = 256;
    int height = 256;
    int lenses = 2;
    bool grid = false;  // lens j at (j % 3, j / 3) instead of (j, 0)
    double baseline = 0.0;  // px of disparity per lens step at unit depth
    std::vector<double> firing_offsets;  // per lens, in [0,1); default j / lenses
    int iterations = 6;
    std::uint32_t seed = 1;
    double background_depth = 2.0;
    double texture_scale = 6.0;  // feature size of the value noise, px
    std::optional<ForegroundCard> foreground;
    std::optional<int> reference_lens;  // default: latest firing lens

    void check() const;
    double firing_offset(int lens) const;
    int reference() const;
    Vec2 lens_offset(int lens) const;  // relative to the reference lens, in baseline units
};

SceneSpec read_scene_spec(const std::filesystem::path& file);
SceneSpec parse_scene_spec(const std::string& json_text);

/// Analytic rendering of lens `lens` at time `time` (iteration units).
Image render_view(const SceneSpec& spec, int lens, double time);

/// Exact displacement from a view to another: every pixel follows the
/// plane it sees in the first view.
FlowField analytic_flow(const SceneSpec& spec, int lens_a, double time_a, int lens_b, double time_b);

struct SyntheticCapture {
    int lens = 0;
    double time = 0.0;
};

/// Time-sorted capture schedule.
std::vector<SyntheticCapture> capture_schedule(const SceneSpec& spec);

/// Stream indices of the flows consumed by one task: required pairs
/// first, then the optional same-lens / next-reference pairs if they exist.
std::vector<std::pair<int, int>> task_flow_pairs(const std::vector<CaptureFrame>& frames, const SynthesisTask& task);

std::string flow_file_name(int from, int to);
std::string frame_file_name(int index);

struct SyntheticOutput {
    std::filesystem::path manifest;
    std::filesystem::path flows_dir;
    std::filesystem::path gt_dir;
    TaskList tasks;
};

/// Writes captures/, flows/, gt/ and manifest.json under `out_dir`.
/// Ground truth is the reference lens rendered at each source timestamp,
/// named like the synthesized output of that source.
SyntheticOutput generate_synthetic(const SceneSpec& spec, const std::filesystem::path& out_dir);

}  // namespace hsvideo

#endif  // HSVIDEO_SYNTHETIC_HPP
