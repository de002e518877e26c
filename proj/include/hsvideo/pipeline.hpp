#ifndef HSVIDEO_PIPELINE_HPP
#define HSVIDEO_PIPELINE_HPP

#include "hsvideo/config.hpp"
#include "hsvideo/flow.hpp"
#include "hsvideo/metrics.hpp"
#include "hsvideo/render.hpp"
#include "hsvideo/sequence.hpp"
#include "hsvideo/superpixel.hpp"
#include "hsvideo/warp.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace hsvideo {

/// Reads the task's flows from `dir` (files named by stream index). Absent
/// required fields are estimated when allowed, otherwise reported together.
FlowBundle load_task_flows(const std::vector<CaptureFrame>& frames, const SynthesisTask& task,
                           const std::optional<std::filesystem::path>& dir, const PipelineConfig& config);

/// Motion-magnitude channel used to segment each task frame.
std::array<Plane<double>, 3> segmentation_motion(const FlowBundle& flows, int width, int height);

struct TaskResult {
    Image image;
    std::array<long, kLabelCount> histogram{};
    LabelingStats labeling;
    WarpReport warp;
    std::array<int, 3> regions{};
    std::array<int, 3> good_regions{};
    int merged_groups = 0;
    long hole_pixels = 0;
    double seconds = 0.0;

    // Intermediate products, kept only when debug dumps are requested.
    std::array<WeightMap, 3> weights;
    std::array<SuperpixelMap, 3> maps;
    LabelMap labels;
};

/// Full synthesis of one source frame at the reference view.
TaskResult synthesize_task(const std::array<const Image*, 3>& frames, const FlowBundle& flows, double t,
                           const PipelineConfig& config, bool keep_intermediates = false);

struct PipelineOptions {
    std::optional<std::filesystem::path> flows_dir;
    std::optional<std::filesystem::path> gt_dir;  // frame_XXXX.png per source index
};

struct PipelineSummary {
    int tasks = 0;
    int skipped = 0;
    std::optional<double> mean_ssim;
    std::optional<double> mean_mse;
};

/// Worker count: config value, else HSVIDEO_WORKERS, else hardware threads.
int resolve_workers(const PipelineConfig& config);

/// Writes frame_XXXX.png (by source stream index), report.json and
/// timing.json into `out_dir`; debug dumps go to out_dir/debug.
PipelineSummary run_pipeline(const PipelineConfig& config, const std::filesystem::path& manifest,
                             const std::filesystem::path& out_dir, const PipelineOptions& options = {});

struct EvalEntry {
    std::string name;
    FrameMetrics metrics;
};

/// Compares every PNG in `pred_dir` against the same-named file in
/// `gt_dir` and writes a JSON report.
std::vector<EvalEntry> evaluate_directories(const std::filesystem::path& pred_dir,
                                            const std::filesystem::path& gt_dir,
                                            const std::filesystem::path& report);

}  // namespace hsvideo

#endif  // HSVIDEO_PIPELINE_HPP
