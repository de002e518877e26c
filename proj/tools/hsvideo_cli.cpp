// Command-line front end: synthesize, gen-synthetic, eval, flow.
#include "hsvideo/config.hpp"
#include "hsvideo/flow.hpp"
#include "hsvideo/image_io.hpp"
#include "hsvideo/pipeline.hpp"
#include "hsvideo/synthetic.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace fs = std::filesystem;
using namespace hsvideo;

int main(int argc, char** argv)
{
    CLI::App app{"Asynchronous camera-array frames to high-speed reference-view video"};
    app.require_subcommand(1);

    auto* synth = app.add_subcommand("synthesize", "Synthesize reference-view frames for every source capture");
    std::string manifest, config_file, out_dir, flows_dir, gt_dir, ablate;
    std::vector<std::string> overrides;
    synth->add_option("--manifest", manifest, "Capture manifest (JSON)")->required();
    synth->add_option("--config", config_file, "Flat key = value configuration file");
    synth->add_option("--out", out_dir, "Output directory")->required();
    synth->add_option("--flows", flows_dir, "Directory of flow_A_B.flo files (stream indices)");
    synth->add_option("--gt", gt_dir, "Ground-truth frames, scored into the report when present");
    synth->add_option("--ablate", ablate, "Leave one component out")->check(CLI::IsMember({"opf", "spm", "lab"}));
    synth->add_option("--set", overrides, "Override one configuration key (key=value); repeatable");

    auto* gen = app.add_subcommand("gen-synthetic", "Render a synthetic two-plane capture with analytic flows");
    std::string spec_file, gen_out;
    gen->add_option("--spec", spec_file, "Scene specification (JSON)")->required();
    gen->add_option("--out", gen_out, "Output directory")->required();

    auto* eval = app.add_subcommand("eval", "Score predicted frames against same-named ground truth");
    std::string pred, gt, report;
    eval->add_option("--pred", pred, "Directory of predicted PNG frames")->required();
    eval->add_option("--gt", gt, "Directory of ground-truth PNG frames")->required();
    eval->add_option("--report", report, "Report path (JSON)")->required();

    auto* flow = app.add_subcommand("flow", "Estimate dense flow from image A to image B");
    std::string img_a, img_b, flo_out;
    flow->add_option("--a", img_a, "First image")->required();
    flow->add_option("--b", img_b, "Second image")->required();
    flow->add_option("--out", flo_out, "Output .flo file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth) {
            PipelineConfig config;
            if (!config_file.empty()) config = load_config(config_file);
            for (const auto& kv : overrides) {
                const auto eq = kv.find('=');
                if (eq == std::string::npos) throw Error("--set expects key=value, got '" + kv + "'");
                set_config_value(config, kv.substr(0, eq), kv.substr(eq + 1));
            }
            if (!ablate.empty()) apply_ablation(config, ablate);
            PipelineOptions options;
            if (!flows_dir.empty()) options.flows_dir = flows_dir;
            if (!gt_dir.empty()) options.gt_dir = gt_dir;
            const auto summary = run_pipeline(config, manifest, out_dir, options);
            std::printf("synthesized %d frames (%d skipped)", summary.tasks, summary.skipped);
            if (summary.mean_ssim) std::printf(", mean SSIM %.4f, mean MSE %.6g", *summary.mean_ssim, *summary.mean_mse);
            std::printf("\n");
        } else if (*gen) {
            const auto out = generate_synthetic(read_scene_spec(spec_file), gen_out);
            std::printf("wrote %s with %zu tasks\n", out.manifest.string().c_str(), out.tasks.tasks.size());
        } else if (*eval) {
            const auto entries = evaluate_directories(pred, gt, report);
            double s = 0.0;
            for (const auto& e : entries) s += e.metrics.ssim;
            std::printf("%zu frames, mean SSIM %.4f\n", entries.size(), s / entries.size());
        } else if (*flow) {
            write_flow(estimate_flow(read_image(img_a), read_image(img_b)), flo_out);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
