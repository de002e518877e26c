#include "hsvideo/pipeline.hpp"

#include "hsvideo/image_io.hpp"
#include "hsvideo/synthetic.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

namespace hsvideo {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::optional<FlowField>* bundle_field(FlowBundle& b, int index)
{
    std::optional<FlowField>* fields[] = {&b.src_to_prev,  &b.src_to_next,     &b.prev_to_src,
                                          &b.next_to_src,  &b.prev_to_next,    &b.next_to_prev,
                                          &b.src_to_prev_src, &b.src_to_next_src, &b.next_to_next_ref};
    return fields[index];
}

constexpr const char* kFieldNames[] = {"src_to_prev",  "src_to_next",     "prev_to_src",
                                       "next_to_src",  "prev_to_next",    "next_to_prev",
                                       "src_to_prev_src", "src_to_next_src", "next_to_next_ref"};

std::string task_name(int index) { return "task " + std::to_string(index); }

void write_json(const json& j, const fs::path& file)
{
    std::ofstream out(file);
    if (!out) throw Error("cannot write " + file.string());
    out << j.dump(2) << '\n';
    if (!out) throw Error("failed writing " + file.string());
}

Image gray_image(const Plane<double>& p)
{
    Image img(static_cast<int>(p.cols()), static_cast<int>(p.rows()));
    for (int c = 0; c < 3; ++c) img.channel(c) = p.cwiseMax(0.0).cwiseMin(1.0);
    return img;
}

void dump_debug(const TaskResult& r, int source_index, const fs::path& dir)
{
    fs::create_directories(dir);
    char prefix[32];
    std::snprintf(prefix, sizeof prefix, "frame_%04d", source_index);
    const char* slots[] = {"source", "ref_prev", "ref_next"};
    write_image(colorize_labels(r.labels), dir / (std::string(prefix) + "_labels.png"));
    for (int s = 0; s < 3; ++s) {
        const std::string base = std::string(prefix) + "_" + slots[s];
        write_image(gray_image(r.weights[s]), dir / (base + "_weights.png"));
        const auto& map = r.maps[s];
        write_png16(map.labels.cwiseMin(65535).cast<std::uint16_t>(), dir / (base + "_regions.png"));
        json regions = json::array();
        for (int id = 0; id < map.size(); ++id) {
            const auto& reg = map.regions[id];
            regions.push_back({{"id", id},
                               {"pixels", reg.pixel_count},
                               {"mean_color", {reg.mean_color[0], reg.mean_color[1], reg.mean_color[2]}},
                               {"mean_flow", {reg.mean_flow[0], reg.mean_flow[1]}},
                               {"bbox", {reg.bbox.x0, reg.bbox.y0, reg.bbox.x1, reg.bbox.y1}},
                               {"neighbors", reg.neighbors},
                               {"good", reg.good},
                               {"members", reg.members}});
        }
        json groups = json::array();
        for (const auto& g : map.groups)
            groups.push_back({{"seed", g.seed}, {"members", g.members}, {"rendered", g.rendered}});
        write_json({{"regions", regions}, {"groups", groups}}, dir / (base + "_regions.json"));
    }
}

}  // namespace

FlowBundle load_task_flows(const std::vector<CaptureFrame>& frames, const SynthesisTask& task,
                           const std::optional<fs::path>& dir, const PipelineConfig& config)
{
    FlowBundle bundle;
    const auto pairs = task_flow_pairs(frames, task);
    std::vector<std::string> missing;
    for (int i = 0; i < 9; ++i) {
        const auto [a, b] = pairs[i];
        if (a < 0 || b < 0) continue;
        if (dir) {
            const fs::path file = *dir / flow_file_name(a, b);
            if (fs::exists(file)) {
                *bundle_field(bundle, i) = read_flow(file);
                continue;
            }
        }
        if (i >= 6) continue;  // optional fields are never estimated
        if (config.estimate_missing_flows)
            *bundle_field(bundle, i) = estimate_flow(frames[a].image, frames[b].image, config.estimator());
        else
            missing.push_back(std::string(kFieldNames[i]) + " (" + flow_file_name(a, b) + ")");
    }
    if (!missing.empty()) {
        std::string msg = "missing flow fields for source frame " + std::to_string(task.source) +
                          " and the estimator is disabled:";
        for (const auto& m : missing) msg += " " + m;
        throw Error(msg);
    }
    return bundle;
}

std::array<Plane<double>, 3> segmentation_motion(const FlowBundle& f, int width, int height)
{
    auto mag = [&](const std::optional<FlowField>& field) {
        return field ? field->magnitude() : Plane<double>(Plane<double>::Zero(height, width));
    };
    Plane<double> temporal = Plane<double>::Zero(height, width);
    int n = 0;
    for (const auto* field : {&f.src_to_prev_src, &f.src_to_next_src})
        if (*field) {
            temporal += (*field)->magnitude();
            ++n;
        }
    if (n > 0) temporal /= n;
    return {mag(f.src_to_next) + temporal, mag(f.prev_to_next), mag(f.next_to_prev) + mag(f.next_to_next_ref)};
}

TaskResult synthesize_task(const std::array<const Image*, 3>& frames, const FlowBundle& flows, double t,
                           const PipelineConfig& config, bool keep_intermediates)
{
    const auto start = std::chrono::steady_clock::now();
    const int w = frames[0]->width();
    const int h = frames[0]->height();
    for (const Image* f : frames)
        if (f->width() != w || f->height() != h) throw Error("synthesize: task frames differ in size");
    flows.check(w, h);

    std::array<WeightMap, 3> weights;
    if (config.disable_validation)
        weights.fill(WeightMap::Ones(h, w));
    else
        weights = validate_flow(frames, flows, config.validation());

    const auto motion = segmentation_motion(flows, w, h);
    std::array<SuperpixelMap, 3> maps;
    TaskResult result;
    const char* names[] = {"source", "ref_prev", "ref_next"};
    for (int s = 0; s < 3; ++s) {
        const auto slot = static_cast<FrameSlot>(s);
        maps[s] = segment(*frames[s], motion[s], config.segmentation());
        compute_region_motion(maps[s], displacement_field(slot, t, flows), weights[s], config.good_weight);
        result.good_regions[s] = classify(maps[s], weights[s], config.min_good_pixels, config.good_weight);
        result.regions[s] = maps[s].size();
        if (slot == kSource && !config.disable_merging) {
            merge_bad(maps[s], names[s]);
            result.merged_groups = static_cast<int>(maps[s].groups.size());
        }
    }

    auto warped = warp_task(frames, flows, t, weights, maps, config.warp());
    result.warp = warped.report;

    const RenderParams rp = config.render();
    const PixelCosts costs = compute_costs(warped.layers, rp);
    LabelMap labels;
    if (config.disable_labeling) {
        labels = all_covered_labels(warped.layers);
        result.labeling.energies.push_back(labeling_energy(labels, costs, rp.gamma));
        result.labeling.initial_energy = result.labeling.energies.front();
    } else {
        labels = optimize_labels(init_labels(costs), costs, rp, &result.labeling);
        if (result.labeling.energies.back() > result.labeling.initial_energy)
            throw Error("labeling energy increased");
    }
    result.histogram = label_histogram(labels);
    auto blended = blend(warped.layers, labels);
    result.hole_pixels = blended.holes.count();
    result.image = inpaint_holes(blended.image, blended.holes);

    if (keep_intermediates) {
        result.weights = std::move(weights);
        result.maps = std::move(maps);
        result.labels = std::move(labels);
    }
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

int resolve_workers(const PipelineConfig& config)
{
    if (config.workers > 0) return config.workers;
    if (const char* env = std::getenv("HSVIDEO_WORKERS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1) throw Error(std::string("HSVIDEO_WORKERS must be a positive integer, got '") + env + "'");
        return static_cast<int>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

PipelineSummary run_pipeline(const PipelineConfig& config, const fs::path& manifest, const fs::path& out_dir,
                             const PipelineOptions& options)
{
    config.check();
    const auto wall_start = std::chrono::steady_clock::now();
    Sequence seq = load_sequence(manifest);
    const int reference = assign_roles(seq.frames, seq.reference_lens);
    const TaskList list = build_tasks(seq.frames);
    fs::create_directories(out_dir);

    const int n = static_cast<int>(list.tasks.size());
    std::vector<std::optional<TaskResult>> results(static_cast<std::size_t>(n));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int i = next++; i < n; i = next++) {
            try {
                const auto& task = list.tasks[i];
                const std::array<const Image*, 3> frames = {&seq.frames[task.source].image,
                                                            &seq.frames[task.ref_prev].image,
                                                            &seq.frames[task.ref_next].image};
                const FlowBundle flows = load_task_flows(seq.frames, task, options.flows_dir, config);
                auto r = synthesize_task(frames, flows, task.t, config, config.debug_dumps);
                const fs::path file = out_dir / frame_file_name(task.source);
                write_image(r.image, file);
                // Score the frame as written, i.e. after 8-bit quantisation.
                r.image = quantize8(r.image);
                if (config.debug_dumps) {
                    dump_debug(r, task.source, out_dir / "debug");
                    r.weights = {};
                    r.maps = {};
                    r.labels = {};
                }
                results[i] = std::move(r);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const int workers = std::min(resolve_workers(config), std::max(n, 1));
    std::vector<std::thread> pool;
    for (int k = 1; k < workers; ++k) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    for (int i = 0; i < n; ++i) {
        if (!errors[i]) continue;
        try {
            std::rethrow_exception(errors[i]);
        } catch (const std::exception& e) {
            throw Error(task_name(i) + " (source frame " + std::to_string(list.tasks[i].source) + "): " + e.what());
        }
    }

    PipelineSummary summary;
    summary.tasks = n;
    summary.skipped = static_cast<int>(list.skipped.size());
    json tasks = json::array();
    json timing_tasks = json::array();
    double ssim_sum = 0.0, mse_sum = 0.0;
    int scored = 0;
    for (int i = 0; i < n; ++i) {
        const auto& task = list.tasks[i];
        const auto& r = *results[i];
        const auto& src = seq.frames[task.source];
        json entry = {{"index", i},
                      {"source", task.source},
                      {"ref_prev", task.ref_prev},
                      {"ref_next", task.ref_next},
                      {"lens", src.lens_id},
                      {"time", src.time},
                      {"t", task.t},
                      {"output", frame_file_name(task.source)},
                      {"regions", r.regions},
                      {"good_regions", r.good_regions},
                      {"merged_groups", r.merged_groups},
                      {"label_histogram", r.histogram},
                      {"hole_pixels", r.hole_pixels},
                      {"labeling",
                       {{"initial_energy", r.labeling.initial_energy},
                        {"final_energy", r.labeling.energies.back()},
                        {"energies", r.labeling.energies},
                        {"accepted_moves", r.labeling.accepted_moves},
                        {"sweeps", r.labeling.sweeps},
                        {"starts", r.labeling.starts},
                        {"truncations", r.labeling.truncations}}},
                      {"warp",
                       {{"degenerate_triangles", r.warp.degenerate_triangles},
                        {"regions_warped", r.warp.regions_warped},
                        {"regions_dropped", r.warp.regions_dropped},
                        {"fallback_pixels", r.warp.fallback_pixels},
                        {"identity_regions", r.warp.identity_regions},
                        {"max_relative_residual", r.warp.max_relative_residual}}}};
        if (options.gt_dir) {
            const fs::path gt = *options.gt_dir / frame_file_name(task.source);
            if (fs::exists(gt)) {
                const auto m = evaluate(r.image, read_image(gt));
                entry["metrics"] = {{"ssim", m.ssim},
                                    {"mse", m.mse},
                                    {"psnr", std::isfinite(m.psnr) ? json(m.psnr) : json(nullptr)}};
                ssim_sum += m.ssim;
                mse_sum += m.mse;
                ++scored;
            }
        }
        tasks.push_back(entry);
        timing_tasks.push_back({{"index", i}, {"source", task.source}, {"seconds", r.seconds}});
    }
    json skipped = json::array();
    for (const auto& s : list.skipped) skipped.push_back({{"index", s.index}, {"reason", s.reason}});

    json report = {{"reference_lens", reference},
                   {"frames", static_cast<int>(seq.frames.size())},
                   {"tasks", tasks},
                   {"skipped", skipped},
                   {"ablation",
                    {{"disable_validation", config.disable_validation},
                     {"disable_merging", config.disable_merging},
                     {"disable_labeling", config.disable_labeling}}}};
    if (scored > 0) {
        summary.mean_ssim = ssim_sum / scored;
        summary.mean_mse = mse_sum / scored;
        report["mean_ssim"] = *summary.mean_ssim;
        report["mean_mse"] = *summary.mean_mse;
    }
    write_json(report, out_dir / "report.json");

    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    write_json({{"workers", workers}, {"total_seconds", wall}, {"tasks", timing_tasks}}, out_dir / "timing.json");
    return summary;
}

std::vector<EvalEntry> evaluate_directories(const fs::path& pred_dir, const fs::path& gt_dir, const fs::path& report)
{
    if (!fs::is_directory(pred_dir)) throw Error("not a directory: " + pred_dir.string());
    if (!fs::is_directory(gt_dir)) throw Error("not a directory: " + gt_dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(pred_dir))
        if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw Error("no PNG frames in " + pred_dir.string());

    std::vector<EvalEntry> entries;
    json frames = json::array();
    double ssim_sum = 0.0, mse_sum = 0.0;
    for (const auto& f : files) {
        const fs::path gt = gt_dir / f.filename();
        if (!fs::exists(gt)) throw Error("no ground truth for " + f.filename().string() + " in " + gt_dir.string());
        EvalEntry e{f.filename().string(), evaluate(read_image(f), read_image(gt))};
        frames.push_back({{"name", e.name},
                          {"ssim", e.metrics.ssim},
                          {"mse", e.metrics.mse},
                          {"psnr", std::isfinite(e.metrics.psnr) ? json(e.metrics.psnr) : json(nullptr)}});
        ssim_sum += e.metrics.ssim;
        mse_sum += e.metrics.mse;
        entries.push_back(std::move(e));
    }
    const double mean_mse = mse_sum / entries.size();
    const double mean_psnr = psnr_from_mse(mean_mse);
    write_json({{"frames", frames},
                {"mean_ssim", ssim_sum / entries.size()},
                {"mean_mse", mean_mse},
                {"psnr_of_mean_mse", std::isfinite(mean_psnr) ? json(mean_psnr) : json(nullptr)}},
               report);
    return entries;
}

}  // namespace hsvideo
