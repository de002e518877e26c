#include "hsvideo/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <variant>

namespace hsvideo {

namespace {

using FieldRef = std::variant<int PipelineConfig::*, double PipelineConfig::*, bool PipelineConfig::*>;

const std::vector<std::pair<std::string_view, FieldRef>>& fields()
{
    static const std::vector<std::pair<std::string_view, FieldRef>> table = {
        {"patch_radius", &PipelineConfig::patch_radius},
        {"sigma", &PipelineConfig::sigma},
        {"fb_threshold", &PipelineConfig::fb_threshold},
        {"min_good_pixels", &PipelineConfig::min_good_pixels},
        {"good_weight", &PipelineConfig::good_weight},
        {"segments", &PipelineConfig::segments},
        {"mean_area", &PipelineConfig::mean_area},
        {"compactness", &PipelineConfig::compactness},
        {"lambda_flow", &PipelineConfig::lambda_flow},
        {"slic_iterations", &PipelineConfig::slic_iterations},
        {"cell", &PipelineConfig::cell},
        {"stride", &PipelineConfig::stride},
        {"min_controls_dense", &PipelineConfig::min_controls_dense},
        {"edge_threshold", &PipelineConfig::edge_threshold},
        {"alpha_edge", &PipelineConfig::alpha_edge},
        {"alpha_flat", &PipelineConfig::alpha_flat},
        {"k_source", &PipelineConfig::k_source},
        {"k_reference", &PipelineConfig::k_reference},
        {"alpha_l", &PipelineConfig::alpha_l},
        {"beta_l", &PipelineConfig::beta_l},
        {"gamma_l", &PipelineConfig::gamma_l},
        {"epsilon", &PipelineConfig::epsilon},
        {"hole_cost", &PipelineConfig::hole_cost},
        {"sweeps", &PipelineConfig::sweeps},
        {"label_restarts", &PipelineConfig::label_restarts},
        {"fallback_coverage", &PipelineConfig::fallback_coverage},
        {"estimate_missing_flows", &PipelineConfig::estimate_missing_flows},
        {"flow_levels", &PipelineConfig::flow_levels},
        {"flow_radius", &PipelineConfig::flow_radius},
        {"disable_validation", &PipelineConfig::disable_validation},
        {"disable_merging", &PipelineConfig::disable_merging},
        {"disable_labeling", &PipelineConfig::disable_labeling},
        {"workers", &PipelineConfig::workers},
        {"debug_dumps", &PipelineConfig::debug_dumps},
    };
    return table;
}

std::string_view trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// Strips a trailing comment that is not inside a quoted string.
std::string_view strip_comment(std::string_view s)
{
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"') quoted = !quoted;
        if (s[i] == '#' && !quoted) return s.substr(0, i);
    }
    return s;
}

std::string unquote(std::string_view v)
{
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return std::string(v.substr(1, v.size() - 2));
    return std::string(v);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text)
{
    const std::string s = unquote(text);
    T value{};
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, value);
    if (ec != std::errc() || ptr != end)
        throw Error("config: invalid value '" + s + "' for " + std::string(key));
    return value;
}

}  // namespace

WarpParams PipelineConfig::warp() const
{
    WarpParams p;
    p.cell = cell;
    p.stride = stride;
    p.min_controls_dense = min_controls_dense;
    p.edge_threshold = edge_threshold;
    p.alpha_edge = alpha_edge;
    p.alpha_flat = alpha_flat;
    p.good_weight = good_weight;
    p.weight_by_validation = !disable_validation;
    p.merge_source = !disable_merging;
    p.fallback_coverage = fallback_coverage;
    p.validation = validation();
    return p;
}

RenderParams PipelineConfig::render() const
{
    RenderParams p;
    p.k_source = k_source;
    p.k_reference = k_reference;
    p.alpha = alpha_l;
    p.beta = beta_l;
    p.gamma = gamma_l;
    p.epsilon = epsilon;
    p.hole_cost = hole_cost;
    p.sweeps = sweeps;
    p.restarts = label_restarts;
    return p;
}

void PipelineConfig::check() const
{
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0)) throw Error(std::string("config: ") + name + " must be positive");
    };
    auto non_negative = [](double v, const char* name) {
        if (!(v >= 0.0)) throw Error(std::string("config: ") + name + " must be non-negative");
    };
    non_negative(patch_radius, "patch_radius");
    positive(sigma, "sigma");
    positive(fb_threshold, "fb_threshold");
    non_negative(min_good_pixels, "min_good_pixels");
    if (!(good_weight >= 0.0 && good_weight <= 1.0)) throw Error("config: good_weight must lie in [0, 1]");
    non_negative(segments, "segments");
    positive(mean_area, "mean_area");
    positive(compactness, "compactness");
    non_negative(lambda_flow, "lambda_flow");
    positive(slic_iterations, "slic_iterations");
    positive(cell, "cell");
    positive(stride, "stride");
    non_negative(min_controls_dense, "min_controls_dense");
    non_negative(edge_threshold, "edge_threshold");
    positive(alpha_edge, "alpha_edge");
    positive(alpha_flat, "alpha_flat");
    non_negative(k_source, "k_source");
    non_negative(k_reference, "k_reference");
    non_negative(alpha_l, "alpha_l");
    non_negative(beta_l, "beta_l");
    non_negative(gamma_l, "gamma_l");
    positive(epsilon, "epsilon");
    positive(hole_cost, "hole_cost");
    positive(sweeps, "sweeps");
    positive(flow_levels, "flow_levels");
    non_negative(flow_radius, "flow_radius");
    non_negative(workers, "workers");
}

void set_config_value(PipelineConfig& config, std::string_view key, std::string_view value)
{
    value = trim(value);
    for (const auto& [name, ref] : fields()) {
        if (name != key) continue;
        std::visit(
            [&](auto member) {
                using T = std::remove_cvref_t<decltype(config.*member)>;
                if constexpr (std::is_same_v<T, bool>) {
                    const std::string v = unquote(value);
                    if (v == "true")
                        config.*member = true;
                    else if (v == "false")
                        config.*member = false;
                    else
                        throw Error("config: expected true/false for " + std::string(key));
                } else {
                    config.*member = parse_number<T>(key, value);
                }
            },
            ref);
        return;
    }
    throw Error("config: unknown key '" + std::string(key) + "'");
}

PipelineConfig parse_config(std::string_view text, PipelineConfig base)
{
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        const auto raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        const auto line = trim(strip_comment(raw));
        if (line.empty()) continue;
        if (line.front() == '[') throw Error("config line " + std::to_string(line_no) + ": tables are not supported");
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw Error("config line " + std::to_string(line_no) + ": expected key = value");
        try {
            set_config_value(base, trim(line.substr(0, eq)), line.substr(eq + 1));
        } catch (const Error& e) {
            throw Error("config line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return base;
}

PipelineConfig load_config(const std::filesystem::path& file, PipelineConfig base)
{
    std::ifstream in(file);
    if (!in) throw Error("cannot open config " + file.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), base);
}

std::string format_config(const PipelineConfig& config)
{
    std::ostringstream out;
    out.precision(17);
    for (const auto& [name, ref] : fields()) {
        out << name << " = ";
        std::visit(
            [&](auto member) {
                using T = std::remove_cvref_t<decltype(config.*member)>;
                if constexpr (std::is_same_v<T, bool>)
                    out << (config.*member ? "true" : "false");
                else
                    out << config.*member;
            },
            ref);
        out << '\n';
    }
    return out.str();
}

void apply_ablation(PipelineConfig& config, std::string_view name)
{
    if (name == "opf")
        config.disable_validation = true;
    else if (name == "spm")
        config.disable_merging = true;
    else if (name == "lab")
        config.disable_labeling = true;
    else
        throw Error("unknown ablation '" + std::string(name) + "' (expected opf, spm or lab)");
}

}  // namespace hsvideo
