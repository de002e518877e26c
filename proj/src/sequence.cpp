#include "hsvideo/sequence.hpp"

#include "hsvideo/image_io.hpp"

#include <json.hpp>

#include <fstream>
#include <map>
#include <sstream>

namespace hsvideo {

using nlohmann::json;

Manifest read_manifest(const std::filesystem::path& file)
{
    std::ifstream in(file);
    if (!in) throw Error("cannot open manifest '" + file.string() + "'");
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw Error("malformed manifest '" + file.string() + "': " + e.what());
    }
    if (!doc.contains("frames") || !doc["frames"].is_array())
        throw Error("manifest '" + file.string() + "' has no 'frames' array");

    Manifest m;
    for (std::size_t i = 0; i < doc["frames"].size(); ++i) {
        const auto& f = doc["frames"][i];
        if (!f.contains("lens") || !f.contains("time") || !f.contains("path"))
            throw Error("manifest entry " + std::to_string(i) + " needs 'lens', 'time' and 'path'");
        m.frames.push_back({f["lens"].get<int>(), f["time"].get<double>(), f["path"].get<std::string>()});
    }
    if (doc.contains("reference_lens") && !doc["reference_lens"].is_null())
        m.reference_lens = doc["reference_lens"].get<int>();
    return m;
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& file)
{
    json doc;
    doc["frames"] = json::array();
    for (const auto& f : manifest.frames)
        doc["frames"].push_back({{"lens", f.lens}, {"time", f.time}, {"path", f.path}});
    if (manifest.reference_lens) doc["reference_lens"] = *manifest.reference_lens;
    std::ofstream out(file);
    if (!out) throw Error("cannot write manifest '" + file.string() + "'");
    out << doc.dump(2) << '\n';
}

void check_sequence(std::vector<CaptureFrame>& frames)
{
    std::stable_sort(frames.begin(), frames.end(),
                     [](const CaptureFrame& a, const CaptureFrame& b) { return a.time < b.time; });
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const auto& f = frames[i];
        if (!std::isfinite(f.time)) throw Error("frame '" + f.path + "' has a non-finite timestamp");
        if (i > 0 && !(frames[i - 1].time < f.time)) {
            std::ostringstream msg;
            msg << "timestamps are not strictly increasing: '" << f.path << "' repeats time " << f.time
                << " of '" << frames[i - 1].path << "'";
            throw Error(msg.str());
        }
        if (f.image.width() != frames[0].image.width() || f.image.height() != frames[0].image.height()) {
            std::ostringstream msg;
            msg << "dimension mismatch: '" << f.path << "' is " << f.image.width() << "x"
                << f.image.height() << " but '" << frames[0].path << "' is " << frames[0].image.width()
                << "x" << frames[0].image.height();
            throw Error(msg.str());
        }
        for (int c = 0; c < 3; ++c) {
            const auto& ch = f.image.channel(c);
            if ((ch < 0.0).any() || (ch > 1.0).any())
                throw Error("frame '" + f.path + "' has channel values outside [0,1]");
        }
    }
}

Sequence load_sequence(const std::filesystem::path& manifest_file)
{
    const Manifest m = read_manifest(manifest_file);
    const auto base = manifest_file.parent_path();
    Sequence seq;
    seq.reference_lens = m.reference_lens;
    for (const auto& e : m.frames) {
        CaptureFrame f;
        f.lens_id = e.lens;
        f.time = e.time;
        f.path = e.path;
        const auto full = base / e.path;
        if (!std::filesystem::exists(full))
            throw Error("manifest entry '" + e.path + "' references missing file '" + full.string() + "'");
        f.image = read_image(full);
        seq.frames.push_back(std::move(f));
    }
    check_sequence(seq.frames);
    return seq;
}

int latest_firing_lens(const std::vector<CaptureFrame>& frames)
{
    if (frames.empty()) throw Error("cannot choose a reference lens for an empty stream");
    // The first capture of each lens marks one full iteration; the lens seen
    // last in that opening pass fires latest.
    std::map<int, bool> seen;
    int latest = frames.front().lens_id;
    for (const auto& f : frames) {
        if (seen.count(f.lens_id)) break;
        seen[f.lens_id] = true;
        latest = f.lens_id;
    }
    return latest;
}

int assign_roles(std::vector<CaptureFrame>& frames, std::optional<int> reference_lens)
{
    const int ref = reference_lens ? *reference_lens : latest_firing_lens(frames);
    const bool present = std::any_of(frames.begin(), frames.end(),
                                     [ref](const CaptureFrame& f) { return f.lens_id == ref; });
    if (!present) throw Error("reference lens " + std::to_string(ref) + " does not occur in the stream");
    for (auto& f : frames) f.role = f.lens_id == ref ? Role::reference : Role::source;
    return ref;
}

TaskList build_tasks(const std::vector<CaptureFrame>& frames)
{
    TaskList out;
    const int n = static_cast<int>(frames.size());
    for (int i = 0; i < n; ++i) {
        if (frames[i].role != Role::source) continue;
        int prev = -1;
        for (int j = i - 1; j >= 0; --j)
            if (frames[j].role == Role::reference) {
                prev = j;
                break;
            }
        int next = -1;
        for (int j = i + 1; j < n; ++j)
            if (frames[j].role == Role::reference) {
                next = j;
                break;
            }
        if (prev < 0 || next < 0) {
            out.skipped.push_back({i, prev < 0 ? "no earlier reference frame" : "no later reference frame"});
            continue;
        }
        const double t = (frames[i].time - frames[prev].time) / (frames[next].time - frames[prev].time);
        out.tasks.push_back({prev, i, next, t});
    }
    return out;
}

}  // namespace hsvideo
