#ifndef HSVIDEO_SEQUENCE_HPP
#define HSVIDEO_SEQUENCE_HPP

#include "hsvideo/types.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace hsvideo {

enum class Role { reference, source };

/// One capture of one lens.
struct CaptureFrame {
    int lens_id = 0;
    double time = 0.0;
    Image image;
    std::string path;
    Role role = Role::source;
};

/// A source frame bracketed by the two reference captures around it.
/// Indices refer to positions in the time-sorted stream.
struct SynthesisTask {
    int ref_prev = -1;
    int source = -1;
    int ref_next = -1;
    double t = 0.0;

    bool operator==(const SynthesisTask&) const = default;
};

struct SkippedFrame {
    int index = -1;
    std::string reason;
};

struct TaskList {
    std::vector<SynthesisTask> tasks;
    std::vector<SkippedFrame> skipped;
};

struct ManifestEntry {
    int lens = 0;
    double time = 0.0;
    std::string path;  // relative to the manifest
};

struct Manifest {
    std::vector<ManifestEntry> frames;
    std::optional<int> reference_lens;
};

Manifest read_manifest(const std::filesystem::path& file);
void write_manifest(const Manifest& manifest, const std::filesystem::path& file);

struct Sequence {
    std::vector<CaptureFrame> frames;  // sorted by time
    std::optional<int> reference_lens;
};

/// Loads every frame in the manifest, sorts by time and checks that all
/// rasters share one size and that timestamps strictly increase.
Sequence load_sequence(const std::filesystem::path& manifest);

/// Same checks on frames already in memory.
void check_sequence(std::vector<CaptureFrame>& frames);

/// Lens whose first capture comes last within the opening iteration.
int latest_firing_lens(const std::vector<CaptureFrame>& frames);

/// Tags frames of the reference lens as reference and everything else as
/// source. Returns the reference lens used. Throws when the lens is absent.
int assign_roles(std::vector<CaptureFrame>& frames, std::optional<int> reference_lens = std::nullopt);

/// One task per source frame with a reference capture strictly before and
/// after it. Frames at the stream boundary are reported in `skipped`.
TaskList build_tasks(const std::vector<CaptureFrame>& frames);

}  // namespace hsvideo

#endif  // HSVIDEO_SEQUENCE_HPP
