#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "targetloc/view_sampler.hpp"
#include "targetloc/warp.hpp"

namespace targetloc {

enum class Split { train, test };

const char* to_string(Split s);
Split split_from_string(const std::string& s);

/// One synthesized view: descriptor only, pixels are re-warped on demand.
struct SampleRecord {
    int index = 0;
    Split split = Split::train;
    ViewTransform transform;
    PixelPoint target_px; // ground truth location in view coordinates
};

struct DatasetManifest {
    std::string stack_ref; // path of the stack manifest this derives from
    std::uint64_t global_seed = 0;
    int view_size = 256;
    int r_train = 0;
    int r_test = 0;
    std::vector<SampleRecord> samples; // train block first, then test

    std::vector<const SampleRecord*> split_samples(Split s) const;
};

struct GenerateSpec {
    int r_train = 0;
    int r_test = 0;
    std::uint64_t global_seed = 0;
    // optional per-split restriction of source images (empty = whole stack)
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
    bool write_images = true; // emit {split}_{index}.pgm next to the manifest
};

/// Samples r_train + r_test views with disjoint per-split seed streams. Every
/// sample is reproducible from (global_seed, split, index) alone, so content
/// does not depend on generation order. Writes the manifest (and sample PGMs
/// unless disabled) into out_dir.
DatasetManifest generate_dataset(const Stack& stack, const SamplerConfig& cfg,
                                 const GenerateSpec& spec,
                                 const std::filesystem::path& out_dir,
                                 const std::string& stack_ref);

/// Re-synthesizes the pixels of one sample from the stack.
WarpResult render_sample(const Stack& stack, const SampleRecord& rec);

// Manifest text format, one record per line, floats printed with 17
// significant digits so rereads are bit-exact.
void save_dataset_manifest(const std::filesystem::path& path, const DatasetManifest& m);
DatasetManifest load_dataset_manifest(const std::filesystem::path& path);

} // namespace targetloc
