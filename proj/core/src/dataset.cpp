#include "targetloc/dataset.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "targetloc/pnm_io.hpp"

namespace targetloc {

const char* to_string(Split s) { return s == Split::train ? "train" : "test"; }

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "test") return Split::test;
    throw BadDatasetManifest("unknown split '" + s + "'");
}

std::vector<const SampleRecord*> DatasetManifest::split_samples(Split s) const {
    std::vector<const SampleRecord*> out;
    for (const auto& rec : samples)
        if (rec.split == s) out.push_back(&rec);
    return out;
}

WarpResult render_sample(const Stack& stack, const SampleRecord& rec) {
    return warp(stack.by_id(rec.transform.source_image_id), rec.transform);
}

DatasetManifest generate_dataset(const Stack& stack, const SamplerConfig& cfg,
                                 const GenerateSpec& spec,
                                 const std::filesystem::path& out_dir,
                                 const std::string& stack_ref) {
    if (spec.r_train <= 0 || spec.r_test < 0)
        throw InvalidCount("generate_dataset: need r_train > 0 and r_test >= 0");
    cfg.validate();
    for (const auto& img : stack.images)
        if (img.image_id.find_first_of(" \t\n") != std::string::npos)
            throw InvalidArgument("image id contains whitespace: '" + img.image_id + "'");

    DatasetManifest m;
    m.stack_ref = stack_ref;
    m.global_seed = spec.global_seed;
    m.view_size = cfg.view_size;
    m.r_train = spec.r_train;
    m.r_test = spec.r_test;

    std::filesystem::create_directories(out_dir);

    auto emit = [&](Split split, int count, const std::vector<std::string>& ids) {
        const std::uint64_t split_key =
            derive_key(spec.global_seed, std::string("split:") + to_string(split));
        for (int i = 0; i < count; ++i) {
            CounterRng rng(derive_key(split_key, static_cast<std::uint64_t>(i)));
            SampleRecord rec;
            rec.index = i;
            rec.split = split;
            rec.transform = sample_view(rng, cfg, stack, ids);
            rec.target_px = rec.transform.project_target(
                stack.target.pixel_in(rec.transform.source_image_id));
            if (spec.write_images) {
                WarpResult wr = render_sample(stack, rec);
                char name[64];
                std::snprintf(name, sizeof name, "%s_%06d.pgm", to_string(split), i);
                write_pgm(out_dir / name, wr.image, 16);
            }
            m.samples.push_back(std::move(rec));
        }
    };
    emit(Split::train, spec.r_train, spec.train_ids);
    emit(Split::test, spec.r_test, spec.test_ids);

    save_dataset_manifest(out_dir / "manifest.txt", m);
    return m;
}

void save_dataset_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
    std::ofstream out(path);
    if (!out)
        throw WriteFailure("cannot open for writing: " + path.string());

    out << "targetloc-dataset 1\n";
    out << "stack " << m.stack_ref << "\n";
    out << "global_seed " << m.global_seed << "\n";
    out << "view_size " << m.view_size << "\n";
    out << "counts " << m.r_train << " " << m.r_test << "\n";

    char buf[4096];
    for (const auto& rec : m.samples) {
        const auto& h = rec.transform.H.m;
        std::snprintf(buf, sizeof buf,
                      "sample %d %s %s "
                      "%.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g "
                      "%.17g %.17g %llu\n",
                      rec.index, to_string(rec.split),
                      rec.transform.source_image_id.c_str(), h[0], h[1], h[2], h[3],
                      h[4], h[5], h[6], h[7], h[8], rec.target_px.u, rec.target_px.v,
                      static_cast<unsigned long long>(rec.transform.seed));
        out << buf;
    }
    if (!out)
        throw WriteFailure("short write: " + path.string());
}

DatasetManifest load_dataset_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw BadDatasetManifest("cannot open dataset manifest: " + path.string());

    std::string line;
    if (!std::getline(in, line) || line.rfind("targetloc-dataset 1", 0) != 0)
        throw BadDatasetManifest("bad magic in " + path.string());

    DatasetManifest m;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string kind;
        ls >> kind;
        if (kind == "stack") {
            std::string rest;
            std::getline(ls, rest);
            m.stack_ref = rest.empty() ? "" : rest.substr(1);
        } else if (kind == "global_seed") {
            ls >> m.global_seed;
        } else if (kind == "view_size") {
            ls >> m.view_size;
        } else if (kind == "counts") {
            ls >> m.r_train >> m.r_test;
        } else if (kind == "sample") {
            SampleRecord rec;
            std::string split;
            unsigned long long seed = 0;
            ls >> rec.index >> split >> rec.transform.source_image_id;
            for (double& v : rec.transform.H.m) ls >> v;
            ls >> rec.target_px.u >> rec.target_px.v >> seed;
            if (!ls)
                throw BadDatasetManifest("malformed sample line: " + line);
            rec.split = split_from_string(split);
            rec.transform.seed = seed;
            rec.transform.view_size = m.view_size;
            m.samples.push_back(std::move(rec));
        } else {
            throw BadDatasetManifest("unknown record '" + kind + "' in " + path.string());
        }
    }
    return m;
}

} // namespace targetloc
