#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ssae/image.hpp"

namespace ssae {

enum class Split { train, test, query, gallery };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct DatasetEntry {
    std::string path;  // file path, or "synthetic:<seed>:<index>" for generated images
    int label = 0;     // class id or identity id
    Split split = Split::train;
    int camera = -1;   // -1 when unknown
};

/// Entry list plus the decoded pixels (N x C x H x W in [0, 1]), row i of
/// `pixels` belonging to entries[i].
struct Dataset {
    std::string name;
    std::vector<DatasetEntry> entries;
    std::vector<std::string> class_names;
    TensorF pixels;

    int size() const { return static_cast<int>(entries.size()); }
    int num_classes() const;
    bool has_cameras() const;

    /// Indices of the entries tagged with `split`, in entry order.
    std::vector<int> indices(Split split) const;
    /// Subset restricted to `split`.
    Dataset subset(Split split) const;
    Dataset subset(const std::vector<int>& rows) const;

    std::vector<int> labels() const;
    std::vector<int> cameras() const;
    /// Normalized images for rows [first, first + count) of `order`.
    ImageBatch batch(const std::vector<int>& order, int first, int count,
                     const NormalizationSpec& norm) const;
};

/// Ten balanced classes of 32x32 RGB shapes and textures (disc, square,
/// triangle, ring, plus, horizontal stripes, vertical stripes, checkerboard,
/// diagonal stripes, dot grid) with random colors, placement and noise.
/// Entry i has class i % 10. Images are split `train` then `test` by
/// `test_count` (the last entries are test).
Dataset synthetic_shapes(std::uint64_t seed, int count, int test_count = 0, int size = 32);

/// Retrieval set: `identities` identities, each a fixed object (shape kind
/// and color) rendered with per-image jitter over a random low-contrast
/// background, under two cameras.
/// Per identity: `train_per_id` training images (either camera),
/// `query_per_id` queries from camera 0 and `gallery_per_id` gallery images
/// from camera 1.
Dataset synthetic_identities(std::uint64_t seed, int identities, int train_per_id,
                             int query_per_id, int gallery_per_id, int size = 32);

/// class-per-folder tree: `root/<class>/*.png` (labels by alphabetical
/// folder order) or `root/{train,test}/<class>/*.png`. Unreadable files are
/// skipped with a warning on stderr; an empty result throws.
Dataset load_image_folder(const std::filesystem::path& root);

/// CSV with header `path,label,split[,camera]`; relative paths resolve
/// against the manifest's directory.
Dataset load_manifest_csv(const std::filesystem::path& csv);

// PNG helpers (8-bit). Pixels are float in [0, 1], 1 x C x H x W.
TensorF read_png(const std::filesystem::path& path);
/// Writes one image (C = 1 grayscale or C = 3 RGB) from `img` item `n`.
void write_png(const std::filesystem::path& path, const TensorF& img, int n = 0);

}  // namespace ssae
