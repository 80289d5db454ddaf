#include "ssae/dataset.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "ssae/nn/layers.hpp"

namespace ssae {

namespace fs = std::filesystem;
using nn::SplitMix64;

std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::test: return "test";
        case Split::query: return "query";
        case Split::gallery: return "gallery";
    }
    return "train";
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "test") return Split::test;
    if (s == "query") return Split::query;
    if (s == "gallery") return Split::gallery;
    throw std::invalid_argument("unknown split '" + s + "' (expected train|test|query|gallery)");
}

int Dataset::num_classes() const {
    std::set<int> seen;
    for (const auto& e : entries) seen.insert(e.label);
    return static_cast<int>(seen.size());
}

bool Dataset::has_cameras() const {
    return std::any_of(entries.begin(), entries.end(), [](const auto& e) { return e.camera >= 0; });
}

std::vector<int> Dataset::indices(Split split) const {
    std::vector<int> out;
    for (int i = 0; i < size(); ++i)
        if (entries[i].split == split) out.push_back(i);
    return out;
}

Dataset Dataset::subset(const std::vector<int>& rows) const {
    Dataset out;
    out.name = name;
    out.class_names = class_names;
    Shape s = pixels.shape();
    s.n = static_cast<int>(rows.size());
    out.pixels = TensorF(s);
    const std::size_t per = s.per_item();
    for (std::size_t k = 0; k < rows.size(); ++k) {
        out.entries.push_back(entries.at(rows[k]));
        std::copy_n(pixels.item(rows[k]), per, out.pixels.item(static_cast<int>(k)));
    }
    return out;
}

Dataset Dataset::subset(Split split) const { return subset(indices(split)); }

std::vector<int> Dataset::labels() const {
    std::vector<int> out;
    for (const auto& e : entries) out.push_back(e.label);
    return out;
}

std::vector<int> Dataset::cameras() const {
    std::vector<int> out;
    for (const auto& e : entries) out.push_back(e.camera);
    return out;
}

ImageBatch Dataset::batch(const std::vector<int>& order, int first, int count,
                          const NormalizationSpec& norm) const {
    Shape s = pixels.shape();
    s.n = count;
    TensorF px(s);
    const std::size_t per = s.per_item();
    for (int k = 0; k < count; ++k) std::copy_n(pixels.item(order.at(first + k)), per, px.item(k));
    return to_normalized(px, norm);
}

// ------------------------------------------------------------ synthetic

namespace {

constexpr int kShapeClasses = 10;
constexpr double kContrastLo = 0.1;
constexpr double kContrastHi = 0.25;
constexpr double kNoise = 0.06;
const std::array<const char*, kShapeClasses> kShapeNames = {
    "disc", "square", "triangle", "ring", "plus",
    "hstripes", "vstripes", "checker", "dstripes", "dots"};

struct Color {
    double r, g, b;
};

/// Geometry and texture parameters for one rendered image.
struct ShapeParams {
    int kind = 0;
    double cx = 16, cy = 16;
    double size = 8;     // radius / half-side / arm length
    double size2 = 2;    // ring width, plus thickness
    double period = 6;   // texture period
    double phase_x = 0, phase_y = 0;
};

ShapeParams random_params(int kind, int canvas, SplitMix64& rng) {
    const double s = canvas / 32.0;
    ShapeParams p;
    p.kind = kind;
    p.cx = canvas / 2.0 + rng.uniform(-4, 4) * s;
    p.cy = canvas / 2.0 + rng.uniform(-4, 4) * s;
    switch (kind) {
        case 0: p.size = rng.uniform(6, 11) * s; break;
        case 1: p.size = rng.uniform(5, 10) * s; break;
        case 2: p.size = rng.uniform(6, 11) * s; break;
        case 3:
            p.size = rng.uniform(8, 12) * s;
            p.size2 = rng.uniform(2.5, 4) * s;
            break;
        case 4:
            p.size = rng.uniform(7, 12) * s;
            p.size2 = rng.uniform(1.5, 3) * s;
            break;
        case 7: p.period = rng.uniform(6, 12) * s; break;
        case 9: p.period = rng.uniform(5, 8) * s; break;
        default: p.period = rng.uniform(4, 8) * s; break;
    }
    p.phase_x = rng.uniform(0, 16) * s;
    p.phase_y = rng.uniform(0, 16) * s;
    return p;
}

bool inside(const ShapeParams& p, double x, double y) {
    const double dx = x - p.cx, dy = y - p.cy;
    const double d = std::hypot(dx, dy);
    auto wrap = [](double v, double period) { return v - period * std::floor(v / period); };
    switch (p.kind) {
        case 0: return d < p.size;
        case 1: return std::abs(dx) < p.size && std::abs(dy) < p.size;
        case 2: {
            const double top = p.cy - p.size, bottom = p.cy + p.size;
            if (y < top || y > bottom) return false;
            const double half = p.size * (y - top) / (bottom - top);
            return std::abs(dx) <= half;
        }
        case 3: return d < p.size && d > p.size - p.size2;
        case 4:
            return (std::abs(dx) < p.size2 && std::abs(dy) < p.size) ||
                   (std::abs(dy) < p.size2 && std::abs(dx) < p.size);
        case 5: return wrap(y + p.phase_y, p.period) < p.period / 2;
        case 6: return wrap(x + p.phase_x, p.period) < p.period / 2;
        case 7: {
            const int a = static_cast<int>(std::floor((x + p.phase_x) / (p.period / 2)));
            const int b = static_cast<int>(std::floor((y + p.phase_y) / (p.period / 2)));
            return ((a + b) & 1) == 0;
        }
        case 8: return wrap(x + y + p.phase_x, p.period * 1.4) < p.period * 0.7;
        case 9: {
            const double gx = wrap(x + p.phase_x, p.period) - p.period / 2;
            const double gy = wrap(y + p.phase_y, p.period) - p.period / 2;
            return std::hypot(gx, gy) < p.period * 0.28;
        }
    }
    return false;
}

void render(const ShapeParams& p, Color fg, Color bg, double noise, SplitMix64& rng,
            float* dst, int canvas) {
    const std::size_t plane = static_cast<std::size_t>(canvas) * canvas;
    for (int y = 0; y < canvas; ++y)
        for (int x = 0; x < canvas; ++x) {
            const bool on = inside(p, x + 0.5, y + 0.5);
            const Color c = on ? fg : bg;
            const std::size_t i = static_cast<std::size_t>(y) * canvas + x;
            const std::array<double, 3> rgb = {c.r, c.g, c.b};
            for (int ch = 0; ch < 3; ++ch) {
                const double v = rgb[ch] + noise * rng.normal();
                dst[ch * plane + i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
        }
}

Color random_color(SplitMix64& rng, double lo, double hi) {
    return {rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)};
}

/// Background plus a foreground offset by `contrast` per channel in a
/// random direction. Low contrast keeps the classes from being trivially
/// separable, which leaves the classifiers with realistic margins.
std::pair<Color, Color> random_pair(SplitMix64& rng, double lo, double hi) {
    const Color bg = random_color(rng, 0.2, 0.8);
    auto off = [&](double v) {
        const double c = rng.uniform(lo, hi);
        return rng.below(2) == 1 ? v + c : v - c;
    };
    return {Color{off(bg.r), off(bg.g), off(bg.b)}, bg};
}

Color jitter(Color c, double amount, SplitMix64& rng) {
    auto j = [&](double v) { return std::clamp(v + rng.uniform(-amount, amount), 0.0, 1.0); };
    return {j(c.r), j(c.g), j(c.b)};
}

}  // namespace

Dataset synthetic_shapes(std::uint64_t seed, int count, int test_count, int size) {
    if (count <= 0) throw std::invalid_argument("synthetic dataset needs a positive count");
    if (test_count < 0 || test_count > count)
        throw std::invalid_argument("synthetic test_count out of range");
    Dataset d;
    d.name = "synthetic-shapes";
    d.class_names.assign(kShapeNames.begin(), kShapeNames.end());
    d.pixels = TensorF(Shape{count, 3, size, size});
    SplitMix64 rng(seed);
    for (int i = 0; i < count; ++i) {
        const int kind = i % kShapeClasses;
        const ShapeParams p = random_params(kind, size, rng);
        const auto [fg, bg] = random_pair(rng, kContrastLo, kContrastHi);
        render(p, fg, bg, kNoise, rng, d.pixels.item(i), size);
        d.entries.push_back({"synthetic:" + std::to_string(seed) + ":" + std::to_string(i), kind,
                             i < count - test_count ? Split::train : Split::test, -1});
    }
    return d;
}

Dataset synthetic_identities(std::uint64_t seed, int identities, int train_per_id, int query_per_id,
                             int gallery_per_id, int size) {
    if (identities < 2) throw std::invalid_argument("retrieval set needs at least two identities");
    if (query_per_id < 1 || gallery_per_id < 1)
        throw std::invalid_argument("retrieval set needs queries and gallery images");
    // An identity is its object (shape kind and color); the background is
    // per-image scene clutter, as for people seen by surveillance cameras.
    struct Identity {
        int kind;
        Color fg;
    };
    SplitMix64 id_rng(seed ^ 0x5EEDULL);
    std::vector<Identity> ids;
    for (int k = 0; k < identities; ++k) ids.push_back({k % kShapeClasses, random_color(id_rng, 0.3, 0.7)});

    const int per_id = train_per_id + query_per_id + gallery_per_id;
    Dataset d;
    d.name = "synthetic-identities";
    for (int k = 0; k < identities; ++k) d.class_names.push_back("id" + std::to_string(k));
    d.pixels = TensorF(Shape{identities * per_id, 3, size, size});
    SplitMix64 rng(seed);
    int row = 0;
    for (int j = 0; j < per_id; ++j)
        for (int k = 0; k < identities; ++k, ++row) {
            Split split = Split::train;
            int camera = static_cast<int>(rng.below(2));
            if (j >= train_per_id + query_per_id) {
                split = Split::gallery;
                camera = 1;
            } else if (j >= train_per_id) {
                split = Split::query;
                camera = 0;
            }
            const ShapeParams p = random_params(ids[k].kind, size, rng);
            // camera 1 sees a slightly darker, warmer scene
            auto cam = [camera](Color c) {
                return camera == 1 ? Color{std::min(1.0, c.r * 0.9 + 0.06), c.g * 0.9, c.b * 0.85} : c;
            };
            const Color fg0 = jitter(ids[k].fg, 0.04, rng);
            auto off = [&](double v) {
                const double c = rng.uniform(kContrastLo, kContrastHi);
                return rng.below(2) == 1 ? v + c : v - c;
            };
            const Color fg = cam(fg0);
            const Color bg = cam(Color{off(fg0.r), off(fg0.g), off(fg0.b)});
            render(p, fg, bg, kNoise, rng, d.pixels.item(row), size);
            d.entries.push_back({"synthetic-id:" + std::to_string(seed) + ":" + std::to_string(row), k,
                                 split, camera});
        }
    return d;
}

// ------------------------------------------------------------------ PNG

TensorF read_png(const fs::path& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw std::runtime_error("cannot read PNG " + path.string() + ": " + image.message);
    image.format = PNG_FORMAT_RGB;
    std::vector<png_byte> buf(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&image);
        throw std::runtime_error("cannot decode PNG " + path.string() + ": " + image.message);
    }
    const int h = static_cast<int>(image.height), w = static_cast<int>(image.width);
    TensorF out(Shape{1, 3, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                out.at(0, c, y, x) = buf[(static_cast<std::size_t>(y) * w + x) * 3 + c] / 255.0f;
    return out;
}

void write_png(const fs::path& path, const TensorF& img, int n) {
    const Shape s = img.shape();
    if (s.c != 1 && s.c != 3) throw ShapeError("PNG export needs 1 or 3 channels, got " + s.str());
    if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
    std::vector<png_byte> buf(static_cast<std::size_t>(s.h) * s.w * s.c);
    const float* src = img.item(n);
    const std::size_t plane = s.plane();
    for (std::size_t i = 0; i < plane; ++i)
        for (int c = 0; c < s.c; ++c) {
            const float v = std::clamp(src[c * plane + i], 0.0f, 1.0f);
            buf[i * s.c + c] = static_cast<png_byte>(std::lround(v * 255.0f));
        }
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(s.w);
    image.height = static_cast<png_uint_32>(s.h);
    image.format = s.c == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.c_str(), 0, buf.data(), 0, nullptr))
        throw std::runtime_error("cannot write PNG " + path.string() + ": " + image.message);
}

// ------------------------------------------------------------ on disk

namespace {

bool is_png(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png";
}

std::vector<fs::path> sorted_children(const fs::path& dir, bool dirs) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (dirs ? e.is_directory() : e.is_regular_file()) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

/// Decodes entries whose path is a file; drops unreadable ones and checks
/// that all images share one size.
Dataset materialize(std::string name, std::vector<DatasetEntry> entries,
                    std::vector<std::string> class_names) {
    std::vector<TensorF> images;
    Dataset d;
    d.name = std::move(name);
    d.class_names = std::move(class_names);
    for (auto& e : entries) {
        try {
            TensorF img = read_png(e.path);
            if (!images.empty() && !(img.shape() == images.front().shape())) {
                std::cerr << "warning: skipping " << e.path << ": size " << img.shape().str()
                          << " differs from " << images.front().shape().str() << '\n';
                continue;
            }
            images.push_back(std::move(img));
            d.entries.push_back(std::move(e));
        } catch (const std::exception& ex) {
            std::cerr << "warning: skipping unreadable image: " << ex.what() << '\n';
        }
    }
    if (d.entries.empty()) throw std::runtime_error("dataset '" + d.name + "' has no readable images");
    d.pixels = concat_batch<float>(images);
    return d;
}

}  // namespace

Dataset load_image_folder(const fs::path& root) {
    if (!fs::is_directory(root)) throw std::runtime_error("dataset directory not found: " + root.string());
    const std::set<std::string> split_names = {"train", "test", "query", "gallery"};
    auto top = sorted_children(root, true);
    const bool has_splits =
        !top.empty() && std::all_of(top.begin(), top.end(), [&](const fs::path& p) {
            return split_names.count(p.filename().string()) > 0;
        });

    std::vector<std::pair<Split, fs::path>> roots;
    if (has_splits)
        for (const auto& p : top) roots.emplace_back(split_from_string(p.filename().string()), p);
    else
        roots.emplace_back(Split::train, root);

    std::set<std::string> names;
    for (const auto& [split, dir] : roots)
        for (const auto& c : sorted_children(dir, true)) names.insert(c.filename().string());
    std::vector<std::string> class_names(names.begin(), names.end());
    std::map<std::string, int> label_of;
    for (std::size_t i = 0; i < class_names.size(); ++i) label_of[class_names[i]] = static_cast<int>(i);

    std::vector<DatasetEntry> entries;
    for (const auto& [split, dir] : roots)
        for (const auto& c : sorted_children(dir, true))
            for (const auto& f : sorted_children(c, false))
                if (is_png(f)) entries.push_back({f.string(), label_of.at(c.filename().string()), split, -1});
    return materialize(root.filename().string(), std::move(entries), std::move(class_names));
}

Dataset load_manifest_csv(const fs::path& csv) {
    std::ifstream in(csv);
    if (!in) throw std::runtime_error("cannot open manifest " + csv.string());
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("manifest " + csv.string() + " is empty");
    auto split_line = [](const std::string& l) {
        std::vector<std::string> cells;
        std::stringstream ss(l);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
            while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
            cells.push_back(cell);
        }
        return cells;
    };
    const auto header = split_line(line);
    if (header.size() < 3 || header[0] != "path" || header[1] != "label" || header[2] != "split")
        throw std::runtime_error("manifest " + csv.string() + " needs header path,label,split[,camera]");
    const bool with_camera = header.size() >= 4 && header[3] == "camera";

    std::vector<DatasetEntry> entries;
    int max_label = -1;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto cells = split_line(line);
        if (cells.size() < 3)
            throw std::runtime_error(csv.string() + ":" + std::to_string(lineno) + ": expected at least 3 fields");
        DatasetEntry e;
        fs::path p = cells[0];
        e.path = (p.is_relative() ? csv.parent_path() / p : p).string();
        e.label = std::stoi(cells[1]);
        if (e.label < 0) throw std::runtime_error(csv.string() + ":" + std::to_string(lineno) + ": negative label");
        e.split = split_from_string(cells[2]);
        if (with_camera && cells.size() >= 4 && !cells[3].empty()) e.camera = std::stoi(cells[3]);
        max_label = std::max(max_label, e.label);
        entries.push_back(std::move(e));
    }
    std::vector<std::string> class_names;
    for (int i = 0; i <= max_label; ++i) class_names.push_back(std::to_string(i));
    return materialize(csv.stem().string(), std::move(entries), std::move(class_names));
}

}  // namespace ssae
