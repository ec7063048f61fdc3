#include "cra/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "cra/error.hpp"
#include "cra/rng.hpp"
#include "cra/tensor_io.hpp"

namespace cra::data {

using json = nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kPaletteSalt = 0x70a1u;
constexpr std::uint64_t kGeometrySalt = 0x6e0au;
constexpr std::uint64_t kSourceNoiseSalt = 0x5a01u;
constexpr std::uint64_t kTargetNoiseSalt = 0x5a02u;
// Directions are sign-fixed against this bound so that no clamping occurs
// for palette_shift <= kMaxCleanShift, keeping the gap strictly linear.
constexpr double kMaxCleanShift = 0.35;

Color hsv_to_rgb(double h, double s, double v) {
    const double c = v * s;
    const double hp = 6.0 * (h - std::floor(h));
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1) {
        r = c; g = x;
    } else if (hp < 2) {
        r = x; g = c;
    } else if (hp < 3) {
        g = c; b = x;
    } else if (hp < 4) {
        g = x; b = c;
    } else if (hp < 5) {
        r = x; b = c;
    } else {
        r = c; b = x;
    }
    const double m = v - c;
    return {r + m, g + m, b + m};
}

void validate_spec(const SceneSpec& spec) {
    if (spec.class_count < 3) {
        throw ConfigError("SceneSpec: class_count must be >= 3 (background plus "
                          "at least two foreground classes)");
    }
    if (spec.height < 8 || spec.width < 8) {
        throw ConfigError("SceneSpec: height and width must be >= 8");
    }
    if (spec.min_shapes < 1 || spec.max_shapes < spec.min_shapes) {
        throw ConfigError("SceneSpec: invalid shape count range");
    }
    if (spec.palette_shift < 0.0) {
        throw ConfigError("SceneSpec: palette_shift must be nonnegative");
    }
}

struct LabelGrid {
    std::size_t h, w;
    std::vector<double> cls;  // class index per pixel
    double& at(std::size_t y, std::size_t x) { return cls[y * w + x]; }
};

void paint_circle(LabelGrid& g, double cy, double cx, double r, double cls) {
    const double r2 = r * r;
    const auto y0 = static_cast<std::size_t>(std::max(0.0, std::floor(cy - r)));
    const auto y1 = static_cast<std::size_t>(
        std::min<double>(static_cast<double>(g.h) - 1.0, std::ceil(cy + r)));
    const auto x0 = static_cast<std::size_t>(std::max(0.0, std::floor(cx - r)));
    const auto x1 = static_cast<std::size_t>(
        std::min<double>(static_cast<double>(g.w) - 1.0, std::ceil(cx + r)));
    for (std::size_t y = y0; y <= y1; ++y)
        for (std::size_t x = x0; x <= x1; ++x) {
            const double dy = static_cast<double>(y) - cy;
            const double dx = static_cast<double>(x) - cx;
            if (dy * dy + dx * dx <= r2) g.at(y, x) = cls;
        }
}

void paint_rect(LabelGrid& g, double cy, double cx, double hy, double hx, double cls) {
    const auto y0 = static_cast<std::size_t>(std::max(0.0, std::round(cy - hy)));
    const auto y1 = static_cast<std::size_t>(
        std::min<double>(static_cast<double>(g.h) - 1.0, std::round(cy + hy)));
    const auto x0 = static_cast<std::size_t>(std::max(0.0, std::round(cx - hx)));
    const auto x1 = static_cast<std::size_t>(
        std::min<double>(static_cast<double>(g.w) - 1.0, std::round(cx + hx)));
    for (std::size_t y = y0; y <= y1; ++y)
        for (std::size_t x = x0; x <= x1; ++x) g.at(y, x) = cls;
}

void paint_stripe(LabelGrid& g, bool horizontal, double pos, double half, double cls) {
    if (horizontal) {
        const auto y0 = static_cast<std::size_t>(std::max(0.0, std::round(pos - half)));
        const auto y1 = static_cast<std::size_t>(
            std::min<double>(static_cast<double>(g.h) - 1.0, std::round(pos + half)));
        for (std::size_t y = y0; y <= y1; ++y)
            for (std::size_t x = 0; x < g.w; ++x) g.at(y, x) = cls;
    } else {
        const auto x0 = static_cast<std::size_t>(std::max(0.0, std::round(pos - half)));
        const auto x1 = static_cast<std::size_t>(
            std::min<double>(static_cast<double>(g.w) - 1.0, std::round(pos + half)));
        for (std::size_t y = 0; y < g.h; ++y)
            for (std::size_t x = x0; x <= x1; ++x) g.at(y, x) = cls;
    }
}

bool rare_enabled(const SceneSpec& spec) { return spec.rare_class_fraction > 0.0; }

// Mean painted area of the small rare-class disc, used to convert the pixel
// share into a per-image placement probability.
double rare_image_probability(const SceneSpec& spec) {
    const double mean_area = 3.141592653589793 * 10.75;  // E[r^2], r ~ U(2.5, 4)
    const double hw = static_cast<double>(spec.height * spec.width);
    return std::clamp(spec.rare_class_fraction * hw / mean_area, 0.0, 1.0);
}

// Deterministic geometry: shared across domains for a given (seed, index).
LabelGrid render_labels(const SceneSpec& spec, std::size_t index) {
    const std::size_t k = spec.class_count;
    const std::size_t rare_cls = k - 1;
    // Regular shapes avoid the rare class when it is reserved.
    const std::size_t regular_classes = rare_enabled(spec) ? k - 2 : k - 1;
    const double dim = static_cast<double>(std::min(spec.height, spec.width));
    for (std::size_t attempt = 0; attempt < 32; ++attempt) {
        Rng rng(Rng::derive(Rng::derive(spec.seed, kGeometrySalt), index * 64 + attempt));
        LabelGrid g{spec.height, spec.width,
                    std::vector<double>(spec.height * spec.width, 0.0)};
        const std::size_t n_shapes =
            spec.min_shapes + rng.uniform_index(spec.max_shapes - spec.min_shapes + 1);
        for (std::size_t s = 0; s < n_shapes; ++s) {
            const double cls = 1.0 + static_cast<double>(rng.uniform_index(regular_classes));
            const std::size_t type = rng.uniform_index(3);
            const double cy = rng.uniform(0.1, 0.9) * static_cast<double>(spec.height);
            const double cx = rng.uniform(0.1, 0.9) * static_cast<double>(spec.width);
            if (type == 0) {
                paint_circle(g, cy, cx, rng.uniform(0.08, 0.22) * dim, cls);
            } else if (type == 1) {
                paint_rect(g, cy, cx, rng.uniform(0.06, 0.18) * dim,
                           rng.uniform(0.06, 0.18) * dim, cls);
            } else {
                const bool horizontal = rng.uniform_index(2) == 0;
                const double extent =
                    static_cast<double>(horizontal ? spec.height : spec.width);
                paint_stripe(g, horizontal, rng.uniform(0.1, 0.9) * extent,
                             rng.uniform(0.03, 0.075) * dim, cls);
            }
        }
        if (rare_enabled(spec) && rng.uniform() < rare_image_probability(spec)) {
            paint_circle(g, rng.uniform(0.15, 0.85) * static_cast<double>(spec.height),
                         rng.uniform(0.15, 0.85) * static_cast<double>(spec.width),
                         rng.uniform(2.5, 4.0), static_cast<double>(rare_cls));
        }
        bool has_bg = false, has_fg = false;
        for (double c : g.cls) {
            if (c == 0.0) has_bg = true;
            else has_fg = true;
        }
        if (has_bg && has_fg) return g;
    }
    throw NumericalError("render_labels: could not produce a valid layout");
}

std::string image_filename(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06zu.crat", index);
    return buf;
}

}  // namespace

std::string domain_name(Domain d) {
    return d == Domain::Source ? "source" : "target";
}

std::vector<Color> palette(const SceneSpec& spec, Domain d) {
    validate_spec(spec);
    Rng rng(Rng::derive(spec.seed, kPaletteSalt));
    const std::size_t k = spec.class_count;
    std::vector<Color> base(k);
    constexpr double kGolden = 0.6180339887498949;
    for (std::size_t c = 0; c < k; ++c) {
        const Color unit = hsv_to_rgb(0.11 + kGolden * static_cast<double>(c), 0.85, 1.0);
        for (std::size_t ch = 0; ch < 3; ++ch) {
            base[c][ch] = 0.32 + 0.30 * unit[ch] + rng.uniform(-0.015, 0.015);
        }
    }
    if (d == Domain::Source) return base;
    // Per-class unit shift directions, sign-fixed to stay inside [0.02, 0.98]
    // at the maximum clean shift so the gap grows linearly in delta.
    std::vector<Color> target(k);
    for (std::size_t c = 0; c < k; ++c) {
        Color dir;
        double norm = 0.0;
        for (std::size_t ch = 0; ch < 3; ++ch) {
            dir[ch] = rng.normal();
            norm += dir[ch] * dir[ch];
        }
        norm = std::sqrt(std::max(norm, 1e-12));
        for (std::size_t ch = 0; ch < 3; ++ch) {
            dir[ch] /= norm;
            if (base[c][ch] + kMaxCleanShift * dir[ch] > 0.98 ||
                base[c][ch] + kMaxCleanShift * dir[ch] < 0.02) {
                dir[ch] = -dir[ch];
            }
            target[c][ch] = std::clamp(base[c][ch] + spec.palette_shift * dir[ch],
                                       0.0, 1.0);
        }
    }
    return target;
}

double palette_gap(const SceneSpec& spec) {
    const auto src = palette(spec, Domain::Source);
    const auto tgt = palette(spec, Domain::Target);
    double total = 0.0;
    for (std::size_t c = 0; c < src.size(); ++c) {
        double d2 = 0.0;
        for (std::size_t ch = 0; ch < 3; ++ch) {
            const double d = src[c][ch] - tgt[c][ch];
            d2 += d * d;
        }
        total += std::sqrt(d2);
    }
    return total / static_cast<double>(src.size());
}

LabeledImage render_image(const SceneSpec& spec, Domain d, std::size_t index) {
    validate_spec(spec);
    LabelGrid grid = render_labels(spec, index);
    const auto colors = palette(spec, d);
    const double sigma = d == Domain::Source ? spec.noise_source : spec.noise_target;
    Rng noise(Rng::derive(
        Rng::derive(spec.seed, d == Domain::Source ? kSourceNoiseSalt : kTargetNoiseSalt),
        index));
    const std::size_t hw = spec.height * spec.width;
    std::vector<double> img(3 * hw);
    for (std::size_t i = 0; i < hw; ++i) {
        const auto cls = static_cast<std::size_t>(grid.cls[i]);
        for (std::size_t ch = 0; ch < 3; ++ch) {
            img[ch * hw + i] =
                std::clamp(colors[cls][ch] + sigma * noise.normal(), 0.0, 1.0);
        }
    }
    LabeledImage out;
    out.image = Tensor::from_data({3, spec.height, spec.width}, std::move(img));
    out.labels = Tensor::from_data({spec.height, spec.width}, std::move(grid.cls));
    return out;
}

void generate_dataset(const SceneSpec& spec, std::size_t count, Domain d,
                      const std::filesystem::path& root) {
    validate_spec(spec);
    if (count < 1) throw ConfigError("generate_dataset: count must be >= 1");
    const auto dom_dir = root / domain_name(d);
    const auto images_dir = dom_dir / "images";
    const auto labels_dir =
        dom_dir / (d == Domain::Source ? "labels" : "eval_labels");
    std::error_code ec;
    std::filesystem::create_directories(images_dir, ec);
    std::filesystem::create_directories(labels_dir, ec);
    if (ec) throw IoError("generate_dataset: cannot create " + dom_dir.string());

    for (std::size_t i = 0; i < count; ++i) {
        const LabeledImage im = render_image(spec, d, i);
        save_crat(images_dir / image_filename(i), im.image);
        save_crat(labels_dir / image_filename(i), im.labels);
    }

    json meta;
    const auto meta_path = root / "dataset.json";
    if (std::filesystem::exists(meta_path)) {
        std::ifstream is(meta_path);
        try {
            meta = json::parse(is);
        } catch (const json::exception&) {
            meta = json::object();
        }
    }
    const json spec_json = spec_to_json(spec);
    if (meta.contains("spec") && meta["spec"] != spec_json) {
        throw ConfigError("generate_dataset: " + meta_path.string() +
                          " was generated from a different spec; use a fresh root");
    }
    meta["format"] = "cra-dataset";
    meta["version"] = 1;
    meta["spec"] = spec_json;
    if (!meta.contains("counts")) meta["counts"] = json::object();
    meta["counts"][domain_name(d)] = count;
    std::ofstream os(meta_path, std::ios::trunc);
    if (!os) throw IoError("generate_dataset: cannot write " + meta_path.string());
    os << meta.dump(2) << '\n';
}

std::size_t Dataset::count(Domain d) const {
    return d == Domain::Source ? source_count_ : target_count_;
}

Dataset Dataset::open(const std::filesystem::path& root) {
    const auto meta_path = root / "dataset.json";
    std::ifstream is(meta_path);
    if (!is) {
        throw PrerequisiteError("dataset not found at " + root.string() +
                                "; run gen-data first");
    }
    json meta;
    try {
        meta = json::parse(is);
    } catch (const json::exception& e) {
        throw IoError("Dataset::open: bad " + meta_path.string() + ": " + e.what());
    }
    if (meta.value("format", "") != "cra-dataset") {
        throw IoError("Dataset::open: " + meta_path.string() + " is not a dataset index");
    }
    Dataset ds;
    ds.root_ = root;
    ds.spec_ = spec_from_json(meta.at("spec"));
    const auto& counts = meta.at("counts");
    ds.source_count_ = counts.value("source", 0ULL);
    ds.target_count_ = counts.value("target", 0ULL);
    return ds;
}

namespace {

Tensor stack_maps(const std::vector<Tensor>& maps) {
    const auto& first = maps.front().shape();
    Shape out_shape;
    out_shape.push_back(maps.size());
    for (auto dim : first) out_shape.push_back(dim);
    std::vector<double> data;
    data.reserve(maps.size() * maps.front().size());
    for (const auto& m : maps) {
        if (m.shape() != first) {
            throw ShapeError("stack: inconsistent element shapes in batch");
        }
        data.insert(data.end(), m.values().begin(), m.values().end());
    }
    return Tensor::from_data(std::move(out_shape), std::move(data));
}

}  // namespace

DomainBatch Dataset::load_train_batch(Domain d,
                                      std::span<const std::size_t> indices) const {
    if (indices.empty()) throw ValueError("load_train_batch: empty index list");
    const std::size_t n = count(d);
    std::vector<Tensor> images, labels;
    for (std::size_t idx : indices) {
        if (idx >= n) {
            throw ValueError("load_train_batch: index " + std::to_string(idx) +
                             " out of range (count " + std::to_string(n) + ")");
        }
        images.push_back(load_crat(root_ / domain_name(d) / "images" /
                                   image_filename(idx)));
        if (d == Domain::Source) {
            labels.push_back(load_crat(root_ / "source" / "labels" /
                                       image_filename(idx)));
        }
    }
    DomainBatch batch;
    batch.images = stack_maps(images);
    if (d == Domain::Source) batch.labels = stack_maps(labels);
    batch.domain = d;
    return batch;
}

DomainBatch Dataset::load_eval_batch(Domain d,
                                     std::span<const std::size_t> indices) const {
    if (indices.empty()) throw ValueError("load_eval_batch: empty index list");
    const std::size_t n = count(d);
    const char* label_dir = d == Domain::Source ? "labels" : "eval_labels";
    std::vector<Tensor> images, labels;
    for (std::size_t idx : indices) {
        if (idx >= n) {
            throw ValueError("load_eval_batch: index " + std::to_string(idx) +
                             " out of range (count " + std::to_string(n) + ")");
        }
        images.push_back(load_crat(root_ / domain_name(d) / "images" /
                                   image_filename(idx)));
        labels.push_back(load_crat(root_ / domain_name(d) / label_dir /
                                   image_filename(idx)));
    }
    DomainBatch batch;
    batch.images = stack_maps(images);
    batch.labels = stack_maps(labels);
    batch.domain = d;
    return batch;
}

json spec_to_json(const SceneSpec& spec) {
    json j;
    j["class_count"] = spec.class_count;
    j["height"] = spec.height;
    j["width"] = spec.width;
    j["min_shapes"] = spec.min_shapes;
    j["max_shapes"] = spec.max_shapes;
    j["palette_shift"] = spec.palette_shift;
    j["noise_source"] = spec.noise_source;
    j["noise_target"] = spec.noise_target;
    j["rare_class_fraction"] = spec.rare_class_fraction;
    j["seed"] = spec.seed;
    return j;
}

SceneSpec spec_from_json(const json& j) {
    SceneSpec spec;
    spec.class_count = j.value("class_count", spec.class_count);
    spec.height = j.value("height", spec.height);
    spec.width = j.value("width", spec.width);
    spec.min_shapes = j.value("min_shapes", spec.min_shapes);
    spec.max_shapes = j.value("max_shapes", spec.max_shapes);
    spec.palette_shift = j.value("palette_shift", spec.palette_shift);
    spec.noise_source = j.value("noise_source", spec.noise_source);
    spec.noise_target = j.value("noise_target", spec.noise_target);
    spec.rare_class_fraction = j.value("rare_class_fraction", spec.rare_class_fraction);
    spec.seed = j.value("seed", spec.seed);
    return spec;
}

}  // namespace cra::data
