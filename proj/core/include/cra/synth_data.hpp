#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cra/tensor.hpp"

namespace cra::data {

enum class Domain { Source, Target };
std::string domain_name(Domain d);

// Procedural scene description. Geometry (shape layout) is shared between
// domains for a given seed; only appearance differs: the target palette is
// the source palette shifted by palette_shift along per-class unit
// directions, and each domain adds its own pixel noise.
struct SceneSpec {
    std::size_t class_count = 5;  // class 0 is background
    std::size_t height = 64;
    std::size_t width = 64;
    std::size_t min_shapes = 3;
    std::size_t max_shapes = 6;
    double palette_shift = 0.25;        // delta; monotone gap for delta <= 0.35
    double noise_source = 0.02;         // Gaussian sigma per channel
    double noise_target = 0.06;
    double rare_class_fraction = 0.005; // share of pixels for class K-1; 0 disables
    std::uint64_t seed = 1234;
};

using Color = std::array<double, 3>;

std::vector<Color> palette(const SceneSpec& spec, Domain d);
// Mean per-class distance between the two domain palettes.
double palette_gap(const SceneSpec& spec);

struct LabeledImage {
    Tensor image;   // [3,H,W] in [0,1]
    Tensor labels;  // [H,W] class indices
};

// Deterministic in (spec.seed, domain, index).
LabeledImage render_image(const SceneSpec& spec, Domain d, std::size_t index);

// Writes root/<domain>/images/NNNNNN.crat plus labels/ (source) or
// eval_labels/ (target; the training loader never reads these), and merges
// the domain's count into root/dataset.json.
void generate_dataset(const SceneSpec& spec, std::size_t count, Domain d,
                      const std::filesystem::path& root);

struct DomainBatch {
    Tensor images;                 // [B,3,H,W]
    std::optional<Tensor> labels;  // [B,H,W]; absent on the target train path
    Domain domain = Domain::Source;
};

class Dataset {
public:
    static Dataset open(const std::filesystem::path& root);

    const SceneSpec& spec() const { return spec_; }
    std::size_t count(Domain d) const;
    const std::filesystem::path& root() const { return root_; }

    // Training path: target labels are withheld by contract.
    DomainBatch load_train_batch(Domain d, std::span<const std::size_t> indices) const;
    // Evaluation path: labels come from labels/ (source) or eval_labels/ (target).
    DomainBatch load_eval_batch(Domain d, std::span<const std::size_t> indices) const;

private:
    std::filesystem::path root_;
    SceneSpec spec_;
    std::size_t source_count_ = 0;
    std::size_t target_count_ = 0;
};

nlohmann::ordered_json spec_to_json(const SceneSpec& spec);
SceneSpec spec_from_json(const nlohmann::ordered_json& j);

}  // namespace cra::data
