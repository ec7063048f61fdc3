#include "cra/nn.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "cra/error.hpp"
#include "cra/tensor_io.hpp"

namespace cra::nn {

using json = nlohmann::ordered_json;

Conv2dLayer make_conv(std::size_t in_ch, std::size_t out_ch, std::size_t ksize,
                      Rng& rng) {
    const std::size_t fan_in = in_ch * ksize * ksize;
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::vector<double> w(out_ch * in_ch * ksize * ksize);
    for (auto& v : w) v = rng.uniform(-bound, bound);
    Conv2dLayer layer;
    layer.weight = Tensor::from_data({out_ch, in_ch, ksize, ksize}, std::move(w), true);
    layer.bias = Tensor::zeros({out_ch}, true);
    return layer;
}

// ---- SegModel -------------------------------------------------------------

SegModel SegModel::create(const ModelSpec& spec, std::uint64_t seed) {
    if (spec.class_count < 2) throw ConfigError("SegModel: class_count must be >= 2");
    if (spec.feature_widths.empty()) {
        throw ConfigError("SegModel: feature_widths must not be empty");
    }
    SegModel m;
    m.class_count_ = spec.class_count;
    m.image_channels_ = spec.image_channels;
    Rng rng(Rng::derive(seed, 0x5e61u));
    std::size_t in_ch = spec.image_channels;
    for (std::size_t width : spec.feature_widths) {
        m.feature_layers_.push_back(make_conv(in_ch, width, 3, rng));
        in_ch = width;
    }
    m.classifier_ = make_conv(in_ch, spec.class_count, 1, rng);
    return m;
}

Tensor SegModel::features(const Tensor& x) const {
    if (x.ndim() != 4 || x.shape()[1] != image_channels_) {
        throw ShapeError("SegModel: expected input [B," +
                         std::to_string(image_channels_) + ",H,W], got " +
                         shape_str(x.shape()));
    }
    Tensor h = feature_layers_.front().forward(x);
    for (std::size_t i = 1; i < feature_layers_.size(); ++i) {
        h = feature_layers_[i].forward(relu(h));
    }
    return h;
}

Tensor SegModel::logits_from_features(const Tensor& f) const {
    return classifier_.forward(f);
}

SegForward SegModel::forward(const Tensor& x) const {
    SegForward out;
    out.features = features(x);
    out.logits = logits_from_features(out.features);
    out.probs = softmax_channels(out.logits);
    return out;
}

std::vector<NamedParam> SegModel::params() {
    auto ps = feature_params();
    for (auto& p : classifier_params()) ps.push_back(p);
    return ps;
}

std::vector<NamedParam> SegModel::feature_params() {
    std::vector<NamedParam> ps;
    for (std::size_t i = 0; i < feature_layers_.size(); ++i) {
        const std::string base = "g.f" + std::to_string(i);
        ps.push_back({base + ".weight", feature_layers_[i].weight});
        ps.push_back({base + ".bias", feature_layers_[i].bias});
    }
    return ps;
}

std::vector<NamedParam> SegModel::classifier_params() {
    return {{"g.c.weight", classifier_.weight}, {"g.c.bias", classifier_.bias}};
}

// ---- Discriminator --------------------------------------------------------

Discriminator Discriminator::create(const ModelSpec& spec, std::uint64_t seed) {
    Discriminator d;
    d.class_count_ = spec.class_count;
    Rng rng(Rng::derive(seed, 0xd15cu));
    std::size_t in_ch = spec.feature_widths.back();
    for (std::size_t width : spec.disc_widths) {
        d.layers_.push_back(make_conv(in_ch, width, 3, rng));
        in_ch = width;
    }
    d.layers_.push_back(make_conv(in_ch, 2 * spec.class_count, 3, rng));
    return d;
}

Tensor Discriminator::forward(const Tensor& f) const {
    if (f.ndim() != 4 || f.shape()[1] != layers_.front().weight.shape()[1]) {
        throw ShapeError("Discriminator: expected features [B," +
                         std::to_string(layers_.front().weight.shape()[1]) +
                         ",H,W], got " + shape_str(f.shape()));
    }
    Tensor h = layers_.front().forward(f);
    for (std::size_t i = 1; i < layers_.size(); ++i) {
        h = layers_[i].forward(relu(h));
    }
    return softmax_channels(h);
}

std::vector<NamedParam> Discriminator::params() {
    std::vector<NamedParam> ps;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const std::string base = "d.conv" + std::to_string(i);
        ps.push_back({base + ".weight", layers_[i].weight});
        ps.push_back({base + ".bias", layers_[i].bias});
    }
    return ps;
}

// ---- Checkpoint -------------------------------------------------------------

namespace {

std::string tensor_filename(const std::string& name) {
    std::string s = name;
    for (char& c : s) {
        if (c == '.' || c == '/') c = '_';
    }
    return s + ".crat";
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& p : tensors) {
        if (p.name == name) return &p.tensor;
    }
    return nullptr;
}

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("save_checkpoint: cannot create " + dir.string());
    json manifest;
    manifest["format"] = "cra-checkpoint";
    manifest["version"] = 1;
    manifest["stage"] = ckpt.stage;
    manifest["iteration"] = ckpt.iteration;
    manifest["config_hash"] = ckpt.config_hash;
    json params = json::array();
    for (const auto& p : ckpt.tensors) {
        const std::string file = tensor_filename(p.name);
        save_crat(dir / file, p.tensor);
        params.push_back({{"name", p.name}, {"file", file}, {"shape", p.tensor.shape()}});
    }
    manifest["params"] = std::move(params);
    manifest["meta"] = ckpt.meta;
    std::ofstream os(dir / "manifest.json", std::ios::trunc);
    if (!os) throw IoError("save_checkpoint: cannot write manifest in " + dir.string());
    os << manifest.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    std::ifstream is(manifest_path);
    if (!is) throw IoError("load_checkpoint: missing " + manifest_path.string());
    json manifest;
    try {
        manifest = json::parse(is);
    } catch (const json::exception& e) {
        throw IoError("load_checkpoint: bad manifest " + manifest_path.string() + ": " +
                      e.what());
    }
    if (manifest.value("format", "") != "cra-checkpoint") {
        throw IoError("load_checkpoint: " + manifest_path.string() +
                      " is not a checkpoint manifest");
    }
    Checkpoint ckpt;
    ckpt.stage = manifest.value("stage", "");
    ckpt.iteration = manifest.value("iteration", 0ULL);
    ckpt.config_hash = manifest.value("config_hash", "");
    for (const auto& p : manifest.at("params")) {
        NamedParam np;
        np.name = p.at("name").get<std::string>();
        np.tensor = load_crat(dir / p.at("file").get<std::string>());
        const auto shape = p.at("shape").get<Shape>();
        if (shape != np.tensor.shape()) {
            throw IoError("load_checkpoint: shape mismatch for " + np.name);
        }
        ckpt.tensors.push_back(std::move(np));
    }
    if (manifest.contains("meta")) {
        ckpt.meta = manifest.at("meta").get<std::map<std::string, std::string>>();
    }
    return ckpt;
}

bool checkpoint_exists(const std::filesystem::path& dir) {
    return std::filesystem::exists(dir / "manifest.json");
}

void load_params(const Checkpoint& ckpt, std::vector<NamedParam> params) {
    for (auto& p : params) {
        const Tensor* src = ckpt.find(p.name);
        if (!src) {
            throw IoError("checkpoint is missing parameter '" + p.name + "'");
        }
        if (src->shape() != p.tensor.shape()) {
            throw ConfigError("checkpoint parameter '" + p.name + "' has shape " +
                              shape_str(src->shape()) + ", model expects " +
                              shape_str(p.tensor.shape()));
        }
        auto dst = p.tensor.values_mut();
        auto sv = src->values();
        std::copy(sv.begin(), sv.end(), dst.begin());
    }
}

}  // namespace cra::nn
