#include "cra/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "cra/error.hpp"
#include "cra/losses.hpp"
#include "cra/optim.hpp"
#include "cra/region_split.hpp"
#include "cra/rng.hpp"
#include "cra/synth_data.hpp"
#include "cra/tensor_io.hpp"

namespace cra::train {

using json = nlohmann::ordered_json;
using data::Domain;

LogFn null_log() {
    return [](const json&) {};
}

std::filesystem::path checkpoint_dir(const RunConfig& cfg, const std::string& stage) {
    return std::filesystem::path(cfg.out_dir) / "checkpoints" / stage;
}

std::filesystem::path split_dir(const RunConfig& cfg) {
    return std::filesystem::path(cfg.out_dir) / "split";
}

std::filesystem::path report_path(const RunConfig& cfg, const std::string& name) {
    return std::filesystem::path(cfg.out_dir) / "reports" / (name + ".json");
}

namespace {

constexpr std::uint64_t kSegInitSalt = 0x6e57;
constexpr std::uint64_t kDiscInitSalt = 0x6e58;
constexpr std::uint64_t kSourceBatchSalt = 0xb001;
constexpr std::uint64_t kCdaBatchSalt = 0xb002;
constexpr std::uint64_t kCraBatchSalt = 0xb003;
constexpr std::uint64_t kVariantBatchSalt = 0xb010;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string format_index(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06zu", i);
    return buf;
}

void clear_grads(std::vector<nn::NamedParam>& params) {
    for (auto& p : params) p.tensor.clear_grad();
}

// Runtime enforcement of the gradient-routing contracts.
void assert_zero_grads(const std::vector<nn::NamedParam>& params, const char* what) {
    for (const auto& p : params) {
        if (!p.tensor.has_grad()) continue;
        for (double g : p.tensor.grad()) {
            if (g != 0.0) {
                throw Error(std::string(what) + ": parameter '" + p.name +
                            "' unexpectedly received gradient");
            }
        }
    }
}

std::vector<std::size_t> sample_indices(Rng& rng, std::size_t n, std::size_t batch) {
    std::vector<std::size_t> idx(batch);
    for (auto& i : idx) i = rng.uniform_index(n);
    return idx;
}

// Concatenate cached [1,...] tensors along axis 0.
Tensor stack0(const std::vector<Tensor>& cache, std::span<const std::size_t> idx) {
    const auto& first = cache[idx[0]].shape();
    Shape out_shape = first;
    out_shape[0] = idx.size();
    std::vector<double> data;
    data.reserve(idx.size() * cache[idx[0]].size());
    for (std::size_t i : idx) {
        const auto v = cache[i].values();
        data.insert(data.end(), v.begin(), v.end());
    }
    return Tensor::from_data(std::move(out_shape), std::move(data));
}

struct Cache {
    std::vector<Tensor> source_images;  // [1,3,H,W]
    std::vector<Tensor> source_onehot;  // [1,K,H,W]
    std::vector<Tensor> source_labels;  // [1,H,W]
    std::vector<Tensor> target_images;  // train slice
    std::vector<Tensor> eval_images;    // eval slice
    std::vector<Tensor> eval_labels;    // [1,H,W]
};

data::Dataset open_dataset(const RunConfig& cfg) {
    auto ds = data::Dataset::open(cfg.data_root);
    if (ds.count(Domain::Source) < cfg.source_count ||
        ds.count(Domain::Target) < cfg.target_count + cfg.target_eval_count) {
        throw PrerequisiteError(
            "dataset at " + cfg.data_root +
            " is smaller than the configured counts; run gen-data first");
    }
    return ds;
}

Cache load_cache(const RunConfig& cfg, const data::Dataset& ds, bool need_source,
                 bool need_target) {
    Cache cache;
    const std::size_t k = cfg.dataset.class_count;
    if (need_source) {
        for (std::size_t i = 0; i < cfg.source_count; ++i) {
            const std::size_t one[] = {i};
            auto b = ds.load_train_batch(Domain::Source, one);
            cache.source_images.push_back(b.images);
            cache.source_labels.push_back(*b.labels);
            cache.source_onehot.push_back(region::one_hot(*b.labels, k));
        }
    }
    if (need_target) {
        for (std::size_t i = 0; i < cfg.target_count; ++i) {
            const std::size_t one[] = {i};
            cache.target_images.push_back(
                ds.load_train_batch(Domain::Target, one).images);
        }
    }
    for (std::size_t i = 0; i < cfg.target_eval_count; ++i) {
        const std::size_t one[] = {cfg.target_count + i};
        auto b = ds.load_eval_batch(Domain::Target, one);
        cache.eval_images.push_back(b.images);
        cache.eval_labels.push_back(*b.labels);
    }
    return cache;
}

// ---- evaluation -----------------------------------------------------------

metrics::IouResult evaluate_images(nn::SegModel& g,
                                   const std::vector<Tensor>& images,
                                   const std::vector<Tensor>& labels,
                                   std::size_t class_count) {
    metrics::ConfusionMatrix cm(class_count);
    constexpr std::size_t kChunk = 8;
    for (std::size_t i = 0; i < images.size(); i += kChunk) {
        std::vector<std::size_t> idx;
        for (std::size_t j = i; j < std::min(i + kChunk, images.size()); ++j)
            idx.push_back(j);
        const Tensor x = stack0(images, idx);
        const Tensor y = stack0(labels, idx);
        const auto fwd = g.forward(x);
        const Tensor pred = region::pseudo_labels(fwd.probs);
        cm.accumulate(pred, y);
    }
    return metrics::iou(cm);
}

metrics::MetricsReport make_report(const RunConfig& cfg, const std::string& stage,
                                   std::uint64_t iterations,
                                   const metrics::IouResult& r) {
    metrics::MetricsReport rep;
    rep.stage = stage;
    rep.seed = cfg.seed;
    rep.config_hash = config_hash(cfg);
    rep.iterations = iterations;
    rep.per_class_iou = r.per_class;
    rep.class_defined = r.defined;
    rep.miou = r.miou;
    rep.config_echo = config_to_json(cfg);
    return rep;
}

void write_report(const std::filesystem::path& path,
                  const metrics::MetricsReport& rep) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot write report " + path.string());
    os << rep.to_json().dump(2) << '\n';
}

void write_json(const std::filesystem::path& path, const json& j) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot write " + path.string());
    os << j.dump(2) << '\n';
}

json read_json(const std::filesystem::path& path, const char* what) {
    std::ifstream is(path);
    if (!is) throw PrerequisiteError(std::string(what) + " not found at " +
                                     path.string());
    try {
        return json::parse(is);
    } catch (const json::exception& e) {
        throw IoError("bad JSON in " + path.string() + ": " + e.what());
    }
}

// ---- checkpoint plumbing ----------------------------------------------------

void check_hash(const std::string& found, const std::string& expect,
                const StageOptions& opt, const LogFn& log, const std::string& what) {
    if (found == expect) return;
    if (!opt.allow_config_mismatch) {
        throw ConfigError(what + " was produced by config " + found +
                          " but the current config hashes to " + expect +
                          "; pass --allow-config-mismatch to proceed");
    }
    log({{"event", "warning"},
         {"message", what + " config hash " + found + " != " + expect +
                         " (override active)"}});
}

struct StageState {
    nn::SegModel g;
    nn::Discriminator d;
    bool has_d = false;
    SgdMomentum sgd;
    Adam adam;
    Rng rng;
    std::uint64_t start_iter = 0;
    std::map<std::string, std::string> carried_meta;
};

nn::Checkpoint snapshot(const RunConfig& cfg, const std::string& stage,
                        std::uint64_t iteration, StageState& st) {
    nn::Checkpoint ckpt;
    ckpt.stage = stage;
    ckpt.iteration = iteration;
    ckpt.config_hash = config_hash(cfg);
    for (auto& p : st.g.params()) ckpt.tensors.push_back(p);
    if (st.has_d) {
        for (auto& p : st.d.params()) ckpt.tensors.push_back(p);
    }
    st.sgd.export_state(ckpt.tensors, "opt.sgd.v");
    if (st.has_d) st.adam.export_state(ckpt.tensors, "opt.adam");
    ckpt.meta = st.carried_meta;
    ckpt.meta["rng.batch"] = st.rng.serialize();
    ckpt.meta["seed"] = std::to_string(cfg.seed);
    return ckpt;
}

void restore(StageState& st, const nn::Checkpoint& ckpt) {
    nn::load_params(ckpt, st.g.params());
    if (st.has_d) nn::load_params(ckpt, st.d.params());
    st.sgd.import_state(ckpt, "opt.sgd.v");
    if (st.has_d) st.adam.import_state(ckpt, "opt.adam");
    const auto it = ckpt.meta.find("rng.batch");
    if (it != ckpt.meta.end()) st.rng.deserialize(it->second);
    st.start_iter = ckpt.iteration;
    st.carried_meta = ckpt.meta;
    st.carried_meta.erase("rng.batch");
    st.carried_meta.erase("seed");
}

// Loads the completed checkpoint of a prerequisite stage.
nn::Checkpoint require_stage_checkpoint(const RunConfig& cfg, const std::string& stage,
                                        std::uint64_t budget, const StageOptions& opt,
                                        const LogFn& log, const std::string& needed_by) {
    const auto dir = checkpoint_dir(cfg, stage);
    if (!nn::checkpoint_exists(dir)) {
        throw PrerequisiteError(needed_by + " requires a completed '" + stage +
                                "' checkpoint; run train-" + stage + " first");
    }
    auto ckpt = nn::load_checkpoint(dir);
    if (ckpt.stage != stage || ckpt.iteration < budget) {
        throw PrerequisiteError(needed_by + " requires stage '" + stage +
                                "' to be trained to completion (" +
                                std::to_string(ckpt.iteration) + "/" +
                                std::to_string(budget) + " iterations); run train-" +
                                stage + " first");
    }
    check_hash(ckpt.config_hash, config_hash(cfg), opt, log,
               "'" + stage + "' checkpoint");
    return ckpt;
}

// ---- telemetry probes -------------------------------------------------------

// Domain-classification accuracy of D on held-out pixels: a few source train
// images against a few target eval images.
double probe_disc_accuracy(nn::SegModel& g, nn::Discriminator& d, const Cache& cache,
                           std::size_t k) {
    const std::size_t n_probe =
        std::min<std::size_t>(2, std::min(cache.source_images.size(),
                                          cache.eval_images.size()));
    if (n_probe == 0) return 0.5;
    std::uint64_t correct = 0, total = 0;
    for (std::size_t which = 0; which < 2; ++which) {
        const auto& pool = which == 0 ? cache.source_images : cache.eval_images;
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < n_probe; ++i) idx.push_back(i);
        const Tensor f = g.features(stack0(pool, idx)).detach();
        const Tensor p = d.forward(f);
        const auto& s = p.shape();
        const std::size_t hw = s[2] * s[3];
        const auto pv = p.values();
        for (std::size_t b = 0; b < s[0]; ++b)
            for (std::size_t i = 0; i < hw; ++i) {
                double p0 = 0.0, p1 = 0.0;
                for (std::size_t c = 0; c < k; ++c) {
                    p0 += pv[(b * 2 * k + c) * hw + i];
                    p1 += pv[(b * 2 * k + k + c) * hw + i];
                }
                const bool said_source = p0 > p1;
                const bool is_source = which == 0;
                if (said_source == is_source) ++correct;
                ++total;
            }
    }
    return static_cast<double>(correct) / static_cast<double>(total);
}

struct SplitArtifacts {
    std::vector<Tensor> trusted;        // [1,1,H,W]
    std::vector<Tensor> untrusted;      // [1,1,H,W]
    std::vector<Tensor> pseudo;         // [1,H,W]
    std::vector<Tensor> pseudo_onehot;  // [1,K,H,W]
    double lambda = 0.0;
    double untrusted_fraction = 0.0;
    json summary;
};

SplitArtifacts load_split_artifacts(const RunConfig& cfg, const StageOptions& opt,
                                    const LogFn& log, const std::string& needed_by) {
    const auto dir = split_dir(cfg);
    json summary = read_json(dir / "summary.json",
                             (needed_by + " requires region-split artifacts; "
                                          "run split-regions first. summary")
                                 .c_str());
    check_hash(summary.value("config_hash", ""), config_hash(cfg), opt, log,
               "region split");
    SplitArtifacts art;
    art.summary = summary;
    art.lambda = summary.at("lambda").get<double>();
    art.untrusted_fraction = summary.at("untrusted_fraction").get<double>();
    const auto count = summary.at("count").get<std::size_t>();
    if (count < cfg.target_count) {
        throw PrerequisiteError(needed_by + ": split artifacts cover " +
                                std::to_string(count) + " images but config needs " +
                                std::to_string(cfg.target_count));
    }
    const std::size_t k = cfg.dataset.class_count;
    for (std::size_t i = 0; i < cfg.target_count; ++i) {
        const auto name = format_index(i) + ".crat";
        Tensor m = load_crat(dir / "trusted" / name);    // [H,W]
        Tensor y = load_crat(dir / "pseudo" / name);     // [H,W]
        const std::size_t h = m.shape()[0], w = m.shape()[1];
        std::vector<double> mv(m.values().begin(), m.values().end());
        std::vector<double> nv(mv.size());
        for (std::size_t j = 0; j < mv.size(); ++j) nv[j] = 1.0 - mv[j];
        art.trusted.push_back(Tensor::from_data({1, 1, h, w}, std::move(mv)));
        art.untrusted.push_back(Tensor::from_data({1, 1, h, w}, std::move(nv)));
        Tensor y3 = reshape(y, {1, h, w}).detach();
        art.pseudo.push_back(y3);
        art.pseudo_onehot.push_back(region::one_hot(y3, k));
    }
    return art;
}

// Mean normalized entropy over untrusted pixels of a fixed probe set.
double probe_untrusted_entropy(nn::SegModel& g, const Cache& cache,
                               const SplitArtifacts& art) {
    const std::size_t n = std::min<std::size_t>(8, cache.target_images.size());
    if (n == 0) return 0.0;
    double weighted = 0.0, mass = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t one[] = {i};
        const auto fwd = g.forward(stack0(cache.target_images, one));
        const Tensor e = region::entropy_map(fwd.probs.detach());
        const auto ev = e.values();
        const auto mv = art.untrusted[i].values();
        for (std::size_t j = 0; j < ev.size(); ++j) {
            weighted += ev[j] * mv[j];
            mass += mv[j];
        }
    }
    return mass > 0.0 ? weighted / mass : 0.0;
}

void maybe_checkpoint(const RunConfig& cfg, const std::string& stage,
                      std::uint64_t done, std::uint64_t budget, StageState& st) {
    if (done == budget) return;  // the stage runner writes the final snapshot
    if (cfg.checkpoint_interval > 0 && done % cfg.checkpoint_interval == 0) {
        auto ckpt = snapshot(cfg, stage, done, st);
        nn::save_checkpoint(checkpoint_dir(cfg, stage), ckpt);
    }
}

[[noreturn]] void rethrow_divergence(const std::string& stage, std::uint64_t iter,
                                     const NumericalError& e) {
    throw NumericalError("stage '" + stage + "' diverged at iteration " +
                         std::to_string(iter) + ": " + e.what());
}

}  // namespace

// ---- data generation --------------------------------------------------------

void generate_data(const RunConfig& cfg, const LogFn& log) {
    data::generate_dataset(cfg.dataset, cfg.source_count, Domain::Source,
                           cfg.data_root);
    data::generate_dataset(cfg.dataset, cfg.target_count + cfg.target_eval_count,
                           Domain::Target, cfg.data_root);
    log({{"event", "dataset"},
         {"root", cfg.data_root},
         {"source_count", cfg.source_count},
         {"target_count", cfg.target_count},
         {"target_eval_count", cfg.target_eval_count},
         {"palette_gap", data::palette_gap(cfg.dataset)}});
}

// ---- source stage -------------------------------------------------------------

metrics::MetricsReport train_source(const RunConfig& cfg, const LogFn& log,
                                    const StageOptions& opt) {
    const auto t0 = Clock::now();
    const auto ds = open_dataset(cfg);
    const std::size_t k = cfg.dataset.class_count;
    Cache cache = load_cache(cfg, ds, true, false);

    StageState st{nn::SegModel::create(cfg.model_for(k),
                                       Rng::derive(cfg.seed, kSegInitSalt)),
                  nn::Discriminator{},
                  false,
                  SgdMomentum(cfg.optim.sgd_momentum, cfg.optim.weight_decay),
                  Adam(cfg.optim.adam_beta1, cfg.optim.adam_beta2, cfg.optim.adam_eps),
                  Rng(Rng::derive(cfg.seed, kSourceBatchSalt)),
                  0,
                  {}};

    const std::uint64_t budget = cfg.budgets.source_iters;
    const auto dir = checkpoint_dir(cfg, "source");
    if (nn::checkpoint_exists(dir)) {
        auto ckpt = nn::load_checkpoint(dir);
        if (ckpt.stage != "source") {
            throw ConfigError("checkpoint at " + dir.string() +
                              " carries stage '" + ckpt.stage + "'");
        }
        check_hash(ckpt.config_hash, config_hash(cfg), opt, log, "'source' checkpoint");
        restore(st, ckpt);
        log({{"event", "resume"}, {"stage", "source"}, {"iteration", st.start_iter}});
    }

    PolySchedule sched{cfg.optim.sgd_lr, cfg.optim.poly_power, std::max<std::size_t>(budget, 1)};
    auto gparams = st.g.params();
    std::uint64_t t = st.start_iter;
    try {
        for (; t < budget; ++t) {
            const double lr = sched.lr_at(t);
            const auto idx = sample_indices(st.rng, cfg.source_count,
                                            cfg.budgets.batch_size);
            const Tensor x = stack0(cache.source_images, idx);
            const Tensor y = stack0(cache.source_onehot, idx);
            const auto fwd = st.g.forward(x);
            const Tensor loss = losses::seg_ce_loss(fwd.probs, y);
            backward(loss);
            st.sgd.step(gparams, lr);
            clear_grads(gparams);
            const std::uint64_t done = t + 1;
            if (done % cfg.log_interval == 0 || done == budget) {
                log({{"stage", "source"},
                     {"iteration", done},
                     {"loss_seg", loss.item()},
                     {"lr", lr}});
            }
            if (cfg.eval_interval > 0 && done % cfg.eval_interval == 0 &&
                done != budget) {
                const auto r = evaluate_images(st.g, cache.eval_images,
                                               cache.eval_labels, k);
                log({{"stage", "source"}, {"iteration", done}, {"eval_miou", r.miou}});
            }
            maybe_checkpoint(cfg, "source", done, budget, st);
        }
    } catch (const NumericalError& e) {
        rethrow_divergence("source", t, e);
    }
    if (st.start_iter == budget) {
        log({{"event", "skip"}, {"stage", "source"}, {"reason", "already complete"}});
    } else {
        auto ckpt = snapshot(cfg, "source", budget, st);
        nn::save_checkpoint(dir, ckpt);
    }

    auto rep = make_report(cfg, "source", budget,
                           evaluate_images(st.g, cache.eval_images, cache.eval_labels, k));
    // Sanity telemetry on the training domain itself.
    const std::size_t n_src_eval = std::min<std::size_t>(32, cfg.source_count);
    std::vector<Tensor> src_imgs(cache.source_images.begin(),
                                 cache.source_images.begin() + n_src_eval);
    std::vector<Tensor> src_lbls(cache.source_labels.begin(),
                                 cache.source_labels.begin() + n_src_eval);
    rep.extras["source_miou"] = evaluate_images(st.g, src_imgs, src_lbls, k).miou;
    std::vector<std::uint64_t> freq(k, 0);
    std::uint64_t total = 0;
    for (const auto& l : src_lbls)
        for (double v : l.values()) {
            ++freq[static_cast<std::size_t>(v)];
            ++total;
        }
    double base = 0.0;
    for (auto f : freq) base += static_cast<double>(f) / static_cast<double>(total);
    rep.extras["uniform_baseline_miou"] = base / static_cast<double>(k);
    rep.wall_clock_sec = seconds_since(t0);
    write_report(report_path(cfg, "source"), rep);
    log({{"stage", "source"}, {"iteration", budget}, {"eval_miou", rep.miou}});
    return rep;
}

// ---- CDA stage ---------------------------------------------------------------

metrics::MetricsReport train_cda(const RunConfig& cfg, const LogFn& log,
                                 const StageOptions& opt) {
    const auto t0 = Clock::now();
    const auto ds = open_dataset(cfg);
    const std::size_t k = cfg.dataset.class_count;
    Cache cache = load_cache(cfg, ds, true, true);

    StageState st{nn::SegModel::create(cfg.model_for(k),
                                       Rng::derive(cfg.seed, kSegInitSalt)),
                  nn::Discriminator::create(cfg.model_for(k),
                                            Rng::derive(cfg.seed, kDiscInitSalt)),
                  true,
                  SgdMomentum(cfg.optim.sgd_momentum, cfg.optim.weight_decay),
                  Adam(cfg.optim.adam_beta1, cfg.optim.adam_beta2, cfg.optim.adam_eps),
                  Rng(Rng::derive(cfg.seed, kCdaBatchSalt)),
                  0,
                  {}};

    const std::uint64_t budget = cfg.budgets.cda_iters;
    const auto dir = checkpoint_dir(cfg, "cda");
    if (nn::checkpoint_exists(dir)) {
        auto ckpt = nn::load_checkpoint(dir);
        if (ckpt.stage != "cda") {
            throw ConfigError("checkpoint at " + dir.string() + " carries stage '" +
                              ckpt.stage + "'");
        }
        check_hash(ckpt.config_hash, config_hash(cfg), opt, log, "'cda' checkpoint");
        restore(st, ckpt);
        log({{"event", "resume"}, {"stage", "cda"}, {"iteration", st.start_iter}});
    } else {
        auto src = require_stage_checkpoint(cfg, "source", cfg.budgets.source_iters,
                                            opt, log, "train-cda");
        nn::load_params(src, st.g.params());
    }

    PolySchedule sched_g{cfg.optim.sgd_lr, cfg.optim.poly_power,
                         std::max<std::size_t>(budget, 1)};
    PolySchedule sched_d{cfg.optim.adam_lr, cfg.optim.poly_power,
                         std::max<std::size_t>(budget, 1)};
    auto gparams = st.g.params();
    auto fparams = st.g.feature_params();
    auto cparams = st.g.classifier_params();
    auto dparams = st.d.params();
    const double temp = cfg.split.temperature;

    std::uint64_t t = st.start_iter;
    try {
        for (; t < budget; ++t) {
            const double lr_g = sched_g.lr_at(t);
            const double lr_d = sched_d.lr_at(t);

            // Supervised step on source.
            const auto idx_s = sample_indices(st.rng, cfg.source_count,
                                              cfg.budgets.batch_size);
            const Tensor xs = stack0(cache.source_images, idx_s);
            const Tensor ys = stack0(cache.source_onehot, idx_s);
            const auto fwd_s = st.g.forward(xs);
            const Tensor loss_seg = losses::seg_ce_loss(fwd_s.probs, ys);
            backward(loss_seg);
            st.sgd.step(gparams, lr_g);
            clear_grads(gparams);

            // Adversarial step on target; F only, C and D frozen.
            const auto idx_t = sample_indices(st.rng, cfg.target_count,
                                              cfg.budgets.batch_size);
            const Tensor xt = stack0(cache.target_images, idx_t);
            const Tensor f_t = st.g.features(xt);
            const Tensor z_t = st.g.logits_from_features(f_t);
            const auto a_t =
                losses::domain_encoding(z_t, temp, losses::DomainSlot::Target);
            Tensor p_t;
            {
                nn::FreezeGuard freeze_d(dparams);
                p_t = st.d.forward(f_t);
            }
            const Tensor loss_adv =
                scale(losses::cda_adv_loss(p_t, a_t), cfg.weights.cda_adv);
            backward(loss_adv);
            assert_zero_grads(cparams, "cda adversarial step (C frozen)");
            assert_zero_grads(dparams, "cda adversarial step (D frozen)");
            st.sgd.step(fparams, lr_g);
            clear_grads(gparams);
            clear_grads(dparams);

            // Discriminator step on detached features of both domains.
            const auto a_s = losses::domain_encoding(fwd_s.logits, temp,
                                                     losses::DomainSlot::Source);
            const Tensor p_s2 = st.d.forward(fwd_s.features.detach());
            const Tensor p_t2 = st.d.forward(f_t.detach());
            const Tensor loss_disc = losses::cda_disc_loss(p_s2, a_s, p_t2, a_t);
            backward(loss_disc);
            assert_zero_grads(gparams, "cda discriminator step (G frozen)");
            st.adam.step(dparams, lr_d);
            clear_grads(dparams);

            const std::uint64_t done = t + 1;
            if (done % cfg.log_interval == 0 || done == budget) {
                json line = {{"stage", "cda"},
                             {"iteration", done},
                             {"loss_seg", loss_seg.item()},
                             {"loss_adv", loss_adv.item()},
                             {"loss_disc", loss_disc.item()},
                             {"lr", lr_g},
                             {"disc_accuracy",
                              probe_disc_accuracy(st.g, st.d, cache, k)}};
                if (st.carried_meta.find("disc_accuracy_first") ==
                    st.carried_meta.end()) {
                    st.carried_meta["disc_accuracy_first"] =
                        std::to_string(line.at("disc_accuracy").get<double>());
                }
                st.carried_meta["disc_accuracy_last"] =
                    std::to_string(line.at("disc_accuracy").get<double>());
                log(line);
            }
            if (cfg.eval_interval > 0 && done % cfg.eval_interval == 0 &&
                done != budget) {
                const auto r = evaluate_images(st.g, cache.eval_images,
                                               cache.eval_labels, k);
                log({{"stage", "cda"}, {"iteration", done}, {"eval_miou", r.miou}});
            }
            maybe_checkpoint(cfg, "cda", done, budget, st);
        }
    } catch (const NumericalError& e) {
        rethrow_divergence("cda", t, e);
    }
    if (st.start_iter == budget) {
        log({{"event", "skip"}, {"stage", "cda"}, {"reason", "already complete"}});
    } else {
        auto ckpt = snapshot(cfg, "cda", budget, st);
        nn::save_checkpoint(dir, ckpt);
    }

    auto rep = make_report(cfg, "cda", budget,
                           evaluate_images(st.g, cache.eval_images, cache.eval_labels, k));
    for (const char* key : {"disc_accuracy_first", "disc_accuracy_last"}) {
        const auto it = st.carried_meta.find(key);
        if (it != st.carried_meta.end()) rep.extras[key] = std::stod(it->second);
    }
    rep.wall_clock_sec = seconds_since(t0);
    write_report(report_path(cfg, "cda"), rep);
    log({{"stage", "cda"}, {"iteration", budget}, {"eval_miou", rep.miou}});
    return rep;
}

// ---- region split stage --------------------------------------------------------

nlohmann::ordered_json split_stage(const RunConfig& cfg, const LogFn& log,
                                   const StageOptions& opt) {
    const auto ds = open_dataset(cfg);
    const std::size_t k = cfg.dataset.class_count;
    auto cda = require_stage_checkpoint(cfg, "cda", cfg.budgets.cda_iters, opt, log,
                                        "split-regions");
    auto g = nn::SegModel::create(cfg.model_for(k), Rng::derive(cfg.seed, kSegInitSalt));
    nn::load_params(cda, g.params());

    const auto dir = split_dir(cfg);
    std::error_code ec;
    std::filesystem::create_directories(dir / "entropy", ec);
    std::filesystem::create_directories(dir / "trusted", ec);
    std::filesystem::create_directories(dir / "pseudo", ec);
    if (ec) throw IoError("split-regions: cannot create " + dir.string());

    // First pass: entropy maps and pseudo-labels for the whole target train set.
    std::vector<Tensor> entropies, pseudos;
    constexpr std::size_t kChunk = 8;
    for (std::size_t i = 0; i < cfg.target_count; i += kChunk) {
        std::vector<std::size_t> idx;
        for (std::size_t j = i; j < std::min(i + kChunk, cfg.target_count); ++j)
            idx.push_back(j);
        const auto batch = ds.load_train_batch(Domain::Target, idx);
        const auto fwd = g.forward(batch.images);
        const Tensor p = fwd.probs.detach();
        const Tensor e = region::entropy_map(p);       // [B,1,H,W]
        const Tensor y = region::pseudo_labels(p);     // [B,H,W]
        const auto& sh = e.shape();
        const std::size_t hw = sh[2] * sh[3];
        for (std::size_t b = 0; b < idx.size(); ++b) {
            std::vector<double> ev(e.values().begin() + b * hw,
                                   e.values().begin() + (b + 1) * hw);
            std::vector<double> yv(y.values().begin() + b * hw,
                                   y.values().begin() + (b + 1) * hw);
            entropies.push_back(Tensor::from_data({1, 1, sh[2], sh[3]}, std::move(ev)));
            pseudos.push_back(Tensor::from_data({1, sh[2], sh[3]}, std::move(yv)));
        }
    }

    const auto counts = region::count_pseudo_labels(pseudos, k);
    const auto rare = region::find_rare_classes(counts);
    const double lambda = cfg.resolved_lambda();

    double untrusted_pixels = 0.0, total_pixels = 0.0;
    for (std::size_t i = 0; i < cfg.target_count; ++i) {
        auto split = region::split_regions(entropies[i], pseudos[i], rare, lambda);
        const auto name = format_index(i) + ".crat";
        const std::size_t h = cfg.dataset.height, w = cfg.dataset.width;
        save_crat(dir / "entropy" / name, reshape(entropies[i], {h, w}).detach());
        save_crat(dir / "trusted" / name, reshape(split.trusted, {h, w}).detach());
        save_crat(dir / "pseudo" / name, reshape(pseudos[i], {h, w}).detach());
        untrusted_pixels += split.untrusted_fraction() * static_cast<double>(h * w);
        total_pixels += static_cast<double>(h * w);
    }

    json summary;
    summary["format"] = "cra-split";
    summary["version"] = 1;
    summary["config_hash"] = config_hash(cfg);
    summary["count"] = cfg.target_count;
    summary["lambda"] = lambda;
    summary["untrusted_fraction"] = untrusted_pixels / total_pixels;
    summary["pseudo_label_counts"] = counts;
    summary["rare_classes"] = rare;
    write_json(dir / "summary.json", summary);
    log({{"stage", "split"},
         {"lambda", lambda},
         {"untrusted_fraction", summary.at("untrusted_fraction").get<double>()},
         {"rare_classes", rare}});
    return summary;
}

// ---- CRA stage (and its ablation variants) -----------------------------------

namespace {

enum class CraMode { Full, PseudoOnly, EntropyMin };

const char* mode_name(CraMode m) {
    switch (m) {
        case CraMode::Full: return "cra";
        case CraMode::PseudoOnly: return "pseudo_only";
        case CraMode::EntropyMin: return "entropy_min";
    }
    return "?";
}

// The per-minibatch recipe: (1) self-training step on trusted pixels,
// (2) fresh domain encodings, (3) adversarial step on G, (4) discriminator
// step. Ablation modes stop after step (1), optionally folding the entropy
// term into it.
metrics::MetricsReport run_cra_loop(const RunConfig& cfg, const LogFn& log,
                                    const StageOptions& opt, CraMode mode,
                                    const std::string& stage_label,
                                    std::uint64_t batch_salt, bool persist) {
    const auto t0 = Clock::now();
    const auto ds = open_dataset(cfg);
    const std::size_t k = cfg.dataset.class_count;
    Cache cache = load_cache(cfg, ds, cfg.disc_trusted_from_source, true);
    SplitArtifacts art = load_split_artifacts(cfg, opt, log, stage_label);

    StageState st{nn::SegModel::create(cfg.model_for(k),
                                       Rng::derive(cfg.seed, kSegInitSalt)),
                  nn::Discriminator::create(cfg.model_for(k),
                                            Rng::derive(cfg.seed, kDiscInitSalt)),
                  true,
                  SgdMomentum(cfg.optim.sgd_momentum, cfg.optim.weight_decay),
                  Adam(cfg.optim.adam_beta1, cfg.optim.adam_beta2, cfg.optim.adam_eps),
                  Rng(Rng::derive(cfg.seed, batch_salt)),
                  0,
                  {}};

    const std::uint64_t budget = cfg.budgets.cra_iters;
    const auto dir = checkpoint_dir(cfg, stage_label);
    bool resumed = false;
    if (persist && nn::checkpoint_exists(dir)) {
        auto ckpt = nn::load_checkpoint(dir);
        if (ckpt.stage != stage_label) {
            throw ConfigError("checkpoint at " + dir.string() + " carries stage '" +
                              ckpt.stage + "'");
        }
        check_hash(ckpt.config_hash, config_hash(cfg), opt, log,
                   "'" + stage_label + "' checkpoint");
        restore(st, ckpt);
        resumed = true;
        log({{"event", "resume"},
             {"stage", stage_label},
             {"iteration", st.start_iter}});
    } else {
        auto cda = require_stage_checkpoint(cfg, "cda", cfg.budgets.cda_iters, opt,
                                            log, stage_label);
        nn::load_params(cda, st.g.params());
        nn::load_params(cda, st.d.params());
    }

    if (!resumed) {
        st.carried_meta["untrusted_entropy_start"] =
            std::to_string(probe_untrusted_entropy(st.g, cache, art));
    }

    PolySchedule sched_g{cfg.optim.sgd_lr, cfg.optim.poly_power,
                         std::max<std::size_t>(budget, 1)};
    PolySchedule sched_d{cfg.optim.adam_lr, cfg.optim.poly_power,
                         std::max<std::size_t>(budget, 1)};
    auto gparams = st.g.params();
    auto dparams = st.d.params();
    const double temp = cfg.split.temperature;

    std::uint64_t t = st.start_iter;
    try {
        for (; t < budget; ++t) {
            const double lr_g = sched_g.lr_at(t);
            const double lr_d = sched_d.lr_at(t);
            const auto idx = sample_indices(st.rng, cfg.target_count,
                                            cfg.budgets.batch_size);
            const Tensor xt = stack0(cache.target_images, idx);
            const Tensor m = stack0(art.trusted, idx);
            const Tensor mbar = stack0(art.untrusted, idx);
            const Tensor yhat = stack0(art.pseudo_onehot, idx);

            // (1) Self-training on trusted pixels.
            const auto fwd1 = st.g.forward(xt);
            Tensor loss_seg =
                scale(losses::masked_ce_loss(fwd1.probs, yhat, m), cfg.weights.cra_seg);
            if (mode == CraMode::EntropyMin) {
                loss_seg = add(loss_seg, scale(losses::entropy_min_loss(fwd1.probs, mbar),
                                               cfg.weights.entropy_min));
            }
            backward(loss_seg);
            st.sgd.step(gparams, lr_g);
            clear_grads(gparams);

            double adv_value = 0.0, disc_value = 0.0;
            if (mode == CraMode::Full) {
                // (2) Fresh encodings from the just-updated model.
                const Tensor f_t = st.g.features(xt);
                const Tensor z_t = st.g.logits_from_features(f_t);
                const auto a_t =
                    losses::domain_encoding(z_t, temp, losses::DomainSlot::Target);
                const auto a_s =
                    losses::domain_encoding(z_t, temp, losses::DomainSlot::Source);

                // (3) Adversarial step on G with D frozen.
                Tensor p_t;
                {
                    nn::FreezeGuard freeze_d(dparams);
                    p_t = st.d.forward(f_t);
                }
                const Tensor loss_adv =
                    scale(losses::cra_adv_loss(p_t, a_t, mbar), cfg.weights.cra_adv);
                backward(loss_adv);
                assert_zero_grads(dparams, "cra adversarial step (D frozen)");
                st.sgd.step(gparams, lr_g);
                clear_grads(gparams);
                clear_grads(dparams);
                adv_value = loss_adv.item();

                // (4) Discriminator step on detached features.
                const Tensor f_det = f_t.detach();
                const Tensor p_det = st.d.forward(f_det);
                Tensor loss_disc;
                if (cfg.disc_trusted_from_source) {
                    const auto idx_s = sample_indices(st.rng, cfg.source_count,
                                                      cfg.budgets.batch_size);
                    const Tensor xs = stack0(cache.source_images, idx_s);
                    const auto fwd_s = st.g.forward(xs);
                    const auto a_src = losses::domain_encoding(
                        fwd_s.logits, temp, losses::DomainSlot::Source);
                    const Tensor ones = Tensor::full(
                        {idx_s.size(), 1, cfg.dataset.height, cfg.dataset.width}, 1.0);
                    const Tensor p_src = st.d.forward(fwd_s.features.detach());
                    loss_disc =
                        losses::cra_disc_loss(p_src, a_src, ones, p_det, a_t, mbar);
                } else {
                    loss_disc =
                        losses::cra_disc_loss(p_det, a_s, m, p_det, a_t, mbar);
                }
                backward(loss_disc);
                assert_zero_grads(gparams, "cra discriminator step (G frozen)");
                st.adam.step(dparams, lr_d);
                clear_grads(dparams);
                clear_grads(gparams);
                disc_value = loss_disc.item();
            }

            const std::uint64_t done = t + 1;
            if (done % cfg.log_interval == 0 || done == budget) {
                json line = {{"stage", stage_label},
                             {"iteration", done},
                             {"loss_seg", loss_seg.item()},
                             {"lr", lr_g},
                             {"untrusted_fraction", art.untrusted_fraction}};
                if (mode == CraMode::Full) {
                    line["loss_adv"] = adv_value;
                    line["loss_disc"] = disc_value;
                    line["untrusted_entropy"] =
                        probe_untrusted_entropy(st.g, cache, art);
                }
                log(line);
            }
            if (cfg.eval_interval > 0 && done % cfg.eval_interval == 0 &&
                done != budget) {
                const auto r = evaluate_images(st.g, cache.eval_images,
                                               cache.eval_labels, k);
                log({{"stage", stage_label},
                     {"iteration", done},
                     {"eval_miou", r.miou}});
            }
            if (persist) maybe_checkpoint(cfg, stage_label, done, budget, st);
        }
    } catch (const NumericalError& e) {
        rethrow_divergence(stage_label, t, e);
    }
    if (persist) {
        if (st.start_iter == budget) {
            log({{"event", "skip"},
                 {"stage", stage_label},
                 {"reason", "already complete"}});
        } else {
            auto ckpt = snapshot(cfg, stage_label, budget, st);
            nn::save_checkpoint(dir, ckpt);
        }
    }

    auto rep = make_report(cfg, stage_label, budget,
                           evaluate_images(st.g, cache.eval_images, cache.eval_labels, k));
    rep.untrusted_fraction = art.untrusted_fraction;
    const auto it = st.carried_meta.find("untrusted_entropy_start");
    if (it != st.carried_meta.end()) {
        rep.extras["untrusted_entropy_start"] = std::stod(it->second);
    }
    rep.extras["untrusted_entropy_end"] = probe_untrusted_entropy(st.g, cache, art);
    rep.wall_clock_sec = seconds_since(t0);
    if (persist) write_report(report_path(cfg, stage_label), rep);
    log({{"stage", stage_label}, {"iteration", budget}, {"eval_miou", rep.miou}});
    return rep;
}

}  // namespace

metrics::MetricsReport train_cra(const RunConfig& cfg, const LogFn& log,
                                 const StageOptions& opt) {
    return run_cra_loop(cfg, log, opt, CraMode::Full, "cra", kCraBatchSalt, true);
}

// ---- evaluation command ---------------------------------------------------------

metrics::MetricsReport evaluate_stage(const RunConfig& cfg, const std::string& stage,
                                      const LogFn& log, const StageOptions& opt) {
    const auto ds = open_dataset(cfg);
    const std::size_t k = cfg.dataset.class_count;
    const auto dir = checkpoint_dir(cfg, stage);
    if (!nn::checkpoint_exists(dir)) {
        throw PrerequisiteError("eval: no '" + stage + "' checkpoint under " +
                                cfg.out_dir + "; run the stage first");
    }
    auto ckpt = nn::load_checkpoint(dir);
    check_hash(ckpt.config_hash, config_hash(cfg), opt, log, "'" + stage + "' checkpoint");
    auto g = nn::SegModel::create(cfg.model_for(k), Rng::derive(cfg.seed, kSegInitSalt));
    nn::load_params(ckpt, g.params());
    Cache cache = load_cache(cfg, ds, false, false);
    auto rep = make_report(cfg, stage, ckpt.iteration,
                           evaluate_images(g, cache.eval_images, cache.eval_labels, k));
    log({{"stage", stage}, {"iteration", ckpt.iteration}, {"eval_miou", rep.miou}});
    return rep;
}

// ---- pipeline -------------------------------------------------------------------

nlohmann::ordered_json run_pipeline(const RunConfig& cfg, const LogFn& log,
                                    const StageOptions& opt) {
    bool have_data = false;
    try {
        const auto ds = data::Dataset::open(cfg.data_root);
        have_data = ds.count(Domain::Source) >= cfg.source_count &&
                    ds.count(Domain::Target) >=
                        cfg.target_count + cfg.target_eval_count;
    } catch (const PrerequisiteError&) {
    }
    if (!have_data) generate_data(cfg, log);
    const auto source = train_source(cfg, log, opt);
    const auto cda = train_cda(cfg, log, opt);
    const auto split = split_stage(cfg, log, opt);
    const auto cra = train_cra(cfg, log, opt);

    json rep;
    rep["config_hash"] = config_hash(cfg);
    rep["seed"] = cfg.seed;
    json stages;
    stages["source"] = source.to_json();
    stages["cda"] = cda.to_json();
    stages["split"] = {{"miou", cda.miou},
                       {"lambda", split.at("lambda")},
                       {"untrusted_fraction", split.at("untrusted_fraction")},
                       {"rare_classes", split.at("rare_classes")}};
    stages["cra"] = cra.to_json();
    rep["stages"] = std::move(stages);
    rep["miou_by_stage"] = {{"source", source.miou},
                            {"cda", cda.miou},
                            {"split", cda.miou},
                            {"cra", cra.miou}};
    rep["config"] = config_to_json(cfg);
    write_json(report_path(cfg, "pipeline"), rep);
    return rep;
}

// ---- baseline comparison ----------------------------------------------------------

nlohmann::ordered_json run_comparison(const RunConfig& cfg, const LogFn& log,
                                      const StageOptions& opt) {
    // All variants start from the same completed CDA checkpoint.
    require_stage_checkpoint(cfg, "cda", cfg.budgets.cda_iters, opt, log,
                             "compare-baselines");
    const auto baseline = evaluate_stage(cfg, "cda", log, opt);

    json variants;
    std::uint64_t salt = kVariantBatchSalt;
    std::map<std::string, metrics::MetricsReport> reports;
    for (CraMode mode : {CraMode::PseudoOnly, CraMode::EntropyMin, CraMode::Full}) {
        const std::string label = std::string("compare_") + mode_name(mode);
        auto rep = run_cra_loop(cfg, log, opt, mode, label, salt++, false);
        reports[mode_name(mode)] = rep;
        variants[mode_name(mode)] = rep.to_json();
    }

    json rep;
    rep["config_hash"] = config_hash(cfg);
    rep["seed"] = cfg.seed;
    rep["baseline_cda"] = baseline.to_json();
    rep["variants"] = std::move(variants);
    rep["miou"] = {{"cda", baseline.miou},
                   {"pseudo_only", reports["pseudo_only"].miou},
                   {"entropy_min", reports["entropy_min"].miou},
                   {"cra", reports["cra"].miou}};
    rep["config"] = config_to_json(cfg);
    write_json(report_path(cfg, "comparison"), rep);
    return rep;
}

// ---- assumption telemetry -----------------------------------------------------

nlohmann::ordered_json assumption_telemetry(const RunConfig& cfg,
                                            const StageOptions& opt) {
    const auto ds = open_dataset(cfg);
    SplitArtifacts art =
        load_split_artifacts(cfg, opt, null_log(), "assumption telemetry");
    std::uint64_t trusted_ok = 0, trusted_n = 0, untrusted_ok = 0, untrusted_n = 0;
    for (std::size_t i = 0; i < cfg.target_count; ++i) {
        const std::size_t one[] = {i};
        const auto batch = ds.load_eval_batch(Domain::Target, one);
        const auto truth = batch.labels->values();
        const auto pseudo = art.pseudo[i].values();
        const auto trusted = art.trusted[i].values();
        for (std::size_t j = 0; j < truth.size(); ++j) {
            const bool ok = pseudo[j] == truth[j];
            if (trusted[j] > 0.5) {
                trusted_ok += ok;
                ++trusted_n;
            } else {
                untrusted_ok += ok;
                ++untrusted_n;
            }
        }
    }
    json out;
    out["lambda"] = art.lambda;
    out["untrusted_fraction"] = art.untrusted_fraction;
    out["trusted_pseudo_accuracy"] =
        trusted_n ? static_cast<double>(trusted_ok) / static_cast<double>(trusted_n)
                  : 0.0;
    out["untrusted_pseudo_accuracy"] =
        untrusted_n
            ? static_cast<double>(untrusted_ok) / static_cast<double>(untrusted_n)
            : 0.0;
    return out;
}

// ---- loss gradient verification ------------------------------------------------

std::map<std::string, double> grad_check_losses(std::size_t trials) {
    using namespace losses;
    std::map<std::string, double> worst;
    auto note = [&](const std::string& name, double err) {
        auto [it, inserted] = worst.try_emplace(name, err);
        if (!inserted) it->second = std::max(it->second, err);
    };

    constexpr std::size_t B = 2, K = 3, H = 4, W = 4, F = 6;
    nn::ModelSpec dspec;
    dspec.class_count = K;
    dspec.feature_widths = {F};
    dspec.disc_widths = {8};

    for (std::size_t trial = 0; trial < trials; ++trial) {
        Rng rng(Rng::derive(0x97adc4ecULL, trial));
        auto rand_tensor = [&](Shape shape, double lo, double hi) {
            std::vector<double> v(shape_numel(shape));
            for (auto& x : v) x = rng.uniform(lo, hi);
            return Tensor::from_data(std::move(shape), std::move(v));
        };
        auto rand_labels = [&](std::size_t classes) {
            std::vector<double> v(B * H * W);
            for (auto& x : v)
                x = static_cast<double>(rng.uniform_index(classes));
            return Tensor::from_data({B, H, W}, std::move(v));
        };
        auto rand_mask = [&]() {
            std::vector<double> v(B * H * W);
            for (auto& x : v) x = rng.uniform() < 0.5 ? 1.0 : 0.0;
            return Tensor::from_data({B, 1, H, W}, std::move(v));
        };

        const Tensor z0 = rand_tensor({B, K, H, W}, -2.0, 2.0);
        const Tensor y = region::one_hot(rand_labels(K), K);
        const Tensor yhat = region::one_hot(rand_labels(K), K);
        const Tensor m = rand_mask();
        std::vector<double> inv(m.size());
        for (std::size_t i = 0; i < inv.size(); ++i) inv[i] = 1.0 - m.values()[i];
        const Tensor mbar = Tensor::from_data(m.shape(), std::move(inv));

        note("seg_ce", grad_check(
                           [&](const Tensor& z) {
                               return seg_ce_loss(softmax_channels(z), y);
                           },
                           z0));
        note("masked_ce", grad_check(
                              [&](const Tensor& z) {
                                  return masked_ce_loss(softmax_channels(z), yhat, m);
                              },
                              z0));
        note("entropy_min", grad_check(
                                [&](const Tensor& z) {
                                    return entropy_min_loss(softmax_channels(z), mbar);
                                },
                                z0));

        auto disc = nn::Discriminator::create(dspec, Rng::derive(0xd15c0ULL, trial));
        const Tensor f0 = rand_tensor({B, F, H, W}, -1.0, 1.0);
        const auto a_t = domain_encoding(rand_tensor({B, K, H, W}, -2.0, 2.0), 1.0,
                                         DomainSlot::Target);
        const auto a_s = domain_encoding(rand_tensor({B, K, H, W}, -2.0, 2.0), 1.0,
                                         DomainSlot::Source);
        note("cra_adv", grad_check(
                            [&](const Tensor& f) {
                                return cra_adv_loss(disc.forward(f), a_t, mbar);
                            },
                            f0));
        note("cra_disc", grad_check(
                             [&](const Tensor& f) {
                                 const Tensor p = disc.forward(f);
                                 return cra_disc_loss(p, a_s, m, p, a_t, mbar);
                             },
                             f0));
        note("cda_adv", grad_check(
                            [&](const Tensor& f) {
                                return cda_adv_loss(disc.forward(f), a_t);
                            },
                            f0));
        const Tensor f_fixed = rand_tensor({B, F, H, W}, -1.0, 1.0);
        note("cda_disc", grad_check(
                             [&](const Tensor& f) {
                                 return cda_disc_loss(disc.forward(f), a_s,
                                                      disc.forward(f_fixed), a_t);
                             },
                             f0));
    }
    return worst;
}

}  // namespace cra::train
