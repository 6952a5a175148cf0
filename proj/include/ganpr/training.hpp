#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "ganpr/batching.hpp"
#include "ganpr/checkpoint.hpp"
#include "ganpr/config_json.hpp"
#include "ganpr/nets.hpp"

namespace ganpr {

struct TrainingConfig {
    int batch_size = 4;
    int64_t total_steps = 2000;
    double lr_generator = 2e-4;
    double lr_discriminator = 2e-4;
    double cyclic_weight = 10.0;  // weight on the two cyclic reconstruction terms
    uint64_t seed = 1;
    int64_t checkpoint_interval = 500;

    bool operator==(const TrainingConfig&) const = default;

    void validate() const {
        check(batch_size >= 2, "training config: batch_size must be >= 2 (batchnorm), got ",
              batch_size);
        check(total_steps >= 1, "training config: total_steps must be >= 1");
        check(cyclic_weight >= 0.0, "training config: cyclic_weight must be non-negative");
        check(lr_generator >= 0.0 && lr_discriminator >= 0.0,
              "training config: learning rates must be non-negative");
        check(checkpoint_interval >= 1, "training config: checkpoint_interval must be >= 1");
    }
};

inline nlohmann::json to_json(const TrainingConfig& c) {
    return {{"batch_size", c.batch_size},
            {"total_steps", c.total_steps},
            {"lr_generator", c.lr_generator},
            {"lr_discriminator", c.lr_discriminator},
            {"cyclic_weight", c.cyclic_weight},
            {"seed", c.seed},
            {"checkpoint_interval", c.checkpoint_interval}};
}

inline TrainingConfig training_config_from_json(const nlohmann::json& j) {
    TrainingConfig c;
    c.batch_size = j.at("batch_size").get<int>();
    c.total_steps = j.at("total_steps").get<int64_t>();
    c.lr_generator = j.at("lr_generator").get<double>();
    c.lr_discriminator = j.at("lr_discriminator").get<double>();
    c.cyclic_weight = j.at("cyclic_weight").get<double>();
    c.seed = j.at("seed").get<uint64_t>();
    c.checkpoint_interval = j.at("checkpoint_interval").get<int64_t>();
    return c;
}

struct LossRecord {
    int64_t step = 0;
    double d_loss_a = 0.0;
    double d_loss_b = 0.0;
    double g_adv_loss_a = 0.0;
    double g_adv_loss_b = 0.0;
    double cyclic_loss_a = 0.0;  // unweighted, the A-domain cycle term
    double cyclic_loss_b = 0.0;

    bool all_finite() const {
        return is_finite(d_loss_a) && is_finite(d_loss_b) && is_finite(g_adv_loss_a) &&
               is_finite(g_adv_loss_b) && is_finite(cyclic_loss_a) && is_finite(cyclic_loss_b);
    }
    bool all_non_negative() const {
        return d_loss_a >= 0 && d_loss_b >= 0 && g_adv_loss_a >= 0 && g_adv_loss_b >= 0 &&
               cyclic_loss_a >= 0 && cyclic_loss_b >= 0;
    }
};

struct TrainerState {
    GeneratorConfig gen_config;
    DiscriminatorConfig disc_config;
    TrainingConfig config;
    Networks nets;
    OptimizerState opt_g_a, opt_g_b, opt_d_a, opt_d_b;
    int64_t step = 0;
    Rng rng;
    BatchIterator::Cursor cursor_a, cursor_b;
};

inline TrainerState init_trainer(const GeneratorConfig& gen_cfg,
                                 const DiscriminatorConfig& disc_cfg,
                                 const TrainingConfig& train_cfg) {
    train_cfg.validate();
    TrainerState st;
    st.gen_config = gen_cfg;
    st.disc_config = disc_cfg;
    st.config = train_cfg;
    st.nets = init_networks(gen_cfg, disc_cfg, train_cfg.seed);
    st.rng = Rng::stream(train_cfg.seed, 0x7261696e);  // reserved for future sampling needs
    const auto lr_pair = [&](OptimizerState& o, double lr) {
        o.learning_rate = lr;
        o.beta1 = 0.5;
        o.beta2 = 0.999;
    };
    lr_pair(st.opt_g_a, train_cfg.lr_generator);
    lr_pair(st.opt_g_b, train_cfg.lr_generator);
    lr_pair(st.opt_d_a, train_cfg.lr_discriminator);
    lr_pair(st.opt_d_b, train_cfg.lr_discriminator);
    return st;
}

struct ChainOutputs {
    Tensor x_ab;   // batch_a rendered in domain B
    Tensor x_ba;   // batch_b rendered in domain A
    Tensor x_aba;  // A -> B -> A reconstruction
    Tensor x_bab;  // B -> A -> B reconstruction
};

// The four-way translation chain of the coupled system. Generic over the
// generator type so degenerate maps (identity) can stand in during testing.
template <typename GenA = Generator, typename GenB = Generator>
ChainOutputs translate_chain(GenA& g_a, GenB& g_b, const Tensor& batch_a, const Tensor& batch_b,
                             Mode mode = Mode::eval) {
    ChainOutputs out;
    out.x_ab = g_b.forward(batch_a, mode);
    out.x_ba = g_a.forward(batch_b, mode);
    out.x_aba = g_a.forward(out.x_ab, mode);
    out.x_bab = g_b.forward(out.x_ba, mode);
    return out;
}

namespace detail {

// 0.5 * (BCE(real,1) + BCE(fake,0)), averaged over the batch, plus the
// gradients of that loss in the two realness vectors.
struct DiscLoss {
    double value = 0.0;
    Tensor grad_real;
    Tensor grad_fake;
};

inline DiscLoss disc_loss(const Tensor& realness_real, const Tensor& realness_fake) {
    const int n = realness_real.dim(0);
    DiscLoss out;
    out.grad_real = Tensor({n});
    out.grad_fake = Tensor({n});
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        acc += bce_loss(realness_real[static_cast<size_t>(i)], 1.0);
        acc += bce_loss(realness_fake[static_cast<size_t>(i)], 0.0);
        out.grad_real[static_cast<size_t>(i)] =
            0.5 * bce_grad(realness_real[static_cast<size_t>(i)], 1.0) / n;
        out.grad_fake[static_cast<size_t>(i)] =
            0.5 * bce_grad(realness_fake[static_cast<size_t>(i)], 0.0) / n;
    }
    out.value = 0.5 * acc / n;
    return out;
}

// Non-saturating generator objective: BCE(D(fake), 1) averaged over the batch.
struct AdvLoss {
    double value = 0.0;
    Tensor grad;  // in the realness vector
};

inline AdvLoss adv_loss(const Tensor& realness_fake) {
    const int n = realness_fake.dim(0);
    AdvLoss out;
    out.grad = Tensor({n});
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        acc += bce_loss(realness_fake[static_cast<size_t>(i)], 1.0);
        out.grad[static_cast<size_t>(i)] = bce_grad(realness_fake[static_cast<size_t>(i)], 1.0) / n;
    }
    out.value = acc / n;
    return out;
}

}  // namespace detail

// One coupled step: discriminators first on real-vs-translated, then both
// generators on adversarial + cyclic_weight * cyclic reconstruction.
// Deterministic given (state, batch_a, batch_b).
inline LossRecord train_step(TrainerState& st, const Tensor& batch_a, const Tensor& batch_b) {
    check(batch_a.ndim() == 4 && batch_b.ndim() == 4, "train_step: batches must be 4-d");
    check(batch_a.dim(0) == batch_b.dim(0), "train_step: batch sizes differ, ", batch_a.dim(0),
          " vs ", batch_b.dim(0));
    Networks& nets = st.nets;
    LossRecord rec;
    rec.step = st.step + 1;
    const double lambda = st.config.cyclic_weight;

    // ---- discriminator phase: translated images are constants here
    {
        Tensor x_ba = nets.g_a.forward(batch_b, Mode::train);
        Tensor x_ab = nets.g_b.forward(batch_a, Mode::train);

        nets.d_a.zero_grads();
        DiscriminatorTrace tr_real, tr_fake;
        auto real = nets.d_a.forward(batch_a, Mode::train, &tr_real);
        auto fake = nets.d_a.forward(x_ba, Mode::train, &tr_fake);
        auto loss = detail::disc_loss(real.realness, fake.realness);
        rec.d_loss_a = loss.value;
        nets.d_a.backward(loss.grad_real, tr_real);
        nets.d_a.backward(loss.grad_fake, tr_fake);
        auto params = nets.d_a.params();
        adam_step(params, st.opt_d_a);

        nets.d_b.zero_grads();
        DiscriminatorTrace trb_real, trb_fake;
        auto real_b = nets.d_b.forward(batch_b, Mode::train, &trb_real);
        auto fake_b = nets.d_b.forward(x_ab, Mode::train, &trb_fake);
        auto loss_b = detail::disc_loss(real_b.realness, fake_b.realness);
        rec.d_loss_b = loss_b.value;
        nets.d_b.backward(loss_b.grad_real, trb_real);
        nets.d_b.backward(loss_b.grad_fake, trb_fake);
        auto params_b = nets.d_b.params();
        adam_step(params_b, st.opt_d_b);
    }

    // ---- generator phase: full chain, updated discriminators held fixed
    {
        nets.g_a.zero_grads();
        nets.g_b.zero_grads();

        GeneratorTrace tr_ab, tr_ba, tr_aba, tr_bab;
        Tensor x_ab = nets.g_b.forward(batch_a, Mode::train, &tr_ab);
        Tensor x_ba = nets.g_a.forward(batch_b, Mode::train, &tr_ba);
        Tensor x_aba = nets.g_a.forward(x_ab, Mode::train, &tr_aba);
        Tensor x_bab = nets.g_b.forward(x_ba, Mode::train, &tr_bab);

        DiscriminatorTrace tr_da, tr_db;
        auto da_out = nets.d_a.forward(x_ba, Mode::train, &tr_da);
        auto db_out = nets.d_b.forward(x_ab, Mode::train, &tr_db);
        auto adv_a = detail::adv_loss(da_out.realness);
        auto adv_b = detail::adv_loss(db_out.realness);
        rec.g_adv_loss_a = adv_a.value;
        rec.g_adv_loss_b = adv_b.value;
        rec.cyclic_loss_a = mse_loss(batch_a, x_aba);
        rec.cyclic_loss_b = mse_loss(batch_b, x_bab);

        // adversarial gradients reach the generators through frozen discriminators
        Tensor g_x_ba = nets.d_a.backward(adv_a.grad, tr_da, /*accumulate_param_grads=*/false);
        Tensor g_x_ab = nets.d_b.backward(adv_b.grad, tr_db, /*accumulate_param_grads=*/false);

        if (lambda > 0.0) {
            Tensor g_aba = mse_loss_grad_a(x_aba, batch_a);
            for (size_t i = 0; i < g_aba.numel(); ++i) g_aba[i] *= lambda;
            Tensor g_xab_cyc = nets.g_a.backward(g_aba, tr_aba);
            for (size_t i = 0; i < g_x_ab.numel(); ++i) g_x_ab[i] += g_xab_cyc[i];

            Tensor g_bab = mse_loss_grad_a(x_bab, batch_b);
            for (size_t i = 0; i < g_bab.numel(); ++i) g_bab[i] *= lambda;
            Tensor g_xba_cyc = nets.g_b.backward(g_bab, tr_bab);
            for (size_t i = 0; i < g_x_ba.numel(); ++i) g_x_ba[i] += g_xba_cyc[i];
        }

        nets.g_b.backward(g_x_ab, tr_ab);
        nets.g_a.backward(g_x_ba, tr_ba);

        auto params_ga = nets.g_a.params();
        adam_step(params_ga, st.opt_g_a);
        auto params_gb = nets.g_b.params();
        adam_step(params_gb, st.opt_g_b);
    }

    st.step++;
    return rec;
}

// Forward-only evaluation of the generators' composite objective against the
// current discriminators; used for descent sanity checks.
inline double generator_objective(TrainerState& st, const Tensor& batch_a, const Tensor& batch_b) {
    Networks& nets = st.nets;
    auto chain = translate_chain(nets.g_a, nets.g_b, batch_a, batch_b, Mode::train);
    auto da_out = nets.d_a.forward(chain.x_ba, Mode::train);
    auto db_out = nets.d_b.forward(chain.x_ab, Mode::train);
    const double adv_a = detail::adv_loss(da_out.realness).value;
    const double adv_b = detail::adv_loss(db_out.realness).value;
    const double cyc = mse_loss(batch_a, chain.x_aba) + mse_loss(batch_b, chain.x_bab);
    return adv_a + adv_b + st.config.cyclic_weight * cyc;
}

// ---- checkpointing ------------------------------------------------------------

inline void save_checkpoint(TrainerState& st, const std::string& path) {
    archive::Writer w;
    nlohmann::json meta;
    meta["kind"] = "trainer";
    meta["generator"] = to_json(st.gen_config);
    meta["discriminator"] = to_json(st.disc_config);
    meta["training"] = to_json(st.config);
    meta["step"] = st.step;
    {
        nlohmann::json rng_words = nlohmann::json::array();
        for (uint64_t word : st.rng.state()) rng_words.push_back(std::to_string(word));
        meta["rng"] = rng_words;
    }
    meta["cursor_a"] = {{"epoch", st.cursor_a.epoch}, {"offset", st.cursor_a.offset}};
    meta["cursor_b"] = {{"epoch", st.cursor_b.epoch}, {"offset", st.cursor_b.offset}};

    const auto add_net = [&](const std::string& prefix, auto& net) {
        net.visit_params([&](const std::string& name, Tensor& t) {
            w.add_array(prefix + "/" + name, t);
        });
        net.visit_buffers([&](const std::string& name, Tensor& t) {
            w.add_array(prefix + "/" + name, t);
        });
    };
    add_net("G_A", st.nets.g_a);
    add_net("G_B", st.nets.g_b);
    add_net("D_A", st.nets.d_a);
    add_net("D_B", st.nets.d_b);

    const auto add_opt = [&](const std::string& prefix, OptimizerState& opt, auto& net) {
        meta[prefix] = {{"learning_rate", opt.learning_rate},
                        {"beta1", opt.beta1},
                        {"beta2", opt.beta2},
                        {"epsilon", opt.epsilon},
                        {"step_count", opt.step_count},
                        {"has_moments", opt.initialized()}};
        if (!opt.initialized()) return;
        size_t idx = 0;
        net.visit_params([&](const std::string& name, Tensor&) {
            w.add_array(prefix + "/m/" + name,
                        Tensor::from_values({static_cast<int>(opt.m[idx].size())}, opt.m[idx]));
            w.add_array(prefix + "/v/" + name,
                        Tensor::from_values({static_cast<int>(opt.v[idx].size())}, opt.v[idx]));
            idx++;
        });
    };
    add_opt("opt_G_A", st.opt_g_a, st.nets.g_a);
    add_opt("opt_G_B", st.opt_g_b, st.nets.g_b);
    add_opt("opt_D_A", st.opt_d_a, st.nets.d_a);
    add_opt("opt_D_B", st.opt_d_b, st.nets.d_b);

    w.set_meta(meta);
    w.write(path);
}

inline TrainerState load_checkpoint(const std::string& path) {
    const archive::Contents c = archive::load(path);
    check(c.meta.value("kind", "") == "trainer", "checkpoint: '", path,
          "' is not a trainer checkpoint");
    TrainerState st;
    st.gen_config = generator_config_from_json(c.meta.at("generator"));
    st.disc_config = discriminator_config_from_json(c.meta.at("discriminator"));
    st.config = training_config_from_json(c.meta.at("training"));
    st.nets.g_a = Generator(st.gen_config);
    st.nets.g_b = Generator(st.gen_config);
    st.nets.d_a = Discriminator(st.disc_config);
    st.nets.d_b = Discriminator(st.disc_config);
    st.step = c.meta.at("step").get<int64_t>();
    {
        std::array<uint64_t, 4> words{};
        const auto& arr = c.meta.at("rng");
        check(arr.size() == 4, "checkpoint: malformed rng state");
        for (size_t i = 0; i < 4; ++i) words[i] = std::stoull(arr[i].get<std::string>());
        st.rng.set_state(words);
    }
    st.cursor_a = {c.meta.at("cursor_a").at("epoch").get<int64_t>(),
                   c.meta.at("cursor_a").at("offset").get<int64_t>()};
    st.cursor_b = {c.meta.at("cursor_b").at("epoch").get<int64_t>(),
                   c.meta.at("cursor_b").at("offset").get<int64_t>()};

    const auto load_net = [&](const std::string& prefix, auto& net) {
        net.visit_params([&](const std::string& name, Tensor& t) {
            const Tensor& src = c.array(prefix + "/" + name);
            check(src.shape() == t.shape(), "checkpoint: array '", prefix + "/" + name,
                  "' has shape ", src.shape_str(), ", expected ", t.shape_str());
            t = src;
        });
        net.visit_buffers([&](const std::string& name, Tensor& t) {
            const Tensor& src = c.array(prefix + "/" + name);
            check(src.shape() == t.shape(), "checkpoint: buffer '", prefix + "/" + name,
                  "' has shape ", src.shape_str(), ", expected ", t.shape_str());
            t = src;
        });
    };
    load_net("G_A", st.nets.g_a);
    load_net("G_B", st.nets.g_b);
    load_net("D_A", st.nets.d_a);
    load_net("D_B", st.nets.d_b);

    const auto load_opt = [&](const std::string& prefix, OptimizerState& opt, auto& net) {
        const auto& m = c.meta.at(prefix);
        opt.learning_rate = m.at("learning_rate").get<double>();
        opt.beta1 = m.at("beta1").get<double>();
        opt.beta2 = m.at("beta2").get<double>();
        opt.epsilon = m.at("epsilon").get<double>();
        opt.step_count = m.at("step_count").get<int64_t>();
        if (!m.value("has_moments", false)) return;
        opt.m.clear();
        opt.v.clear();
        net.visit_params([&](const std::string& name, Tensor&) {
            opt.m.push_back(c.array(prefix + "/m/" + name).values());
            opt.v.push_back(c.array(prefix + "/v/" + name).values());
        });
    };
    load_opt("opt_G_A", st.opt_g_a, st.nets.g_a);
    load_opt("opt_G_B", st.opt_g_b, st.nets.g_b);
    load_opt("opt_D_A", st.opt_d_a, st.nets.d_a);
    load_opt("opt_D_B", st.opt_d_b, st.nets.d_b);
    return st;
}

// ---- loss log -------------------------------------------------------------------

inline void write_loss_log_header(std::ostream& os) {
    os << "step\td_loss_A\td_loss_B\tg_adv_loss_A\tg_adv_loss_B\tcyclic_loss_A\tcyclic_loss_B\n";
}

inline void append_loss_record(std::ostream& os, const LossRecord& r) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%lld\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\n",
                  static_cast<long long>(r.step), r.d_loss_a, r.d_loss_b, r.g_adv_loss_a,
                  r.g_adv_loss_b, r.cyclic_loss_a, r.cyclic_loss_b);
    os << buf;
}

struct TrainHooks {
    std::function<void(const LossRecord&)> on_record;
    std::function<void(TrainerState&, int64_t)> on_checkpoint;
};

// Runs total_steps coupled steps over reshuffled batch iterators. Images are
// [C,S,S] tensors; the two sets need no correspondence. Halts with a
// diagnostic if any loss goes non-finite.
inline std::vector<LossRecord> train(TrainerState& st, const std::vector<Tensor>& images_a,
                                     const std::vector<Tensor>& images_b,
                                     const TrainHooks& hooks = {},
                                     const std::string& checkpoint_note = "") {
    check(!images_a.empty() && !images_b.empty(), "train: both datasets must be non-empty");
    const TrainingConfig& cfg = st.config;
    cfg.validate();
    check(static_cast<size_t>(cfg.batch_size) <= images_a.size() &&
              static_cast<size_t>(cfg.batch_size) <= images_b.size(),
          "train: dataset smaller than batch_size ", cfg.batch_size, " (have ", images_a.size(),
          " / ", images_b.size(), ")");

    const auto gather = [&](const std::vector<Tensor>& images, const std::vector<size_t>& idx) {
        const auto& first = images.front().shape();
        Tensor batch({static_cast<int>(idx.size()), first[0], first[1], first[2]});
        const size_t stride = images.front().numel();
        for (size_t i = 0; i < idx.size(); ++i) {
            const Tensor& img = images[idx[i]];
            check(img.numel() == stride, "train: image ", idx[i], " has inconsistent shape");
            std::copy(img.values().begin(), img.values().end(),
                      batch.values().begin() + static_cast<long>(i * stride));
        }
        return batch;
    };

    BatchIterator iter_a(images_a.size(), cfg.batch_size, cfg.seed, 0xA);
    BatchIterator iter_b(images_b.size(), cfg.batch_size, cfg.seed, 0xB);
    iter_a.restore(st.cursor_a);
    iter_b.restore(st.cursor_b);

    std::vector<LossRecord> log;
    std::string last_checkpoint = checkpoint_note.empty() ? "none" : checkpoint_note;
    while (st.step < cfg.total_steps) {
        const Tensor batch_a = gather(images_a, iter_a.next_full());
        const Tensor batch_b = gather(images_b, iter_b.next_full());
        st.cursor_a = iter_a.cursor();
        st.cursor_b = iter_b.cursor();
        LossRecord rec = train_step(st, batch_a, batch_b);
        if (!rec.all_finite()) {
            fail("train: non-finite loss at step ", rec.step, "; last checkpoint: ",
                 last_checkpoint, ". Run halted.");
        }
        log.push_back(rec);
        if (hooks.on_record) hooks.on_record(rec);
        if (hooks.on_checkpoint &&
            (st.step % cfg.checkpoint_interval == 0 || st.step == cfg.total_steps)) {
            hooks.on_checkpoint(st, st.step);
            last_checkpoint = "step " + std::to_string(st.step);
        }
    }
    return log;
}

}  // namespace ganpr
