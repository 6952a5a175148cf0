#include <catch2/catch.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ganpr/training.hpp"
#include "testutil.hpp"

using namespace ganpr;
using testutil::flatten_params;

namespace {

TrainerState tiny_trainer(uint64_t seed = 5, double lambda = 10.0) {
    TrainingConfig tc;
    tc.batch_size = 2;
    tc.total_steps = 10;
    tc.seed = seed;
    tc.cyclic_weight = lambda;
    tc.checkpoint_interval = 5;
    return init_trainer(testutil::tiny_gen_config(), testutil::tiny_disc_config(), tc);
}

struct IdentityGen {
    Tensor forward(const Tensor& batch, Mode) { return batch; }
};

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

// Adversarial-only comparison step: mirrors train_step's phase structure and
// forward order exactly but never backpropagates the cyclic terms. Used to
// pin down what cyclic_weight = 0 must reduce to.
LossRecord adversarial_only_step(TrainerState& st, const Tensor& batch_a, const Tensor& batch_b) {
    Networks& nets = st.nets;
    LossRecord rec;
    rec.step = st.step + 1;
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
        Tensor g_x_ba = nets.d_a.backward(adv_a.grad, tr_da, false);
        Tensor g_x_ab = nets.d_b.backward(adv_b.grad, tr_db, false);
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

}  // namespace

TEST_CASE("translate_chain with identity generators reconstructs exactly", "[training]") {
    Rng rng(1);
    Tensor batch_a = testutil::random_image_batch(2, 3, 16, rng);
    Tensor batch_b = testutil::random_image_batch(2, 3, 16, rng);
    IdentityGen id_a, id_b;
    auto out = translate_chain(id_a, id_b, batch_a, batch_b);
    REQUIRE(out.x_aba.values() == batch_a.values());
    REQUIRE(out.x_bab.values() == batch_b.values());
    // both cyclic reconstruction losses are exactly zero for identity generators
    REQUIRE(mse_loss(batch_a, out.x_aba) == 0.0);
    REQUIRE(mse_loss(batch_b, out.x_bab) == 0.0);
}

TEST_CASE("translate_chain preserves shapes and composes generator_forward", "[training]") {
    auto st = tiny_trainer();
    Rng rng(2);
    Tensor batch_a = testutil::random_image_batch(2, 3, 16, rng);
    Tensor batch_b = testutil::random_image_batch(2, 3, 16, rng);
    auto out = translate_chain(st.nets.g_a, st.nets.g_b, batch_a, batch_b, Mode::eval);
    REQUIRE(out.x_ab.shape() == batch_a.shape());
    REQUIRE(out.x_ba.shape() == batch_b.shape());
    REQUIRE(out.x_aba.shape() == batch_a.shape());
    REQUIRE(out.x_bab.shape() == batch_b.shape());
    // compositional oracle: chain == manual composition of forward passes
    Tensor x_ab = st.nets.g_b.forward(batch_a, Mode::eval);
    Tensor x_aba = st.nets.g_a.forward(x_ab, Mode::eval);
    REQUIRE(out.x_ab.values() == x_ab.values());
    REQUIRE(out.x_aba.values() == x_aba.values());
}

TEST_CASE("train_step is deterministic", "[training]") {
    auto st1 = tiny_trainer(7);
    auto st2 = tiny_trainer(7);
    Rng rng(3);
    Tensor batch_a = testutil::random_image_batch(2, 3, 16, rng);
    Tensor batch_b = testutil::random_image_batch(2, 3, 16, rng);
    auto r1 = train_step(st1, batch_a, batch_b);
    auto r2 = train_step(st2, batch_a, batch_b);
    REQUIRE(r1.d_loss_a == r2.d_loss_a);
    REQUIRE(r1.d_loss_b == r2.d_loss_b);
    REQUIRE(r1.g_adv_loss_a == r2.g_adv_loss_a);
    REQUIRE(r1.g_adv_loss_b == r2.g_adv_loss_b);
    REQUIRE(r1.cyclic_loss_a == r2.cyclic_loss_a);
    REQUIRE(r1.cyclic_loss_b == r2.cyclic_loss_b);
    REQUIRE(flatten_params(st1.nets.g_a) == flatten_params(st2.nets.g_a));
    REQUIRE(flatten_params(st1.nets.d_b) == flatten_params(st2.nets.d_b));
}

TEST_CASE("every loss field is finite and non-negative", "[training]") {
    auto st = tiny_trainer(11);
    Rng rng(4);
    for (int i = 0; i < 3; ++i) {
        Tensor batch_a = testutil::random_image_batch(2, 3, 16, rng);
        Tensor batch_b = testutil::random_image_batch(2, 3, 16, rng);
        auto rec = train_step(st, batch_a, batch_b);
        REQUIRE(rec.all_finite());
        REQUIRE(rec.all_non_negative());
        REQUIRE(rec.step == st.step);
    }
}

TEST_CASE("cyclic_weight zero matches an adversarial-only step bit-exactly", "[training]") {
    auto st_zero = tiny_trainer(13, 0.0);
    auto st_adv = tiny_trainer(13, 0.0);
    Rng rng(5);
    Tensor batch_a = testutil::random_image_batch(2, 3, 16, rng);
    Tensor batch_b = testutil::random_image_batch(2, 3, 16, rng);

    auto rec_zero = train_step(st_zero, batch_a, batch_b);
    auto rec_adv = adversarial_only_step(st_adv, batch_a, batch_b);

    // cyclic losses are still reported even though they do not train
    REQUIRE(rec_zero.cyclic_loss_a > 0.0);
    REQUIRE(rec_zero.cyclic_loss_a == rec_adv.cyclic_loss_a);
    REQUIRE(flatten_params(st_zero.nets.g_a) == flatten_params(st_adv.nets.g_a));
    REQUIRE(flatten_params(st_zero.nets.g_b) == flatten_params(st_adv.nets.g_b));
    REQUIRE(flatten_params(st_zero.nets.d_a) == flatten_params(st_adv.nets.d_a));
    REQUIRE(flatten_params(st_zero.nets.d_b) == flatten_params(st_adv.nets.d_b));

    // and a lambda > 0 run must diverge from the adversarial-only one
    auto st_cyc = tiny_trainer(13, 10.0);
    train_step(st_cyc, batch_a, batch_b);
    REQUIRE(flatten_params(st_cyc.nets.g_a) != flatten_params(st_adv.nets.g_a));
}

TEST_CASE("one step decreases the generator objective against a frozen discriminator",
          "[training]") {
    TrainingConfig tc;
    tc.batch_size = 2;
    tc.total_steps = 1;
    tc.seed = 21;
    tc.lr_generator = 1e-4;
    tc.lr_discriminator = 0.0;  // discriminators frozen
    auto st = init_trainer(testutil::tiny_gen_config(), testutil::tiny_disc_config(), tc);
    Rng rng(6);
    Tensor batch_a = testutil::random_image_batch(2, 3, 16, rng);
    Tensor batch_b = testutil::random_image_batch(2, 3, 16, rng);

    auto probe = st;
    const double before = generator_objective(probe, batch_a, batch_b);
    train_step(st, batch_a, batch_b);
    auto probe2 = st;
    const double after = generator_objective(probe2, batch_a, batch_b);
    REQUIRE(after < before);
}

TEST_CASE("discriminator updates never touch generator parameters and vice versa",
          "[training]") {
    auto st = tiny_trainer(17);
    Rng rng(7);
    Tensor batch_a = testutil::random_image_batch(2, 3, 16, rng);
    Tensor batch_b = testutil::random_image_batch(2, 3, 16, rng);
    // freeze generators: with lr_generator = 0 their parameters cannot move
    st.opt_g_a.learning_rate = 0.0;
    st.opt_g_b.learning_rate = 0.0;
    auto before_g = flatten_params(st.nets.g_a);
    auto before_d = flatten_params(st.nets.d_a);
    train_step(st, batch_a, batch_b);
    REQUIRE(flatten_params(st.nets.g_a) == before_g);
    REQUIRE(flatten_params(st.nets.d_a) != before_d);
}

TEST_CASE("train_step is symmetric under domain relabeling", "[training]") {
    auto st = tiny_trainer(19);
    auto swapped = st;
    std::swap(swapped.nets.g_a, swapped.nets.g_b);
    std::swap(swapped.nets.d_a, swapped.nets.d_b);
    std::swap(swapped.opt_g_a, swapped.opt_g_b);
    std::swap(swapped.opt_d_a, swapped.opt_d_b);

    Rng rng(8);
    Tensor batch_a = testutil::random_image_batch(2, 3, 16, rng);
    Tensor batch_b = testutil::random_image_batch(2, 3, 16, rng);
    auto rec = train_step(st, batch_a, batch_b);
    auto rec_sw = train_step(swapped, batch_b, batch_a);
    REQUIRE(rec.d_loss_a == rec_sw.d_loss_b);
    REQUIRE(rec.d_loss_b == rec_sw.d_loss_a);
    REQUIRE(rec.g_adv_loss_a == rec_sw.g_adv_loss_b);
    REQUIRE(rec.g_adv_loss_b == rec_sw.g_adv_loss_a);
    REQUIRE(rec.cyclic_loss_a == rec_sw.cyclic_loss_b);
    REQUIRE(rec.cyclic_loss_b == rec_sw.cyclic_loss_a);
    REQUIRE(flatten_params(st.nets.g_a) == flatten_params(swapped.nets.g_b));
    REQUIRE(flatten_params(st.nets.d_b) == flatten_params(swapped.nets.d_a));
}

TEST_CASE("train runs the requested steps with finite losses", "[training]") {
    auto st = tiny_trainer(23);
    Rng rng(9);
    auto images_a = testutil::random_image_set(8, 3, 16, rng);
    auto images_b = testutil::random_image_set(8, 3, 16, rng);
    auto log = train(st, images_a, images_b);
    REQUIRE(log.size() == 10);
    for (const auto& rec : log) {
        REQUIRE(rec.all_finite());
        REQUIRE(rec.all_non_negative());
    }
    REQUIRE(log.front().step == 1);
    REQUIRE(log.back().step == 10);
    REQUIRE(st.step == 10);

    // identical run reproduces the loss log bit-exactly
    auto st2 = tiny_trainer(23);
    auto log2 = train(st2, images_a, images_b);
    for (size_t i = 0; i < log.size(); ++i) {
        REQUIRE(log[i].d_loss_a == log2[i].d_loss_a);
        REQUIRE(log[i].cyclic_loss_b == log2[i].cyclic_loss_b);
    }
}

TEST_CASE("train rejects datasets smaller than the batch size", "[training]") {
    auto st = tiny_trainer(29);
    st.config.batch_size = 4;
    Rng rng(10);
    auto images_a = testutil::random_image_set(2, 3, 16, rng);
    auto images_b = testutil::random_image_set(8, 3, 16, rng);
    REQUIRE_THROWS_WITH(train(st, images_a, images_b), Catch::Contains("smaller than batch_size"));
}

TEST_CASE("checkpoint round-trips fresh and trained state bit-exactly", "[training]") {
    const std::string path = temp_path("ganpr_ckpt_test.bin");
    auto st = tiny_trainer(31);
    save_checkpoint(st, path);
    auto loaded = load_checkpoint(path);
    REQUIRE(flatten_params(loaded.nets.g_a) == flatten_params(st.nets.g_a));
    REQUIRE(loaded.step == st.step);
    REQUIRE(loaded.rng.state() == st.rng.state());
    REQUIRE(loaded.config.total_steps == st.config.total_steps);

    Rng rng(11);
    auto images_a = testutil::random_image_set(6, 3, 16, rng);
    auto images_b = testutil::random_image_set(6, 3, 16, rng);
    train(st, images_a, images_b);
    save_checkpoint(st, path);
    auto trained = load_checkpoint(path);
    REQUIRE(flatten_params(trained.nets.g_a) == flatten_params(st.nets.g_a));
    REQUIRE(flatten_params(trained.nets.d_b) == flatten_params(st.nets.d_b));
    REQUIRE(trained.opt_g_a.step_count == st.opt_g_a.step_count);
    REQUIRE(trained.opt_g_a.m == st.opt_g_a.m);
    REQUIRE(trained.opt_d_b.v == st.opt_d_b.v);
    std::filesystem::remove(path);
}

TEST_CASE("resuming from a checkpoint replays the continuation bit-exactly", "[training]") {
    const std::string path = temp_path("ganpr_resume_test.bin");
    Rng rng(12);
    auto images_a = testutil::random_image_set(6, 3, 16, rng);
    auto images_b = testutil::random_image_set(6, 3, 16, rng);

    auto straight = tiny_trainer(37);
    auto full_log = train(straight, images_a, images_b);

    auto half = tiny_trainer(37);
    half.config.total_steps = 5;
    train(half, images_a, images_b);
    save_checkpoint(half, path);

    auto resumed = load_checkpoint(path);
    resumed.config.total_steps = 10;
    auto tail_log = train(resumed, images_a, images_b);
    REQUIRE(tail_log.size() == 5);
    for (size_t i = 0; i < 5; ++i) {
        const auto& a = full_log[5 + i];
        const auto& b = tail_log[i];
        REQUIRE(a.step == b.step);
        REQUIRE(a.d_loss_a == b.d_loss_a);
        REQUIRE(a.d_loss_b == b.d_loss_b);
        REQUIRE(a.g_adv_loss_a == b.g_adv_loss_a);
        REQUIRE(a.g_adv_loss_b == b.g_adv_loss_b);
        REQUIRE(a.cyclic_loss_a == b.cyclic_loss_a);
        REQUIRE(a.cyclic_loss_b == b.cyclic_loss_b);
    }
    REQUIRE(flatten_params(resumed.nets.g_a) == flatten_params(straight.nets.g_a));
    REQUIRE(flatten_params(resumed.nets.d_a) == flatten_params(straight.nets.d_a));
    std::filesystem::remove(path);
}

TEST_CASE("corrupted or truncated checkpoints are rejected outright", "[training]") {
    const std::string path = temp_path("ganpr_corrupt_test.bin");
    auto st = tiny_trainer(41);
    save_checkpoint(st, path);

    // flip one byte in the middle
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekg(0, std::ios::end);
        const auto size = static_cast<long>(f.tellg());
        f.seekp(size / 2);
        char byte;
        f.seekg(size / 2);
        f.read(&byte, 1);
        byte = static_cast<char>(byte ^ 0x5A);
        f.seekp(size / 2);
        f.write(&byte, 1);
    }
    REQUIRE_THROWS_WITH(load_checkpoint(path), Catch::Contains("checksum"));

    save_checkpoint(st, path);
    std::filesystem::resize_file(path, std::filesystem::file_size(path) / 2);
    REQUIRE_THROWS_AS(load_checkpoint(path), Error);

    // wrong magic
    {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        f << "NOTANARCHIVE----------------";
    }
    REQUIRE_THROWS_WITH(load_checkpoint(path), Catch::Contains("magic"));
    std::filesystem::remove(path);
}

TEST_CASE("batch iterator covers every record once per epoch", "[training]") {
    BatchIterator it(10, 3, 77);
    std::vector<size_t> seen;
    for (int i = 0; i < 4; ++i) {
        auto chunk = it.next();
        seen.insert(seen.end(), chunk.begin(), chunk.end());
    }
    REQUIRE(seen.size() == 10);
    auto sorted = seen;
    std::sort(sorted.begin(), sorted.end());
    for (size_t i = 0; i < 10; ++i) REQUIRE(sorted[i] == i);

    // same seed, same order
    BatchIterator it2(10, 3, 77);
    std::vector<size_t> seen2;
    for (int i = 0; i < 4; ++i) {
        auto chunk = it2.next();
        seen2.insert(seen2.end(), chunk.begin(), chunk.end());
    }
    REQUIRE(seen == seen2);

    // next epoch: same multiset, different order
    std::vector<size_t> epoch2;
    for (int i = 0; i < 4; ++i) {
        auto chunk = it.next();
        epoch2.insert(epoch2.end(), chunk.begin(), chunk.end());
    }
    auto sorted2 = epoch2;
    std::sort(sorted2.begin(), sorted2.end());
    REQUIRE(sorted == sorted2);
    REQUIRE(seen != epoch2);
}

TEST_CASE("loss log serialization round-trips", "[training]") {
    LossRecord r;
    r.step = 3;
    r.d_loss_a = 0.123456789012345;
    r.d_loss_b = 1.5e-7;
    r.g_adv_loss_a = 2.25;
    r.g_adv_loss_b = 0.75;
    r.cyclic_loss_a = 3.0;
    r.cyclic_loss_b = 1e-16;
    std::ostringstream os;
    write_loss_log_header(os);
    append_loss_record(os, r);
    const std::string text = os.str();
    REQUIRE(text.find("step\td_loss_A") == 0);
    std::istringstream is(text);
    std::string header, line;
    std::getline(is, header);
    std::getline(is, line);
    long long step;
    double v[6];
    REQUIRE(std::sscanf(line.c_str(), "%lld\t%lg\t%lg\t%lg\t%lg\t%lg\t%lg", &step, &v[0], &v[1],
                        &v[2], &v[3], &v[4], &v[5]) == 7);
    REQUIRE(step == 3);
    REQUIRE(v[0] == r.d_loss_a);
    REQUIRE(v[5] == r.cyclic_loss_b);
}
