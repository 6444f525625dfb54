#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include "lcnn/gradcheck.hpp"
#include "lcnn/training.hpp"
#include "test_util.hpp"

using namespace lcnn;
using namespace testutil;

namespace {

std::vector<double> snapshot(std::vector<nn::ParamRef> refs) {
    std::vector<double> out;
    for (auto& r : refs)
        for (int64_t i = 0; i < r.value.numel(); ++i) out.push_back(r.value.at(i));
    return out;
}

Tensor param1(std::initializer_list<double> vals, DType dt = DType::F64) {
    Tensor p = Tensor::from({static_cast<int64_t>(vals.size())}, vals, dt);
    p.set_requires_grad(true);
    return p;
}

void give_grad(Tensor& p, std::initializer_list<double> vals) {
    accumulate_grad(p.impl(), Tensor::from(p.shape(), vals, p.dtype()));
}

models::ModelConfig mlr_cfg(int n, int classes, DType dt = DType::F32, uint64_t seed = 3) {
    models::ModelConfig cfg;
    cfg.arch = "mlr-only";
    cfg.input_dim = n;
    cfg.classes = classes;
    cfg.dtype = dt;
    cfg.seed = seed;
    return cfg;
}

std::string tmp_path(const char* stem) { return std::string("/tmp/lcnn_train_") + stem; }

models::ModelConfig small_cfg(uint64_t seed = 3) {
    models::ModelConfig cfg;
    cfg.arch = "lenet-hcnn";
    cfg.dtype = DType::F32;
    cfg.seed = seed;
    return cfg;
}

// Rewrites the CRC32 trailer after a deliberate header edit.
void refresh_crc(std::string& bytes) {
    auto crc32 = [](const unsigned char* data, size_t len) {
        uint32_t crc = 0xFFFFFFFFu;
        for (size_t i = 0; i < len; ++i) {
            crc ^= data[i];
            for (int b = 0; b < 8; ++b) crc = (crc >> 1) ^ (0xEDB88320u & (0u - (crc & 1u)));
        }
        return crc ^ 0xFFFFFFFFu;
    };
    uint32_t c = crc32(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size() - 4);
    for (int i = 0; i < 4; ++i)
        bytes[bytes.size() - 4 + static_cast<size_t>(i)] = static_cast<char>((c >> (8 * i)) & 0xFF);
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

void spit(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("cross entropy matches hand values and stays stable") {
    Tensor flat = Tensor::from({1, 2}, {0.0, 0.0}, DType::F64);
    CHECK(rel_err(train::cross_entropy(flat, {0}).item(), std::log(2.0)) < 1e-12);

    Tensor huge = Tensor::from({1, 2}, {1000.0, 0.0}, DType::F64);
    double loss = train::cross_entropy(huge, {0}).item();
    CHECK(std::isfinite(loss));
    CHECK(loss < 1e-12);
    CHECK(train::cross_entropy(huge, {1}).item() > 999.0);  // confident and wrong

    Tensor batch = Tensor::from({2, 3}, {1.0, 2.0, 3.0, 1.0, 1.0, 1.0}, DType::F64);
    double want = 0.5 * (-std::log(std::exp(3.0) / (std::exp(1.0) + std::exp(2.0) + std::exp(3.0))) -
                         std::log(1.0 / 3.0));
    CHECK(rel_err(train::cross_entropy(batch, {2, 1}).item(), want) < 1e-12);

    CHECK_THROWS_AS((void)train::cross_entropy(batch, {2, 3}), DomainError);
    CHECK_THROWS_AS((void)train::cross_entropy(batch, {-1, 0}), DomainError);
    CHECK_THROWS_AS((void)train::cross_entropy(batch, {0}), ShapeError);
    CHECK_THROWS_AS((void)train::cross_entropy(Tensor::zeros({3}, DType::F64), {0}), ShapeError);
}

TEST_CASE("cross entropy gradient matches finite differences") {
    Rng rng(7);
    Tensor logits = rand_normal({5, 4}, 0.0, 2.0, rng, DType::F64, /*requires_grad=*/true);
    std::vector<int> labels = {3, 0, 1, 1, 2};
    GradCheckOpts opts;
    opts.tol = 1e-5;
    auto res = gradcheck(
        [&](const std::vector<Tensor>& in) { return train::cross_entropy(in[0], labels); },
        {logits}, opts);
    CAPTURE(res.worst);
    CHECK(res.ok);
    CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("accuracy counts argmax hits") {
    Tensor logits = Tensor::from({3, 2}, {2.0, 1.0, 0.0, 5.0, 1.0, 1.5}, DType::F64);
    CHECK(train::accuracy(logits, {0, 1, 1}) == 1.0);
    CHECK(train::accuracy(logits, {0, 1, 0}) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("sgd steps match hand updates") {
    SUBCASE("plain step") {
        Tensor p = param1({0.0});
        train::OptimizerConfig cfg;
        cfg.kind = "sgd";
        cfg.lr = 0.1;
        cfg.clip_norm = 0.0;
        train::Optimizer opt(cfg, {{"p", p}});
        give_grad(p, {1.0});
        opt.step();
        CHECK(p.at(0) == doctest::Approx(-0.1).epsilon(1e-12));
    }
    SUBCASE("no grad or zero grad leaves parameters untouched") {
        Tensor p = param1({1.25, -3.5});
        train::OptimizerConfig cfg;
        cfg.kind = "sgd";
        cfg.lr = 0.5;
        train::Optimizer opt(cfg, {{"p", p}});
        opt.step();  // grad never populated
        CHECK(p.at(0) == 1.25);
        CHECK(p.at(1) == -3.5);
        give_grad(p, {0.0, 0.0});
        opt.step();
        CHECK(p.at(0) == 1.25);
        CHECK(p.at(1) == -3.5);
    }
    SUBCASE("momentum accumulates") {
        Tensor p = param1({0.0});
        train::OptimizerConfig cfg;
        cfg.kind = "sgd";
        cfg.lr = 0.1;
        cfg.momentum = 0.9;
        cfg.clip_norm = 0.0;
        train::Optimizer opt(cfg, {{"p", p}});
        give_grad(p, {1.0});
        opt.step();
        CHECK(p.at(0) == doctest::Approx(-0.1).epsilon(1e-12));
        opt.zero_grad();
        give_grad(p, {1.0});
        opt.step();  // m = 0.9*1 + 1 = 1.9
        CHECK(p.at(0) == doctest::Approx(-0.1 - 0.19).epsilon(1e-12));
    }
    SUBCASE("weight decay acts as an additive gradient") {
        Tensor p = param1({2.0});
        train::OptimizerConfig cfg;
        cfg.kind = "sgd";
        cfg.lr = 0.1;
        cfg.weight_decay = 0.5;
        train::Optimizer opt(cfg, {{"p", p}});
        give_grad(p, {0.0});
        opt.step();  // g = 0 + 0.5*2 = 1
        CHECK(p.at(0) == doctest::Approx(1.9).epsilon(1e-12));
    }
    SUBCASE("global norm clip rescales the whole gradient") {
        Tensor p = param1({0.0, 0.0});
        train::OptimizerConfig cfg;
        cfg.kind = "sgd";
        cfg.lr = 1.0;
        cfg.clip_norm = 1.0;
        train::Optimizer opt(cfg, {{"p", p}});
        give_grad(p, {3.0, 4.0});  // norm 5 -> scaled by 1/5
        opt.step();
        CHECK(p.at(0) == doctest::Approx(-0.6).epsilon(1e-12));
        CHECK(p.at(1) == doctest::Approx(-0.8).epsilon(1e-12));
    }
    SUBCASE("mismatched grad shape is rejected") {
        Tensor p = param1({1.0, 2.0});
        Tensor wrong = Tensor::from({3}, {1.0, 1.0, 1.0}, DType::F64);
        p.impl()->grad = wrong.impl();
        train::OptimizerConfig cfg;
        cfg.kind = "sgd";
        cfg.lr = 0.1;
        train::Optimizer opt(cfg, {{"p", p}});
        CHECK_THROWS_AS(opt.step(), ShapeError);
    }
    SUBCASE("config validation") {
        train::OptimizerConfig cfg;
        cfg.kind = "rmsprop";
        CHECK_THROWS_AS(train::Optimizer(cfg, {}), ConfigError);
        cfg = {};
        cfg.lr = -1.0;
        CHECK_THROWS_AS(train::Optimizer(cfg, {}), ConfigError);
        cfg = {};
        cfg.momentum = 1.0;
        CHECK_THROWS_AS(train::Optimizer(cfg, {}), ConfigError);
    }
}

TEST_CASE("adam first step moves by about lr in the gradient sign direction") {
    Tensor p = param1({1.0, -2.0, 0.5, 3.0});
    train::OptimizerConfig cfg;
    cfg.kind = "adam";
    cfg.lr = 1e-3;
    cfg.clip_norm = 0.0;
    train::Optimizer opt(cfg, {{"p", p}});
    give_grad(p, {0.9, -2.5, 1e-3, 40.0});
    std::vector<double> before = {1.0, -2.0, 0.5, 3.0};
    std::vector<double> sign = {1.0, -1.0, 1.0, 1.0};
    opt.step();
    for (int64_t i = 0; i < 4; ++i) {
        double delta = p.at(i) - before[static_cast<size_t>(i)];
        CHECK(std::abs(delta + sign[static_cast<size_t>(i)] * cfg.lr) < 1e-6);
    }
}

TEST_CASE("zero learning rate leaves every parameter bit-identical") {
    auto model = models::build(mlr_cfg(2, 2));
    auto before = snapshot(model->params());
    auto set = data::gen_wrapped_mixture(2, 2, 30, 0.3, -1.0, 9, DType::F32);
    train::OptimizerConfig ocfg;
    ocfg.kind = "sgd";
    ocfg.lr = 0.0;
    train::TrainConfig tcfg;
    tcfg.epochs = 3;
    tcfg.batch_size = 16;
    auto rec = train::train(*model, set, nullptr, ocfg, tcfg);
    CHECK(snapshot(model->params()) == before);
    CHECK(rec.epochs.size() == 3);
}

TEST_CASE("mlr head reaches 99 percent on separable wrapped mixture") {
    auto model = models::build(mlr_cfg(2, 2));
    auto set = data::gen_wrapped_mixture(2, 2, 100, 0.1, -1.0, 23, DType::F32);
    train::OptimizerConfig ocfg;
    ocfg.kind = "sgd";
    ocfg.lr = 0.1;
    train::TrainConfig tcfg;
    tcfg.epochs = 10;
    tcfg.batch_size = 32;
    tcfg.seed = 2;
    double acc = 0.0;
    std::vector<double> first10;
    for (int round = 0; round < 20 && acc < 0.99; ++round) {  // <= 200 epochs
        auto rec = train::train(*model, set, nullptr, ocfg, tcfg);
        acc = rec.final_train_accuracy;
        if (round == 0)
            for (const auto& m : rec.epochs) first10.push_back(m.loss);
    }
    CHECK(acc >= 0.99);

    // Best-so-far training loss decreases across the first ten epochs.
    REQUIRE(first10.size() == 10);
    double best0 = first10[0], best9 = first10[0];
    for (double v : first10) best9 = std::min(best9, v);
    CHECK(best9 < best0);
    int improvements = 0;
    double best = first10[0];
    for (size_t i = 1; i < first10.size(); ++i)
        if (first10[i] < best) {
            best = first10[i];
            ++improvements;
        }
    CHECK(improvements >= 3);
}

TEST_CASE("training is deterministic end to end") {
    auto run = [](uint64_t model_seed) {
        auto cfg = mlr_cfg(3, 3, DType::F32, model_seed);
        auto model = models::build(cfg);
        auto set = data::gen_wrapped_mixture(3, 3, 40, 0.4, -1.0, 31, DType::F32);
        train::OptimizerConfig ocfg;  // adam defaults
        train::TrainConfig tcfg;
        tcfg.epochs = 4;
        tcfg.batch_size = 16;
        tcfg.seed = 5;
        auto rec = train::train(*model, set, nullptr, ocfg, tcfg);
        return std::make_pair(snapshot(model->params()), rec);
    };
    auto [pa, ra] = run(3);
    auto [pb, rb] = run(3);
    CHECK(pa == pb);
    REQUIRE(ra.epochs.size() == rb.epochs.size());
    for (size_t i = 0; i < ra.epochs.size(); ++i) {
        CHECK(ra.epochs[i].loss == rb.epochs[i].loss);
        CHECK(ra.epochs[i].accuracy == rb.epochs[i].accuracy);
    }
}

TEST_CASE("conv model trains deterministically and keeps bn state on-manifold") {
    auto build_and_train = [](bool with_eval) {
        auto cfg = small_cfg();
        auto model = models::build(cfg);
        auto set = data::gen_digits(16, 77);
        train::OptimizerConfig ocfg;  // adam 1e-3
        train::TrainConfig tcfg;
        tcfg.epochs = 2;
        tcfg.batch_size = 8;
        tcfg.seed = 11;
        auto rec = train::train(*model, set, with_eval ? &set : nullptr, ocfg, tcfg);
        return std::make_pair(std::move(model), rec);
    };
    auto [ma, ra] = build_and_train(false);
    auto [mb, rb] = build_and_train(false);
    CHECK(snapshot(ma->params()) == snapshot(mb->params()));
    CHECK(snapshot(ma->buffers()) == snapshot(mb->buffers()));
    for (size_t i = 0; i < ra.epochs.size(); ++i) CHECK(ra.epochs[i].loss == rb.epochs[i].loss);

    const geo::Curvature& c = ma->curvature();
    auto* bn = dynamic_cast<nn::LorentzBatchNorm*>(&ma->net().at("bn1"));
    REQUIRE(bn != nullptr);
    CHECK(residual64(bn->beta(), c) < 1e-5);
    CHECK(residual64(bn->running_mean_, c) < 1e-5);
    CHECK(bn->running_var_.item() > 0.0);
    CHECK(std::isfinite(bn->running_var_.item()));
    for (double v : snapshot(ma->params())) CHECK(std::isfinite(v));
}

TEST_CASE("bn buffers move in train mode only and eval never mutates") {
    auto model = models::build(small_cfg());
    auto set = data::gen_digits(16, 78);
    auto buf0 = snapshot(model->buffers());

    auto [l0, a0] = train::evaluate(*model, set, 8);
    CHECK(snapshot(model->buffers()) == buf0);  // metric pass is pure
    CHECK(l0 > 0.0);
    CHECK(a0 >= 0.0);

    train::OptimizerConfig ocfg;
    train::TrainConfig tcfg;
    tcfg.epochs = 1;
    tcfg.batch_size = 8;
    (void)train::train(*model, set, nullptr, ocfg, tcfg);
    CHECK(snapshot(model->buffers()) != buf0);  // running stats tracked

    auto params_after = snapshot(model->params());
    auto buf_after = snapshot(model->buffers());
    (void)train::evaluate(*model, set, 8);
    CHECK(snapshot(model->params()) == params_after);
    CHECK(snapshot(model->buffers()) == buf_after);
}

TEST_CASE("non-finite loss aborts with batch index and parameter norms") {
    auto model = models::build(mlr_cfg(2, 2));
    for (auto& p : model->params())
        if (p.name == "mlr1.a") p.value.set(0, std::numeric_limits<double>::infinity());
    auto set = data::gen_wrapped_mixture(2, 2, 10, 0.3, -1.0, 13, DType::F32);
    train::OptimizerConfig ocfg;
    train::TrainConfig tcfg;
    tcfg.epochs = 1;
    tcfg.batch_size = 8;
    try {
        (void)train::train(*model, set, nullptr, ocfg, tcfg);
        FAIL("expected NonFiniteError");
    } catch (const NonFiniteError& e) {
        std::string msg = e.what();
        CHECK(msg.find("epoch 1, batch 0") != std::string::npos);
        CHECK(msg.find("parameter norms") != std::string::npos);
        CHECK(msg.find("mlr1.Z") != std::string::npos);
    }
}

TEST_CASE("metrics csv has the documented columns") {
    std::vector<train::EpochMetrics> rows = {{1, "train", 0.5, 0.75, 1.25},
                                             {1, "test", 0.6, 0.7, 0.5}};
    std::string csv = train::metrics_csv(rows);
    CHECK(csv.rfind("epoch,split,loss,accuracy,wall_seconds\n", 0) == 0);
    CHECK(csv.find("1,train,0.5,0.75,1.250\n") != std::string::npos);
    CHECK(csv.find("1,test,0.6,0.7,0.500\n") != std::string::npos);
}

TEST_CASE("lr drop schedule shrinks the step size at the listed epochs") {
    Tensor p = param1({0.0});
    // Two manual optimizers confirm set_lr semantics used by the schedule.
    train::OptimizerConfig cfg;
    cfg.kind = "sgd";
    cfg.lr = 1.0;
    cfg.clip_norm = 0.0;
    train::Optimizer opt(cfg, {{"p", p}});
    give_grad(p, {1.0});
    opt.step();
    CHECK(p.at(0) == doctest::Approx(-1.0));
    opt.set_lr(opt.lr() * 0.1);
    opt.zero_grad();
    give_grad(p, {1.0});
    opt.step();
    CHECK(p.at(0) == doctest::Approx(-1.1));

    // End to end: a huge drop freezes learning after epoch 1.
    auto model = models::build(mlr_cfg(2, 2));
    auto set = data::gen_wrapped_mixture(2, 2, 20, 0.3, -1.0, 15, DType::F32);
    train::OptimizerConfig ocfg;
    ocfg.kind = "sgd";
    ocfg.lr = 0.1;
    train::TrainConfig tcfg;
    tcfg.epochs = 1;
    tcfg.batch_size = 8;
    tcfg.shuffle_each_epoch = false;
    auto one = train::train(*model, set, nullptr, ocfg, tcfg);
    auto frozen = snapshot(model->params());
    train::TrainConfig more = tcfg;
    more.lr_drop_epochs = {1};
    more.lr_drop_factor = 1e-30;
    auto model2 = models::build(mlr_cfg(2, 2));
    (void)train::train(*model2, set, nullptr, ocfg, more);
    // With lr ~0 from epoch 1 on, parameters barely move from init.
    auto init = snapshot(models::build(mlr_cfg(2, 2))->params());
    auto moved = snapshot(model2->params());
    double drift = 0.0;
    for (size_t i = 0; i < moved.size(); ++i) drift = std::max(drift, std::abs(moved[i] - init[i]));
    CHECK(drift < 1e-9);
    (void)one;
    (void)frozen;
}

TEST_CASE("checkpoint round trip restores forwards bit-exactly") {
    auto model = models::build(small_cfg());
    auto set = data::gen_digits(16, 79);
    train::OptimizerConfig ocfg;
    train::TrainConfig tcfg;
    tcfg.epochs = 1;
    tcfg.batch_size = 8;
    (void)train::train(*model, set, nullptr, ocfg, tcfg);

    std::string path = tmp_path("model.ckpt");
    train::save_checkpoint(*model, path);

    auto clone = models::build(small_cfg(99));  // different init
    Tensor probe = set.inputs;
    model->set_train(false);
    clone->set_train(false);
    CHECK(max_abs_dev(model->forward(probe), clone->forward(probe)) > 0.0);
    train::load_checkpoint(*clone, path);
    CHECK(snapshot(clone->params()) == snapshot(model->params()));
    CHECK(snapshot(clone->buffers()) == snapshot(model->buffers()));
    CHECK(max_abs_dev(model->forward(probe), clone->forward(probe)) == 0.0);

    SUBCASE("tampered payload fails the checksum") {
        std::string bytes = slurp(path);
        bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 0x40);
        spit(tmp_path("tampered.ckpt"), bytes);
        CHECK_THROWS_WITH_AS(train::load_checkpoint(*clone, tmp_path("tampered.ckpt")),
                             doctest::Contains("checksum"), IoError);
    }
    SUBCASE("future version is rejected") {
        std::string bytes = slurp(path);
        bytes[4] = 9;
        refresh_crc(bytes);
        spit(tmp_path("version.ckpt"), bytes);
        CHECK_THROWS_WITH_AS(train::load_checkpoint(*clone, tmp_path("version.ckpt")),
                             doctest::Contains("version"), IoError);
    }
    SUBCASE("different architecture is named explicitly") {
        models::ModelConfig other;
        other.arch = "hybrid-lenet";
        other.dtype = DType::F32;
        auto hybrid = models::build(other);
        CHECK_THROWS_WITH_AS(train::load_checkpoint(*hybrid, path),
                             doctest::Contains("architecture mismatch"), ConfigError);
    }
    SUBCASE("f64 models round trip through the f32 payload") {
        auto wide = models::build(mlr_cfg(2, 2, DType::F64));
        std::string wpath = tmp_path("wide.ckpt");
        train::save_checkpoint(*wide, wpath);
        auto wide2 = models::build(mlr_cfg(2, 2, DType::F64));
        for (auto& p : wide2->params())
            for (int64_t i = 0; i < p.value.numel(); ++i) p.value.set(i, 0.25 * p.value.at(i));
        train::load_checkpoint(*wide2, wpath);
        auto a = snapshot(wide->params()), b = snapshot(wide2->params());
        for (size_t i = 0; i < a.size(); ++i)
            CHECK(b[i] == doctest::Approx(a[i]).epsilon(1e-6));  // f32 quantization only
        std::remove(wpath.c_str());
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(train::load_checkpoint(*clone, tmp_path("absent.ckpt")), IoError);
    }
}
