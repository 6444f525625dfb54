#include "lcnn/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>

namespace lcnn::train {

namespace {

double now_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

std::string fmt_num(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

std::string param_norm_dump(std::vector<nn::ParamRef> params) {
    std::string s;
    for (auto& p : params) {
        double sq = 0.0;
        for (int64_t i = 0; i < p.value.numel(); ++i) sq += p.value.at(i) * p.value.at(i);
        if (!s.empty()) s += ", ";
        s += p.name + " " + fmt_num(std::sqrt(sq));
    }
    return s;
}

// CRC32 (polynomial 0xEDB88320), bitwise.
uint32_t crc32(const unsigned char* data, size_t len) {
    uint32_t crc = 0xFFFFFFFFu;
    for (size_t i = 0; i < len; ++i) {
        crc ^= data[i];
        for (int b = 0; b < 8; ++b) crc = (crc >> 1) ^ (0xEDB88320u & (0u - (crc & 1u)));
    }
    return crc ^ 0xFFFFFFFFu;
}

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

struct Reader {
    const unsigned char* p;
    size_t len, off = 0;
    const std::string& path;

    void need(size_t n) const {
        if (off + n > len)
            throw IoError("checkpoint: truncated file " + path + " (need " + std::to_string(n) +
                          " bytes at offset " + std::to_string(off) + ")");
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(p[off + i]) << (8 * i);
        off += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(p[off + i]) << (8 * i);
        off += 8;
        return v;
    }
    std::string str(size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(p + off), n);
        off += n;
        return s;
    }
    float f32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(p[off + i]) << (8 * i);
        off += 4;
        float f;
        std::memcpy(&f, &v, 4);
        return f;
    }
};

std::vector<nn::ParamRef> named_state(models::Model& model) {
    auto refs = model.params();
    for (auto& b : model.buffers()) refs.push_back(b);
    return refs;
}

constexpr uint32_t kVersion = 1;

}  // namespace

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.ndim() != 2)
        throw ShapeError("cross_entropy: expected [batch, classes] logits, got " +
                         shape_str(logits.shape()));
    int64_t b = logits.dim(0), cdim = logits.dim(1);
    if (static_cast<int64_t>(labels.size()) != b)
        throw ShapeError("cross_entropy: " + std::to_string(b) + " rows vs " +
                         std::to_string(labels.size()) + " labels");
    for (int l : labels)
        if (l < 0 || l >= cdim)
            throw DomainError("cross_entropy: label " + std::to_string(l) + " outside [0, " +
                              std::to_string(cdim) + ")");
    Tensor mx = reduce_max(logits, {-1}, true).detach();  // stabilizer only, no gradient
    Tensor sh = logits - mx;
    Tensor logp = sh - log(sum(exp(sh), {-1}, true));
    Tensor oh = one_hot(labels, static_cast<int>(cdim), logits.dtype());
    return sum(logp * oh) * (-1.0 / static_cast<double>(b));
}

double accuracy(const Tensor& logits, const std::vector<int>& labels) {
    int64_t b = logits.dim(0), cdim = logits.dim(1);
    int64_t hit = 0;
    for (int64_t i = 0; i < b; ++i) {
        int best = 0;
        double bestv = logits.at(i * cdim);
        for (int64_t j = 1; j < cdim; ++j)
            if (logits.at(i * cdim + j) > bestv) {
                bestv = logits.at(i * cdim + j);
                best = static_cast<int>(j);
            }
        if (best == labels[static_cast<size_t>(i)]) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(b);
}

void OptimizerConfig::validate() const {
    if (kind != "sgd" && kind != "adam")
        throw ConfigError("optimizer: unknown kind '" + kind + "'");
    if (lr < 0.0) throw ConfigError("optimizer: lr must be nonnegative");
    if (momentum < 0.0 || momentum >= 1.0)
        throw ConfigError("optimizer: momentum must be in [0,1)");
    if (beta1 <= 0.0 || beta1 >= 1.0 || beta2 <= 0.0 || beta2 >= 1.0)
        throw ConfigError("optimizer: adam betas must be in (0,1)");
    if (eps <= 0.0) throw ConfigError("optimizer: adam eps must be positive");
    if (weight_decay < 0.0) throw ConfigError("optimizer: weight decay must be nonnegative");
    if (clip_norm < 0.0) throw ConfigError("optimizer: clip norm must be nonnegative");
}

Optimizer::Optimizer(OptimizerConfig cfg, std::vector<nn::ParamRef> params)
    : cfg_(std::move(cfg)), params_(std::move(params)) {
    cfg_.validate();
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (size_t k = 0; k < params_.size(); ++k) {
        auto n = static_cast<size_t>(params_[k].value.numel());
        m_[k].assign(n, 0.0);
        if (cfg_.kind == "adam") v_[k].assign(n, 0.0);
    }
}

void Optimizer::set_lr(double lr) {
    if (lr < 0.0) throw ConfigError("optimizer: lr must be nonnegative");
    cfg_.lr = lr;
}

void Optimizer::zero_grad() {
    for (auto& p : params_) p.value.zero_grad();
}

void Optimizer::step() {
    ++t_;
    if (cfg_.lr == 0.0) return;  // keeps parameters bit-identical

    double sq = 0.0;
    for (auto& p : params_) {
        Tensor g = p.value.grad();
        if (!g.defined()) continue;
        if (g.numel() != p.value.numel())
            throw ShapeError("optimizer: grad for " + p.name + " has " +
                             std::to_string(g.numel()) + " values, parameter has " +
                             std::to_string(p.value.numel()));
        for (int64_t i = 0; i < g.numel(); ++i) sq += g.at(i) * g.at(i);
    }
    double scale = 1.0;
    if (cfg_.clip_norm > 0.0 && std::sqrt(sq) > cfg_.clip_norm)
        scale = cfg_.clip_norm / std::sqrt(sq);

    for (size_t k = 0; k < params_.size(); ++k) {
        Tensor p = params_[k].value;
        Tensor g = p.grad();
        if (!g.defined()) continue;
        for (int64_t i = 0; i < p.numel(); ++i) {
            double gi = g.at(i) * scale + cfg_.weight_decay * p.at(i);
            double upd;
            if (cfg_.kind == "sgd") {
                if (cfg_.momentum > 0.0) {
                    m_[k][static_cast<size_t>(i)] =
                        cfg_.momentum * m_[k][static_cast<size_t>(i)] + gi;
                    upd = m_[k][static_cast<size_t>(i)];
                } else {
                    upd = gi;
                }
            } else {
                auto& m = m_[k][static_cast<size_t>(i)];
                auto& v = v_[k][static_cast<size_t>(i)];
                m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * gi;
                v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * gi * gi;
                double mhat = m / (1.0 - std::pow(cfg_.beta1, static_cast<double>(t_)));
                double vhat = v / (1.0 - std::pow(cfg_.beta2, static_cast<double>(t_)));
                upd = mhat / (std::sqrt(vhat) + cfg_.eps);
            }
            p.set(i, p.at(i) - cfg_.lr * upd);
        }
    }
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("training: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("training: batch size must be >= 1");
    if (lr_drop_factor <= 0.0 || lr_drop_factor > 1.0)
        throw ConfigError("training: lr drop factor must be in (0,1]");
    for (int e : lr_drop_epochs)
        if (e < 1) throw ConfigError("training: lr drop epochs are 1-indexed");
}

std::string metrics_csv(const std::vector<EpochMetrics>& rows) {
    std::string out = "epoch,split,loss,accuracy,wall_seconds\n";
    char line[160];
    for (const auto& r : rows) {
        std::snprintf(line, sizeof(line), "%d,%s,%.9g,%.9g,%.3f\n", r.epoch, r.split.c_str(),
                      r.loss, r.accuracy, r.wall_seconds);
        out += line;
    }
    return out;
}

std::pair<double, double> evaluate(models::Model& model, const data::Dataset& set,
                                   int64_t batch_size) {
    model.set_train(false);
    double loss_sum = 0.0, acc_sum = 0.0;
    int64_t seen = 0;
    for (const auto& b : data::batches(set, batch_size)) {
        Tensor logits = model.forward(b.inputs);
        double n = static_cast<double>(b.inputs.dim(0));
        loss_sum += cross_entropy(logits, b.labels).item() * n;
        acc_sum += accuracy(logits, b.labels) * n;
        seen += b.inputs.dim(0);
    }
    return {loss_sum / static_cast<double>(seen), acc_sum / static_cast<double>(seen)};
}

RunRecord train(models::Model& model, const data::Dataset& train_set,
                const data::Dataset* eval_set, const OptimizerConfig& ocfg,
                const TrainConfig& tcfg) {
    tcfg.validate();
    train_set.validate();
    if (eval_set) eval_set->validate();
    Optimizer opt(ocfg, model.params());
    RunRecord rec;
    double run_start = now_seconds();

    for (int epoch = 1; epoch <= tcfg.epochs; ++epoch) {
        for (int e : tcfg.lr_drop_epochs)
            if (e == epoch) opt.set_lr(opt.lr() * tcfg.lr_drop_factor);

        double epoch_start = now_seconds();
        data::Dataset order = tcfg.shuffle_each_epoch
                                  ? data::shuffle(train_set, tcfg.seed + static_cast<uint64_t>(epoch))
                                  : train_set;
        model.set_train(true);
        double loss_sum = 0.0, acc_sum = 0.0;
        int64_t seen = 0, batch_index = 0;
        for (const auto& b : data::batches(order, tcfg.batch_size)) {
            // Batch statistics need at least two rows; skip a size-1 tail.
            if (b.inputs.dim(0) < 2 && tcfg.batch_size > 1) {
                ++batch_index;
                continue;
            }
            Tape tape;
            double lv;
            {
                TapeScope scope(tape);
                Tensor logits = model.forward(b.inputs);
                Tensor loss = cross_entropy(logits, b.labels);
                lv = loss.item();
                if (!std::isfinite(lv))
                    throw NonFiniteError("training: non-finite loss " + fmt_num(lv) +
                                         " at epoch " + std::to_string(epoch) + ", batch " +
                                         std::to_string(batch_index) +
                                         "; parameter norms: " + param_norm_dump(model.params()));
                double n = static_cast<double>(b.inputs.dim(0));
                loss_sum += lv * n;
                acc_sum += accuracy(logits, b.labels) * n;
                seen += b.inputs.dim(0);
                opt.zero_grad();
                tape.backward(loss);
            }
            opt.step();
            ++batch_index;
        }
        if (seen == 0) throw ConfigError("training: no usable batches (batch size too large?)");
        EpochMetrics tr{epoch, "train", loss_sum / static_cast<double>(seen),
                        acc_sum / static_cast<double>(seen), now_seconds() - epoch_start};
        rec.epochs.push_back(tr);
        rec.final_train_loss = tr.loss;
        rec.final_train_accuracy = tr.accuracy;
        if (tcfg.verbose)
            std::printf("epoch %d train loss %.4f acc %.4f (%.1fs)\n", epoch, tr.loss,
                        tr.accuracy, tr.wall_seconds);

        if (eval_set) {
            double ev_start = now_seconds();
            auto [el, ea] = evaluate(model, *eval_set, tcfg.batch_size);
            rec.epochs.push_back({epoch, "test", el, ea, now_seconds() - ev_start});
            rec.final_eval_loss = el;
            rec.final_eval_accuracy = ea;
            rec.has_eval = true;
            if (tcfg.verbose) std::printf("epoch %d test  loss %.4f acc %.4f\n", epoch, el, ea);
        }
    }
    model.set_train(false);
    rec.total_wall_seconds = now_seconds() - run_start;
    return rec;
}

uint64_t config_digest(models::Model& model) {
    const auto& c = model.config();
    char head[256];
    std::snprintf(head, sizeof(head), "%s|%.17g|%s|%.17g|%s|%d|%d|%d|%d|%d|%s", c.arch.c_str(),
                  c.K, c.projection.c_str(), c.clip_r, c.input.c_str(), c.height, c.width,
                  c.channels, c.input_dim, c.classes, dtype_name(c.dtype));
    std::string s = head;
    for (auto& p : named_state(model)) s += "|" + p.name + ":" + shape_str(p.value.shape());
    return fnv1a(s);
}

void save_checkpoint(models::Model& model, const std::string& path) {
    // The payload is always f32; f64 models round-trip through single precision.
    auto refs = named_state(model);
    std::string out = "LCKP";
    put_u32(out, kVersion);
    put_u64(out, config_digest(model));
    put_u32(out, static_cast<uint32_t>(refs.size()));
    for (auto& p : refs) {
        put_u32(out, static_cast<uint32_t>(p.name.size()));
        out += p.name;
        put_u32(out, static_cast<uint32_t>(p.value.ndim()));
        for (int d = 0; d < p.value.ndim(); ++d)
            put_u32(out, static_cast<uint32_t>(p.value.dim(d)));
        for (int64_t i = 0; i < p.value.numel(); ++i) {
            auto f = static_cast<float>(p.value.at(i));
            uint32_t bits;
            std::memcpy(&bits, &f, 4);
            put_u32(out, bits);
        }
    }
    put_u32(out, crc32(reinterpret_cast<const unsigned char*>(out.data()), out.size()));
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("checkpoint: cannot write " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("checkpoint: short write to " + path);
}

void load_checkpoint(models::Model& model, const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("checkpoint: cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (bytes.size() < 8) throw IoError("checkpoint: truncated file " + path);

    uint32_t stored_crc = 0;
    for (int i = 0; i < 4; ++i)
        stored_crc |= uint32_t(static_cast<unsigned char>(bytes[bytes.size() - 4 + i])) << (8 * i);
    uint32_t actual =
        crc32(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size() - 4);
    if (stored_crc != actual)
        throw IoError("checkpoint: checksum mismatch in " + path + " (corrupt file)");

    Reader r{reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size() - 4, 0, path};
    if (r.str(4) != "LCKP") throw IoError("checkpoint: bad magic in " + path);
    uint32_t version = r.u32();
    if (version != kVersion)
        throw IoError("checkpoint: unsupported version " + std::to_string(version) +
                      " (expected " + std::to_string(kVersion) + ")");
    uint64_t digest = r.u64();
    uint64_t want = config_digest(model);
    if (digest != want)
        throw ConfigError("checkpoint: architecture mismatch: file written for config digest " +
                          std::to_string(digest) + ", model has " + std::to_string(want));

    auto refs = named_state(model);
    std::map<std::string, nn::ParamRef*> by_name;
    for (auto& p : refs) by_name[p.name] = &p;
    uint32_t count = r.u32();
    if (count != refs.size())
        throw ConfigError("checkpoint: " + std::to_string(count) + " tensors in file, model has " +
                          std::to_string(refs.size()));
    for (uint32_t e = 0; e < count; ++e) {
        std::string name = r.str(r.u32());
        auto it = by_name.find(name);
        if (it == by_name.end())
            throw ConfigError("checkpoint: unknown tensor '" + name + "' in " + path);
        Tensor t = it->second->value;
        uint32_t ndim = r.u32();
        Shape shape(ndim);
        for (uint32_t d = 0; d < ndim; ++d) shape[static_cast<size_t>(d)] = r.u32();
        if (shape != t.shape())
            throw ConfigError("checkpoint: tensor '" + name + "' has shape " + shape_str(shape) +
                              " in file, model expects " + shape_str(t.shape()));
        for (int64_t i = 0; i < t.numel(); ++i) t.set(i, r.f32());
    }
    if (r.off != r.len) throw IoError("checkpoint: trailing bytes in " + path);
}

}  // namespace lcnn::train
