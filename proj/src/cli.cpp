#include "lcnn/cli.hpp"

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "lcnn/gradcheck.hpp"
#include "lcnn/models.hpp"
#include "lcnn/reference.hpp"
#include "lcnn/selftest.hpp"
#include "lcnn/tape.hpp"
#include "lcnn/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace lcnn::cli {

namespace {

// ---- config schema ------------------------------------------------------------------

const char* kDefaultConfig = R"({
  "data": {
    "dir": "",
    "per_class": 100,
    "seed": 1,
    "source": "auto",
    "spread": 0.1,
    "test_count": 2000,
    "test_per_class": 25,
    "train_count": 10000
  },
  "model": {
    "K": -1.0,
    "arch": "lenet-hcnn",
    "channels": 1,
    "classes": 10,
    "clip_r": 1.0,
    "height": 28,
    "input_dim": 2,
    "projection": "space-lift",
    "seed": 1,
    "width": 28
  },
  "optimizer": {
    "beta1": 0.9,
    "beta2": 0.999,
    "clip_norm": 10.0,
    "eps": 1e-8,
    "kind": "adam",
    "lr": 0.001,
    "momentum": 0.0,
    "weight_decay": 0.0
  },
  "precision": 32,
  "train": {
    "batch_size": 32,
    "epochs": 5,
    "lr_drop_epochs": [],
    "lr_drop_factor": 0.1,
    "seed": 1,
    "shuffle": true
  }
})";

const json& schema_defaults() {
    static const json def = json::parse(kDefaultConfig);
    return def;
}

void check_value_type(const json& def, const json& val, const std::string& key) {
    auto fail = [&](const char* want) {
        throw ConfigError("config: key '" + key + "' expects " + want + ", got " +
                          std::string(val.type_name()));
    };
    if (def.is_boolean()) {
        if (!val.is_boolean()) fail("a boolean");
    } else if (def.is_string()) {
        if (!val.is_string()) fail("a string");
    } else if (def.is_number_integer()) {
        if (!val.is_number_integer()) fail("an integer");
    } else if (def.is_number()) {
        if (!val.is_number()) fail("a number");
    } else if (def.is_array()) {
        if (!val.is_array()) fail("an array of integers");
        for (const auto& e : val)
            if (!e.is_number_integer()) fail("an array of integers");
    }
}

json merge_config(const json& def, const json& user, const std::string& path) {
    if (!user.is_object())
        throw ConfigError("config: '" + (path.empty() ? std::string("<root>") : path) +
                          "' must be an object");
    json out = def;
    for (const auto& [k, v] : user.items()) {
        if (!def.contains(k)) throw ConfigError("config: unknown key '" + path + k + "'");
        const json& dv = def.at(k);
        if (dv.is_object())
            out[k] = merge_config(dv, v, path + k + ".");
        else {
            check_value_type(dv, v, path + k);
            out[k] = v;
        }
    }
    return out;
}

std::vector<std::string> split_str(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::string cur;
    for (char ch : s) {
        if (ch == sep) {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    parts.push_back(cur);
    return parts;
}

void apply_override(json& cfg, const std::string& kv) {
    auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("config: --set expects key=value, got '" + kv + "'");
    std::string key = kv.substr(0, eq), text = kv.substr(eq + 1);
    json val;
    try {
        val = json::parse(text);
        if (val.is_object()) val = json(text);  // nested objects stay plain strings
    } catch (const json::exception&) {
        val = json(text);
    }
    const json* def = &schema_defaults();
    json* node = &cfg;
    auto parts = split_str(key, '.');
    for (size_t i = 0; i + 1 < parts.size(); ++i) {
        if (!def->contains(parts[i]) || !def->at(parts[i]).is_object())
            throw ConfigError("config: unknown key '" + key + "' in --set");
        def = &def->at(parts[i]);
        node = &(*node)[parts[i]];
    }
    const std::string& leaf = parts.back();
    if (!def->contains(leaf) || def->at(leaf).is_object())
        throw ConfigError("config: unknown key '" + key + "' in --set");
    check_value_type(def->at(leaf), val, key);
    (*node)[leaf] = val;
}

std::string dataset_dir(const json& jd) {
    std::string dir = jd.at("dir").get<std::string>();
    if (!dir.empty()) return dir;
    if (const char* env = std::getenv("LCNN_DATA_DIR")) return env;
    return "data";
}

bool has_idx_files(const std::string& dir) {
    for (const char* f : {"train-images-idx3-ubyte", "train-labels-idx1-ubyte",
                          "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"})
        if (!fs::exists(fs::path(dir) / f)) return false;
    return true;
}

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string read_text(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("config: cannot read '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write '" + path + "'");
    f << text;
    if (!f) throw IoError("short write to '" + path + "'");
}

json assemble_config(const Options& opt) {
    json cfg = schema_defaults();
    if (!opt.config_path.empty()) {
        json user;
        try {
            user = json::parse(read_text(opt.config_path));
        } catch (const json::exception& e) {
            throw ConfigError("config: '" + opt.config_path + "' is not valid JSON: " + e.what());
        }
        cfg = merge_config(schema_defaults(), user, "");
    }
    if (opt.seed >= 0) {
        cfg["model"]["seed"] = opt.seed;
        cfg["train"]["seed"] = opt.seed;
        cfg["data"]["seed"] = opt.seed;
    }
    if (opt.precision != 0) cfg["precision"] = opt.precision;
    for (const auto& kv : opt.overrides) apply_override(cfg, kv);

    int precision = cfg.at("precision").get<int>();
    if (precision != 32 && precision != 64)
        throw ConfigError("config: precision must be 32 or 64, got " + std::to_string(precision));

    // "auto" resolves against the dataset cache before anything is digested,
    // so the effective config pins the source that actually ran.
    auto& jd = cfg["data"];
    std::string source = jd.at("source").get<std::string>();
    if (source == "auto")
        jd["source"] = has_idx_files(dataset_dir(jd)) ? "idx" : "digits";
    else if (source != "idx" && source != "digits" && source != "mixture")
        throw ConfigError("config: data.source must be auto|idx|digits|mixture, got '" + source +
                          "'");
    return cfg;
}

// ---- config -> library structs ------------------------------------------------------

uint64_t seed_from(const json& j, const std::string& key) {
    int64_t s = j.at(key).get<int64_t>();
    if (s < 0) throw ConfigError("config: seeds must be nonnegative");
    return static_cast<uint64_t>(s);
}

models::ModelConfig model_config_from(const json& cfg) {
    const json& jm = cfg.at("model");
    models::ModelConfig mc;
    mc.arch = jm.at("arch").get<std::string>();
    mc.K = jm.at("K").get<double>();
    mc.projection = jm.at("projection").get<std::string>();
    mc.clip_r = jm.at("clip_r").get<double>();
    mc.seed = seed_from(jm, "seed");
    mc.height = jm.at("height").get<int>();
    mc.width = jm.at("width").get<int>();
    mc.channels = jm.at("channels").get<int>();
    mc.input_dim = jm.at("input_dim").get<int>();
    mc.classes = jm.at("classes").get<int>();
    mc.dtype = cfg.at("precision").get<int>() == 64 ? DType::F64 : DType::F32;
    std::string source = cfg.at("data").at("source").get<std::string>();
    if (source == "mixture" && mc.arch != "mlr-only")
        throw ConfigError("config: data.source 'mixture' produces points, but arch '" + mc.arch +
                          "' consumes images");
    if (mc.arch == "mlr-only" && source != "mixture")
        throw ConfigError("config: arch 'mlr-only' consumes points; set data.source=mixture");
    mc.input = source == "mixture" ? "points" : "image";
    return mc;
}

train::OptimizerConfig optimizer_config_from(const json& cfg) {
    const json& jo = cfg.at("optimizer");
    train::OptimizerConfig oc;
    oc.kind = jo.at("kind").get<std::string>();
    oc.lr = jo.at("lr").get<double>();
    oc.momentum = jo.at("momentum").get<double>();
    oc.beta1 = jo.at("beta1").get<double>();
    oc.beta2 = jo.at("beta2").get<double>();
    oc.eps = jo.at("eps").get<double>();
    oc.weight_decay = jo.at("weight_decay").get<double>();
    oc.clip_norm = jo.at("clip_norm").get<double>();
    return oc;
}

train::TrainConfig train_config_from(const json& cfg, bool verbose) {
    const json& jt = cfg.at("train");
    train::TrainConfig tc;
    tc.epochs = jt.at("epochs").get<int>();
    tc.batch_size = jt.at("batch_size").get<int64_t>();
    tc.seed = seed_from(jt, "seed");
    tc.lr_drop_epochs = jt.at("lr_drop_epochs").get<std::vector<int>>();
    tc.lr_drop_factor = jt.at("lr_drop_factor").get<double>();
    tc.shuffle_each_epoch = jt.at("shuffle").get<bool>();
    tc.verbose = verbose;
    return tc;
}

// ---- dataset loading ----------------------------------------------------------------

struct DataBundle {
    data::Dataset train, test;
};

DataBundle load_data(const json& cfg, const models::ModelConfig& mc) {
    const json& jd = cfg.at("data");
    std::string source = jd.at("source").get<std::string>();
    uint64_t seed = seed_from(jd, "seed");
    int64_t ntr = jd.at("train_count").get<int64_t>();
    int64_t nte = jd.at("test_count").get<int64_t>();
    if (source != "mixture" && (ntr < 1 || nte < 1))
        throw ConfigError("config: train_count and test_count must be >= 1");

    DataBundle b;
    if (source == "digits") {
        b.train = data::gen_digits(static_cast<int>(ntr), seed);
        b.test = data::gen_digits(static_cast<int>(nte), seed + 1000003);
    } else if (source == "mixture") {
        int per = jd.at("per_class").get<int>();
        int tper = jd.at("test_per_class").get<int>();
        double spread = jd.at("spread").get<double>();
        if (per < 1 || tper < 1) throw ConfigError("config: mixture per-class counts must be >= 1");
        b.train = data::gen_wrapped_mixture(mc.input_dim, mc.classes, per, spread, mc.K, seed,
                                            mc.dtype);
        b.test = data::gen_wrapped_mixture(mc.input_dim, mc.classes, tper, spread, mc.K,
                                           seed + 999331, mc.dtype);
    } else {
        std::string dir = dataset_dir(jd);
        if (!has_idx_files(dir))
            throw DatasetError("dataset: no IDX files under '" + dir +
                               "' (need train-images-idx3-ubyte, train-labels-idx1-ubyte, "
                               "t10k-images-idx3-ubyte, t10k-labels-idx1-ubyte; set data.dir or "
                               "LCNN_DATA_DIR)");
        b.train = data::load_idx(dir + "/train-images-idx3-ubyte", dir + "/train-labels-idx1-ubyte");
        b.test = data::load_idx(dir + "/t10k-images-idx3-ubyte", dir + "/t10k-labels-idx1-ubyte");
        b.train = data::take(data::shuffle(b.train, seed), 0, std::min(ntr, b.train.size()));
        b.test = data::take(data::shuffle(b.test, seed + 1), 0, std::min(nte, b.test.size()));
    }

    for (const data::Dataset* d : {&b.train, &b.test}) {
        if (d->classes != mc.classes)
            throw ConfigError("config: dataset has " + std::to_string(d->classes) +
                              " classes, model.classes is " + std::to_string(mc.classes));
        if (mc.input == "image") {
            const Shape& s = d->inputs.shape();
            if (s.size() != 4 || s[1] != mc.height || s[2] != mc.width || s[3] != mc.channels)
                throw ConfigError("config: dataset images are " + shape_str(d->inputs.shape()) +
                                  " but the model expects " + std::to_string(mc.height) + "x" +
                                  std::to_string(mc.width) + "x" + std::to_string(mc.channels));
        }
    }
    return b;
}

// ---- run directories ----------------------------------------------------------------

std::string make_run_dir(const std::string& out_dir, const std::string& digest) {
    fs::create_directories(out_dir);
    std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char ts[32];
    std::strftime(ts, sizeof ts, "%Y%m%d-%H%M%S", &tm);
    std::string base = out_dir + "/" + ts + "-" + digest;
    std::string dir = base;
    for (int k = 2; !fs::create_directory(dir); ++k) dir = base + "-" + std::to_string(k);
    return dir;
}

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char ch : s) {
        if (ch == '\'')
            out += "'\\''";
        else
            out += ch;
    }
    return out + "'";
}

int run_child(const std::string& cmdline) {
    int status = std::system(cmdline.c_str());
    if (status < 0) return kFailure;
    if (WIFEXITED(status)) return WEXITSTATUS(status);
    return kFailure;
}

int train_single(const Options& opt, std::ostream& out, std::vector<std::string>* run_dirs) {
    std::string canonical = effective_config_text(opt);
    json cfg = json::parse(canonical);
    models::ModelConfig mc = model_config_from(cfg);
    auto model = models::build(mc);
    DataBundle bundle = load_data(cfg, mc);
    train::OptimizerConfig ocfg = optimizer_config_from(cfg);
    train::TrainConfig tcfg = train_config_from(cfg, opt.verbose);
    ocfg.validate();
    tcfg.validate();

    std::string digest = config_digest_hex(canonical);
    std::string dir = make_run_dir(opt.out_dir, digest);
    write_text(dir + "/config.json", cfg.dump(2) + "\n");

    train::RunRecord rec = train::train(*model, bundle.train, &bundle.test, ocfg, tcfg);

    write_text(dir + "/metrics.csv", train::metrics_csv(rec.epochs));
    train::save_checkpoint(*model, dir + "/model.ckpt");
    json summary = {
        {"arch", mc.arch},
        {"K", mc.K},
        {"config_digest", digest},
        {"epochs", tcfg.epochs},
        {"final_test_acc", rec.final_eval_accuracy},
        {"final_test_loss", rec.final_eval_loss},
        {"final_train_acc", rec.final_train_accuracy},
        {"final_train_loss", rec.final_train_loss},
        {"param_count", model->param_count()},
        {"precision", cfg.at("precision").get<int>()},
        {"train_examples", bundle.train.size()},
        {"test_examples", bundle.test.size()},
        {"wall_seconds", rec.total_wall_seconds},
    };
    write_text(dir + "/summary.json", summary.dump(2) + "\n");

    char line[256];
    std::snprintf(line, sizeof line, "run %s: train acc %.4f, test acc %.4f (%.1fs)\n",
                  dir.c_str(), rec.final_train_accuracy, rec.final_eval_accuracy,
                  rec.total_wall_seconds);
    out << line;
    if (run_dirs) run_dirs->push_back(dir);
    return kOk;
}

}  // namespace

// ---- public surface -----------------------------------------------------------------

std::string default_config_text() { return schema_defaults().dump(); }

std::string effective_config_text(const Options& opt) { return assemble_config(opt).dump(); }

std::string config_digest_hex(const std::string& canonical) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a(canonical)));
    return buf;
}

int cmd_selftest(const Options& opt, std::ostream& out) {
    selftest::Options so;
    so.seed = opt.seed >= 0 ? static_cast<uint64_t>(opt.seed) : opt.selftest_seed;
    so.inject_inner_sign_error = opt.inject_inner_sign_error;
    auto results = selftest::run_all(so);
    int failed = 0;
    for (const auto& r : results) {
        if (r.passed()) {
            out << "suite " << r.name << ": PASS (" << r.checks << " checks)\n";
        } else {
            ++failed;
            out << "suite " << r.name << ": FAIL (" << r.failures << " of " << r.checks
                << " checks) - " << r.detail << " (repro seed " << r.repro_seed << ")\n";
        }
    }
    if (failed == 0) {
        out << "selftest: all " << results.size() << " suites passed\n";
        return kOk;
    }
    out << "selftest: " << failed << " of " << results.size() << " suites failed\n";
    return kFailure;
}

int cmd_gradcheck(const Options& opt, std::ostream& out) {
    auto names = models::preset_names();
    if (std::find(names.begin(), names.end(), opt.preset) == names.end())
        throw ConfigError("gradcheck: unknown preset '" + opt.preset + "'");
    if (!(opt.tol > 0)) throw ConfigError("gradcheck: tolerance must be positive");

    models::ModelConfig mc;
    mc.arch = opt.preset;
    mc.dtype = DType::F64;
    mc.seed = opt.seed >= 0 ? static_cast<uint64_t>(opt.seed) : 1;
    auto model = models::build(mc);
    geo::Curvature c = model->curvature();
    model->set_train(true);  // exercise the batch-statistics path

    Rng rng(mc.seed * 7919 + 13);
    Tensor x0;
    bool points_in = model->config().input == "points";
    if (points_in)
        x0 = geo::exp_map_origin(rand_normal({2, mc.input_dim}, 0.0, 0.8, rng, DType::F64), c);
    else
        x0 = rand_uniform({2, mc.height, mc.width, mc.channels}, 0.0, 1.0, rng, DType::F64);

    // Per-layer activations feeding each entry.
    const auto& entries = model->net().entries();
    std::vector<Tensor> ins;
    Tensor cur = x0;
    for (const auto& e : entries) {
        ins.push_back(cur);
        cur = e.mod->forward(cur);
    }

    GradCheckOpts gopts;
    gopts.tol = opt.tol;
    gopts.max_coords_per_input = 4;
    gopts.seed = mc.seed * 2654435761ULL + 1;

    struct Row {
        std::string layer, kind, status;
        double err;
        bool ok;
    };
    std::vector<Row> rows;
    auto head = [](const std::string& desc) { return desc.substr(0, desc.find('(')); };
    auto record = [&](const std::string& layer, const std::string& kind, GradCheckResult res) {
        bool pass = res.ok || res.kink_hit;
        rows.push_back({layer, kind, res.ok ? "pass" : res.kink_hit ? "pass-kink" : "fail",
                        res.max_rel_err, pass});
    };

    for (size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        bool hyper_in = i == 0 ? points_in : entries[i - 1].hyper_out;
        Tensor captured = ins[i];
        Tensor v = mul(hyper_in ? geo::space_component(captured) : captured, 1.0);
        v.set_requires_grad(true);
        std::vector<Tensor> inputs;
        for (auto& p : e.mod->params()) inputs.push_back(p.value);
        inputs.push_back(v);
        Tensor probe = rand_normal(e.mod->forward(captured).shape(), 0.0, 1.0, rng, DType::F64);
        auto f = [&](const std::vector<Tensor>& in) {
            Tensor x = hyper_in ? geo::project_to_manifold(in.back(), c) : in.back();
            return sum(mul(e.mod->forward(x), probe));
        };
        record(e.name, head(e.mod->describe()), gradcheck(f, inputs, gopts));
    }

    {  // end-to-end composite through every layer and parameter
        Tensor v = mul(points_in ? geo::space_component(x0) : x0, 1.0);
        v.set_requires_grad(true);
        std::vector<Tensor> inputs;
        for (auto& p : model->params()) inputs.push_back(p.value);
        inputs.push_back(v);
        Tensor probe = rand_normal({2, mc.classes}, 0.0, 1.0, rng, DType::F64);
        GradCheckOpts copts = gopts;
        copts.max_coords_per_input = 2;
        auto f = [&](const std::vector<Tensor>& in) {
            Tensor x = points_in ? geo::project_to_manifold(in.back(), c) : in.back();
            return sum(mul(model->net().forward(x), probe));
        };
        record("composite", opt.preset, gradcheck(f, inputs, copts));
    }

    out << "layer,kind,max_rel_err,status\n";
    std::string first_bad;
    char buf[64];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.3e", r.err);
        out << r.layer << "," << r.kind << "," << buf << "," << r.status << "\n";
        if (!r.ok && first_bad.empty()) first_bad = r.layer;
    }
    if (first_bad.empty()) {
        out << "gradcheck: all layers within " << opt.tol << "\n";
        return kOk;
    }
    out << "gradcheck: max relative error above " << opt.tol << " at layer '" << first_bad
        << "'\n";
    return kFailure;
}

int cmd_train(const Options& opt, std::ostream& out, std::vector<std::string>* run_dirs) {
    if (opt.sweep.empty()) return train_single(opt, out, run_dirs);

    auto eq = opt.sweep.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("config: --sweep expects key=v1,v2,..., got '" + opt.sweep + "'");
    std::string key = opt.sweep.substr(0, eq);
    if (key.find('.') == std::string::npos) key = "model." + key;  // --sweep K=... shorthand
    auto values = split_str(opt.sweep.substr(eq + 1), ',');
    if (values.empty() || values.front().empty())
        throw ConfigError("config: --sweep needs at least one value");

    std::vector<Options> legs;
    for (const auto& v : values) {
        Options leg = opt;
        leg.sweep.clear();
        leg.overrides.push_back(key + "=" + v);
        legs.push_back(std::move(leg));
    }

    if (opt.parallel_sweep && !opt.self_exe.empty()) {
        // Independent child sessions, one per value.
        std::vector<int> codes(legs.size(), kFailure);
        std::vector<std::thread> threads;
        for (size_t i = 0; i < legs.size(); ++i) {
            std::string cmdline = shell_quote(opt.self_exe) + " train";
            if (!opt.config_path.empty()) cmdline += " --config " + shell_quote(opt.config_path);
            cmdline += " --out " + shell_quote(opt.out_dir);
            if (opt.seed >= 0) cmdline += " --seed " + std::to_string(opt.seed);
            if (opt.precision != 0) cmdline += " --precision " + std::to_string(opt.precision);
            for (const auto& ov : legs[i].overrides) cmdline += " --set " + shell_quote(ov);
            threads.emplace_back([&codes, i, cmdline] { codes[i] = run_child(cmdline); });
        }
        for (auto& t : threads) t.join();
        int worst = kOk;
        for (size_t i = 0; i < legs.size(); ++i) {
            out << "sweep " << key << "=" << values[i] << ": exit " << codes[i] << "\n";
            worst = std::max(worst, codes[i]);
        }
        return worst;
    }

    int worst = kOk;
    for (size_t i = 0; i < legs.size(); ++i) {
        out << "sweep " << key << "=" << values[i] << "\n";
        worst = std::max(worst, train_single(legs[i], out, run_dirs));
    }
    return worst;
}

int cmd_eval(const Options& opt, std::ostream& out) {
    Options o = opt;
    if (!opt.run_dir.empty() && o.config_path.empty())
        o.config_path = opt.run_dir + "/config.json";
    if (o.config_path.empty())
        throw ConfigError("eval: provide --run DIR or --config FILE");
    std::string ckpt = !opt.checkpoint.empty() ? opt.checkpoint : opt.run_dir + "/model.ckpt";
    if (opt.checkpoint.empty() && opt.run_dir.empty())
        throw ConfigError("eval: provide --run DIR or --checkpoint FILE");

    std::string canonical = effective_config_text(o);
    json cfg = json::parse(canonical);
    models::ModelConfig mc = model_config_from(cfg);
    auto model = models::build(mc);
    train::load_checkpoint(*model, ckpt);
    DataBundle bundle = load_data(cfg, mc);
    auto [loss, acc] = train::evaluate(*model, bundle.test, cfg.at("train").at("batch_size").get<int64_t>());
    json res = {
        {"checkpoint", ckpt},
        {"config_digest", config_digest_hex(canonical)},
        {"test_acc", acc},
        {"test_examples", bundle.test.size()},
        {"test_loss", loss},
    };
    out << res.dump(2) << "\n";
    return kOk;
}

int cmd_bench(const Options& opt, std::ostream& out) {
    if (opt.bench_repeats < 1) throw ConfigError("bench: repeats must be >= 1");
    geo::Curvature c(-1.0);
    Rng rng(opt.seed >= 0 ? static_cast<uint64_t>(opt.seed) : 7);

    auto median_ms = [&](nn::Module& m, const Tensor& x) {
        std::vector<double> samples;
        for (int i = 0; i < opt.bench_repeats + 2; ++i) {
            auto t0 = std::chrono::steady_clock::now();
            Tape tape;
            {
                TapeScope scope(tape);
                Tensor loss = sum(m.forward(x));
                tape.backward(loss);
            }
            auto t1 = std::chrono::steady_clock::now();
            for (auto& p : m.params()) p.value.zero_grad();
            if (i >= 2)  // discard warmup
                samples.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
        }
        std::sort(samples.begin(), samples.end());
        return samples[samples.size() / 2];
    };

    Tensor map_h = geo::project_to_manifold(rand_normal({8, 16, 16, 8}, 0.0, 0.8, rng, DType::F64),
                                            c).astype(DType::F32);
    Tensor map_e = rand_normal({8, 16, 16, 8}, 0.0, 0.8, rng, DType::F32);
    Tensor vec_h = geo::project_to_manifold(rand_normal({64, 64}, 0.0, 0.8, rng, DType::F64), c)
                       .astype(DType::F32);
    Tensor vec_e = rand_normal({64, 64}, 0.0, 0.8, rng, DType::F32);

    nn::ConvSpec sp;
    sp.in_channels = 8;
    sp.out_channels = 8;
    sp.kh = sp.kw = 3;
    sp.stride = 1;
    sp.pad = 1;

    struct Case {
        std::string kind, variant;
        std::shared_ptr<nn::Module> mod;
        Tensor input;
    };
    std::vector<Case> cases;
    cases.push_back({"conv", "hyperbolic",
                     std::make_shared<nn::LorentzConv2d>(sp, nn::Activation::Identity, c, rng),
                     map_h});
    cases.push_back({"conv", "euclidean",
                     std::make_shared<nn::Conv2d>(sp, nn::Activation::Identity, rng), map_e});
    cases.push_back({"bn", "hyperbolic", std::make_shared<nn::LorentzBatchNorm>(8, c), map_h});
    cases.push_back({"bn", "euclidean", std::make_shared<nn::BatchNorm>(8), map_e});
    cases.push_back({"relu", "hyperbolic", std::make_shared<nn::LorentzReLU>(c), map_h});
    cases.push_back({"relu", "euclidean", std::make_shared<nn::ReLU>(), map_e});
    cases.push_back({"fc", "hyperbolic",
                     std::make_shared<nn::LorentzFC>(64, 64, nn::Activation::Identity, c, rng),
                     vec_h});
    cases.push_back({"fc", "euclidean",
                     std::make_shared<nn::Dense>(64, 64, nn::Activation::Identity, rng), vec_e});
    cases.push_back({"mlr", "hyperbolic", std::make_shared<nn::LorentzMLR>(64, 10, c, rng), vec_h});
    cases.push_back({"mlr", "euclidean",
                     std::make_shared<nn::Dense>(64, 10, nn::Activation::Identity, rng), vec_e});

    out << "kind,variant,median_ms,ratio_vs_euclidean\n";
    std::map<std::string, double> euclid_ms;
    std::vector<std::pair<Case*, double>> timed;
    for (auto& cs : cases) {
        cs.mod->set_train(true);
        double ms = median_ms(*cs.mod, cs.input);
        timed.push_back({&cs, ms});
        if (cs.variant == "euclidean") euclid_ms[cs.kind] = ms;
    }
    char buf[64];
    for (auto& [cs, ms] : timed) {
        std::snprintf(buf, sizeof buf, "%.4f", ms);
        out << cs->kind << "," << cs->variant << "," << buf << ",";
        if (cs->variant == "hyperbolic" && euclid_ms.count(cs->kind) &&
            euclid_ms[cs->kind] > 0.0) {
            std::snprintf(buf, sizeof buf, "%.2f", ms / euclid_ms[cs->kind]);
            out << buf;
        }
        out << "\n";
    }
    return kOk;
}

int dispatch(const std::string& command, const Options& opt, std::ostream& out,
             std::ostream& err) {
    try {
        if (command == "selftest") return cmd_selftest(opt, out);
        if (command == "gradcheck") return cmd_gradcheck(opt, out);
        if (command == "train") return cmd_train(opt, out);
        if (command == "eval") return cmd_eval(opt, out);
        if (command == "bench") return cmd_bench(opt, out);
        throw ConfigError("unknown command '" + command + "'");
    } catch (const DatasetError& e) {
        err << "error: " << e.what() << "\n";
        return kMissingDataset;
    } catch (const NonFiniteError& e) {
        err << "error: " << e.what() << "\n";
        return kNonFinite;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kBadConfig;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kFailure;
    }
}

}  // namespace lcnn::cli
