#include <unistd.h>

#include <iostream>

#include "CLI11.hpp"
#include "lcnn/cli.hpp"

int main(int argc, char** argv) {
    using namespace lcnn;

    cli::Options opt;
    char exe[4096];
    ssize_t n = ::readlink("/proc/self/exe", exe, sizeof exe - 1);
    if (n > 0) {
        exe[n] = '\0';
        opt.self_exe = exe;
    }

    CLI::App app{"Lorentz-model hyperbolic network toolkit"};
    app.require_subcommand(1);

    auto add_config_flags = [&](CLI::App* c) {
        c->add_option("--config", opt.config_path, "JSON config file");
        c->add_option("--set", opt.overrides, "override a config key, e.g. --set model.K=-0.5")
            ->take_all();
        c->add_option("--seed", opt.seed, "seed for model init, shuffling and data generation");
        c->add_option("--precision", opt.precision, "float width: 32 or 64");
        c->add_flag("-v,--verbose", opt.verbose, "per-epoch progress on stdout");
    };

    auto* st = app.add_subcommand("selftest", "run the geometry/layer invariant suites");
    st->add_option("--seed", opt.selftest_seed, "base seed for the randomized trials");
    st->add_flag("--inject-inner-sign-error", opt.inject_inner_sign_error)->group("");

    auto* gc = app.add_subcommand("gradcheck",
                                  "finite-difference vs analytic gradients, per layer");
    gc->add_option("--preset", opt.preset, "model preset to check");
    gc->add_option("--tol", opt.tol, "max relative error allowed per layer");
    gc->add_option("--seed", opt.seed, "model/probe seed");

    auto* tr = app.add_subcommand("train", "train a model and write run artifacts");
    add_config_flags(tr);
    tr->add_option("--out", opt.out_dir, "directory that receives one run dir per training");
    tr->add_option("--sweep", opt.sweep, "key=v1,v2,... -> one run per value");
    tr->add_flag("--parallel", opt.parallel_sweep, "run sweep values as parallel child processes");

    auto* ev = app.add_subcommand("eval", "evaluate a saved checkpoint on the test split");
    add_config_flags(ev);
    ev->add_option("--run", opt.run_dir, "run directory holding config.json and model.ckpt");
    ev->add_option("--checkpoint", opt.checkpoint, "checkpoint path (defaults to <run>/model.ckpt)");

    auto* be = app.add_subcommand("bench", "forward+backward wall time per layer kind");
    be->add_option("--repeats", opt.bench_repeats, "timed repetitions per case (median reported)");
    be->add_option("--seed", opt.seed, "input tensor seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? cli::kOk : cli::kBadConfig;
    }

    const std::string cmd = app.get_subcommands().front()->get_name();
    return cli::dispatch(cmd, opt, std::cout, std::cerr);
}
