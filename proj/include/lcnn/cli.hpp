#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "lcnn/common.hpp"

// Command implementations behind the `lcnn` binary. Kept separate from the
// flag parser so tests can drive commands in-process and assert exit codes,
// artifacts, and error taxonomy directly.
namespace lcnn::cli {

// Stable exit-code contract.
enum ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kMissingDataset = 2,
    kNonFinite = 3,
    kBadConfig = 4,
};

// A dataset that cannot be found (as opposed to one that fails to parse).
class DatasetError : public IoError {
public:
    using IoError::IoError;
};

struct Options {
    // shared flags
    std::string config_path;             // --config FILE (JSON)
    std::vector<std::string> overrides;  // --set key=value, applied in order
    std::string out_dir = "runs";        // --out DIR
    int64_t seed = -1;                   // --seed (sets model/train/data seeds); <0 = keep config
    int precision = 0;                   // --precision 32|64; 0 = keep config
    bool verbose = false;
    // train
    std::string sweep;            // --sweep key=v1,v2,... (one run per value)
    bool parallel_sweep = false;  // --parallel: sweep legs as child processes
    std::string self_exe;         // argv[0] resolution for --parallel
    // gradcheck
    std::string preset = "lenet-hcnn";
    double tol = 1e-4;
    // selftest
    uint64_t selftest_seed = 424242;
    bool inject_inner_sign_error = false;  // test fixture, hidden flag
    // eval
    std::string run_dir;     // directory produced by train
    std::string checkpoint;  // explicit checkpoint override
    // bench
    int bench_repeats = 9;
};

// Effective config: schema defaults <- config file <- --seed/--precision
// <- --set overrides. Unknown keys and type mismatches throw ConfigError.
// The returned string is the canonical (sorted-key) JSON serialization.
std::string default_config_text();
std::string effective_config_text(const Options& opt);
// FNV-1a of the canonical serialization, as 16 lowercase hex digits.
std::string config_digest_hex(const std::string& canonical);

int cmd_selftest(const Options& opt, std::ostream& out);
int cmd_gradcheck(const Options& opt, std::ostream& out);
// Appends each created run directory to `run_dirs` when non-null.
int cmd_train(const Options& opt, std::ostream& out, std::vector<std::string>* run_dirs = nullptr);
int cmd_eval(const Options& opt, std::ostream& out);
int cmd_bench(const Options& opt, std::ostream& out);

// Runs a command by name with the exit-code mapping applied: DatasetError ->
// 2, NonFiniteError -> 3, ConfigError -> 4, other errors -> 1.
int dispatch(const std::string& command, const Options& opt, std::ostream& out,
             std::ostream& err);

}  // namespace lcnn::cli
