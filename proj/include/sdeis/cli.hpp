#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sdeis/dynamics.hpp"
#include "sdeis/hjb.hpp"
#include "sdeis/metadynamics.hpp"
#include "sdeis/soc.hpp"

namespace sdeis::cli {

enum ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kConfigError = 2,
    kNumericalFailure = 3,
    kUnreliable = 4,
};

struct HjbSection
{
    Box domain;
    std::vector<double> h{1e-3};
    DriftScheme scheme = DriftScheme::Central;
    bool upwind_fallback = true;
    std::vector<double> alpha_sweep;
};

struct MetaSection
{
    enum class Mode { Single, Cumulative } mode = Mode::Single;
    MetaConfig config;  // dynamics and seed are filled in from the enclosing experiment
};

struct ControlSection
{
    enum class Kind { Zero, Network, Gaussian, Bias, Reference, File } kind = Kind::Zero;
    enum class Init { Zero, Random, Metadynamics, File } init = Init::Zero;
    std::vector<std::size_t> hidden{30, 30};
    std::size_t centers_per_axis = 50;
    double centers_lo = -3.0;
    double centers_hi = 3.0;
    double variance = 0.5;
    std::filesystem::path file;
};

struct FitSection
{
    FitSampler sampler = FitSampler::UniformOnce;
    std::size_t points = 1000;
    std::size_t steps = 1000;
    double lr = 0.01;
    std::optional<Box> domain;
};

struct TrainSection
{
    std::size_t batch = 1000;
    std::size_t steps = 1000;
    double lr = 0.01;
    StopRule stop = StopRule::MaxSteps;
    double tol = 1e-3;
    std::size_t window = 100;
    std::size_t checkpoint_every = 0;
    std::size_t progress_every = 0;
    std::filesystem::path reference;
};

struct EstimationSection
{
    std::size_t K = 1000;
    std::size_t K_var = 0;
};

struct CompareSection
{
    std::vector<std::string> methods;
    std::vector<double> alpha_sweep;
    /// "{alpha}" is replaced by the alpha value as written by the hjb command. A relative
    /// path is looked up in the output directory first, then next to the config.
    std::string reference = "hjb_alpha{alpha}.csv";
};

struct ExperimentConfig
{
    std::uint64_t seed = 0;
    DynamicsConfig dynamics;
    std::optional<HjbSection> hjb;
    std::optional<MetaSection> meta;
    ControlSection control;
    FitSection fit;
    TrainSection training;
    EstimationSection estimation;
    CompareSection compare;
    /// Directory that relative paths in the config are resolved against.
    std::filesystem::path base_dir;
};

/// Parses the YAML experiment format; throws ConfigError naming the offending key.
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

struct RunOptions
{
    std::filesystem::path config_path;
    std::filesystem::path out_dir = ".";
    std::optional<std::uint64_t> seed;
    unsigned threads = 0;
};

/// Runs one subcommand (hjb, meta, fit, train, sample, compare) and returns the process exit code.
/// Diagnostics go to stderr; artifacts and manifest_<command>.json go under out_dir.
int run(const std::string& command, const RunOptions& opts);

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// "5" for 5.0, "0.5" for 0.5; used in per-alpha file names.
std::string format_alpha(double a);

}  // namespace sdeis::cli
