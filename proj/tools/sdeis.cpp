#include <CLI11.hpp>

#include "sdeis/cli.hpp"

int main(int argc, char** argv)
{
    CLI::App app{"Importance sampling of hitting-time statistics via stochastic optimal control"};
    app.require_subcommand(1);

    sdeis::cli::RunOptions opts;
    std::uint64_t seed = 0;
    const std::vector<std::pair<std::string, std::string>> commands{
        {"hjb", "solve the reference HJB problem on a grid"},
        {"meta", "run metadynamics and write the bias"},
        {"fit", "fit the parametric control to the metadynamics control"},
        {"train", "optimize the control by stochastic gradient descent"},
        {"sample", "importance-sampling estimate of psi(x0)"},
        {"compare", "estimate psi(x0) with several controls"},
    };
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config,-c", opts.config_path, "YAML experiment file")->required()->check(CLI::ExistingFile);
        sub->add_option("--out,-o", opts.out_dir, "output directory")->capture_default_str();
        sub->add_option("--seed", seed, "override the config seed");
        sub->add_option("--threads", opts.threads, "worker threads (0 = hardware concurrency)");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : sdeis::cli::kConfigError;
    }

    auto* sub = app.get_subcommands().front();
    if (sub->count("--seed"))
        opts.seed = seed;
    return sdeis::cli::run(sub->get_name(), opts);
}
