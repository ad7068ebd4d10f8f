#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "mobilab/cli.hpp"

int main(int argc, char** argv) {
    using namespace mobilab::cli;
    CLI::App app{"mobilab: lifecycle-bias experiments for intergenerational income mobility"};
    app.require_subcommand(1, 1);

    std::string config, out, format;
    std::optional<std::uint64_t> seed;
    for (const auto& name : command_names()) {
        auto* sc = app.add_subcommand(name, "run the " + name + " experiment");
        sc->add_option("--config", config, "TOML configuration file")->required()->check(CLI::ExistingFile);
        sc->add_option("--seed", seed, "run seed; overrides run.seed");
        sc->add_option("--out", out, "output directory; overrides run.out");
        sc->add_option("--format", format, "csv, md or both; overrides run.formats")
            ->check(CLI::IsMember({"csv", "md", "both"}));
    }
    CLI11_PARSE(app, argc, argv);
    const std::string command = app.get_subcommands().front()->get_name();

    try {
        RunConfig cfg = load_config(config);
        if (seed) cfg.seed = seed;
        if (!out.empty()) cfg.out = out;
        if (format == "csv") cfg.formats = {Format::csv};
        else if (format == "md") cfg.formats = {Format::md};
        else if (format == "both") cfg.formats = {Format::csv, Format::md};
        CommandResult r = run_command(command, cfg);
        for (const auto& f : r.files) std::printf("wrote %s\n", f.c_str());
        for (const auto& e : r.errors) std::fprintf(stderr, "error: %s: %s\n", e.cell.c_str(), e.message.c_str());
        return exit_code(r);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
