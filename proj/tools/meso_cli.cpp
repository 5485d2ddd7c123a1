#include "meso/meso.hpp"

#include "CLI11.hpp"

#include <cstdlib>
#include <iostream>

namespace {

enum Exit
{
  ok = 0,
  validation = 1,
  numerical = 2
};

std::string default_output_dir(const std::string& config_path)
{
  const char* root = std::getenv("MESO_OUTPUT_ROOT");
  const std::filesystem::path base = root && *root ? root : "runs";
  return (base / std::filesystem::path(config_path).stem()).string();
}

int run(const std::string& config_path, const meso::RunOptions& base)
{
  meso::Json raw;
  try {
    raw = meso::read_json_file(config_path);
  } catch (const meso::Error& e) {
    throw meso::ValidationError({ std::string("config: ") + e.what() });
  }
  // A manifest carries its resolved config under "config".
  const bool manifest = raw.is_object() && raw.contains("config") && raw.contains("config_hash");
  meso::ExperimentConfig config = meso::parse_config(manifest ? raw["config"] : raw);
  meso::RunOptions opts = base;
  if (opts.output_dir.empty())
    opts.output_dir = default_output_dir(config_path);
  const auto result = meso::run_experiment(std::move(config), opts);
  std::cout << "output: " << result.output_dir << '\n';
  for (const auto& [name, passed] : result.summary["acceptance"].items())
    std::cout << "  " << (passed.get<bool>() ? "pass" : "FAIL") << "  " << name << '\n';
  return ok;
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{ "meso: meso-scale probability density evolution experiments" };
  app.require_subcommand(1);

  std::string config_path, example_id, mixture_path, out_path, grid_format;
  std::size_t threads = 0;
  std::uint64_t seed = 0;
  meso::RunOptions opts;

  auto* run_cmd = app.add_subcommand("run", "run an experiment config");
  run_cmd->add_option("config", config_path, "config JSON (or a manifest.json from an earlier run)")->required();
  run_cmd->add_option("--output-dir", opts.output_dir, "output directory (default $MESO_OUTPUT_ROOT/<config stem>)");
  auto* fmt = run_cmd->add_option("--grid-format", grid_format, "density grid format")
                ->check(CLI::IsMember({ "csv", "binary" }));
  auto* seed_opt = run_cmd->add_option("--seed", seed, "override the config seed");
  run_cmd->add_option("--threads", threads, "worker threads (0 = all cores)");

  auto* describe_cmd = app.add_subcommand("describe", "print an example's model, uncertain inputs and defaults");
  describe_cmd->add_option("id", example_id, "example1 .. example4")->required();

  auto* defaults_cmd = app.add_subcommand("defaults", "print the default config of an example");
  defaults_cmd->add_option("id", example_id, "example1 .. example4")->required();

  auto* cub_cmd = app.add_subcommand("cubature", "dump the cubature points of a mixture JSON as CSV");
  cub_cmd->add_option("mixture", mixture_path)->required()->check(CLI::ExistingFile);
  cub_cmd->add_option("-o,--out", out_path, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? ok : validation;
  }

  try {
    if (*describe_cmd) {
      std::cout << meso::describe(example_id);
      return ok;
    }
    if (*defaults_cmd) {
      std::cout << meso::default_config(example_id).dump(2) << '\n';
      return ok;
    }
    if (*cub_cmd) {
      const std::string csv = meso::cubature_csv(meso::mixture_from_json(meso::read_json_file(mixture_path)));
      if (out_path.empty())
        std::cout << csv;
      else
        meso::write_text(out_path, csv);
      return ok;
    }
    meso::set_thread_count(threads);
    if (*fmt)
      opts.grid_format = grid_format;
    if (*seed_opt)
      opts.seed = seed;
    return run(config_path, opts);
  } catch (const meso::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return validation;
  } catch (const meso::Error& e) {
    std::cerr << "error [" << meso::to_string(e.code()) << "]: " << e.what() << '\n';
    return e.code() == meso::ErrorCode::invalid_argument || e.code() == meso::ErrorCode::io ? validation : numerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return numerical;
  }
}
