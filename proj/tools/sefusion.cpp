// sefusion command-line front end.
//
//   sefusion <train|cv|grid|augment|gradcheck|report> [--config PATH] [flags]
//
// Flags override values from the config file. Exit codes: 0 success,
// 1 configuration/data error, 2 verification failure.

#include <CLI11.hpp>

#include "sefusion/commands.hpp"

namespace {

struct Overrides {
    std::string config, seed, epochs, batch_size, lr, k, input_size, out, replay, dataset;
};

void add_run_flags(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config, "key = value configuration file");
    cmd->add_option("--dataset", o.dataset, "dataset root (one directory per class)");
    cmd->add_option("--seed", o.seed, "master seed");
    cmd->add_option("--epochs", o.epochs, "training epochs");
    cmd->add_option("--batch-size", o.batch_size, "mini-batch size");
    cmd->add_option("--lr", o.lr, "Adam learning rate");
    cmd->add_option("--k", o.k, "number of cross-validation folds");
    cmd->add_option("--input-size", o.input_size, "input resolution as HxW");
    cmd->add_option("--out", o.out, "output directory");
}

sefusion::RunConfig resolve(const Overrides& o) {
    sefusion::RunConfig cfg;
    if (!o.config.empty()) sefusion::apply_config_file(cfg, o.config);
    const std::pair<const char*, const std::string*> flags[] = {
        {"dataset", &o.dataset}, {"seed", &o.seed}, {"epochs", &o.epochs}, {"batch_size", &o.batch_size},
        {"learning_rate", &o.lr}, {"k", &o.k}, {"input_size", &o.input_size}, {"out", &o.out},
        {"replay", &o.replay}};
    for (const auto& [key, value] : flags)
        if (!value->empty()) sefusion::apply_setting(cfg, key, *value);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-branch SE fusion classifier: training, evaluation and reporting"};
    app.require_subcommand(1);
    Overrides o;

    auto* train = app.add_subcommand("train", "single train/val/test run");
    auto* cv = app.add_subcommand("cv", "k-fold cross-validation with per-fold and mean metrics");
    auto* grid = app.add_subcommand("grid", "dense-block hyperparameter grid search");
    auto* augment = app.add_subcommand("augment", "write augmented copies of every source image");
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    auto* report = app.add_subcommand("report", "verify a run directory and print its tables");
    for (auto* cmd : {train, cv, grid, augment, report}) add_run_flags(cmd, o);
    cv->add_option("--replay", o.replay, "recorded fold metrics CSV; aggregates without training");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return sefusion::kExitError;
    }

    if (gradcheck->parsed()) return sefusion::cmd_gradcheck(std::cout);
    return sefusion::run_command(
        [&] {
            const sefusion::RunConfig cfg = resolve(o);
            if (train->parsed()) return sefusion::cmd_train(cfg, std::cout);
            if (cv->parsed()) return sefusion::cmd_cv(cfg, std::cout);
            if (grid->parsed()) return sefusion::cmd_grid(cfg, std::cout);
            if (augment->parsed()) return sefusion::cmd_augment(cfg, std::cout);
            return sefusion::cmd_report(cfg, std::cout);
        },
        std::cerr);
}
