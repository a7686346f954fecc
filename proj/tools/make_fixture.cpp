// Generates a synthetic two-class image dataset for smoke runs and tests.

#include <CLI11.hpp>

#include "sefusion/synthetic.hpp"

int main(int argc, char** argv) {
    CLI::App app{"synthetic two-class dataset generator"};
    std::string out;
    std::size_t positives = 32, negatives = 32, size = 64;
    std::uint64_t seed = 1;
    app.add_option("--out", out, "dataset root to create")->required();
    app.add_option("--positives", positives, "Monkeypox-class images");
    app.add_option("--negatives", negatives, "Others-class images");
    app.add_option("--size", size, "square image extent in pixels");
    app.add_option("--seed", seed, "generator seed");
    CLI11_PARSE(app, argc, argv);
    try {
        sefusion::write_synthetic_dataset(out, positives, negatives, size, seed);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
