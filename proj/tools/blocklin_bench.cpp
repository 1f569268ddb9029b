// blocklin-bench: time a device pipeline against its host reference.
//
//   blocklin-bench cholesky --n 256
//   blocklin-bench gemm --n 64 --k 4096 --config big_k.cfg --out results.csv
//
// Exit status: 0 within tolerance, 1 tolerance exceeded, 2 usage error.

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "blocklin/bench.hpp"
#include "blocklin/config.hpp"

int main(int argc, char** argv) {
    CLI::App app {"Benchmark blocklin device pipelines against sequential references"};
    app.set_version_flag("--version", "blocklin-bench 0.1.0");

    std::string workload;
    blocklin::BenchOptions opts;
    std::string config_path, out_path;
    double tolerance = -1.0;

    app.add_option("workload", workload, "cholesky | cholesky_grad | gemm | trisolve | glm_logistic | gp_gradient")
        ->required()
        ->check(CLI::IsMember(blocklin::workload_names()));
    app.add_option("--n", opts.n, "Problem size")->required()->check(CLI::PositiveNumber);
    app.add_option("--k", opts.k, "Second dimension (inner size, right-hand sides or predictors)");
    app.add_option("--repeats", opts.repeats, "Repetitions; times are medians")
        ->default_val(9)
        ->check(CLI::PositiveNumber);
    app.add_option("--config", config_path, "key=value tuning file")->check(CLI::ExistingFile);
    app.add_option("--out", out_path, "Append the CSV row to this file instead of stdout");
    app.add_option("--seed", opts.seed, "Data seed")->default_val(42);
    app.add_option("--tolerance", tolerance, "Override the workload's error tolerance")
        ->check(CLI::NonNegativeNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    if (tolerance >= 0.0) {
        opts.tolerance = tolerance;
    }

    blocklin::Config cfg;
    try {
        if (!config_path.empty()) {
            cfg = blocklin::load_config(config_path);
        }
    } catch (const blocklin::ConfigError& e) {
        std::cerr << "blocklin-bench: " << e.what() << '\n';
        return 2;
    }

    blocklin::BenchReport report;
    try {
        report = blocklin::run_bench(workload, opts, cfg);
    } catch (const std::invalid_argument& e) {
        std::cerr << "blocklin-bench: " << e.what() << '\n';
        return 2;
    }

    if (out_path.empty()) {
        std::cout << blocklin::csv_header() << '\n' << blocklin::csv_row(report) << '\n';
    } else {
        blocklin::append_csv(out_path, report);
    }
    if (!report.passed()) {
        std::fprintf(stderr, "blocklin-bench: %s max_rel_err %.3e exceeds tolerance %.3e\n", workload.c_str(),
                     report.max_rel_err, report.tolerance);
        return 1;
    }
    return 0;
}
