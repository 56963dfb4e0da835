#include "lesiondet/config.hpp"
#include "lesiondet/errors.hpp"
#include "lesiondet/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <string>

using namespace lesiondet;

int main(int argc, char** argv) {
    CLI::App app{"Soft-tissue lesion candidate detection pipeline"};
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string config_path;
    int threads = 1;
    app.add_option("--seed", seed, "Master random seed (overrides the config file)")
        ->each([&seed_given](const std::string&) { seed_given = true; });
    app.add_option("--config", config_path, "JSON run-configuration file");
    app.add_option("--threads", threads, "Worker threads for inference")->check(CLI::PositiveNumber);

    auto make_config = [&]() {
        RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
        if (seed_given) cfg.seed = seed;
        return cfg;
    };

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic phantom dataset");
    SynthOptions synth_opts;
    int phantom_size = 512;
    synth->add_option("--out", synth_opts.out_dir, "Output directory")->required();
    synth->add_option("--exams", synth_opts.n_exams, "Number of exams (>= 3)")->required();
    synth->add_option("--malignant-fraction", synth_opts.malignant_fraction,
                      "Fraction of malignant exams")
        ->capture_default_str();
    synth->add_option("--size", phantom_size, "Phantom image width and height in pixels")
        ->capture_default_str();
    synth->callback([&] {
        const RunConfig cfg = make_config();
        synth_opts.phantom.width = phantom_size;
        synth_opts.phantom.height = phantom_size;
        synth_opts.phantom.spacing_mm = cfg.preprocessing.target_spacing_mm;
        const std::string manifest = cmd_synth(synth_opts, cfg);
        std::printf("wrote %s\n", manifest.c_str());
    });

    // preprocess
    auto* preprocess = app.add_subcommand("preprocess", "Normalize, downscale and scale images");
    std::string pre_manifest, pre_out;
    preprocess->add_option("--manifest", pre_manifest, "Input manifest (JSON lines)")->required();
    preprocess->add_option("--out", pre_out, "Output directory")->required();
    preprocess->callback([&] {
        const std::string manifest = cmd_preprocess(pre_manifest, pre_out, make_config());
        std::printf("wrote %s\n", manifest.c_str());
    });

    // train
    auto* train = app.add_subcommand("train", "Train the u-net on a preprocessed dataset");
    std::string train_manifest, train_out, train_resume;
    train->add_option("--manifest", train_manifest, "Preprocessed manifest")->required();
    train->add_option("--out", train_out, "Output model checkpoint path")->required();
    train->add_option("--resume", train_resume, "Resume from a .last checkpoint");
    train->callback([&] {
        const TrainResult result = cmd_train(train_manifest, make_config(), train_out, train_resume);
        std::printf("trained %d epoch(s); best validation loss %.6f\n", result.epochs_run,
                    static_cast<double>(result.best_val_loss));
        std::printf("model %s\nsplit %s\nlog %s\n", result.model_path.c_str(),
                    result.split_path.c_str(), result.log_path.c_str());
    });

    // infer
    auto* infer = app.add_subcommand("infer", "Write probability maps for the test split");
    std::string infer_model, infer_manifest, infer_split, infer_out;
    infer->add_option("--model", infer_model, "Model checkpoint")->required();
    infer->add_option("--manifest", infer_manifest, "Preprocessed manifest")->required();
    infer->add_option("--split", infer_split, "Split JSON (default: <model>.split.json)");
    infer->add_option("--out", infer_out, "Output directory for probability maps")->required();
    infer->callback([&] {
        const std::string split = infer_split.empty() ? infer_model + ".split.json" : infer_split;
        cmd_infer(infer_model, infer_manifest, split, infer_out, threads);
        std::printf("wrote probability maps to %s\n", infer_out.c_str());
    });

    // froc
    auto* froc = app.add_subcommand("froc", "Candidates and FROC curves for the test split");
    std::string froc_maps, froc_manifest, froc_split, froc_prefix;
    bool froc_log_fp = false;
    froc->add_option("--maps", froc_maps, "Directory of probability maps")->required();
    froc->add_option("--manifest", froc_manifest, "Preprocessed manifest")->required();
    froc->add_option("--split", froc_split, "Split JSON")->required();
    froc->add_option("--out-prefix", froc_prefix, "Output path prefix")->required();
    froc->add_flag("--log-fp", froc_log_fp, "Plot the FP axis in log scale");
    froc->callback([&] {
        const FrocSummary s =
            cmd_froc(froc_maps, froc_manifest, froc_split, make_config(), froc_prefix, froc_log_fp);
        std::printf("image-based: max sensitivity %.4f at %.4f FP/image\n",
                    s.image_max_sensitivity, s.image_fp_at_max);
        std::printf("exam-based: max sensitivity %.4f at %.4f FP/image\n", s.exam_max_sensitivity,
                    s.exam_fp_at_max);
        std::printf("wrote %s, %s, %s\n", s.csv_path.c_str(), s.svg_path.c_str(),
                    s.candidates_csv_path.c_str());
    });

    // plot
    auto* plot = app.add_subcommand("plot", "Render an SVG from a FROC CSV");
    std::string plot_csv, plot_out;
    bool plot_log_fp = false;
    plot->add_option("--csv", plot_csv, "FROC CSV file")->required();
    plot->add_option("--out", plot_out, "Output SVG path")->required();
    plot->add_flag("--log-fp", plot_log_fp, "Plot the FP axis in log scale");
    plot->callback([&] {
        cmd_plot(plot_csv, plot_out, plot_log_fp);
        std::printf("wrote %s\n", plot_out.c_str());
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const IoError& e) {
        std::fprintf(stderr, "i/o error: %s\n", e.what());
        return 4;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
