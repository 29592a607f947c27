// modfuse command-line driver.
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "modfuse/checkpoint.hpp"
#include "modfuse/config.hpp"
#include "modfuse/embeddings.hpp"
#include "modfuse/error.hpp"
#include "modfuse/fusion.hpp"
#include "modfuse/metrics.hpp"
#include "modfuse/pipeline.hpp"
#include "modfuse/protocol.hpp"

namespace fs = std::filesystem;
using namespace modfuse;

namespace {

struct CommonOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    bool force = false;
};

RunConfig resolve_config(const CommonOptions& o) {
    RunConfig c = o.config_path.empty() ? RunConfig::desk() : load_config(o.config_path);
    if (o.seed) c.seed = *o.seed;
    c.validate();
    return c;
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
    return out;
}

int run_extract(const CommonOptions& o, const std::string& manifest, const std::string& out_dir) {
    const RunConfig c = resolve_config(o);
    fs::path dir = out_dir;
    if (dir.empty()) {
        const auto cache = effective_cache_dir(c);
        if (!cache) throw Error(ErrorCode::usage, "extract needs --out, a cache_dir in the config or MODFUSE_CACHE_DIR");
        dir = *cache;
    }
    const auto s = extract(parse_manifest(manifest), dir, c.window, o.force);
    std::cout << "written " << s.written << ", skipped " << s.skipped << " in " << dir.string() << '\n';
    return 0;
}

int run_synth(const CommonOptions& o, const std::string& out_dir, SynthDatasetSpec spec) {
    // The dataset seed comes from --seed, else the config, else the built-in default.
    if (o.seed || !o.config_path.empty()) spec.seed = resolve_config(o).seed;
    if (!o.force && fs::exists(fs::path(out_dir) / "train.tsv")) {
        throw Error(ErrorCode::usage, out_dir + " already holds a dataset (use --force to overwrite)");
    }
    const auto p = make_synthetic_dataset(out_dir, spec);
    std::cout << p.train.string() << '\n' << p.dev.string() << '\n' << p.eval.string() << '\n';
    return 0;
}

int run_train(const CommonOptions& o, const std::string& train_manifest, const std::string& dev_manifest,
              const std::string& out_dir) {
    const RunConfig c = resolve_config(o);
    const auto train_entries = parse_manifest(train_manifest);
    const auto dev_entries = parse_manifest(dev_manifest);
    const fs::path dir = out_dir;
    fs::create_directories(dir);
    auto result = train(c, train_entries, dev_entries, [](const std::string& line) { std::cerr << line << '\n'; });
    save_checkpoint(dir / "best.ckpt", result.best);
    save_checkpoint(dir / "last.ckpt", result.last);
    auto log = open_out(dir / "train_log.tsv");
    log << "epoch\ttrain_loss\tdev_loss\n";
    for (const auto& e : result.log) {
        log << e.epoch << '\t' << (e.epoch == 0 ? "-" : format_double(e.train_loss)) << '\t'
            << format_double(e.dev_loss) << '\n';
    }
    std::cout << "best epoch " << result.best.epoch << " dev_loss " << format_double(result.best.best_dev_loss) << '\n';
    return 0;
}

int run_score(const std::string& checkpoint, const std::string& manifest, const std::string& out_path,
              const std::string& group) {
    const auto bundle = load_checkpoint(checkpoint);
    const auto entries = parse_manifest(manifest);
    const GroupKey key = parse_group_key(group);
    ScoreSummary s;
    if (out_path.empty() || out_path == "-") {
        s = score_set(bundle, entries, std::cout, key);
    } else {
        auto out = open_out(out_path);
        s = score_set(bundle, entries, out, key);
    }
    for (const auto& f : s.failures) std::cerr << "failed: " << f << '\n';
    std::cerr << "scored " << s.scored << " of " << entries.size() << '\n';
    return s.failures.empty() ? 0 : 2;
}

int run_eval(const std::string& scores, const EvalOptions& options, const std::string& out_dir) {
    const auto records = read_score_file(scores);
    const auto report = evaluate(records, options);
    std::cout << report.text();
    if (!out_dir.empty()) {
        const fs::path dir = out_dir;
        open_out(dir / "pooled.tsv") << report.pooled_tsv();
        open_out(dir / "grouped.csv") << report.grouped_csv();
        open_out(dir / "density.csv") << format_density_csv(report.density);
    }
    return 0;
}

// Per-head attention weights for one utterance as long-format CSV.
int run_report(const std::string& checkpoint, const std::string& manifest, const std::string& utt_id,
               const std::string& out_path) {
    const auto bundle = load_checkpoint(checkpoint);
    const auto entries = parse_manifest(manifest);
    const ProtocolEntry* entry = nullptr;
    for (const auto& e : entries) {
        if (e.utt_id == utt_id) entry = &e;
    }
    if (!entry) throw Error(ErrorCode::manifest, "utterance '" + utt_id + "' is not in " + manifest);
    const FeatureSource source(bundle.config);
    const auto f = source.load(*entry);
    const auto weights = attention_weights(f.query, {entry->utt_id, kKindSsl, f.ssl}, bundle.detector.fusion);
    auto out = open_out(out_path);
    out << "head,query_frame,key_frame,weight\n";
    for (std::size_t h = 0; h < weights.size(); ++h) {
        for (Eigen::Index i = 0; i < weights[h].rows(); ++i) {
            for (Eigen::Index j = 0; j < weights[h].cols(); ++j) {
                out << h << ',' << i << ',' << j << ',' << format_double(weights[h](i, j)) << '\n';
            }
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Modulation-spectrogram fusion fake-speech detector"};
    app.require_subcommand(1);
    CommonOptions common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config_path, "key = value config file (default: desk preset)");
        sub->add_option("--seed", common.seed, "override the config seed");
        sub->add_flag("--force", common.force, "overwrite existing outputs");
    };

    std::string manifest, out, train_manifest, dev_manifest, checkpoint, group = "language", scores, utt;
    SynthDatasetSpec synth_spec;
    EvalOptions eval_options;
    std::optional<double> bandwidth;
    bool no_groups = false;

    auto* ex = app.add_subcommand("extract", "cache modulation spectrograms for a manifest");
    add_common(ex);
    ex->add_option("--manifest", manifest, "manifest TSV")->required();
    ex->add_option("--out", out, "cache directory (defaults to the configured cache root)");

    auto* sy = app.add_subcommand("synth", "generate the synthetic AM-tone dataset");
    add_common(sy);
    sy->add_option("--out", out, "output directory")->required();
    sy->add_option("--n-train", synth_spec.n_train);
    sy->add_option("--n-dev", synth_spec.n_dev);
    sy->add_option("--n-eval", synth_spec.n_eval);
    sy->add_option("--bonafide-fraction", synth_spec.bonafide_fraction)->check(CLI::Range(0.0, 1.0));
    sy->add_option("--embedding-offset", synth_spec.embedding_offset);
    sy->add_option("--snr-db", synth_spec.snr_db);

    auto* tr = app.add_subcommand("train", "train the fusion detector");
    add_common(tr);
    tr->add_option("--train", train_manifest, "training manifest")->required();
    tr->add_option("--dev", dev_manifest, "development manifest")->required();
    tr->add_option("--out", out, "output directory for best.ckpt, last.ckpt, train_log.tsv")->required();

    auto* sc = app.add_subcommand("score", "score a manifest with a checkpoint");
    sc->add_option("--checkpoint", checkpoint)->required();
    sc->add_option("--manifest", manifest)->required();
    sc->add_option("--out", out, "score file (default stdout)");
    sc->add_option("--group", group, "none, language or attack")->check(CLI::IsMember({"none", "language", "attack"}));

    auto* ev = app.add_subcommand("eval", "pooled and grouped EER, score densities");
    ev->add_option("--scores", scores)->required();
    ev->add_option("--min-count", eval_options.min_count, "minimum fake count per group");
    ev->add_option("--bins", eval_options.bins, "density histogram bins");
    ev->add_option("--bandwidth", bandwidth, "Gaussian KDE bandwidth");
    ev->add_flag("--no-groups", no_groups, "skip the grouped table");
    ev->add_option("--out", out, "directory for pooled.tsv, grouped.csv, density.csv");

    auto* rp = app.add_subcommand("report", "export attention weights for one utterance as CSV");
    rp->add_option("--checkpoint", checkpoint)->required();
    rp->add_option("--manifest", manifest)->required();
    rp->add_option("--utt", utt)->required();
    rp->add_option("--out", out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (ex->parsed()) return run_extract(common, manifest, out);
        if (sy->parsed()) return run_synth(common, out, synth_spec);
        if (tr->parsed()) return run_train(common, train_manifest, dev_manifest, out);
        if (sc->parsed()) return run_score(checkpoint, manifest, out, group);
        if (ev->parsed()) {
            eval_options.bandwidth = bandwidth;
            eval_options.grouped = !no_groups;
            return run_eval(scores, eval_options, out);
        }
        if (rp->parsed()) return run_report(checkpoint, manifest, utt, out);
    } catch (const Error& e) {
        std::cerr << "modfuse: " << error_code_name(e.code()) << ": " << e.what() << '\n';
        return exit_code_for(e.code());
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "modfuse: io: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
