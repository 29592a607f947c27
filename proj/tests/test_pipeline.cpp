#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "modfuse/embeddings.hpp"
#include "modfuse/error.hpp"
#include "modfuse/modspec.hpp"
#include "modfuse/pipeline.hpp"

using namespace modfuse;
namespace fs = std::filesystem;

namespace {

Error error_of(const auto& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e;
    }
    FAIL("expected modfuse::Error");
    return Error(ErrorCode::usage, "");
}

// One small synthetic dataset shared by every case in this file.
struct Fixture {
    fs::path dir;
    SynthDatasetPaths paths;
    std::vector<ProtocolEntry> train, dev, eval;

    Fixture() : dir(fs::temp_directory_path() / "modfuse_test_pipeline") {
        fs::remove_all(dir);
        SynthDatasetSpec spec;
        spec.n_train = 6;
        spec.n_dev = 4;
        spec.n_eval = 4;
        spec.seed = 3;
        paths = make_synthetic_dataset(dir, spec);
        train = parse_manifest(paths.train);
        dev = parse_manifest(paths.dev);
        eval = parse_manifest(paths.eval);
    }
};

const Fixture& fixture() {
    static const Fixture f;
    return f;
}

RunConfig tiny_config(int epochs) {
    RunConfig c = RunConfig::desk();
    c.epochs = epochs;
    c.batch_size = 4;
    c.cache_dir.reset();
    ::unsetenv("MODFUSE_CACHE_DIR");
    return c;
}

}  // namespace

TEST_CASE("epoch order is a seeded permutation") {
    const auto a = epoch_order(50, 7, 1);
    auto sorted = a;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> iota(50);
    std::iota(iota.begin(), iota.end(), 0);
    CHECK(sorted == iota);
    CHECK(epoch_order(50, 7, 1) == a);
    CHECK(epoch_order(50, 7, 2) != a);
    CHECK(epoch_order(50, 8, 1) != a);
    CHECK(epoch_order(0, 7, 1).empty());
}

TEST_CASE("synthetic dataset layout") {
    const auto& f = fixture();
    REQUIRE(f.train.size() == 6);
    REQUIRE(f.dev.size() == 4);
    CHECK(std::count_if(f.train.begin(), f.train.end(), [](const auto& e) { return e.label == Label::bonafide; }) == 2);
    for (const auto& e : f.train) {
        CHECK(fs::exists(*e.audio_path));
        CHECK(fs::exists(*e.embedding_path));
        CHECK(e.language.has_value());
        CHECK(e.attack_id.has_value() == (e.label == Label::fake));
    }
    const auto w = load_wav(*f.train[0].audio_path);
    CHECK(w.sample_rate == 16000);
    const auto emb = read_matrix(*f.train[0].embedding_path);
    CHECK(emb.kind == "SSLE");
    CHECK(emb.values.rows() == 201);
    CHECK(emb.values.cols() == 1024);
}

TEST_CASE("feature source geometry and manifest errors") {
    const auto& f = fixture();
    const FeatureSource source(tiny_config(0));
    const auto feats = source.load(f.train[0]);
    CHECK(feats.query.rows() == 201);
    CHECK(feats.query.cols() == 202);
    CHECK(feats.ssl.cols() == 1024);
    CHECK(feats.query.minCoeff() >= 0.0);

    auto missing = f.train[0];
    missing.utt_id = "ghost_utt";
    missing.audio_path = f.dir / "wav" / "ghost.wav";
    const auto e = error_of([&] { source.load(missing); });
    CHECK(e.code() == ErrorCode::manifest);
    CHECK(std::string(e.what()).find("ghost_utt") != std::string::npos);

    auto no_emb = f.train[0];
    no_emb.embedding_path.reset();
    CHECK(error_of([&] { source.load(no_emb); }).code() == ErrorCode::manifest);
}

TEST_CASE("extract writes, skips and validates cache files") {
    const auto& f = fixture();
    const fs::path cache = f.dir / "cache";
    fs::remove_all(cache);
    const std::vector<ProtocolEntry> three(f.train.begin(), f.train.begin() + 3);
    auto s = extract(three, cache, WindowKind::hann, false);
    CHECK(s.written == 3);
    for (const auto& e : three) {
        const auto m = read_matrix(cache_file_for(cache, e.utt_id));
        CHECK(m.kind == "MODS");
        CHECK(m.values.rows() == 201);
        CHECK(m.values.cols() == 202);
    }
    CHECK_FALSE(fs::exists(cache / ".modfuse.lock"));
    s = extract(three, cache, WindowKind::hann, false);
    CHECK(s.written == 0);
    CHECK(s.skipped == 3);

    // Cached features read back match a fresh computation (float32 storage).
    RunConfig cached_cfg = tiny_config(0);
    cached_cfg.cache_dir = cache;
    const Matrix from_cache = FeatureSource(cached_cfg).modspec_features(three[1]);
    const Matrix direct = FeatureSource(tiny_config(0)).modspec_features(three[1]);
    CHECK((from_cache - direct).cwiseAbs().maxCoeff() < 1e-5);

    const fs::path victim = cache_file_for(cache, three[2].utt_id);
    { std::ofstream(victim, std::ios::binary | std::ios::trunc) << "MFX1"; }
    const auto bad = error_of([&] { extract(three, cache, WindowKind::hann, false); });
    CHECK(bad.code() == ErrorCode::cache_invalid);
    CHECK(std::string(bad.what()).find(victim.string()) != std::string::npos);
    CHECK(error_of([&] { FeatureSource(cached_cfg).modspec_features(three[2]); }).code() == ErrorCode::cache_invalid);
    s = extract(three, cache, WindowKind::hann, true);
    CHECK(s.written == 3);

    { std::ofstream(cache / ".modfuse.lock") << "held"; }
    CHECK(error_of([&] { extract(three, cache, WindowKind::hann, false); }).code() == ErrorCode::io);
    fs::remove(cache / ".modfuse.lock");
}

TEST_CASE("zero epochs keeps the initialization") {
    const auto& f = fixture();
    const auto cfg = tiny_config(0);
    const auto r = train(cfg, f.train, f.dev);
    REQUIRE(r.log.size() == 1);
    CHECK(std::isnan(r.log[0].train_loss));
    CHECK(r.best.best_dev_loss == r.log[0].dev_loss);
    CHECK(r.best.epoch == 0);
    const auto init = Detector::init(cfg.fusion_config(), cfg.head_config(), cfg.seed);
    const auto a = init.named_params(), b = r.best.detector.named_params();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].tensor.value() == b[i].tensor.value());
    CHECK(error_of([&] { train(cfg, {}, f.dev); }).code() == ErrorCode::empty_manifest);
}

TEST_CASE("training is deterministic and selects the lowest dev loss") {
    const auto& f = fixture();
    const auto cfg = tiny_config(2);
    std::vector<std::string> lines;
    const auto r1 = train(cfg, f.train, f.dev, [&](const std::string& s) { lines.push_back(s); });
    const auto r2 = train(cfg, f.train, f.dev);
    CHECK(lines.size() == 3);  // initial dev loss plus one line per epoch
    CHECK(encode_checkpoint(r1.best) == encode_checkpoint(r2.best));
    CHECK(encode_checkpoint(r1.last) == encode_checkpoint(r2.last));
    REQUIRE(r1.log.size() == 3);
    double best = r1.log[0].dev_loss;
    for (const auto& l : r1.log) best = std::min(best, l.dev_loss);
    CHECK(r1.best.best_dev_loss == best);
    CHECK(r1.last.epoch == 2);
    CHECK(r1.last.adam.step == 4);  // 6 utterances in batches of 4

    // The best checkpoint's dev loss is reproducible from its weights.
    const FeatureSource source(cfg);
    const auto w = class_weights(f.train);
    CHECK(dataset_loss(r1.best.detector, source, f.dev, w) == doctest::Approx(r1.best.best_dev_loss).epsilon(1e-12));
}

TEST_CASE("scoring streams lines and records failures") {
    const auto& f = fixture();
    const auto r = train(tiny_config(0), f.train, f.dev);

    std::ostringstream empty;
    auto s = score_set(r.best, {}, empty);
    CHECK(empty.str() == score_file_header() + "\n");
    CHECK(s.scored == 0);

    auto entries = f.eval;
    entries.push_back(f.eval[0]);  // same utterance listed twice
    auto broken = f.eval[1];
    broken.utt_id = "no_embedding";
    broken.embedding_path = f.dir / "emb" / "missing.mfx";
    entries.push_back(broken);
    std::ostringstream out;
    s = score_set(r.best, entries, out, GroupKey::attack);
    CHECK(s.scored == f.eval.size() + 1);
    REQUIRE(s.failures.size() == 1);
    CHECK(s.failures[0].starts_with("no_embedding: "));
    const auto records = parse_score_text(out.str());
    REQUIRE(records.size() == f.eval.size() + 1);
    CHECK(records.front().score == records.back().score);
    for (std::size_t i = 0; i < f.eval.size(); ++i) CHECK(records[i].group == f.eval[i].attack_id);

    CHECK(parse_group_key("language") == GroupKey::language);
    CHECK(error_of([] { parse_group_key("speaker"); }).code() == ErrorCode::usage);
}

TEST_CASE("evaluation report") {
    std::vector<ScoreRecord> rec = {{"b1", Label::bonafide, 0.9, "en"}, {"b2", Label::bonafide, 0.8, "en"},
                                    {"b3", Label::bonafide, 0.7, "en"}, {"f1", Label::fake, 0.75, "en"},
                                    {"f2", Label::fake, 0.2, "en"},     {"f3", Label::fake, 0.1, "en"}};
    EvalOptions opt;
    opt.min_count = 1;
    opt.bins = 5;
    const auto r = evaluate(rec, opt);
    const auto text = r.text();
    CHECK(text.find("pooled EER: 33.33%") != std::string::npos);
    CHECK(text.find("  en\t33.33%") != std::string::npos);
    CHECK(r.grouped_csv() == "group,eer\nen," + format_double(1.0 / 3.0) + "\n");
    CHECK(r.pooled_tsv().starts_with("eer\tthreshold\tn_bonafide\tn_fake\n"));

    rec.push_back({"f4", Label::fake, 0.3, "de"});
    opt.min_count = 2;
    const auto skip = evaluate(rec, opt);
    CHECK(skip.text().find("skipped:\n  de\t(fake 1)") != std::string::npos);

    opt.min_count = 100;
    const auto none = evaluate(rec, opt);
    CHECK_FALSE(none.grouped.has_value());
    CHECK(none.text().find("grouped EER unavailable") != std::string::npos);
}
