#include "modfuse/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "modfuse/audio_io.hpp"
#include "modfuse/embeddings.hpp"
#include "modfuse/error.hpp"
#include "modfuse/modspec.hpp"
#include "modfuse/rng.hpp"

namespace modfuse {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kShuffleStream = 0x73687566666c65ULL;
constexpr std::uint64_t kAugmentStream = 0x6175676d656e74ULL;

Matrix apply_transform(Matrix m, FeatureTransform t) {
    if (t == FeatureTransform::log1p) return log1p_view(m);
    return m;
}

// Exclusive lock file held for the lifetime of the object.
class DirectoryLock {
public:
    explicit DirectoryLock(const fs::path& dir) : path_(dir / ".modfuse.lock") {
        fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd_ < 0) {
            throw Error(ErrorCode::io, "cache directory is locked by another process (" + path_.string() + ")");
        }
    }
    ~DirectoryLock() {
        ::close(fd_);
        std::error_code ec;
        fs::remove(path_, ec);
    }
    DirectoryLock(const DirectoryLock&) = delete;
    DirectoryLock& operator=(const DirectoryLock&) = delete;

private:
    fs::path path_;
    int fd_ = -1;
};

}  // namespace

fs::path cache_file_for(const fs::path& cache_dir, const std::string& utt_id) {
    return cache_dir / (utt_id + ".mods.mfx");
}

FeatureSource::FeatureSource(const RunConfig& config) : config_(config), cache_dir_(effective_cache_dir(config)) {}

Matrix FeatureSource::modspec_features(const ProtocolEntry& entry, std::optional<std::uint64_t> noise_seed) const {
    const bool augment = config_.augment_noise_snr_db.has_value() && noise_seed.has_value();
    if (memo_enabled_ && !augment) {
        const auto key = std::pair{entry.utt_id, entry.audio_path ? entry.audio_path->string() : std::string()};
        if (auto it = memo_.find(key); it != memo_.end()) return it->second;
        return memo_.emplace(key, compute_modspec(entry, std::nullopt)).first->second;
    }
    return compute_modspec(entry, noise_seed);
}

Matrix FeatureSource::compute_modspec(const ProtocolEntry& entry, std::optional<std::uint64_t> noise_seed) const {
    const bool augment = config_.augment_noise_snr_db.has_value() && noise_seed.has_value();
    if (cache_dir_ && !augment) {
        const fs::path cached = cache_file_for(*cache_dir_, entry.utt_id);
        if (fs::exists(cached)) {
            EmbeddingMatrix m;
            try {
                m = read_matrix(cached);
                require_geometry(m, kKindModspec, kFreqBins, kModBins);
            } catch (const Error& e) {
                throw Error(ErrorCode::cache_invalid, "cache file " + cached.string() + " is invalid: " + e.what());
            }
            return apply_transform(std::move(m.values), config_.feature_transform);
        }
    }
    if (!entry.audio_path) {
        throw Error(ErrorCode::manifest, "utterance '" + entry.utt_id + "' has no audio_path and no cached features");
    }
    Waveform wav;
    try {
        wav = load_wav(*entry.audio_path);
    } catch (const Error& e) {
        throw Error(e.code() == ErrorCode::io ? ErrorCode::manifest : e.code(),
                    "utterance '" + entry.utt_id + "': " + e.what());
    }
    AudioClip clip = fix_length(wav.samples, entry.utt_id);
    if (augment) add_noise(clip.samples, *config_.augment_noise_snr_db, *noise_seed);
    return apply_transform(extract_modspec(clip, config_.window).values, config_.feature_transform);
}

UtteranceFeatures FeatureSource::load(const ProtocolEntry& entry, std::optional<std::uint64_t> noise_seed) const {
    UtteranceFeatures f;
    f.query = modspec_features(entry, noise_seed);
    if (!entry.embedding_path) {
        throw Error(ErrorCode::manifest, "utterance '" + entry.utt_id + "' has no embedding_path");
    }
    EmbeddingMatrix ssl;
    try {
        ssl = read_matrix(*entry.embedding_path);
    } catch (const Error& e) {
        throw Error(e.code() == ErrorCode::io ? ErrorCode::manifest : e.code(),
                    "utterance '" + entry.utt_id + "': " + e.what());
    }
    require_geometry(ssl, kKindSsl, kSslFrames, kSslDim);
    f.ssl = std::move(ssl.values);
    return f;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    CounterRng rng(stream_key(seed, kShuffleStream, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.below(i));
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

double dataset_loss(const Detector& detector, const FeatureSource& source, const std::vector<ProtocolEntry>& entries,
                    std::pair<double, double> class_weights) {
    if (entries.empty()) throw Error(ErrorCode::empty_input, "loss over an empty set");
    const double weights[] = {class_weights.first, class_weights.second};
    double total = 0.0;
    for (const auto& e : entries) {
        const auto f = source.load(e);
        const int label = label_index(e.label);
        total += nn::weighted_cross_entropy(detector.logits(f.query, f.ssl), std::span(&label, 1), weights).item();
    }
    return total / static_cast<double>(entries.size());
}

TrainResult train(const RunConfig& config, const std::vector<ProtocolEntry>& train_entries,
                  const std::vector<ProtocolEntry>& dev_entries,
                  const std::function<void(const std::string&)>& progress) {
    config.validate();
    if (train_entries.empty()) throw Error(ErrorCode::empty_manifest, "training manifest has no entries");
    if (dev_entries.empty()) throw Error(ErrorCode::empty_manifest, "development manifest has no entries");
    const auto class_weights = config.class_weights ? *config.class_weights : modfuse::class_weights(train_entries);
    const double weights[] = {class_weights.first, class_weights.second};
    FeatureSource source(config);
    source.enable_memo();

    CheckpointBundle state;
    state.config = config;
    state.detector = Detector::init(config.fusion_config(), config.head_config(), config.seed);
    state.adam.learning_rate = config.learning_rate;
    auto params = state.detector.named_params();

    TrainResult result;
    const double initial_dev = dataset_loss(state.detector, source, dev_entries, class_weights);
    if (!std::isfinite(initial_dev)) throw Error(ErrorCode::numeric, "initial development loss is not finite");
    state.best_dev_loss = initial_dev;
    result.log.push_back({0, std::numeric_limits<double>::quiet_NaN(), initial_dev});
    result.best = clone_bundle(state);
    if (progress) progress("epoch 0 dev_loss " + format_double(initial_dev));

    const auto batch = static_cast<std::size_t>(config.batch_size);
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto order = epoch_order(train_entries.size(), config.seed, epoch);
        double train_total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t end = std::min(order.size(), start + batch);
            std::vector<nn::Tensor> rows;
            std::vector<int> labels;
            for (std::size_t i = start; i < end; ++i) {
                const std::size_t idx = order[i];
                const auto noise_seed = stream_key(config.seed, kAugmentStream ^ static_cast<std::uint64_t>(epoch), idx);
                const auto f = source.load(train_entries[idx], noise_seed);
                rows.push_back(state.detector.logits(f.query, f.ssl));
                labels.push_back(label_index(train_entries[idx].label));
            }
            const nn::Tensor loss = nn::weighted_cross_entropy(nn::concat_rows(rows), labels, weights);
            if (!std::isfinite(loss.item())) {
                throw Error(ErrorCode::numeric, "non-finite training loss at epoch " + std::to_string(epoch) +
                                                    ", batch starting at " + std::to_string(start));
            }
            nn::zero_grads(params);
            loss.backward();
            nn::adam_step(params, state.adam);
            train_total += loss.item() * static_cast<double>(end - start);
        }
        const double train_loss = train_total / static_cast<double>(order.size());
        const double dev_loss = dataset_loss(state.detector, source, dev_entries, class_weights);
        if (!std::isfinite(dev_loss)) {
            throw Error(ErrorCode::numeric, "non-finite development loss at epoch " + std::to_string(epoch));
        }
        state.epoch = epoch;
        result.log.push_back({epoch, train_loss, dev_loss});
        if (dev_loss < state.best_dev_loss) {
            state.best_dev_loss = dev_loss;
            result.best = clone_bundle(state);
        }
        // best_dev_loss in the best bundle always equals that bundle's own dev loss.
        if (progress) {
            progress("epoch " + std::to_string(epoch) + " train_loss " + format_double(train_loss) + " dev_loss " +
                     format_double(dev_loss));
        }
    }
    nn::zero_grads(params);
    result.last = clone_bundle(state);
    return result;
}

GroupKey parse_group_key(const std::string& s) {
    if (s == "none") return GroupKey::none;
    if (s == "language") return GroupKey::language;
    if (s == "attack") return GroupKey::attack;
    throw Error(ErrorCode::usage, "group key must be none, language or attack");
}

double score_entry(const CheckpointBundle& checkpoint, const FeatureSource& source, const ProtocolEntry& entry) {
    const auto f = source.load(entry);
    const nn::Tensor logits = checkpoint.detector.logits(f.query, f.ssl);
    if (!logits.value().allFinite()) throw Error(ErrorCode::numeric, "non-finite logits for '" + entry.utt_id + "'");
    return logits.value()(0, kLabelBonafide) - logits.value()(0, kLabelFake);
}

ScoreSummary score_set(const CheckpointBundle& checkpoint, const std::vector<ProtocolEntry>& entries, std::ostream& out,
                       GroupKey group_key) {
    const FeatureSource source(checkpoint.config);
    ScoreSummary summary;
    out << score_file_header() << '\n';
    for (const auto& e : entries) {
        try {
            ScoreRecord r;
            r.utt_id = e.utt_id;
            r.label = e.label;
            r.score = score_entry(checkpoint, source, e);
            if (group_key == GroupKey::language) r.group = e.language;
            if (group_key == GroupKey::attack) r.group = e.attack_id;
            out << format_score_line(r) << '\n';
            out.flush();
            ++summary.scored;
        } catch (const Error& err) {
            summary.failures.push_back(e.utt_id + ": " + err.what());
        }
    }
    return summary;
}

namespace {

std::string percent(double fraction) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << 100.0 * fraction << '%';
    return s.str();
}

}  // namespace

EvalReport evaluate(const std::vector<ScoreRecord>& records, const EvalOptions& options) {
    EvalReport report;
    report.pooled = compute_eer(records);
    if (options.grouped) {
        try {
            report.grouped = grouped_eer(records, options.min_count);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::empty_result) throw;
            report.grouped_error = e.what();
        }
    }
    report.density = density_export(records, options.bins, options.bandwidth);
    return report;
}

std::string EvalReport::text() const {
    std::ostringstream out;
    out << "pooled EER: " << percent(pooled.eer) << " at threshold " << format_double(pooled.threshold) << " (bonafide "
        << pooled.n_bonafide << ", fake " << pooled.n_fake << ")\n";
    out << "  bracket: [" << format_double(pooled.below.threshold) << ": fa " << percent(pooled.below.p_fa) << ", miss "
        << percent(pooled.below.p_miss) << "] [" << format_double(pooled.above.threshold) << ": fa "
        << percent(pooled.above.p_fa) << ", miss " << percent(pooled.above.p_miss) << "]\n";
    if (grouped) {
        out << "grouped EER:\n";
        for (const auto& [g, r] : grouped->groups) out << "  " << g << "\t" << percent(r.eer) << "\t(fake " << r.n_fake << ")\n";
        if (!grouped->skipped.empty()) {
            out << "skipped:\n";
            for (const auto& [g, n] : grouped->skipped) out << "  " << g << "\t(fake " << n << ")\n";
        }
    } else if (grouped_error) {
        out << "grouped EER unavailable: " << *grouped_error << '\n';
    }
    if (density.degenerate) out << "warning: all scores identical; density has a single bin\n";
    return out.str();
}

std::string EvalReport::pooled_tsv() const {
    std::ostringstream out;
    out << "eer\tthreshold\tn_bonafide\tn_fake\n";
    out << format_double(pooled.eer) << '\t' << format_double(pooled.threshold) << '\t' << pooled.n_bonafide << '\t'
        << pooled.n_fake << '\n';
    return out.str();
}

std::string EvalReport::grouped_csv() const {
    std::ostringstream out;
    out << "group,eer\n";
    if (grouped) {
        for (const auto& [g, r] : grouped->groups) out << g << ',' << format_double(r.eer) << '\n';
    }
    return out.str();
}

ExtractSummary extract(const std::vector<ProtocolEntry>& entries, const fs::path& out_dir, WindowKind window, bool force) {
    fs::create_directories(out_dir);
    DirectoryLock lock(out_dir);
    ExtractSummary summary;
    for (const auto& e : entries) {
        const fs::path target = cache_file_for(out_dir, e.utt_id);
        if (!force && fs::exists(target)) {
            try {
                require_geometry(read_matrix(target), kKindModspec, kFreqBins, kModBins);
            } catch (const Error& err) {
                throw Error(ErrorCode::cache_invalid, "cache file " + target.string() + " is invalid: " + err.what());
            }
            ++summary.skipped;
            continue;
        }
        if (!e.audio_path) throw Error(ErrorCode::manifest, "utterance '" + e.utt_id + "' has no audio_path");
        try {
            const Waveform wav = load_wav(*e.audio_path);
            const ModSpectrogram ms = extract_modspec(fix_length(wav.samples, e.utt_id), window);
            const fs::path tmp = target.string() + ".tmp";
            write_matrix(tmp, {e.utt_id, kKindModspec, ms.values});
            fs::rename(tmp, target);
        } catch (const Error& err) {
            throw Error(err.code(), "utterance '" + e.utt_id + "': " + err.what());
        }
        ++summary.written;
    }
    return summary;
}

SynthDatasetPaths make_synthetic_dataset(const fs::path& dir, const SynthDatasetSpec& spec) {
    const fs::path wav_dir = dir / "wav";
    const fs::path emb_dir = dir / "emb";
    fs::create_directories(wav_dir);
    fs::create_directories(emb_dir);
    static const char* const kLanguages[] = {"en", "de", "es"};
    static const char* const kAttacks[] = {"A01", "A02", "A03"};

    std::uint64_t utt_counter = 0;
    auto make_split = [&](const std::string& split, std::size_t n) {
        std::vector<ProtocolEntry> entries;
        const auto n_bona = static_cast<std::size_t>(std::llround(spec.bonafide_fraction * static_cast<double>(n)));
        for (std::size_t i = 0; i < n; ++i) {
            const std::uint64_t key = stream_key(spec.seed, 0x73796e7468ULL, utt_counter++);
            SeededRng rng(key);
            const bool bona = i < n_bona;
            std::ostringstream id;
            id << split << '_' << std::setw(4) << std::setfill('0') << i;

            SynthParams p;
            p.carrier_hz = rng.uniform(300.0, 4000.0);
            p.mod_hz = bona ? spec.bonafide_mod_hz : spec.fake_mod_hz;
            p.mod_depth = rng.uniform(0.5, 1.0);
            p.snr_db = spec.snr_db;
            p.amplitude = rng.uniform(0.2, 0.5);
            p.seed = key;
            const AudioClip clip = synth_clip(p, id.str());

            ProtocolEntry e;
            e.utt_id = id.str();
            e.speaker_id = "SP" + std::to_string(i % 10);
            e.label = bona ? Label::bonafide : Label::fake;
            e.language = kLanguages[static_cast<std::size_t>(rng.uniform() * 3.0)];
            if (!bona) e.attack_id = kAttacks[static_cast<std::size_t>(rng.uniform() * 3.0)];
            e.audio_path = (wav_dir / (e.utt_id + ".wav")).lexically_normal();
            e.embedding_path = (emb_dir / (e.utt_id + ".ssle.mfx")).lexically_normal();
            write_wav(*e.audio_path, clip.samples, kSampleRate);
            write_matrix(*e.embedding_path, synth_embedding(e.utt_id, bona, spec.embedding_offset, key ^ 0x656d62ULL));
            entries.push_back(std::move(e));
        }
        const fs::path manifest = dir / (split + ".tsv");
        write_manifest(manifest, entries);
        return manifest;
    };
    SynthDatasetPaths paths;
    paths.train = make_split("train", spec.n_train);
    paths.dev = make_split("dev", spec.n_dev);
    paths.eval = make_split("eval", spec.n_eval);
    return paths;
}

}  // namespace modfuse
