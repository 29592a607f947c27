#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "modfuse/checkpoint.hpp"
#include "modfuse/config.hpp"
#include "modfuse/metrics.hpp"
#include "modfuse/protocol.hpp"

namespace modfuse {

// Model inputs for one utterance.
struct UtteranceFeatures {
    Matrix query;  // 201 x 202 after the configured feature transform
    Matrix ssl;    // 201 x 1024
};

// Resolves features for manifest entries: modulation features come from the
// cache directory when a valid MODS file exists there, otherwise from the
// audio file; SSL embeddings always come from the entry's embedding file.
class FeatureSource {
public:
    explicit FeatureSource(const RunConfig& config);

    // noise_seed is only used when the config enables noise augmentation.
    UtteranceFeatures load(const ProtocolEntry& entry, std::optional<std::uint64_t> noise_seed = std::nullopt) const;

    Matrix modspec_features(const ProtocolEntry& entry, std::optional<std::uint64_t> noise_seed = std::nullopt) const;

    // Keep un-augmented modulation features in memory after the first load.
    // Not thread-safe.
    void enable_memo() { memo_enabled_ = true; }

private:
    Matrix compute_modspec(const ProtocolEntry& entry, std::optional<std::uint64_t> noise_seed) const;

    RunConfig config_;
    std::optional<std::filesystem::path> cache_dir_;
    bool memo_enabled_ = false;
    mutable std::map<std::pair<std::string, std::string>, Matrix> memo_;
};

std::filesystem::path cache_file_for(const std::filesystem::path& cache_dir, const std::string& utt_id);

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double dev_loss = 0.0;
};

struct TrainResult {
    CheckpointBundle best;
    CheckpointBundle last;
    std::vector<EpochLog> log;  // entry 0 is the initial dev loss (train_loss NaN)
};

// Fisher-Yates permutation for one epoch, from a counter-based stream keyed
// on (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch);

// Adam on the weighted cross-entropy, batches of batch_size in a seeded
// per-epoch order (final partial batch kept). The checkpoint with the lowest
// dev loss is kept alongside the last one. progress, when set, receives one
// line for the initial dev loss and one per epoch.
TrainResult train(const RunConfig& config, const std::vector<ProtocolEntry>& train_entries,
                  const std::vector<ProtocolEntry>& dev_entries,
                  const std::function<void(const std::string&)>& progress = {});

// Mean weighted cross-entropy of a detector over entries.
double dataset_loss(const Detector& detector, const FeatureSource& source, const std::vector<ProtocolEntry>& entries,
                    std::pair<double, double> class_weights);

enum class GroupKey { none, language, attack };
GroupKey parse_group_key(const std::string& s);

struct ScoreSummary {
    std::size_t scored = 0;
    std::vector<std::string> failures;  // "utt_id: reason"
};

// Streams one score line per entry (after the header). Entries that fail to
// resolve are reported in the summary and skipped.
ScoreSummary score_set(const CheckpointBundle& checkpoint, const std::vector<ProtocolEntry>& entries, std::ostream& out,
                       GroupKey group_key = GroupKey::language);

double score_entry(const CheckpointBundle& checkpoint, const FeatureSource& source, const ProtocolEntry& entry);

struct EvalOptions {
    bool grouped = true;
    std::size_t min_count = 100;
    std::size_t bins = 50;
    std::optional<double> bandwidth;
};

struct EvalReport {
    EerResult pooled;
    std::optional<GroupedEer> grouped;
    std::optional<std::string> grouped_error;
    DensityTable density;

    std::string text() const;
    std::string pooled_tsv() const;
    std::string grouped_csv() const;  // radar-ready "group,eer"
};

EvalReport evaluate(const std::vector<ScoreRecord>& records, const EvalOptions& options = {});

struct ExtractSummary {
    std::size_t written = 0;
    std::size_t skipped = 0;
};

// Writes one MODS MFX1 file per entry (raw modulation spectrogram, no
// transform). Existing files are validated and kept unless force is set.
// A lock file guards the directory against concurrent writers.
ExtractSummary extract(const std::vector<ProtocolEntry>& entries, const std::filesystem::path& out_dir, WindowKind window,
                       bool force);

struct SynthDatasetSpec {
    std::size_t n_train = 200;
    std::size_t n_dev = 80;
    std::size_t n_eval = 80;
    double bonafide_fraction = 0.4;
    double bonafide_mod_hz = 8.0;
    double fake_mod_hz = 40.0;
    double embedding_offset = 0.05;
    double snr_db = 20.0;
    std::uint64_t seed = 7;
};

struct SynthDatasetPaths {
    std::filesystem::path train;
    std::filesystem::path dev;
    std::filesystem::path eval;
};

// Bonafide: AM tones at bonafide_mod_hz with SSL-like embeddings offset by
// embedding_offset; fake: AM tones at fake_mod_hz with zero-mean embeddings.
// Carriers, depths and noise vary per utterance. Writes wav/, emb/ and three
// manifests under dir.
SynthDatasetPaths make_synthetic_dataset(const std::filesystem::path& dir, const SynthDatasetSpec& spec);

}  // namespace modfuse
