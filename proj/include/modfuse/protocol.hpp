#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace modfuse {

// Class index order matches the classifier logits.
enum class Label { fake = 0, bonafide = 1 };

inline int label_index(Label l) { return static_cast<int>(l); }
const char* label_name(Label l);
// Accepts "bonafide", "fake" and the dataset spelling "spoof".
std::optional<Label> parse_label(std::string_view s);

struct ProtocolEntry {
    std::string speaker_id;
    std::string utt_id;
    std::optional<std::string> attack_id;
    Label label = Label::bonafide;
    std::optional<std::string> language;
    std::optional<std::filesystem::path> audio_path;
    std::optional<std::filesystem::path> embedding_path;
    std::size_t line = 0;  // 1-based source line

    bool operator==(const ProtocolEntry& o) const {
        return speaker_id == o.speaker_id && utt_id == o.utt_id && attack_id == o.attack_id && label == o.label &&
               language == o.language && audio_path == o.audio_path && embedding_path == o.embedding_path;
    }
};

// ASVspoof CM protocol: "SPEAKER UTT - ATTACK KEY" per line, KEY in
// {bonafide, spoof}. Blank lines are ignored; every other line yields an entry
// or an error that names its line number.
std::vector<ProtocolEntry> parse_asvspoof_protocol_text(std::string_view text, const std::string& source = "<text>");
std::vector<ProtocolEntry> parse_asvspoof_protocol(const std::filesystem::path& path);

// Native TSV manifest. Required header columns: utt_id, label, language,
// audio_path, embedding_path (any order); optional speaker_id and attack_id.
// '#' lines are comments. Relative paths resolve against base_dir.
std::vector<ProtocolEntry> parse_manifest_text(std::string_view text, const std::filesystem::path& base_dir,
                                               const std::string& source = "<text>");
std::vector<ProtocolEntry> parse_manifest(const std::filesystem::path& path);

std::string format_manifest(const std::vector<ProtocolEntry>& entries, const std::filesystem::path& base_dir);
// Paths are written relative to the manifest's directory when they lie under it.
void write_manifest(const std::filesystem::path& path, const std::vector<ProtocolEntry>& entries);

// (w_fake, w_bonafide), inversely proportional to class counts, summing to 2.
std::pair<double, double> class_weights(const std::vector<ProtocolEntry>& entries);
std::pair<double, double> class_weights_from_counts(std::size_t n_fake, std::size_t n_bonafide);

}  // namespace modfuse
