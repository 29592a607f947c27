#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "modfuse/protocol.hpp"

namespace modfuse {

struct ScoreRecord {
    std::string utt_id;
    Label label = Label::bonafide;
    double score = 0.0;  // higher leans bonafide
    std::optional<std::string> group;

    bool operator==(const ScoreRecord&) const = default;
};

struct OperatingPoint {
    double threshold = 0.0;  // may be +/- infinity at the ends of the sweep
    double p_fa = 0.0;       // fake scores >= threshold
    double p_miss = 0.0;     // bonafide scores < threshold
};

struct EerResult {
    double eer = 0.0;
    double threshold = 0.0;
    std::size_t n_bonafide = 0;
    std::size_t n_fake = 0;
    // Grid points bracketing the crossing; equal when the rates meet exactly.
    OperatingPoint below;
    OperatingPoint above;
};

// Threshold sweep over every distinct score plus -inf and +inf. Where the
// step curves cross between two grid points the rates are interpolated
// linearly and the EER is the value at which they coincide.
EerResult compute_eer(std::span<const ScoreRecord> records);
EerResult compute_eer(std::span<const double> bonafide_scores, std::span<const double> fake_scores);

struct GroupedEer {
    std::map<std::string, EerResult> groups;
    std::map<std::string, std::size_t> skipped;  // group -> fake count below min_count
};

// Per group g: all bonafide records against the fake records whose group is g.
GroupedEer grouped_eer(std::span<const ScoreRecord> records, std::size_t min_count = 100);

struct DensityTable {
    std::vector<double> edges;    // n_bins + 1, shared across labels
    std::vector<double> centers;
    std::vector<double> bonafide;  // histogram density, area 1 when the label is present
    std::vector<double> fake;
    std::vector<double> kde_bonafide;  // Gaussian-kernel curve at centers, when requested
    std::vector<double> kde_fake;
    bool degenerate = false;  // every score identical; single unit-width bin
};

DensityTable density_export(std::span<const ScoreRecord> records, std::size_t n_bins,
                            std::optional<double> bandwidth = std::nullopt);
std::string format_density_csv(const DensityTable& table);

// 100 * (baseline - proposed) / baseline
double relative_improvement(double baseline_eer, double proposed_eer);

// Score file: TSV with header "utt_id\tlabel\tgroup\tscore"; "-" for no group.
std::string score_file_header();
std::string format_score_line(const ScoreRecord& r);
std::vector<ScoreRecord> parse_score_text(std::string_view text, const std::string& source = "<text>");
std::vector<ScoreRecord> read_score_file(const std::filesystem::path& path);
void write_score_file(const std::filesystem::path& path, std::span<const ScoreRecord> records);

// Shortest round-trip decimal representation.
std::string format_double(double v);

}  // namespace modfuse
