#include "modfuse/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "modfuse/error.hpp"

namespace modfuse {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

EerResult compute_eer(std::span<const double> bonafide_scores, std::span<const double> fake_scores) {
    if (bonafide_scores.empty() || fake_scores.empty()) {
        throw Error(ErrorCode::degenerate, "EER needs at least one bonafide and one fake score (got " +
                                               std::to_string(bonafide_scores.size()) + " and " +
                                               std::to_string(fake_scores.size()) + ")");
    }
    std::vector<double> bona(bonafide_scores.begin(), bonafide_scores.end());
    std::vector<double> fake(fake_scores.begin(), fake_scores.end());
    for (double s : bona) {
        if (!std::isfinite(s)) throw Error(ErrorCode::data, "non-finite score");
    }
    for (double s : fake) {
        if (!std::isfinite(s)) throw Error(ErrorCode::data, "non-finite score");
    }
    std::sort(bona.begin(), bona.end());
    std::sort(fake.begin(), fake.end());
    const double nb = static_cast<double>(bona.size());
    const double nf = static_cast<double>(fake.size());

    EerResult result;
    result.n_bonafide = bona.size();
    result.n_fake = fake.size();

    OperatingPoint prev{-kInf, 1.0, 0.0};
    std::size_t ib = 0, jf = 0;  // counts of bonafide / fake strictly below the current threshold
    auto settle = [&](const OperatingPoint& cur) {
        result.below = prev;
        result.above = cur;
        const double d_prev = prev.p_fa - prev.p_miss;
        const double d_cur = cur.p_fa - cur.p_miss;
        if (d_cur == 0.0) {
            result.below = cur;
            result.eer = cur.p_fa;
            result.threshold = cur.threshold;
            return;
        }
        const double alpha = d_prev / (d_prev - d_cur);
        result.eer = prev.p_fa + alpha * (cur.p_fa - prev.p_fa);
        if (std::isinf(prev.threshold)) {
            result.threshold = cur.threshold;
        } else if (std::isinf(cur.threshold)) {
            result.threshold = prev.threshold;
        } else {
            result.threshold = prev.threshold + alpha * (cur.threshold - prev.threshold);
        }
    };

    while (ib < bona.size() || jf < fake.size()) {
        const double tau = std::min(ib < bona.size() ? bona[ib] : kInf, jf < fake.size() ? fake[jf] : kInf);
        const OperatingPoint cur{tau, (nf - static_cast<double>(jf)) / nf, static_cast<double>(ib) / nb};
        if (cur.p_miss >= cur.p_fa) {
            settle(cur);
            return result;
        }
        prev = cur;
        while (ib < bona.size() && bona[ib] == tau) ++ib;
        while (jf < fake.size() && fake[jf] == tau) ++jf;
    }
    settle({kInf, 0.0, 1.0});
    return result;
}

EerResult compute_eer(std::span<const ScoreRecord> records) {
    std::vector<double> bona, fake;
    for (const auto& r : records) (r.label == Label::bonafide ? bona : fake).push_back(r.score);
    return compute_eer(bona, fake);
}

GroupedEer grouped_eer(std::span<const ScoreRecord> records, std::size_t min_count) {
    std::vector<double> bona;
    std::map<std::string, std::vector<double>> fakes;
    for (const auto& r : records) {
        if (r.label == Label::bonafide) {
            bona.push_back(r.score);
        } else if (r.group) {
            fakes[*r.group].push_back(r.score);
        }
    }
    if (bona.empty()) throw Error(ErrorCode::degenerate, "grouped EER needs bonafide scores");
    GroupedEer out;
    for (const auto& [group, scores] : fakes) {
        if (scores.size() < min_count) {
            out.skipped[group] = scores.size();
        } else {
            out.groups[group] = compute_eer(bona, scores);
        }
    }
    if (out.groups.empty()) {
        throw Error(ErrorCode::empty_result, "no group has at least " + std::to_string(min_count) + " fake records");
    }
    return out;
}

DensityTable density_export(std::span<const ScoreRecord> records, std::size_t n_bins, std::optional<double> bandwidth) {
    if (n_bins < 2) throw Error(ErrorCode::parameter, "density export needs at least 2 bins");
    if (records.empty()) throw Error(ErrorCode::empty_input, "density export of no scores");
    if (bandwidth && !(*bandwidth > 0.0)) throw Error(ErrorCode::parameter, "KDE bandwidth must be positive");

    double lo = records[0].score, hi = records[0].score;
    std::size_t nb = 0, nf = 0;
    for (const auto& r : records) {
        lo = std::min(lo, r.score);
        hi = std::max(hi, r.score);
        (r.label == Label::bonafide ? nb : nf) += 1;
    }

    DensityTable t;
    if (lo == hi) {
        t.degenerate = true;
        n_bins = 1;
        lo -= 0.5;
        hi += 0.5;
    }
    const double width = (hi - lo) / static_cast<double>(n_bins);
    t.edges.resize(n_bins + 1);
    for (std::size_t i = 0; i <= n_bins; ++i) t.edges[i] = lo + width * static_cast<double>(i);
    t.edges.back() = hi;
    t.centers.resize(n_bins);
    for (std::size_t i = 0; i < n_bins; ++i) t.centers[i] = 0.5 * (t.edges[i] + t.edges[i + 1]);
    t.bonafide.assign(n_bins, 0.0);
    t.fake.assign(n_bins, 0.0);

    for (const auto& r : records) {
        auto bin = static_cast<std::size_t>(std::floor((r.score - lo) / width));
        bin = std::min(bin, n_bins - 1);
        (r.label == Label::bonafide ? t.bonafide : t.fake)[bin] += 1.0;
    }
    for (std::size_t i = 0; i < n_bins; ++i) {
        if (nb) t.bonafide[i] /= static_cast<double>(nb) * width;
        if (nf) t.fake[i] /= static_cast<double>(nf) * width;
    }

    if (bandwidth) {
        const double h = *bandwidth;
        const double norm = 1.0 / (h * std::sqrt(2.0 * std::numbers::pi));
        t.kde_bonafide.assign(n_bins, 0.0);
        t.kde_fake.assign(n_bins, 0.0);
        for (const auto& r : records) {
            auto& curve = r.label == Label::bonafide ? t.kde_bonafide : t.kde_fake;
            for (std::size_t i = 0; i < n_bins; ++i) {
                const double z = (t.centers[i] - r.score) / h;
                curve[i] += norm * std::exp(-0.5 * z * z);
            }
        }
        for (std::size_t i = 0; i < n_bins; ++i) {
            if (nb) t.kde_bonafide[i] /= static_cast<double>(nb);
            if (nf) t.kde_fake[i] /= static_cast<double>(nf);
        }
    }
    return t;
}

std::string format_density_csv(const DensityTable& t) {
    std::ostringstream out;
    const bool kde = !t.kde_bonafide.empty();
    out << "bin_center,density_bonafide,density_fake";
    if (kde) out << ",kde_bonafide,kde_fake";
    out << '\n';
    for (std::size_t i = 0; i < t.centers.size(); ++i) {
        out << format_double(t.centers[i]) << ',' << format_double(t.bonafide[i]) << ',' << format_double(t.fake[i]);
        if (kde) out << ',' << format_double(t.kde_bonafide[i]) << ',' << format_double(t.kde_fake[i]);
        out << '\n';
    }
    return out.str();
}

double relative_improvement(double baseline_eer, double proposed_eer) {
    if (!(baseline_eer > 0.0)) {
        throw Error(ErrorCode::undefined_improvement, "relative improvement needs a positive baseline EER");
    }
    return 100.0 * (baseline_eer - proposed_eer) / baseline_eer;
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string score_file_header() { return "utt_id\tlabel\tgroup\tscore"; }

std::string format_score_line(const ScoreRecord& r) {
    return r.utt_id + '\t' + label_name(r.label) + '\t' + r.group.value_or("-") + '\t' + format_double(r.score);
}

std::vector<ScoreRecord> parse_score_text(std::string_view text, const std::string& source) {
    std::vector<ScoreRecord> records;
    std::size_t line_no = 0;
    std::size_t start = 0;
    bool header_seen = false;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        start = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        if (!header_seen) {
            if (line != score_file_header()) {
                throw Error(ErrorCode::schema, source + ":" + std::to_string(line_no) + ": expected header '" +
                                                   score_file_header() + "'");
            }
            header_seen = true;
            continue;
        }
        std::vector<std::string_view> f;
        std::size_t s = 0;
        while (true) {
            const std::size_t tab = line.find('\t', s);
            f.push_back(line.substr(s, tab == std::string_view::npos ? std::string_view::npos : tab - s));
            if (tab == std::string_view::npos) break;
            s = tab + 1;
        }
        auto fail = [&](const std::string& what) {
            return Error(ErrorCode::parse, source + ":" + std::to_string(line_no) + ": " + what);
        };
        if (f.size() != 4) throw fail("expected 4 columns, got " + std::to_string(f.size()));
        ScoreRecord r;
        r.utt_id = std::string(f[0]);
        const auto label = parse_label(f[1]);
        if (!label) throw Error(ErrorCode::label, source + ":" + std::to_string(line_no) + ": unknown label");
        r.label = *label;
        if (f[2] != "-" && !f[2].empty()) r.group = std::string(f[2]);
        const auto res = std::from_chars(f[3].data(), f[3].data() + f[3].size(), r.score);
        if (res.ec != std::errc() || res.ptr != f[3].data() + f[3].size()) throw fail("bad score '" + std::string(f[3]) + "'");
        if (!std::isfinite(r.score)) throw fail("non-finite score");
        records.push_back(std::move(r));
    }
    if (!header_seen) throw Error(ErrorCode::schema, source + ": missing score file header");
    return records;
}

std::vector<ScoreRecord> read_score_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_score_text(ss.str(), path.string());
}

void write_score_file(const std::filesystem::path& path, std::span<const ScoreRecord> records) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
    out << score_file_header() << '\n';
    for (const auto& r : records) out << format_score_line(r) << '\n';
    if (!out) throw Error(ErrorCode::io, "write failed for " + path.string());
}

}  // namespace modfuse
