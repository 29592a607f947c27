#include "modfuse/protocol.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

#include "modfuse/error.hpp"

namespace modfuse {

namespace fs = std::filesystem;

const char* label_name(Label l) { return l == Label::bonafide ? "bonafide" : "fake"; }

std::optional<Label> parse_label(std::string_view s) {
    if (s == "bonafide") return Label::bonafide;
    if (s == "fake" || s == "spoof") return Label::fake;
    return std::nullopt;
}

namespace {

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        if (end == text.size()) break;
        start = end + 1;
    }
    if (!lines.empty() && lines.back().empty()) lines.pop_back();
    return lines;
}

std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        const std::size_t start = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (i > start) out.push_back(line.substr(start, i - start));
    }
    return out;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t tab = line.find('\t', start);
        if (tab == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
}

bool is_blank(std::string_view line) {
    return std::all_of(line.begin(), line.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
}

std::string positioned(const std::string& source, std::size_t line, const std::string& what) {
    return source + ":" + std::to_string(line) + ": " + what;
}

std::string lowercase(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::optional<std::string> optional_field(std::string_view v) {
    if (v.empty() || v == "-") return std::nullopt;
    return std::string(v);
}

}  // namespace

std::vector<ProtocolEntry> parse_asvspoof_protocol_text(std::string_view text, const std::string& source) {
    std::vector<ProtocolEntry> entries;
    std::unordered_set<std::string> seen;
    const auto lines = split_lines(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::size_t line_no = i + 1;
        if (is_blank(lines[i])) continue;
        const auto fields = split_ws(lines[i]);
        if (fields.size() != 5) {
            throw Error(ErrorCode::parse,
                        positioned(source, line_no, "expected 5 fields, got " + std::to_string(fields.size())));
        }
        const auto label = fields[4] == "bonafide" ? std::optional<Label>(Label::bonafide)
                           : fields[4] == "spoof"  ? std::optional<Label>(Label::fake)
                                                   : std::nullopt;
        if (!label) {
            throw Error(ErrorCode::label, positioned(source, line_no, "unknown key '" + std::string(fields[4]) + "'"));
        }
        ProtocolEntry e;
        e.speaker_id = std::string(fields[0]);
        e.utt_id = std::string(fields[1]);
        e.attack_id = optional_field(fields[3]);
        e.label = *label;
        e.line = line_no;
        if (!seen.insert(e.utt_id).second) {
            throw Error(ErrorCode::duplicate, positioned(source, line_no, "duplicate utterance '" + e.utt_id + "'"));
        }
        entries.push_back(std::move(e));
    }
    return entries;
}

std::vector<ProtocolEntry> parse_asvspoof_protocol(const fs::path& path) {
    return parse_asvspoof_protocol_text(read_text(path), path.string());
}

std::vector<ProtocolEntry> parse_manifest_text(std::string_view text, const fs::path& base_dir, const std::string& source) {
    const auto lines = split_lines(text);
    std::size_t i = 0;
    while (i < lines.size() && (lines[i].starts_with('#') || is_blank(lines[i]))) ++i;
    if (i == lines.size()) throw Error(ErrorCode::empty_manifest, source + ": manifest is empty");

    const auto header = split_tabs(lines[i]);
    std::map<std::string, std::size_t, std::less<>> column;
    for (std::size_t c = 0; c < header.size(); ++c) column.emplace(std::string(header[c]), c);
    for (const char* required : {"utt_id", "label", "language", "audio_path", "embedding_path"}) {
        if (!column.contains(required)) {
            throw Error(ErrorCode::schema, positioned(source, i + 1, std::string("missing header column '") + required + "'"));
        }
    }
    auto col = [&](const char* name) -> std::optional<std::size_t> {
        auto it = column.find(name);
        return it == column.end() ? std::nullopt : std::optional(it->second);
    };

    auto resolve = [&](std::string_view v) -> std::optional<fs::path> {
        if (v.empty()) return std::nullopt;
        fs::path p{std::string(v)};
        if (p.is_relative()) p = base_dir / p;
        return p.lexically_normal();
    };

    std::vector<ProtocolEntry> entries;
    std::unordered_set<std::string> seen;
    for (++i; i < lines.size(); ++i) {
        const std::size_t line_no = i + 1;
        if (lines[i].starts_with('#') || lines[i].empty()) continue;
        const auto fields = split_tabs(lines[i]);
        if (fields.size() != header.size()) {
            throw Error(ErrorCode::parse, positioned(source, line_no, "expected " + std::to_string(header.size()) +
                                                                          " columns, got " + std::to_string(fields.size())));
        }
        ProtocolEntry e;
        e.line = line_no;
        e.utt_id = std::string(fields[*col("utt_id")]);
        if (e.utt_id.empty()) throw Error(ErrorCode::parse, positioned(source, line_no, "empty utt_id"));
        const auto label = parse_label(fields[*col("label")]);
        if (!label) {
            throw Error(ErrorCode::label,
                        positioned(source, line_no, "unknown label '" + std::string(fields[*col("label")]) + "'"));
        }
        e.label = *label;
        if (auto lang = optional_field(fields[*col("language")])) e.language = lowercase(*lang);
        e.audio_path = resolve(fields[*col("audio_path")]);
        e.embedding_path = resolve(fields[*col("embedding_path")]);
        if (auto c = col("speaker_id")) e.speaker_id = std::string(fields[*c] == "-" ? "" : fields[*c]);
        if (auto c = col("attack_id")) e.attack_id = optional_field(fields[*c]);
        if (!seen.insert(e.utt_id).second) {
            throw Error(ErrorCode::duplicate, positioned(source, line_no, "duplicate utterance '" + e.utt_id + "'"));
        }
        entries.push_back(std::move(e));
    }
    return entries;
}

std::vector<ProtocolEntry> parse_manifest(const fs::path& path) {
    return parse_manifest_text(read_text(path), path.parent_path(), path.string());
}

std::string format_manifest(const std::vector<ProtocolEntry>& entries, const fs::path& base_dir) {
    const fs::path base = base_dir.lexically_normal();
    auto path_field = [&](const std::optional<fs::path>& p) -> std::string {
        if (!p) return "";
        const fs::path rel = p->lexically_normal().lexically_relative(base);
        if (!base.empty() && !rel.empty() && *rel.begin() != "..") return rel.generic_string();
        return p->generic_string();
    };
    std::ostringstream out;
    out << "utt_id\tlabel\tlanguage\taudio_path\tembedding_path\tspeaker_id\tattack_id\n";
    for (const auto& e : entries) {
        out << e.utt_id << '\t' << label_name(e.label) << '\t' << e.language.value_or("") << '\t'
            << path_field(e.audio_path) << '\t' << path_field(e.embedding_path) << '\t'
            << (e.speaker_id.empty() ? "-" : e.speaker_id) << '\t' << e.attack_id.value_or("-") << '\n';
    }
    return out.str();
}

void write_manifest(const fs::path& path, const std::vector<ProtocolEntry>& entries) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
    out << format_manifest(entries, path.parent_path());
    if (!out) throw Error(ErrorCode::io, "write failed for " + path.string());
}

std::pair<double, double> class_weights_from_counts(std::size_t n_fake, std::size_t n_bonafide) {
    if (n_fake == 0 || n_bonafide == 0) {
        throw Error(ErrorCode::degenerate, "class weights need both classes (fake " + std::to_string(n_fake) +
                                               ", bonafide " + std::to_string(n_bonafide) + ")");
    }
    const double inv_f = 1.0 / static_cast<double>(n_fake);
    const double inv_b = 1.0 / static_cast<double>(n_bonafide);
    const double norm = 2.0 / (inv_f + inv_b);
    return {inv_f * norm, inv_b * norm};
}

std::pair<double, double> class_weights(const std::vector<ProtocolEntry>& entries) {
    std::size_t fake = 0, bona = 0;
    for (const auto& e : entries) (e.label == Label::fake ? fake : bona) += 1;
    return class_weights_from_counts(fake, bona);
}

}  // namespace modfuse
