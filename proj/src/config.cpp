#include "modfuse/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "modfuse/error.hpp"
#include "modfuse/metrics.hpp"

namespace modfuse {

RunConfig RunConfig::full() { return RunConfig{}; }

RunConfig RunConfig::desk() {
    RunConfig c;
    c.preset = "desk";
    c.learning_rate = 1e-3;
    c.epochs = 12;
    c.feature_transform = FeatureTransform::log1p;
    return c;
}

void RunConfig::validate() const {
    auto bad = [](const std::string& what) { return Error(ErrorCode::parameter, "config: " + what); };
    if (!(learning_rate > 0.0)) throw bad("learning_rate must be positive");
    if (batch_size <= 0) throw bad("batch_size must be positive");
    if (epochs < 0) throw bad("epochs must be non-negative");
    if (heads <= 0 || model_dim <= 0 || proj_dim <= 0 || hidden_dim <= 0) throw bad("dimensions must be positive");
    if (model_dim % heads != 0) throw bad("heads must divide model_dim");
    if (class_weights && !(class_weights->first > 0.0 && class_weights->second > 0.0)) {
        throw bad("class weights must be positive");
    }
}

FusionConfig RunConfig::fusion_config() const {
    FusionConfig f;
    f.heads = heads;
    f.model_dim = model_dim;
    f.proj_dim = proj_dim;
    return f;
}

HeadConfig RunConfig::head_config() const {
    HeadConfig h;
    h.input_dim = 2 * model_dim;
    h.hidden_dim = hidden_dim;
    return h;
}

std::string RunConfig::to_text() const {
    std::ostringstream out;
    out << "preset = " << preset << '\n';
    out << "seed = " << seed << '\n';
    out << "learning_rate = " << format_double(learning_rate) << '\n';
    out << "batch_size = " << batch_size << '\n';
    out << "epochs = " << epochs << '\n';
    if (class_weights) {
        out << "class_weights = " << format_double(class_weights->first) << ',' << format_double(class_weights->second)
            << '\n';
    } else {
        out << "class_weights = auto\n";
    }
    out << "window = " << window_name(window) << '\n';
    out << "feature_transform = " << (feature_transform == FeatureTransform::log1p ? "log1p" : "none") << '\n';
    out << "heads = " << heads << '\n';
    out << "model_dim = " << model_dim << '\n';
    out << "proj_dim = " << proj_dim << '\n';
    out << "hidden_dim = " << hidden_dim << '\n';
    out << "augment_noise_snr_db = " << (augment_noise_snr_db ? format_double(*augment_noise_snr_db) : "none") << '\n';
    if (cache_dir) out << "cache_dir = \"" << cache_dir->generic_string() << "\"\n";
    return out.str();
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& v, const std::string& where) {
    T out{};
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
        throw Error(ErrorCode::parameter, where + ": expected a number, got '" + v + "'");
    }
    return out;
}

void apply_key(RunConfig& c, const std::string& key, const std::string& value, const std::string& where) {
    if (key == "seed") {
        c.seed = parse_number<std::uint64_t>(value, where);
    } else if (key == "learning_rate") {
        c.learning_rate = parse_number<double>(value, where);
    } else if (key == "batch_size") {
        c.batch_size = parse_number<int>(value, where);
    } else if (key == "epochs") {
        c.epochs = parse_number<int>(value, where);
    } else if (key == "class_weights") {
        if (value == "auto") {
            c.class_weights.reset();
        } else {
            const auto comma = value.find(',');
            if (comma == std::string::npos) throw Error(ErrorCode::parameter, where + ": class_weights is 'auto' or 'w_fake,w_bonafide'");
            c.class_weights = std::pair{parse_number<double>(trim(value.substr(0, comma)), where),
                                        parse_number<double>(trim(value.substr(comma + 1)), where)};
        }
    } else if (key == "window") {
        c.window = parse_window(value);
    } else if (key == "feature_transform") {
        if (value == "none") {
            c.feature_transform = FeatureTransform::none;
        } else if (value == "log1p") {
            c.feature_transform = FeatureTransform::log1p;
        } else {
            throw Error(ErrorCode::parameter, where + ": feature_transform is 'none' or 'log1p'");
        }
    } else if (key == "heads") {
        c.heads = parse_number<int>(value, where);
    } else if (key == "model_dim") {
        c.model_dim = parse_number<int>(value, where);
    } else if (key == "proj_dim") {
        c.proj_dim = parse_number<int>(value, where);
    } else if (key == "hidden_dim") {
        c.hidden_dim = parse_number<int>(value, where);
    } else if (key == "augment_noise_snr_db") {
        if (value == "none" || value.empty()) {
            c.augment_noise_snr_db.reset();
        } else {
            c.augment_noise_snr_db = parse_number<double>(value, where);
        }
    } else if (key == "cache_dir") {
        if (value.empty()) {
            c.cache_dir.reset();
        } else {
            c.cache_dir = std::filesystem::path(value);
        }
    } else {
        throw Error(ErrorCode::parameter, where + ": unknown key '" + key + "'");
    }
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::string& source) {
    std::vector<std::tuple<std::string, std::string, std::string>> pairs;
    std::optional<std::string> preset;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string where = source + ":" + std::to_string(line_no);
        std::string body = trim(line);
        if (body.empty() || body[0] == '#') continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) throw Error(ErrorCode::parameter, where + ": expected 'key = value'");
        const std::string key = trim(body.substr(0, eq));
        std::string value = trim(body.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
            value = value.substr(1, value.size() - 2);
        } else if (const auto hash = value.find('#'); hash != std::string::npos) {
            value = trim(value.substr(0, hash));
        }
        if (key == "preset") {
            preset = value;
        } else {
            pairs.emplace_back(key, value, where);
        }
    }
    RunConfig c;
    if (preset) {
        if (*preset == "desk") {
            c = RunConfig::desk();
        } else if (*preset != "full") {
            throw Error(ErrorCode::parameter, source + ": unknown preset '" + *preset + "' (full, desk)");
        }
    }
    for (const auto& [key, value, where] : pairs) apply_key(c, key, value, where);
    c.validate();
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io, "cannot open config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.string());
}

std::optional<std::filesystem::path> effective_cache_dir(const RunConfig& config) {
    if (const char* env = std::getenv("MODFUSE_CACHE_DIR"); env && *env) return std::filesystem::path(env);
    return config.cache_dir;
}

}  // namespace modfuse
