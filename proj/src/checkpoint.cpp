#include "modfuse/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <map>

#include "modfuse/embeddings.hpp"
#include "modfuse/error.hpp"

namespace modfuse {

namespace {

constexpr char kMagic[4] = {'M', 'F', 'C', 'K'};
constexpr std::uint16_t kVersion = 1;

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>((u >> (8 * i)) & 0xff));
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        std::make_unsigned_t<T> v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            v |= static_cast<std::make_unsigned_t<T>>(static_cast<std::make_unsigned_t<T>>(bytes_[pos_ + i]) << (8 * i));
        }
        pos_ += sizeof(T);
        return static_cast<T>(v);
    }

    std::string get_string(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data()) + pos_, n);
        pos_ += n;
        return s;
    }

    EmbeddingMatrix get_section() {
        std::size_t used = 0;
        auto m = decode_matrix(bytes_.subspan(pos_), &used);
        pos_ += used;
        return m;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw Error(ErrorCode::truncation, "checkpoint truncated");
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

void append(std::vector<std::uint8_t>& out, const std::vector<std::uint8_t>& part) {
    out.insert(out.end(), part.begin(), part.end());
}

}  // namespace

Detector clone_detector(const Detector& d) {
    auto copy_layer = [](const nn::AffineLayer& l) {
        return nn::AffineLayer::from_values(l.weight.value(), l.bias.value());
    };
    Detector c;
    c.fusion.config = d.fusion.config;
    c.fusion.proj_ssl = copy_layer(d.fusion.proj_ssl);
    c.fusion.q_layer = copy_layer(d.fusion.q_layer);
    c.fusion.k_layer = copy_layer(d.fusion.k_layer);
    c.fusion.v_layer = copy_layer(d.fusion.v_layer);
    c.fusion.out_layer = copy_layer(d.fusion.out_layer);
    c.head.config = d.head.config;
    c.head.hidden = copy_layer(d.head.hidden);
    c.head.out = copy_layer(d.head.out);
    return c;
}

CheckpointBundle clone_bundle(const CheckpointBundle& b) {
    CheckpointBundle c = b;
    c.detector = clone_detector(b.detector);
    return c;
}

std::vector<std::uint8_t> encode_checkpoint(const CheckpointBundle& bundle) {
    std::vector<std::uint8_t> out(kMagic, kMagic + 4);
    put_le<std::uint16_t>(out, kVersion);
    const std::string config = bundle.config.to_text();
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(config.size()));
    out.insert(out.end(), config.begin(), config.end());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(bundle.epoch));
    put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(bundle.best_dev_loss));
    put_le<std::int64_t>(out, bundle.adam.step);
    put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(bundle.adam.learning_rate));

    const auto params = bundle.detector.named_params();
    const bool has_moments = !bundle.adam.m.empty();
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size() * (has_moments ? 3 : 1)));
    for (const auto& p : params) {
        append(out, encode_matrix({p.name, "PARM", p.tensor.value()}, MatrixDType::f64));
    }
    if (has_moments) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            append(out, encode_matrix({params[i].name, "ADMM", bundle.adam.m[i]}, MatrixDType::f64));
            append(out, encode_matrix({params[i].name, "ADMV", bundle.adam.v[i]}, MatrixDType::f64));
        }
    }
    return out;
}

CheckpointBundle decode_checkpoint(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw Error(ErrorCode::format, "not a checkpoint (bad magic)");
    }
    Reader r(bytes.subspan(4));
    if (r.get<std::uint16_t>() != kVersion) throw Error(ErrorCode::format, "unsupported checkpoint version");
    const auto config_len = r.get<std::uint32_t>();
    CheckpointBundle b;
    b.config = parse_config(r.get_string(config_len), "<checkpoint config>");
    b.epoch = static_cast<int>(r.get<std::uint32_t>());
    b.best_dev_loss = std::bit_cast<double>(r.get<std::uint64_t>());
    b.adam.step = r.get<std::int64_t>();
    b.adam.learning_rate = std::bit_cast<double>(r.get<std::uint64_t>());

    // Architecture comes from the config snapshot; every parameter must match it.
    b.detector = Detector::init(b.config.fusion_config(), b.config.head_config(), b.config.seed);
    auto params = b.detector.named_params();
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < params.size(); ++i) index[params[i].name] = i;

    const auto sections = r.get<std::uint32_t>();
    std::vector<bool> loaded(params.size(), false);
    std::vector<Matrix> m(params.size()), v(params.size());
    std::size_t moments = 0;
    for (std::uint32_t s = 0; s < sections; ++s) {
        auto section = r.get_section();
        auto it = index.find(section.utt_id);
        if (it == index.end()) throw Error(ErrorCode::format, "checkpoint has unknown parameter '" + section.utt_id + "'");
        nn::Tensor& target = params[it->second].tensor;
        if (section.values.rows() != target.rows() || section.values.cols() != target.cols()) {
            throw Error(ErrorCode::shape, "checkpoint parameter '" + section.utt_id + "' has the wrong shape");
        }
        if (section.kind == "PARM") {
            target.mutable_value() = std::move(section.values);
            loaded[it->second] = true;
        } else if (section.kind == "ADMM") {
            m[it->second] = std::move(section.values);
            ++moments;
        } else if (section.kind == "ADMV") {
            v[it->second] = std::move(section.values);
            ++moments;
        } else {
            throw Error(ErrorCode::format, "unknown checkpoint section kind " + section.kind);
        }
    }
    if (!r.done()) throw Error(ErrorCode::format, "trailing bytes after checkpoint sections");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!loaded[i]) throw Error(ErrorCode::format, "checkpoint is missing parameter '" + params[i].name + "'");
    }
    if (moments != 0) {
        if (moments != 2 * params.size()) throw Error(ErrorCode::format, "checkpoint has incomplete Adam moments");
        b.adam.m = std::move(m);
        b.adam.v = std::move(v);
    }
    return b;
}

void save_checkpoint(const std::filesystem::path& path, const CheckpointBundle& bundle) {
    write_file_bytes(path, encode_checkpoint(bundle));
}

CheckpointBundle load_checkpoint(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    try {
        return decode_checkpoint(bytes);
    } catch (const Error& e) {
        throw Error(e.code(), path.string() + ": " + e.what());
    }
}

}  // namespace modfuse
