#include "ovc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ovc/error.hpp"

namespace ovc {

namespace {

constexpr char kMagic[5] = {'O', 'V', 'C', 'K', '1'};

class Writer {
  public:
    void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
    void u32(std::uint32_t v) { le(v); }
    void u64(std::uint64_t v) { le(v); }
    void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s) {
        u64(s.size());
        bytes(s.data(), s.size());
    }
    std::string& data() { return out_; }

  private:
    template <typename U>
    void le(U v) {
        for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    std::string out_;
};

class Reader {
  public:
    Reader(const std::string& data, std::size_t end) : data_(data), end_(end) {}

    void bytes(void* p, std::size_t n) {
        need(n);
        std::memcpy(p, data_.data() + pos_, n);
        pos_ += n;
    }
    std::uint32_t u32() { return le<std::uint32_t>(); }
    std::uint64_t u64() { return le<std::uint64_t>(); }
    double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
    std::string str() {
        const std::uint64_t n = u64();
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == end_; }

  private:
    void need(std::uint64_t n) const {
        if (n > end_ - pos_) throw IoError("checkpoint truncated");
    }
    template <typename U>
    U le() {
        need(sizeof(U));
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) {
            v |= static_cast<U>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        }
        pos_ += sizeof(U);
        return v;
    }
    const std::string& data_;
    std::size_t end_;
    std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string serialize_checkpoint(const Checkpoint& ck) {
    Writer w;
    w.bytes(kMagic, sizeof kMagic);
    w.u32(kCheckpointVersion);
    w.str(to_text(ck.config));
    w.u64(ck.vocab.size());
    for (const auto& t : ck.vocab.tokens()) w.str(t);
    w.u64(ck.epoch);
    w.u64(ck.history.size());
    for (const auto& e : ck.history) {
        w.u64(e.epoch);
        w.f64(e.l_cap);
        w.f64(e.l_de);
        w.f64(e.total);
    }
    std::uint64_t count = 0;
    ck.params.visit([&count](const std::string&, const Mat<double>&) { ++count; });
    w.u64(count);
    ck.params.visit([&w](const std::string& name, const Mat<double>& m) {
        w.str(name);
        w.u64(static_cast<std::uint64_t>(m.rows()));
        w.u64(static_cast<std::uint64_t>(m.cols()));
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            for (Eigen::Index r = 0; r < m.rows(); ++r) w.f64(m(r, c));
        }
    });
    const std::uint64_t sum = fnv1a64(w.data().data(), w.data().size());
    w.u64(sum);
    return std::move(w.data());
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
    if (bytes.size() < sizeof kMagic + 4 + 8 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
        throw IoError("not a checkpoint (bad magic)");
    }
    const std::size_t body = bytes.size() - 8;
    {
        Reader r(bytes, bytes.size());
        char magic[5];
        r.bytes(magic, 5);
        const std::uint32_t version = r.u32();
        if (version != kCheckpointVersion) {
            throw IoError("unsupported checkpoint format version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
        }
    }
    std::uint64_t stored = 0;
    for (std::size_t i = 0; i < 8; ++i) stored |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[body + i])) << (8 * i);
    if (stored != fnv1a64(bytes.data(), body)) throw IoError("checkpoint checksum mismatch (file corrupted)");

    Reader r(bytes, body);
    char magic[5];
    r.bytes(magic, 5);
    r.u32();
    Checkpoint ck;
    try {
        ck.config = parse_config(r.str());
    } catch (const Error& e) {
        throw IoError(std::string("checkpoint config unreadable: ") + e.what());
    }
    const std::uint64_t vocab_size = r.u64();
    std::vector<std::string> tokens;
    for (std::uint64_t i = 0; i < vocab_size; ++i) tokens.push_back(r.str());
    try {
        ck.vocab = corpus::Vocabulary::from_tokens(std::move(tokens));
    } catch (const Error& e) {
        throw IoError(std::string("checkpoint vocabulary unreadable: ") + e.what());
    }
    ck.epoch = r.u64();
    const std::uint64_t hist = r.u64();
    for (std::uint64_t i = 0; i < hist; ++i) {
        EpochLog e;
        e.epoch = r.u64();
        e.l_cap = r.f64();
        e.l_de = r.f64();
        e.total = r.f64();
        ck.history.push_back(e);
    }
    const std::uint64_t count = r.u64();
    std::vector<std::pair<std::string, Mat<double>>> arrays;
    for (std::uint64_t i = 0; i < count; ++i) {
        std::string name = r.str();
        const std::uint64_t rows = r.u64(), cols = r.u64();
        if (rows * cols > (body / 8)) throw IoError("checkpoint array " + name + " has implausible shape");
        Mat<double> m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            for (Eigen::Index rr = 0; rr < m.rows(); ++rr) m(rr, c) = r.f64();
        }
        arrays.emplace_back(std::move(name), std::move(m));
    }
    if (!r.done()) throw IoError("checkpoint has trailing bytes");

    const model::ModelDims dims = ck.config.dims(static_cast<int>(ck.vocab.size()));
    ck.params = model::ModelParams<double>::init(dims, 0);
    std::size_t i = 0;
    ck.params.visit([&](const std::string& name, Mat<double>& m) {
        if (i >= arrays.size() || arrays[i].first != name) throw IoError("checkpoint missing parameter " + name);
        if (arrays[i].second.rows() != m.rows() || arrays[i].second.cols() != m.cols()) {
            throw IoError("checkpoint parameter " + name + " has the wrong shape");
        }
        m = std::move(arrays[i].second);
        ++i;
    });
    if (i != arrays.size()) throw IoError("checkpoint has unexpected parameters");
    return ck;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
    const std::string bytes = serialize_checkpoint(checkpoint);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return deserialize_checkpoint(ss.str());
}

}  // namespace ovc
