#include "gmcnn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace gmcnn {

namespace {

constexpr char kMagic[4] = {'G', 'M', 'C', 'N'};

class Writer {
public:
    template <class T>
    void put(T v) {
        for (std::size_t i = 0; i < sizeof(T); ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void put_bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        bytes.insert(bytes.end(), b, b + n);
    }
    std::vector<std::uint8_t> bytes;
};

class Reader {
public:
    Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

    template <class T>
    T get(const char* what) {
        need(sizeof(T), what);
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(data_[pos_ + i]) << (8 * i));
        pos_ += sizeof(T);
        return v;
    }
    std::string get_string(std::size_t n, const char* what) {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
        pos_ += n;
        return s;
    }
    std::size_t remaining() const { return size_ - pos_; }

private:
    void need(std::size_t n, const char* what) const {
        if (size_ - pos_ < n) throw CheckpointError(std::string("checkpoint truncated while reading ") + what);
    }
    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= data[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::vector<std::uint8_t> Checkpoint::serialize() const {
    Writer w;
    w.put_bytes(kMagic, 4);
    w.put<std::uint32_t>(kCheckpointVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        if (name.size() > 0xffff) throw CheckpointError("tensor name too long: " + name.substr(0, 32) + "...");
        w.put<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
        w.put_bytes(name.data(), name.size());
        const Shape& s = t.shape();
        w.put<std::uint8_t>(4);
        for (int d : {s.n, s.h, s.w, s.c}) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
        for (double v : t.data()) w.put<std::uint32_t>(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    w.put<std::uint32_t>(static_cast<std::uint32_t>(config_text.size()));
    w.put_bytes(config_text.data(), config_text.size());
    w.put<std::uint64_t>(fnv1a64(w.bytes.data(), w.bytes.size()));
    return std::move(w.bytes);
}

Checkpoint Checkpoint::deserialize(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw CheckpointError("bad checkpoint magic");
    if (bytes.size() < 8 + 8) throw CheckpointError("checkpoint truncated");
    Reader r(bytes.data() + 4, bytes.size() - 4);
    const auto version = r.get<std::uint32_t>("version");
    if (version != kCheckpointVersion) {
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    }
    const std::size_t body = bytes.size() - 8;
    std::uint64_t stored = 0;
    for (int i = 0; i < 8; ++i) stored |= static_cast<std::uint64_t>(bytes[body + i]) << (8 * i);
    if (stored != fnv1a64(bytes.data(), body)) throw CheckpointError("checkpoint digest mismatch");

    Reader in(bytes.data() + 8, body - 8);
    Checkpoint ck;
    const auto count = in.get<std::uint32_t>("tensor count");
    std::string previous;
    for (std::uint32_t k = 0; k < count; ++k) {
        const auto len = in.get<std::uint16_t>("name length");
        std::string name = in.get_string(len, "tensor name");
        if (k > 0 && !(previous < name)) throw CheckpointError("tensor table not sorted at '" + name + "'");
        const auto rank = in.get<std::uint8_t>("rank");
        if (rank < 1 || rank > 4) throw CheckpointError("tensor '" + name + "' has unsupported rank");
        int dims[4] = {1, 1, 1, 1};
        for (int i = 0; i < rank; ++i) {
            const auto d = in.get<std::uint32_t>("dims");
            if (d > (1u << 30)) throw CheckpointError("tensor '" + name + "' has an implausible dimension");
            dims[4 - rank + i] = static_cast<int>(d);
        }
        const Shape shape{dims[0], dims[1], dims[2], dims[3]};
        if (shape.numel() * 4 > in.remaining()) throw CheckpointError("checkpoint truncated in tensor '" + name + "'");
        std::vector<double> values(shape.numel());
        for (double& v : values) v = std::bit_cast<float>(in.get<std::uint32_t>("values"));
        ck.tensors.emplace(name, Tensor::from_data(shape, std::move(values)));
        previous = std::move(name);
    }
    const auto cfg_len = in.get<std::uint32_t>("config length");
    ck.config_text = in.get_string(cfg_len, "config text");
    if (in.remaining() != 0) throw CheckpointError("trailing bytes after config block");
    return ck;
}

void Checkpoint::save(const std::string& path) const {
    const auto bytes = serialize();
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw CheckpointError("cannot open '" + tmp + "' for writing");
        f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!f) throw CheckpointError("write failed for '" + tmp + "'");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw CheckpointError("cannot move checkpoint to '" + path + "'");
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot open checkpoint '" + path + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    try {
        return deserialize(bytes);
    } catch (const CheckpointError& e) {
        throw CheckpointError(path + ": " + e.what());
    }
}

const Tensor& Checkpoint::at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw CheckpointError("checkpoint has no tensor '" + name + "'");
    return it->second;
}

NamedTensors Checkpoint::with_prefix(const std::string& prefix) const {
    NamedTensors out;
    for (auto it = tensors.lower_bound(prefix); it != tensors.end() && it->first.starts_with(prefix); ++it) {
        out.emplace(it->first.substr(prefix.size()), it->second);
    }
    return out;
}

void Checkpoint::put(const std::string& prefix, const NamedTensors& group) {
    for (const auto& [name, t] : group) tensors[prefix + name] = t.copy(false);
}

}  // namespace gmcnn
