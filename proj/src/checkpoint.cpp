#include <cstring>
#include <fstream>

#include "paseg/model.hpp"

namespace paseg {

namespace {

constexpr char kMagic[8] = {'P', 'S', 'E', 'G', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw CheckpointError("truncated checkpoint file");
    return v;
}

void write_string(std::ostream& out, const std::string& s) {
    write_pod<uint64_t>(out, s.size());
    out.write(s.data(), std::streamsize(s.size()));
}

std::string read_string(std::istream& in) {
    const uint64_t n = read_pod<uint64_t>(in);
    if (n > (1ull << 30)) throw CheckpointError("implausible string length");
    std::string s(n, '\0');
    in.read(s.data(), std::streamsize(n));
    if (!in) throw CheckpointError("truncated checkpoint file");
    return s;
}

void write_tensor(std::ostream& out, const Tensor& t) {
    write_pod<uint8_t>(out, uint8_t(t.ndim()));
    for (int d : t.shape) write_pod<int32_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.data.data()),
              std::streamsize(t.data.size() * sizeof(double)));
}

Tensor read_tensor(std::istream& in) {
    const uint8_t nd = read_pod<uint8_t>(in);
    std::vector<int> shape;
    for (int i = 0; i < nd; ++i) shape.push_back(read_pod<int32_t>(in));
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data.data()),
            std::streamsize(t.data.size() * sizeof(double)));
    if (!in) throw CheckpointError("truncated tensor payload");
    return t;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path);
    out.write(kMagic, sizeof(kMagic));
    write_pod<uint32_t>(out, kVersion);
    write_pod<uint64_t>(out, ckpt.seed);
    write_pod<int32_t>(out, ckpt.epoch);
    write_string(out, ckpt.config_echo);

    uint32_t count = 0;
    ckpt.params.for_each([&](const char*, const Tensor&) { ++count; });
    write_pod<uint32_t>(out, count);
    ckpt.params.for_each([&](const char* name, const Tensor& t) {
        write_string(out, name);
        write_tensor(out, t);
    });

    write_pod<uint8_t>(out, ckpt.adam.has_value() ? 1 : 0);
    if (ckpt.adam) {
        write_pod<int64_t>(out, ckpt.adam->step);
        for (const Tensor& t : ckpt.adam->m) write_tensor(out, t);
        for (const Tensor& t : ckpt.adam->v) write_tensor(out, t);
    }
    if (!out) throw IoError("write failure on checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw CheckpointError("not a checkpoint file: " + path);
    const uint32_t version = read_pod<uint32_t>(in);
    if (version != kVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));

    Checkpoint ckpt;
    ckpt.seed = read_pod<uint64_t>(in);
    ckpt.epoch = read_pod<int32_t>(in);
    ckpt.config_echo = read_string(in);

    const uint32_t count = read_pod<uint32_t>(in);
    uint32_t expected = 0;
    ckpt.params.for_each([&](const char*, Tensor&) { ++expected; });
    if (count != expected) throw CheckpointError("parameter tensor count mismatch");
    ckpt.params.for_each([&](const char* name, Tensor& t) {
        const std::string stored = read_string(in);
        if (stored != name)
            throw CheckpointError("unexpected parameter order: " + stored + " vs " + name);
        t = read_tensor(in);
    });

    const uint8_t has_adam = read_pod<uint8_t>(in);
    if (has_adam) {
        AdamState s;
        s.step = read_pod<int64_t>(in);
        for (uint32_t i = 0; i < count; ++i) s.m.push_back(read_tensor(in));
        for (uint32_t i = 0; i < count; ++i) s.v.push_back(read_tensor(in));
        ckpt.adam = std::move(s);
    }
    return ckpt;
}

}  // namespace paseg
