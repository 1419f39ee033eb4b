#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "litevae/trainer.hpp"

// Checkpoint binary format (little-endian):
//   magic "LVAE" | u32 version=1 | u64 step | u32 config length | config bytes
//   u32 tensor count | per tensor: u16 name length, name bytes, u8 dtype
//   (0=f32, 1=f64), u8 rank, rank x u64 dims, raw row-major data.

namespace litevae {

namespace {

template <typename U>
void write_le(std::ostream& out, U v) {
    char buf[sizeof(U)];
    for (size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(buf, sizeof(U));
}

template <typename U>
U read_le(std::istream& in, const std::string& path) {
    char buf[sizeof(U)];
    in.read(buf, sizeof(U));
    if (in.gcount() != sizeof(U))
        throw CheckpointError(CheckpointError::Kind::Truncated, path + ": truncated checkpoint");
    U v = 0;
    for (size_t i = 0; i < sizeof(U); ++i)
        v |= static_cast<U>(static_cast<unsigned char>(buf[i])) << (8 * i);
    return v;
}

void read_bytes(std::istream& in, char* dst, size_t n, const std::string& path) {
    in.read(dst, static_cast<std::streamsize>(n));
    if (in.gcount() != static_cast<std::streamsize>(n))
        throw CheckpointError(CheckpointError::Kind::Truncated, path + ": truncated checkpoint");
}

}  // namespace

void save_checkpoint_raw(const std::string& path, const RawCheckpoint& ckpt) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw CheckpointError(CheckpointError::Kind::Io, tmp + ": cannot open for writing");
        out.write("LVAE", 4);
        write_le<uint32_t>(out, ckpt.version);
        write_le<uint64_t>(out, ckpt.step);
        write_le<uint32_t>(out, static_cast<uint32_t>(ckpt.config.size()));
        out.write(ckpt.config.data(), static_cast<std::streamsize>(ckpt.config.size()));
        write_le<uint32_t>(out, static_cast<uint32_t>(ckpt.tensors.size()));
        for (const auto& t : ckpt.tensors) {
            write_le<uint16_t>(out, static_cast<uint16_t>(t.name.size()));
            out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
            out.put(static_cast<char>(t.dtype));
            out.put(static_cast<char>(t.dims.size()));
            for (uint64_t d : t.dims) write_le<uint64_t>(out, d);
            out.write(t.bytes.data(), static_cast<std::streamsize>(t.bytes.size()));
        }
        if (!out) throw CheckpointError(CheckpointError::Kind::Io, tmp + ": write failed");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw CheckpointError(CheckpointError::Kind::Io, path + ": rename failed: " + ec.message());
}

RawCheckpoint load_checkpoint_raw(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError(CheckpointError::Kind::Io, path + ": cannot open");
    char magic[4];
    read_bytes(in, magic, 4, path);
    if (std::memcmp(magic, "LVAE", 4) != 0)
        throw CheckpointError(CheckpointError::Kind::BadMagic, path + ": bad magic");
    RawCheckpoint ckpt;
    ckpt.version = read_le<uint32_t>(in, path);
    if (ckpt.version != 1)
        throw CheckpointError(CheckpointError::Kind::BadVersion,
                              path + ": unsupported version " + std::to_string(ckpt.version));
    ckpt.step = read_le<uint64_t>(in, path);
    uint32_t cfg_len = read_le<uint32_t>(in, path);
    ckpt.config.resize(cfg_len);
    if (cfg_len) read_bytes(in, ckpt.config.data(), cfg_len, path);
    uint32_t count = read_le<uint32_t>(in, path);
    ckpt.tensors.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        RawTensor t;
        uint16_t name_len = read_le<uint16_t>(in, path);
        t.name.resize(name_len);
        read_bytes(in, t.name.data(), name_len, path);
        int dtype = in.get();
        int rank = in.get();
        if (dtype == EOF || rank == EOF)
            throw CheckpointError(CheckpointError::Kind::Truncated, path + ": truncated checkpoint");
        if (dtype != 0 && dtype != 1)
            throw CheckpointError(CheckpointError::Kind::BadVersion,
                                  path + ": unknown dtype code " + std::to_string(dtype));
        t.dtype = static_cast<uint8_t>(dtype);
        t.dims.resize(static_cast<size_t>(rank));
        for (int d = 0; d < rank; ++d) t.dims[static_cast<size_t>(d)] = read_le<uint64_t>(in, path);
        size_t elem = t.dtype == 0 ? 4 : 8;
        t.bytes.resize(static_cast<size_t>(t.count()) * elem);
        read_bytes(in, t.bytes.data(), t.bytes.size(), path);
        ckpt.tensors.push_back(std::move(t));
    }
    return ckpt;
}

std::string format_metric(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace litevae
