#include "lta/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

namespace lta {

namespace {

constexpr char kMagic[4] = {'L', 'T', 'A', '1'};
constexpr uint32_t kMaxRank = 8;
constexpr uint64_t kMaxElements = uint64_t(1) << 32;

void put_u32(std::ostream& os, uint32_t v) {
    const char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff),
                       char((v >> 24) & 0xff)};
    os.write(b, 4);
}

uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (is.gcount() != 4) throw FormatError("LTA1: truncated header");
    return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) |
           (uint32_t(b[3]) << 24);
}

}  // namespace

void write_tensor(const Tensor& t, std::ostream& os) {
    if (t.rank() < 1 || t.rank() > kMaxRank)
        throw FormatError("LTA1: rank must be in [1, 8]");
    os.write(kMagic, 4);
    put_u32(os, static_cast<uint32_t>(t.rank()));
    for (uint32_t d : t.shape()) put_u32(os, d);
    if constexpr (std::endian::native == std::endian::little) {
        os.write(reinterpret_cast<const char*>(t.data()),
                 static_cast<std::streamsize>(t.numel() * sizeof(float)));
    } else {
        for (float v : t.vec()) put_u32(os, std::bit_cast<uint32_t>(v));
    }
    if (!os) throw FormatError("LTA1: write failed");
}

void write_tensor(const Tensor& t, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("LTA1: cannot open for write: " + path.string());
    write_tensor(t, os);
}

Tensor read_tensor(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("LTA1: bad magic");
    const uint32_t rank = get_u32(is);
    if (rank < 1 || rank > kMaxRank) throw FormatError("LTA1: bad rank");
    std::vector<uint32_t> shape(rank);
    uint64_t numel = 1;
    for (uint32_t i = 0; i < rank; ++i) {
        shape[i] = get_u32(is);
        if (shape[i] == 0) throw FormatError("LTA1: zero dim");
        numel *= shape[i];
        if (numel > kMaxElements) throw FormatError("LTA1: dim overflow");
    }
    std::vector<float> data(numel);
    if constexpr (std::endian::native == std::endian::little) {
        is.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(numel * sizeof(float)));
        if (static_cast<uint64_t>(is.gcount()) != numel * sizeof(float))
            throw FormatError("LTA1: truncated payload");
    } else {
        for (uint64_t i = 0; i < numel; ++i) data[i] = std::bit_cast<float>(get_u32(is));
    }
    is.peek();
    if (!is.eof()) throw FormatError("LTA1: trailing bytes after payload");
    return Tensor(std::move(shape), std::move(data));
}

Tensor read_tensor(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("LTA1: cannot open: " + path.string());
    return read_tensor(is);
}

}  // namespace lta
