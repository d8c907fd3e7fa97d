#include "quoka/fixture.hpp"

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <iterator>
#include <memory>
#include <ostream>
#include <sstream>

namespace quoka {

namespace {

constexpr std::array<char, 4> kMagic{'Q', 'T', 'N', 'S'};

void put_u32(std::ostream& out, std::uint32_t v)
{
    const std::array<char, 4> b{static_cast<char>(v & 0xffu), static_cast<char>((v >> 8) & 0xffu),
                                static_cast<char>((v >> 16) & 0xffu), static_cast<char>((v >> 24) & 0xffu)};
    out.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& in)
{
    std::array<unsigned char, 4> b{};
    if (!in.read(reinterpret_cast<char*>(b.data()), 4)) {
        throw FormatError("qtns: truncated header");
    }
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

} // namespace

void write_tensor(std::ostream& out, const Tensor& t)
{
    if (t.rank() == 0 || t.rank() > 255) {
        throw FormatError("qtns: rank must be in [1, 255]");
    }
    out.write(kMagic.data(), kMagic.size());
    out.put(static_cast<char>(kFixtureVersion));
    out.put(static_cast<char>(t.rank()));
    for (std::size_t d : t.shape()) {
        put_u32(out, static_cast<std::uint32_t>(d));
    }
    for (float v : t.data()) {
        put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
    if (!out) {
        throw FormatError("qtns: write failed");
    }
}

Tensor read_tensor(std::istream& in)
{
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
        throw FormatError("qtns: bad magic");
    }
    const int version = in.get();
    if (version != kFixtureVersion) {
        throw FormatError("qtns: unsupported version " + std::to_string(version));
    }
    const int rank = in.get();
    if (rank <= 0) {
        throw FormatError("qtns: invalid rank");
    }
    Shape shape(static_cast<std::size_t>(rank));
    for (auto& d : shape) {
        d = get_u32(in);
    }
    const std::size_t n = shape_product(shape);
    std::vector<float> data(n);
    for (auto& v : data) {
        v = std::bit_cast<float>(get_u32(in));
    }
    return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw FormatError("qtns: cannot open " + path.string() + " for writing");
    }
    write_tensor(out, t);
}

Tensor load_tensor(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("qtns: cannot open " + path.string());
    }
    return read_tensor(in);
}

std::string content_hash(const std::string& bytes)
{
    const std::string header = "blob " + std::to_string(bytes.size()) + '\0';
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), header.data(), header.size()) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), digest.data(), &len) != 1) {
        throw Error("content_hash: sha1 failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string hex;
    for (unsigned int i = 0; i < len; ++i) {
        hex += kHex[digest[i] >> 4];
        hex += kHex[digest[i] & 0xf];
    }
    return hex;
}

std::string file_content_hash(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return content_hash(buf.str());
}

} // namespace quoka
