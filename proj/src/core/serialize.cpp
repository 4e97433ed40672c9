#include "ave/core/serialize.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace ave::io {

namespace {

void check(std::istream& is, const char* what)
{
    if (!is) throw std::runtime_error(std::string("truncated stream while reading ") + what);
}

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

} // namespace

void write_u64(std::ostream& os, std::uint64_t v)
{
    std::array<char, 8> b{};
    for (int i = 0; i < 8; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b.data(), 8);
}

std::uint64_t read_u64(std::istream& is)
{
    std::array<unsigned char, 8> b{};
    is.read(reinterpret_cast<char*>(b.data()), 8);
    check(is, "u64");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[static_cast<std::size_t>(i)]) << (8 * i);
    return v;
}

void write_f64(std::ostream& os, double v) { write_u64(os, std::bit_cast<std::uint64_t>(v)); }
double read_f64(std::istream& is) { return std::bit_cast<double>(read_u64(is)); }

void write_string(std::ostream& os, const std::string& s)
{
    write_u64(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is)
{
    const std::uint64_t n = read_u64(is);
    if (n > (1ULL << 30)) throw std::runtime_error("read_string: implausible length");
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    check(is, "string");
    return s;
}

void write_tensor(std::ostream& os, const Tensor& t)
{
    write_u64(os, t.ndim());
    for (std::size_t d : t.shape()) write_u64(os, d);
    for (double v : t.values()) write_f64(os, v);
}

Tensor read_tensor(std::istream& is)
{
    const std::uint64_t nd = read_u64(is);
    if (nd > 8) throw std::runtime_error("read_tensor: implausible rank");
    Shape shape(nd);
    for (auto& d : shape) d = read_u64(is);
    Tensor t(shape);
    for (double& v : t.values()) v = read_f64(is);
    return t;
}

void write_params(std::ostream& os, const nn::ParamList& params)
{
    write_u64(os, params.size());
    for (const auto& p : params) {
        write_string(os, p.name);
        write_tensor(os, p.var.value());
    }
}

void read_params(std::istream& is, const nn::ParamList& params)
{
    const std::uint64_t n = read_u64(is);
    if (n != params.size())
        throw std::runtime_error("parameter count mismatch: file has " + std::to_string(n) + ", model has " +
                                 std::to_string(params.size()));
    for (const auto& p : params) {
        const std::string name = read_string(is);
        if (name != p.name) throw std::runtime_error("parameter name mismatch: " + name + " vs " + p.name);
        Tensor t = read_tensor(is);
        if (t.shape() != p.var.shape())
            throw std::runtime_error("parameter shape mismatch for " + name + ": " + shape_str(t.shape()) + " vs " +
                                     shape_str(p.var.shape()));
        ag::Var v = p.var;
        v.mutable_value() = std::move(t);
    }
}

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed)
{
    const auto* bytes = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fingerprint(const nn::ParamList& params)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : params) {
        h = fnv1a(p.name.data(), p.name.size(), h);
        const Tensor& t = p.var.value();
        h = fnv1a(t.data(), t.size() * sizeof(double), h);
    }
    return h;
}

std::string base64_encode(const std::vector<std::uint8_t>& bytes)
{
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const std::uint32_t n = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
        out += kAlphabet[(n >> 18) & 63];
        out += kAlphabet[(n >> 12) & 63];
        out += kAlphabet[(n >> 6) & 63];
        out += kAlphabet[n & 63];
    }
    const std::size_t rest = bytes.size() - i;
    if (rest == 1) {
        const std::uint32_t n = bytes[i] << 16;
        out += kAlphabet[(n >> 18) & 63];
        out += kAlphabet[(n >> 12) & 63];
        out += "==";
    } else if (rest == 2) {
        const std::uint32_t n = (bytes[i] << 16) | (bytes[i + 1] << 8);
        out += kAlphabet[(n >> 18) & 63];
        out += kAlphabet[(n >> 12) & 63];
        out += kAlphabet[(n >> 6) & 63];
        out += '=';
    }
    return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text)
{
    auto value = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        return -1;
    };
    if (text.size() % 4 != 0) throw std::invalid_argument("base64: length not a multiple of 4");
    std::vector<std::uint8_t> out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        std::uint32_t n = 0;
        int pad = 0;
        for (std::size_t k = 0; k < 4; ++k) {
            const char c = text[i + k];
            if (c == '=') {
                ++pad;
                n <<= 6;
                continue;
            }
            const int v = value(c);
            if (v < 0 || pad) throw std::invalid_argument("base64: invalid character");
            n = (n << 6) | static_cast<std::uint32_t>(v);
        }
        out.push_back(static_cast<std::uint8_t>((n >> 16) & 0xff));
        if (pad < 2) out.push_back(static_cast<std::uint8_t>((n >> 8) & 0xff));
        if (pad < 1) out.push_back(static_cast<std::uint8_t>(n & 0xff));
    }
    return out;
}

} // namespace ave::io
