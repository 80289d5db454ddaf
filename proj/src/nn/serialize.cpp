#include "ssae/nn/serialize.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>

namespace ssae::nn {

namespace {

constexpr std::array<char, 8> kMagic = {'S', 'S', 'A', 'E', 'P', 'R', 'M', '1'};

std::string to_hex(const unsigned char* bytes, unsigned len) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(static_cast<std::size_t>(len) * 2, '0');
    for (unsigned i = 0; i < len; ++i) {
        out[2 * i] = digits[bytes[i] >> 4];
        out[2 * i + 1] = digits[bytes[i] & 0xF];
    }
    return out;
}

struct MdCtxDeleter {
    void operator()(EVP_MD_CTX* ctx) const { EVP_MD_CTX_free(ctx); }
};

}  // namespace

void save_params(const std::filesystem::path& path, const std::vector<Param<float>*>& params) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out.write(kMagic.data(), kMagic.size());
    const std::uint64_t count = params.size();
    out.write(reinterpret_cast<const char*>(&count), sizeof count);
    for (const auto* p : params) {
        const std::uint64_t n = p->value.size();
        out.write(reinterpret_cast<const char*>(&n), sizeof n);
    }
    for (const auto* p : params)
        out.write(reinterpret_cast<const char*>(p->value.data()),
                  static_cast<std::streamsize>(p->value.size() * sizeof(float)));
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

void load_params(const std::filesystem::path& path, const std::vector<Param<float>*>& params) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open parameter blob " + path.string());
    std::array<char, 8> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kMagic)
        throw std::runtime_error(path.string() + " is not a parameter blob (bad magic)");
    std::uint64_t count = 0;
    in.read(reinterpret_cast<char*>(&count), sizeof count);
    if (!in || count != params.size())
        throw std::runtime_error(path.string() + ": expected " + std::to_string(params.size()) +
                                 " parameter tensors, found " + std::to_string(count));
    for (const auto* p : params) {
        std::uint64_t n = 0;
        in.read(reinterpret_cast<char*>(&n), sizeof n);
        if (!in || n != p->value.size())
            throw std::runtime_error(path.string() + ": size mismatch for parameter " + p->name);
    }
    for (auto* p : params) {
        in.read(reinterpret_cast<char*>(p->value.data()),
                static_cast<std::streamsize>(p->value.size() * sizeof(float)));
        if (!in) throw std::runtime_error(path.string() + ": truncated parameter data");
        if (!p->value.all_finite())
            throw std::runtime_error(path.string() + ": non-finite values in " + p->name);
    }
    char extra = 0;
    if (in.read(&extra, 1)) throw std::runtime_error(path.string() + ": trailing bytes");
}

std::string params_digest(const std::vector<Param<float>*>& params) {
    std::unique_ptr<EVP_MD_CTX, MdCtxDeleter> ctx(EVP_MD_CTX_new());
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 initialization failed");
    for (const auto* p : params)
        EVP_DigestUpdate(ctx.get(), p->value.data(), p->value.size() * sizeof(float));
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned len = 0;
    EVP_DigestFinal_ex(ctx.get(), md, &len);
    return to_hex(md, len);
}

std::string sha256_hex(const void* data, std::size_t size) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned len = 0;
    if (EVP_Digest(data, size, md, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 failed");
    return to_hex(md, len);
}

}  // namespace ssae::nn
