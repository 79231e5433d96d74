#include "nasg/net.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace nasg {

namespace {

constexpr char kMagic[8] = {'N', 'A', 'S', 'G', 'N', 'E', 'T', '1'};

void write_u32(std::ofstream &f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    f.write(reinterpret_cast<const char *>(b), 4);
}

std::uint32_t read_u32(std::ifstream &f) {
    unsigned char b[4];
    f.read(reinterpret_cast<char *>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
}

} // namespace

void save_checkpoint(const std::string &path, const NetworkParameters<float> &params,
                     int n_components) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    f.write(kMagic, sizeof(kMagic));
    write_u32(f, static_cast<std::uint32_t>(n_components));
    write_u32(f, kNumLayers + 1);
    write_u32(f, static_cast<std::uint32_t>(params.w[0].rows()));
    for (int l = 0; l < kNumLayers; ++l)
        write_u32(f, static_cast<std::uint32_t>(params.w[l].cols()));
    std::vector<float> row;
    for (int l = 0; l < kNumLayers; ++l) {
        const auto &m = params.w[l];
        row.resize(m.cols());
        for (int r = 0; r < m.rows(); ++r) {
            for (int c = 0; c < m.cols(); ++c) row[c] = m(r, c);
            f.write(reinterpret_cast<const char *>(row.data()),
                    static_cast<std::streamsize>(row.size() * sizeof(float)));
        }
    }
    if (!f) throw std::runtime_error("short write on checkpoint: " + path);
}

NetworkParameters<float> load_checkpoint(const std::string &path, int *n_components) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[8];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("not a network checkpoint: " + path);
    std::uint32_t n = read_u32(f);
    std::uint32_t ndims = read_u32(f);
    if (ndims != kNumLayers + 1)
        throw std::runtime_error("unexpected layer count in checkpoint: " + path);
    std::uint32_t dims[kNumLayers + 1];
    for (std::uint32_t i = 0; i < ndims; ++i) dims[i] = read_u32(f);

    NetworkParameters<float> params;
    std::vector<float> row;
    for (int l = 0; l < kNumLayers; ++l) {
        params.w[l].resize(dims[l], dims[l + 1]);
        row.resize(dims[l + 1]);
        for (std::uint32_t r = 0; r < dims[l]; ++r) {
            f.read(reinterpret_cast<char *>(row.data()),
                   static_cast<std::streamsize>(row.size() * sizeof(float)));
            for (std::uint32_t c = 0; c < dims[l + 1]; ++c) params.w[l](r, c) = row[c];
        }
    }
    if (!f) throw std::runtime_error("truncated checkpoint: " + path);
    if (n_components) *n_components = static_cast<int>(n);
    return params;
}

} // namespace nasg
