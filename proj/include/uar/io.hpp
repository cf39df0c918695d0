#pragma once

// File formats: the UARL array container (checkpoints and dataset samples),
// 16-bit PGM images and metrics CSV.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "uar/data.hpp"
#include "uar/train.hpp"

namespace uar::io {

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct NamedArray {
    std::string name;
    std::vector<std::uint64_t> dims;
    std::vector<double> values;
    bool operator==(const NamedArray&) const = default;
};

// Layout (little-endian): "UARL", u32 version, u32 count, then per array
// u16 name length, name bytes, u8 ndim, u64 dims, f64 payload; finally the
// CRC32 of every preceding byte.
inline constexpr std::uint32_t kFormatVersion = 1;

std::vector<std::uint8_t> encode(const std::vector<NamedArray>& arrays);
// Throws FormatError on a bad magic, version, truncation or CRC mismatch.
std::vector<NamedArray> decode(std::span<const std::uint8_t> bytes);
std::uint32_t crc32(std::span<const std::uint8_t> bytes);

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
void save_arrays(const std::filesystem::path& path, const std::vector<NamedArray>& arrays);
std::vector<NamedArray> load_arrays(const std::filesystem::path& path);

/// Trained state plus the geometry it was trained for.
struct Checkpoint {
    tomo::Geometry geometry;
    model::Generator gen;
    model::Critic critic;
    std::optional<nn::AdamState> gen_opt;
    std::optional<nn::AdamState> critic_opt;
    int phase = 0;
    std::size_t step = 0;
};

std::vector<NamedArray> pack(const Checkpoint& ckpt);
Checkpoint unpack(const std::vector<NamedArray>& arrays);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);
// Throws FormatError when the checkpoint geometry differs from g.
void require_geometry(const Checkpoint& ckpt, const tomo::Geometry& g);

// Dataset directory: train_x/x_%06d.uarl, train_y/y_%06d.uarl,
// test/x_%06d.uarl and test/y_%06d.uarl, one array per file named after it.
void save_dataset(const std::filesystem::path& dir, const data::DatasetPools& pools);
data::DatasetPools load_dataset(const std::filesystem::path& dir, const tomo::Geometry& g);
std::string sample_name(char prefix, std::size_t index);

// Binary P5, maxval 65535, big-endian samples of round(clamp(v, 0, 1) * 65535).
std::vector<std::uint8_t> encode_pgm(const tomo::Image& img);
tomo::Image decode_pgm(std::span<const std::uint8_t> bytes);
void write_pgm(const std::filesystem::path& path, const tomo::Image& img);

struct MetricsRow {
    std::string sample_id;
    std::string method;
    double psnr_db = 0.0;
    double ssim = 0.0;
    double distortion = 0.0;
    double seconds = 0.0;
};

// Header: sample_id,method,psnr_db,ssim,distortion,seconds. Infinite PSNR is
// written as "inf"; floats use 17 significant digits.
void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);
std::string format_double(double v);

}  // namespace uar::io
