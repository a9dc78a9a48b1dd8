#pragma once

#include "nestco/lvm.hpp"
#include "nestco/noise.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

// Binary files: 8-byte magic, u64 little-endian header length, UTF-8 JSON
// header, then little-endian payload. Layouts are described in docs/formats.md.

namespace nestco::io {

/// Missing, truncated or malformed file.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr char model_magic[8] = {'N', 'E', 'S', 'T', 'C', 'O', 'M', '1'};
inline constexpr char dataset_magic[8] = {'N', 'E', 'S', 'T', 'C', 'O', 'D', '1'};

nlohmann::json mask_to_json(const masks::MaskDistribution& mask);
masks::MaskDistribution mask_from_json(const nlohmann::json& j);

nlohmann::json spec_to_json(const MlpSpec& spec);
MlpSpec spec_from_json(const nlohmann::json& j);

struct ModelFile {
    lvm::LatentModel model;
    std::uint64_t seed = 0;
    nlohmann::json meta;
};

/// Parameters in order W0, b0, W1, b1, ... as float64.
void save_model(const std::filesystem::path& path, const lvm::LatentModel& model, std::uint64_t seed,
                const nlohmann::json& meta = nlohmann::json::object());
ModelFile load_model(const std::filesystem::path& path);

/// Inputs as float64 [n, dim], then int32 noisy labels, then int32 clean labels.
void save_dataset(const std::filesystem::path& path, const noise::NoisyDataset& data, std::uint64_t seed);
noise::NoisyDataset load_dataset(const std::filesystem::path& path);
/// Header "x0,...,x{dim-1},noisy,clean".
void export_dataset_csv(const std::filesystem::path& path, const noise::NoisyDataset& data);

nlohmann::json noise_spec_to_json(const noise::NoiseSpec& spec);
noise::NoiseSpec noise_spec_from_json(const nlohmann::json& j);

/// Shortest round-trip decimal form, locale independent.
std::string format_double(double v);

} // namespace nestco::io
