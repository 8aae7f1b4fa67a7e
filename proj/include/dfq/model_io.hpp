#ifndef DFQ_MODEL_IO_HPP
#define DFQ_MODEL_IO_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dfq/network.hpp"
#include "dfq/quantize.hpp"
#include "dfq/training.hpp"

namespace dfq {

// Container layout, little-endian:
//   "DFQN" u16 version u16 flags f32 width u32 input_h u32 input_w u32 input_c
//   u64 total_parameters u32 epochs_completed u64 adam_t u32 layer_count u32 tensor_count
//   layer_count x { u8 kind u8 padding u8 activation u8 reserved u32 kernel u32 in u32 out
//                   f32 rate u16 name_len name }
//   tensor_count x { u8 dtype u8 rank u16 role u32 dims[rank] f32 scale u64 offset u64 nbytes }
//   u64 payload_size, payload, u32 crc32 of every preceding byte

inline constexpr std::uint16_t kFormatVersion = 1;
inline constexpr std::uint16_t kFlagQuantized = 1u << 0;
inline constexpr std::uint16_t kFlagCheckpoint = 1u << 1;

enum class ModelErrorCode { BadMagic, VersionMismatch, Checksum, Truncated, Malformed, Io };

std::string_view model_error_name(ModelErrorCode code);

class ModelFormatError : public std::runtime_error {
public:
    ModelFormatError(ModelErrorCode code, const std::string& what)
        : std::runtime_error(std::string(model_error_name(code)) + ": " + what), code_(code) {}
    ModelErrorCode code() const { return code_; }

private:
    ModelErrorCode code_;
};

struct ModelHeader {
    std::uint16_t version = kFormatVersion;
    std::uint16_t flags = 0;
    float width = 1.0f;
    Shape input_shape;
    std::uint64_t total_parameters = 0;
    std::uint32_t epochs_completed = 0;
    std::uint64_t adam_t = 0;
    std::uint32_t layer_count = 0;
    std::uint32_t tensor_count = 0;

    bool quantized() const { return (flags & kFlagQuantized) != 0; }
    bool checkpoint() const { return (flags & kFlagCheckpoint) != 0; }
};

std::vector<std::uint8_t> serialize_model(const Network& net);
std::vector<std::uint8_t> serialize_quantized(const QuantizedModel& qm);
std::vector<std::uint8_t> serialize_checkpoint(const TrainState& state);

/// Validates the checksum and structure before anything is returned.
ModelHeader parse_header(std::span<const std::uint8_t> bytes);
Network deserialize_model(std::span<const std::uint8_t> bytes);
QuantizedModel deserialize_quantized(std::span<const std::uint8_t> bytes);
TrainState deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void save_model(const Network& net, const std::filesystem::path& path);
Network load_model(const std::filesystem::path& path);
void save_quantized(const QuantizedModel& qm, const std::filesystem::path& path);
QuantizedModel load_quantized(const std::filesystem::path& path);
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);
ModelHeader read_header(const std::filesystem::path& path);

/// A float or int8 model ready for read-only, concurrent inference.
class InferenceModel {
public:
    explicit InferenceModel(Network net);
    explicit InferenceModel(QuantizedModel qm);
    /// Accepts float, quantized and checkpoint containers.
    static InferenceModel load(const std::filesystem::path& path);

    bool quantized() const { return executor_.has_value(); }
    double width() const;
    std::size_t total_parameters() const;
    const Shape& input_shape() const;

    /// [B, H, W, C] -> probabilities [B, classes].
    Tensor predict(const Tensor& batch) const;

private:
    std::optional<Network> float_;
    std::optional<QuantizedExecutor> executor_;
    double width_ = 1.0;
    std::size_t total_parameters_ = 0;
    Shape input_shape_;
};

}  // namespace dfq

#endif  // DFQ_MODEL_IO_HPP
