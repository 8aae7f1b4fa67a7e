#include "dfq/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

#include <zlib.h>

#include "dfq/errors.hpp"
#include "dfq/image.hpp"

namespace dfq {

std::string_view model_error_name(ModelErrorCode code) {
    switch (code) {
        case ModelErrorCode::BadMagic:
            return "bad magic";
        case ModelErrorCode::VersionMismatch:
            return "version mismatch";
        case ModelErrorCode::Checksum:
            return "checksum mismatch";
        case ModelErrorCode::Truncated:
            return "truncated file";
        case ModelErrorCode::Malformed:
            return "malformed file";
        case ModelErrorCode::Io:
            return "i/o error";
    }
    return "model format error";
}

namespace {

constexpr char kMagic[4] = {'D', 'F', 'Q', 'N'};

enum class DType : std::uint8_t { F32 = 0, I8 = 1 };
enum class Role : std::uint16_t { Weight = 0, Bias = 1, AdamM = 2, AdamV = 3 };

class Writer {
public:
    template <typename U>
    void put(U v) {
        static_assert(std::is_integral_v<U>);
        for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void put_f32(float v) { put(std::bit_cast<std::uint32_t>(v)); }
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    std::vector<std::uint8_t>& buffer() { return buf_; }

private:
    std::vector<std::uint8_t> buf_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

    template <typename U>
    U get() {
        need(sizeof(U));
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(b_[pos_ + i]) << (8 * i));
        pos_ += sizeof(U);
        return v;
    }
    float get_f32() { return std::bit_cast<float>(get<std::uint32_t>()); }
    std::span<const std::uint8_t> take(std::size_t n) {
        need(n);
        auto s = b_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return b_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (n > b_.size() - pos_) throw ModelFormatError(ModelErrorCode::Truncated, "unexpected end of data");
    }
    std::span<const std::uint8_t> b_;
    std::size_t pos_ = 0;
};

struct TensorEntry {
    DType dtype = DType::F32;
    Role role = Role::Weight;
    Shape shape;
    float scale = 1.0f;
    std::uint64_t offset = 0;
    std::uint64_t nbytes = 0;
};

struct PendingTensor {
    TensorEntry entry;
    const void* data = nullptr;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> b) {
    return static_cast<std::uint32_t>(crc32_z(crc32_z(0L, Z_NULL, 0), b.data(), b.size()));
}

PendingTensor f32_tensor(const Tensor& t, Role role) {
    return {{DType::F32, role, t.shape(), 1.0f, 0, t.size() * sizeof(float)}, t.data()};
}

std::vector<std::uint8_t> encode(const ModelHeader& h, const std::vector<LayerSpec>& layers,
                                 std::vector<PendingTensor> tensors) {
    Writer w;
    w.bytes(kMagic, 4);
    w.put<std::uint16_t>(h.version);
    w.put<std::uint16_t>(h.flags);
    w.put_f32(h.width);
    for (std::size_t i = 0; i < 3; ++i) w.put(static_cast<std::uint32_t>(h.input_shape[i]));
    w.put<std::uint64_t>(h.total_parameters);
    w.put<std::uint32_t>(h.epochs_completed);
    w.put<std::uint64_t>(h.adam_t);
    w.put(static_cast<std::uint32_t>(layers.size()));
    w.put(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& l : layers) {
        w.put(static_cast<std::uint8_t>(l.kind));
        w.put(static_cast<std::uint8_t>(l.padding));
        w.put(static_cast<std::uint8_t>(l.activation));
        w.put<std::uint8_t>(0);
        w.put(static_cast<std::uint32_t>(l.kernel));
        w.put(static_cast<std::uint32_t>(l.in_channels));
        w.put(static_cast<std::uint32_t>(l.out_channels));
        w.put_f32(static_cast<float>(l.rate));
        if (l.name.size() > std::numeric_limits<std::uint16_t>::max()) throw ConfigError("layer name too long");
        w.put(static_cast<std::uint16_t>(l.name.size()));
        w.bytes(l.name.data(), l.name.size());
    }
    std::uint64_t offset = 0;
    for (auto& t : tensors) {
        t.entry.offset = offset;
        offset += t.entry.nbytes;
        w.put(static_cast<std::uint8_t>(t.entry.dtype));
        w.put(static_cast<std::uint8_t>(t.entry.shape.rank()));
        w.put(static_cast<std::uint16_t>(t.entry.role));
        for (auto d : t.entry.shape.dims()) w.put(static_cast<std::uint32_t>(d));
        w.put_f32(t.entry.scale);
        w.put<std::uint64_t>(t.entry.offset);
        w.put<std::uint64_t>(t.entry.nbytes);
    }
    w.put<std::uint64_t>(offset);
    auto& buf = w.buffer();
    buf.reserve(buf.size() + offset + 4);
    for (const auto& t : tensors) {
        if (t.entry.dtype == DType::F32) {
            // little-endian float bytes
            const auto* f = static_cast<const float*>(t.data);
            const std::size_t n = t.entry.nbytes / 4;
            for (std::size_t i = 0; i < n; ++i) w.put(std::bit_cast<std::uint32_t>(f[i]));
        } else {
            w.bytes(t.data, t.entry.nbytes);
        }
    }
    const std::uint32_t crc = crc32_of(buf);
    w.put(crc);
    return std::move(buf);
}

ModelHeader header_for(float width, const Shape& input, std::size_t params, std::uint16_t flags) {
    ModelHeader h;
    h.flags = flags;
    h.width = width;
    h.input_shape = input;
    h.total_parameters = params;
    return h;
}

struct Parsed {
    ModelHeader header;
    std::vector<LayerSpec> layers;
    std::vector<TensorEntry> tensors;
    std::span<const std::uint8_t> payload;
};

Parsed parse(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) throw ModelFormatError(ModelErrorCode::Truncated, "file shorter than the magic");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw ModelFormatError(ModelErrorCode::BadMagic, "not a DFQN file");
    Reader r(bytes);
    r.take(4);
    Parsed p;
    ModelHeader& h = p.header;
    h.version = r.get<std::uint16_t>();
    if (h.version != kFormatVersion) {
        throw ModelFormatError(ModelErrorCode::VersionMismatch, "file version " + std::to_string(h.version) +
                                                                    ", expected " + std::to_string(kFormatVersion));
    }
    h.flags = r.get<std::uint16_t>();
    h.width = r.get_f32();
    const std::size_t ih = r.get<std::uint32_t>(), iw = r.get<std::uint32_t>(), ic = r.get<std::uint32_t>();
    h.total_parameters = r.get<std::uint64_t>();
    h.epochs_completed = r.get<std::uint32_t>();
    h.adam_t = r.get<std::uint64_t>();
    h.layer_count = r.get<std::uint32_t>();
    h.tensor_count = r.get<std::uint32_t>();

    auto malformed = [](const std::string& what) { return ModelFormatError(ModelErrorCode::Malformed, what); };
    if ((h.flags & ~(kFlagQuantized | kFlagCheckpoint)) != 0) throw malformed("unknown flag bits");
    if (ih == 0 || iw == 0 || ic == 0) throw malformed("zero input extent");
    h.input_shape = Shape{ih, iw, ic};

    for (std::uint32_t i = 0; i < h.layer_count; ++i) {
        LayerSpec l;
        const auto kind = r.get<std::uint8_t>(), pad = r.get<std::uint8_t>(), act = r.get<std::uint8_t>();
        r.get<std::uint8_t>();
        if (kind > static_cast<std::uint8_t>(LayerKind::Dense) || pad > 1 ||
            act > static_cast<std::uint8_t>(Activation::Softmax)) {
            throw malformed("layer " + std::to_string(i) + " has an unknown kind, padding or activation");
        }
        l.kind = static_cast<LayerKind>(kind);
        l.padding = static_cast<Padding>(pad);
        l.activation = static_cast<Activation>(act);
        l.kernel = r.get<std::uint32_t>();
        l.in_channels = r.get<std::uint32_t>();
        l.out_channels = r.get<std::uint32_t>();
        l.rate = r.get_f32();
        const auto name_len = r.get<std::uint16_t>();
        const auto name = r.take(name_len);
        l.name.assign(name.begin(), name.end());
        p.layers.push_back(std::move(l));
    }
    for (std::uint32_t i = 0; i < h.tensor_count; ++i) {
        TensorEntry t;
        const auto dtype = r.get<std::uint8_t>();
        const auto rank = r.get<std::uint8_t>();
        const auto role = r.get<std::uint16_t>();
        if (dtype > 1 || role > 3 || rank == 0) throw malformed("tensor " + std::to_string(i) + " has a bad descriptor");
        std::vector<std::size_t> dims(rank);
        std::uint64_t count = 1;
        for (auto& d : dims) {
            d = r.get<std::uint32_t>();
            if (d == 0) throw malformed("tensor " + std::to_string(i) + " has a zero extent");
            if (count > std::numeric_limits<std::uint64_t>::max() / d) throw malformed("tensor extent overflow");
            count *= d;
        }
        t.dtype = static_cast<DType>(dtype);
        t.role = static_cast<Role>(role);
        t.shape = Shape(std::move(dims));
        t.scale = r.get_f32();
        t.offset = r.get<std::uint64_t>();
        t.nbytes = r.get<std::uint64_t>();
        const std::uint64_t elem = t.dtype == DType::F32 ? 4 : 1;
        if (count > std::numeric_limits<std::uint64_t>::max() / elem || t.nbytes != count * elem) {
            throw malformed("tensor " + std::to_string(i) + " byte count does not match its shape");
        }
        p.tensors.push_back(std::move(t));
    }
    const auto payload_size = r.get<std::uint64_t>();
    if (payload_size > r.remaining() || r.remaining() - payload_size < 4) {
        throw ModelFormatError(ModelErrorCode::Truncated, "payload extends past the end of the file");
    }
    p.payload = r.take(payload_size);
    if (r.remaining() != 4) throw malformed("trailing bytes after the checksum");
    const auto stored = r.get<std::uint32_t>();
    if (stored != crc32_of(bytes.first(bytes.size() - 4))) {
        throw ModelFormatError(ModelErrorCode::Checksum, "CRC-32 does not match the file contents");
    }
    for (const auto& t : p.tensors) {
        if (t.offset > payload_size || t.nbytes > payload_size - t.offset) throw malformed("tensor offset out of bounds");
    }
    return p;
}

Tensor read_f32(const Parsed& p, const TensorEntry& t) {
    if (t.dtype != DType::F32) throw ModelFormatError(ModelErrorCode::Malformed, "expected a 32-bit tensor");
    Tensor out(t.shape);
    const std::uint8_t* src = p.payload.data() + t.offset;
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint32_t u = 0;
        for (std::size_t k = 0; k < 4; ++k) u |= static_cast<std::uint32_t>(src[4 * i + k]) << (8 * k);
        out[i] = std::bit_cast<float>(u);
    }
    return out;
}

const TensorEntry& expect(const Parsed& p, std::size_t i, Role role) {
    if (i >= p.tensors.size() || p.tensors[i].role != role) {
        throw ModelFormatError(ModelErrorCode::Malformed, "tensor table does not follow the layer table");
    }
    return p.tensors[i];
}

std::size_t parametric_layers(const std::vector<LayerSpec>& layers) {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.has_parameters() ? 1 : 0;
    return n;
}

template <typename F>
auto as_malformed(F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const ModelFormatError&) {
        throw;
    } catch (const std::exception& e) {
        throw ModelFormatError(ModelErrorCode::Malformed, e.what());
    }
}

Network network_from(const Parsed& p, std::size_t& next) {
    ParameterSet<float> params;
    for (std::size_t i = 0; i < parametric_layers(p.layers); ++i) {
        params.push_back(read_f32(p, expect(p, next++, Role::Weight)));
        params.push_back(read_f32(p, expect(p, next++, Role::Bias)));
    }
    Network net = as_malformed(
        [&] { return Network(p.layers, std::move(params), static_cast<double>(p.header.width), p.header.input_shape); });
    if (net.parameter_count() != p.header.total_parameters) {
        throw ModelFormatError(ModelErrorCode::Malformed, "header parameter count disagrees with the tensors");
    }
    return net;
}

void save_bytes(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
    auto tmp = path;
    tmp += ".tmp";
    try {
        write_file(tmp, bytes);
        std::filesystem::rename(tmp, path);
    } catch (const std::exception& e) {
        std::error_code ec;
        std::filesystem::remove(tmp, ec);
        throw ModelFormatError(ModelErrorCode::Io, e.what());
    }
}

std::vector<std::uint8_t> load_bytes(const std::filesystem::path& path) {
    try {
        return read_file(path);
    } catch (const std::exception& e) {
        throw ModelFormatError(ModelErrorCode::Io, e.what());
    }
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const Network& net) {
    std::vector<PendingTensor> tensors;
    for (std::size_t i = 0; i < net.parameters().size(); ++i) {
        tensors.push_back(f32_tensor(net.parameters()[i], i % 2 == 0 ? Role::Weight : Role::Bias));
    }
    return encode(header_for(static_cast<float>(net.width()), net.input_shape(), net.parameter_count(), 0),
                  net.layers(), std::move(tensors));
}

std::vector<std::uint8_t> serialize_quantized(const QuantizedModel& qm) {
    std::vector<PendingTensor> tensors;
    for (std::size_t i = 0; i < qm.weights.size(); ++i) {
        const auto& q = qm.weights[i];
        tensors.push_back({{DType::I8, Role::Weight, q.shape, q.scale, 0, q.values.size()}, q.values.data()});
        tensors.push_back(f32_tensor(qm.biases[i], Role::Bias));
    }
    return encode(header_for(static_cast<float>(qm.width), qm.input_shape, qm.parameter_count(), kFlagQuantized),
                  qm.layers, std::move(tensors));
}

std::vector<std::uint8_t> serialize_checkpoint(const TrainState& state) {
    const Network& net = state.net;
    if (state.adam.m.size() != net.parameters().size() || state.adam.v.size() != net.parameters().size()) {
        throw ShapeError("optimizer state is not congruent to the network parameters");
    }
    std::vector<PendingTensor> tensors;
    for (std::size_t i = 0; i < net.parameters().size(); ++i) {
        tensors.push_back(f32_tensor(net.parameters()[i], i % 2 == 0 ? Role::Weight : Role::Bias));
    }
    for (const auto& m : state.adam.m) tensors.push_back(f32_tensor(m, Role::AdamM));
    for (const auto& v : state.adam.v) tensors.push_back(f32_tensor(v, Role::AdamV));
    ModelHeader h = header_for(static_cast<float>(net.width()), net.input_shape(), net.parameter_count(), kFlagCheckpoint);
    h.epochs_completed = static_cast<std::uint32_t>(state.epochs_completed);
    h.adam_t = state.adam.t;
    return encode(h, net.layers(), std::move(tensors));
}

ModelHeader parse_header(std::span<const std::uint8_t> bytes) { return parse(bytes).header; }

Network deserialize_model(std::span<const std::uint8_t> bytes) {
    const Parsed p = parse(bytes);
    if (p.header.quantized()) {
        throw ModelFormatError(ModelErrorCode::Malformed, "file holds a quantized model; use the quantized loader");
    }
    std::size_t next = 0;
    Network net = network_from(p, next);
    if (!p.header.checkpoint() && next != p.tensors.size()) {
        throw ModelFormatError(ModelErrorCode::Malformed, "unexpected extra tensors");
    }
    return net;
}

QuantizedModel deserialize_quantized(std::span<const std::uint8_t> bytes) {
    const Parsed p = parse(bytes);
    if (!p.header.quantized() || p.header.checkpoint()) {
        throw ModelFormatError(ModelErrorCode::Malformed, "file does not hold a quantized model");
    }
    QuantizedModel qm;
    qm.layers = p.layers;
    qm.input_shape = p.header.input_shape;
    qm.width = static_cast<double>(p.header.width);
    std::size_t next = 0;
    for (std::size_t i = 0; i < parametric_layers(p.layers); ++i) {
        const auto& w = expect(p, next++, Role::Weight);
        if (w.dtype != DType::I8) throw ModelFormatError(ModelErrorCode::Malformed, "expected an int8 weight tensor");
        const auto* src = p.payload.data() + w.offset;
        QuantizedTensor q{w.shape, std::vector<std::int8_t>(w.nbytes), w.scale};
        std::memcpy(q.values.data(), src, w.nbytes);
        for (auto v : q.values)
            if (v == -128) throw ModelFormatError(ModelErrorCode::Malformed, "int8 value outside [-127, 127]");
        if (!(w.scale > 0.0f) || !std::isfinite(w.scale)) {
            throw ModelFormatError(ModelErrorCode::Malformed, "quantization scale must be positive");
        }
        qm.weights.push_back(std::move(q));
        qm.biases.push_back(read_f32(p, expect(p, next++, Role::Bias)));
    }
    if (next != p.tensors.size()) throw ModelFormatError(ModelErrorCode::Malformed, "unexpected extra tensors");
    as_malformed([&] { return dequantize(qm); });
    if (qm.parameter_count() != p.header.total_parameters) {
        throw ModelFormatError(ModelErrorCode::Malformed, "header parameter count disagrees with the tensors");
    }
    return qm;
}

TrainState deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
    const Parsed p = parse(bytes);
    if (!p.header.checkpoint() || p.header.quantized()) {
        throw ModelFormatError(ModelErrorCode::Malformed, "file is not a training checkpoint");
    }
    std::size_t next = 0;
    TrainState s;
    s.net = network_from(p, next);
    const std::size_t n = s.net.parameters().size();
    for (std::size_t i = 0; i < n; ++i) s.adam.m.push_back(read_f32(p, expect(p, next++, Role::AdamM)));
    for (std::size_t i = 0; i < n; ++i) s.adam.v.push_back(read_f32(p, expect(p, next++, Role::AdamV)));
    if (next != p.tensors.size()) throw ModelFormatError(ModelErrorCode::Malformed, "unexpected extra tensors");
    for (std::size_t i = 0; i < n; ++i) {
        if (s.adam.m[i].shape() != s.net.parameters()[i].shape() || s.adam.v[i].shape() != s.net.parameters()[i].shape()) {
            throw ModelFormatError(ModelErrorCode::Malformed, "optimizer moments do not match the parameters");
        }
    }
    s.adam.t = p.header.adam_t;
    s.epochs_completed = p.header.epochs_completed;
    return s;
}

void save_model(const Network& net, const std::filesystem::path& path) { save_bytes(serialize_model(net), path); }
Network load_model(const std::filesystem::path& path) { return deserialize_model(load_bytes(path)); }
void save_quantized(const QuantizedModel& qm, const std::filesystem::path& path) {
    save_bytes(serialize_quantized(qm), path);
}
QuantizedModel load_quantized(const std::filesystem::path& path) { return deserialize_quantized(load_bytes(path)); }
void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
    save_bytes(serialize_checkpoint(state), path);
}
TrainState load_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(load_bytes(path)); }
ModelHeader read_header(const std::filesystem::path& path) { return parse_header(load_bytes(path)); }

InferenceModel::InferenceModel(Network net)
    : width_(net.width()), total_parameters_(net.parameter_count()), input_shape_(net.input_shape()) {
    float_ = std::move(net);
}

InferenceModel::InferenceModel(QuantizedModel qm)
    : width_(qm.width), total_parameters_(qm.parameter_count()), input_shape_(qm.input_shape) {
    executor_.emplace(qm);
}

InferenceModel InferenceModel::load(const std::filesystem::path& path) {
    const auto bytes = load_bytes(path);
    if (parse_header(bytes).quantized()) return InferenceModel(deserialize_quantized(bytes));
    return InferenceModel(deserialize_model(bytes));
}

double InferenceModel::width() const { return width_; }
std::size_t InferenceModel::total_parameters() const { return total_parameters_; }
const Shape& InferenceModel::input_shape() const { return input_shape_; }

Tensor InferenceModel::predict(const Tensor& batch) const {
    if (executor_) return executor_->forward(batch);
    return float_->predict(batch);
}

}  // namespace dfq
