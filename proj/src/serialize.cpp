#include "sienet/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace sienet {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace {

template <typename T>
void append(std::string& out, T value)
{
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.append(buf, sizeof(T));
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    template <typename T>
    T read(const char* what)
    {
        need(sizeof(T), what);
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    std::string read_bytes(std::uint64_t n, const char* what)
    {
        need(n, what);
        std::string s = bytes_.substr(pos_, std::size_t(n));
        pos_ += std::size_t(n);
        return s;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::uint64_t n, const char* what) const
    {
        if (n > bytes_.size() - pos_) throw Error(std::string("container truncated while reading ") + what);
    }

    const std::string& bytes_;
    std::size_t pos_ = 0;
};

std::size_t dtype_size(DType d)
{
    switch (d) {
        case DType::f32: return 4;
        case DType::f64: return 8;
        case DType::i64: return 8;
    }
    throw Error("unknown dtype");
}

template <typename Scalar>
Record tensor_record(const std::string& name, const Tensor<Scalar>& t, DType dtype)
{
    Record r;
    r.name = name;
    r.dtype = dtype;
    const Shape s = t.shape();
    r.dims = {std::uint64_t(s.n), std::uint64_t(s.c), std::uint64_t(s.h), std::uint64_t(s.w)};
    r.bytes.assign(reinterpret_cast<const char*>(t.data()), std::size_t(t.size()) * sizeof(Scalar));
    return r;
}

}  // namespace

std::uint64_t fnv1a(const std::string& text)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

void NamedTensors::add(Record r)
{
    if (index_.count(r.name)) throw Error("duplicate record name '" + r.name + "'");
    index_[r.name] = records_.size();
    records_.push_back(std::move(r));
}

void NamedTensors::put(const std::string& name, const Tensorf& t) { add(tensor_record(name, t, DType::f32)); }
void NamedTensors::put(const std::string& name, const Tensord& t) { add(tensor_record(name, t, DType::f64)); }

void NamedTensors::put_int(const std::string& name, std::int64_t value)
{
    Record r;
    r.name = name;
    r.dtype = DType::i64;
    r.dims = {1};
    append(r.bytes, value);
    add(std::move(r));
}

const Record& NamedTensors::record(const std::string& name) const
{
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("container has no record '" + name + "'");
    return records_[it->second];
}

Tensorf NamedTensors::tensorf(const std::string& name) const
{
    const Record& r = record(name);
    if (r.dims.size() != 4) throw Error("record '" + name + "' is not a rank-4 tensor");
    const Shape s{int(r.dims[0]), int(r.dims[1]), int(r.dims[2]), int(r.dims[3])};
    if (r.dtype == DType::f32) {
        Tensorf t(s);
        std::memcpy(t.data(), r.bytes.data(), r.bytes.size());
        return t;
    }
    if (r.dtype == DType::f64) {
        Tensord t(s);
        std::memcpy(t.data(), r.bytes.data(), r.bytes.size());
        return t.cast<float>();
    }
    throw Error("record '" + name + "' is not floating point");
}

std::int64_t NamedTensors::get_int(const std::string& name) const
{
    const Record& r = record(name);
    if (r.dtype != DType::i64 || r.bytes.size() != 8) throw Error("record '" + name + "' is not an integer");
    std::int64_t v;
    std::memcpy(&v, r.bytes.data(), 8);
    return v;
}

std::map<std::string, Tensorf> NamedTensors::tensors() const
{
    std::map<std::string, Tensorf> out;
    for (const auto& r : records_)
        if (r.dtype != DType::i64 && r.dims.size() == 4) out.emplace(r.name, tensorf(r.name));
    return out;
}

std::string NamedTensors::serialize() const
{
    std::string out = "SIEN";
    append(out, kContainerVersion);
    append(out, std::uint64_t(config.size()));
    out += config;
    append(out, std::uint64_t(records_.size()));
    for (const auto& r : records_) {
        append(out, std::uint32_t(r.name.size()));
        out += r.name;
        append(out, std::uint8_t(r.dtype));
        append(out, std::uint32_t(r.dims.size()));
        for (auto d : r.dims) append(out, d);
        out += r.bytes;
    }
    return out;
}

NamedTensors NamedTensors::deserialize(const std::string& bytes)
{
    Reader in(bytes);
    if (in.read_bytes(4, "magic") != "SIEN") throw Error("not a SIEN container (bad magic bytes)");
    const auto version = in.read<std::uint32_t>("version");
    if (version != kContainerVersion)
        throw VersionError("container format version " + std::to_string(version) + " is not supported (expected " +
                           std::to_string(kContainerVersion) + ")");
    NamedTensors nt;
    nt.config = in.read_bytes(in.read<std::uint64_t>("config length"), "config");
    const auto count = in.read<std::uint64_t>("record count");
    for (std::uint64_t i = 0; i < count; ++i) {
        Record r;
        r.name = in.read_bytes(in.read<std::uint32_t>("name length"), "name");
        const auto dtype = in.read<std::uint8_t>("dtype");
        if (dtype > 2) throw Error("record '" + r.name + "' has unknown dtype " + std::to_string(dtype));
        r.dtype = DType(dtype);
        const auto rank = in.read<std::uint32_t>("rank");
        if (rank > 8) throw Error("record '" + r.name + "' has implausible rank");
        std::uint64_t elements = 1;
        for (std::uint32_t k = 0; k < rank; ++k) {
            r.dims.push_back(in.read<std::uint64_t>("dims"));
            elements *= r.dims.back();
        }
        r.bytes = in.read_bytes(elements * dtype_size(r.dtype), "tensor data");
        nt.add(std::move(r));
    }
    if (!in.done()) throw Error("container has trailing bytes");
    return nt;
}

void NamedTensors::save(const std::filesystem::path& path) const
{
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        const std::string bytes = serialize();
        out.write(bytes.data(), std::streamsize(bytes.size()));
        out.flush();
        if (!out) throw Error("failed writing '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

NamedTensors NamedTensors::load(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
}

}  // namespace sienet
