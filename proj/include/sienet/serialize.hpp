#ifndef SIENET_SERIALIZE_HPP
#define SIENET_SERIALIZE_HPP

// Named-tensor container shared by checkpoints and feature-extractor weight files.
//
//   "SIEN"  u32 version
//   u64 config length, config bytes (UTF-8 key=value text)
//   u64 record count, then per record:
//     u32 name length, name bytes, u8 dtype, u32 rank, rank x u64 dims, raw little-endian data
//
// Records keep insertion order, so save -> load -> save reproduces the same bytes.

#include "sienet/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace sienet {

inline constexpr std::uint32_t kContainerVersion = 1;

/// Raised when a container was written by an incompatible format version.
class VersionError : public Error {
public:
    using Error::Error;
};

enum class DType : std::uint8_t { f32 = 0, f64 = 1, i64 = 2 };

struct Record {
    std::string name;
    DType dtype = DType::f32;
    std::vector<std::uint64_t> dims;
    std::string bytes;
};

class NamedTensors {
public:
    std::string config;

    void put(const std::string& name, const Tensorf& t);
    void put(const std::string& name, const Tensord& t);
    void put_int(const std::string& name, std::int64_t value);

    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    const Record& record(const std::string& name) const;
    const std::vector<Record>& records() const { return records_; }

    Tensorf tensorf(const std::string& name) const;
    std::int64_t get_int(const std::string& name) const;

    /// All f32/f64 records with rank-4 dims, as float tensors.
    std::map<std::string, Tensorf> tensors() const;

    std::string serialize() const;
    static NamedTensors deserialize(const std::string& bytes);

    void save(const std::filesystem::path& path) const;
    static NamedTensors load(const std::filesystem::path& path);

private:
    void add(Record r);

    std::vector<Record> records_;
    std::map<std::string, std::size_t> index_;
};

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& text);

}  // namespace sienet

#endif  // SIENET_SERIALIZE_HPP
