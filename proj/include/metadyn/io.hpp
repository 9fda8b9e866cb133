#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "metadyn/errors.hpp"

namespace metadyn {

// CRC-32 (IEEE 802.3, reflected, poly 0xEDB88320).
uint32_t crc32(const void* data, size_t len, uint32_t seed = 0);

uint64_t fnv1a64(const void* data, size_t len);
uint64_t file_fingerprint(const std::string& path);

// Little-endian binary buffer writer. All on-disk formats go through this so
// byte layout is independent of host struct padding.
class ByteWriter {
public:
    void u32(uint32_t v) { raw(&v, sizeof v); }
    void u64(uint64_t v) { raw(&v, sizeof v); }
    void f32(float v) { raw(&v, sizeof v); }
    void f64(double v) { raw(&v, sizeof v); }
    void f32s(const std::vector<float>& v) { raw(v.data(), v.size() * sizeof(float)); }
    void f64s(const std::vector<double>& v) { raw(v.data(), v.size() * sizeof(double)); }
    void str(const std::string& s) {
        u32(static_cast<uint32_t>(s.size()));
        raw(s.data(), s.size());
    }
    void raw(const void* p, size_t n) {
        const auto* b = static_cast<const uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }

    const std::vector<uint8_t>& bytes() const { return buf_; }
    size_t size() const { return buf_.size(); }

private:
    std::vector<uint8_t> buf_;
};

class ByteReader {
public:
    ByteReader(const uint8_t* data, size_t len) : data_(data), len_(len) {}
    explicit ByteReader(const std::vector<uint8_t>& v) : data_(v.data()), len_(v.size()) {}

    uint32_t u32() { return read<uint32_t>(); }
    uint64_t u64() { return read<uint64_t>(); }
    float f32() { return read<float>(); }
    double f64() { return read<double>(); }
    std::vector<float> f32s(size_t n) {
        std::vector<float> v(n);
        rawInto(v.data(), n * sizeof(float));
        return v;
    }
    std::vector<double> f64s(size_t n) {
        std::vector<double> v(n);
        rawInto(v.data(), n * sizeof(double));
        return v;
    }
    std::string str() {
        const uint32_t n = u32();
        std::string s(n, '\0');
        rawInto(s.data(), n);
        return s;
    }
    size_t pos() const { return pos_; }
    size_t remaining() const { return len_ - pos_; }

private:
    template <class T>
    T read() {
        T v;
        rawInto(&v, sizeof v);
        return v;
    }
    void rawInto(void* out, size_t n) {
        if (pos_ + n > len_) throw DataError("truncated payload: need " + std::to_string(n) + " bytes at offset " + std::to_string(pos_));
        std::memcpy(out, data_ + pos_, n);
        pos_ += n;
    }

    const uint8_t* data_;
    size_t len_;
    size_t pos_ = 0;
};

std::vector<uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<uint8_t>& bytes);
void write_text_file(const std::string& path, const std::string& text);

} // namespace metadyn
