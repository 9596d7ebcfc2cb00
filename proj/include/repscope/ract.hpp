#ifndef REPSCOPE_RACT_HPP
#define REPSCOPE_RACT_HPP

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "repscope/error.hpp"
#include "repscope/matrix.hpp"

/**
 * @file ract.hpp
 *
 * RACT activation tensor container. Layout, all integers little-endian:
 *
 *     offset  size  field
 *     0       4     magic "RACT"
 *     4       4     version (u32) = 1
 *     8       1     dtype code (u8): 1 = float32, 2 = float64
 *     9       8     rows (u64)
 *     17      8     cols (u64)
 *     25      ...   rows * cols values, row-major, IEEE-754 little-endian
 *
 * The payload length must match rows * cols * dtype size exactly.
 */

namespace repscope {

static_assert(std::endian::native == std::endian::little, "RACT I/O assumes a little-endian host");

enum class DType : std::uint8_t { Float32 = 1, Float64 = 2 };

inline constexpr std::array<char, 4> kRactMagic{'R', 'A', 'C', 'T'};
inline constexpr std::uint32_t kRactVersion = 1;
inline constexpr std::size_t kRactHeaderSize = 4 + 4 + 1 + 8 + 8;

struct TensorHeader {
    std::uint32_t version = kRactVersion;
    DType dtype = DType::Float64;
    std::uint64_t rows = 0;
    std::uint64_t cols = 0;
};

inline std::size_t dtype_size(DType dtype) {
    return dtype == DType::Float32 ? 4 : 8;
}

namespace detail {

template <typename T>
void put(std::vector<char>& out, T value) {
    const auto* bytes = reinterpret_cast<const char*>(&value);
    out.insert(out.end(), bytes, bytes + sizeof(T));
}

template <typename T>
T get(const char* in) {
    T value;
    std::memcpy(&value, in, sizeof(T));
    return value;
}

inline std::vector<char> slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorKind::IoError, "cannot open " + path.string());
    }
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) {
        fail(ErrorKind::IoError, "read failed for " + path.string());
    }
    return bytes;
}

} // namespace detail

inline std::vector<char> encode_tensor(const DenseMatrix& matrix, DType dtype) {
    std::vector<char> out;
    out.reserve(kRactHeaderSize + matrix.rows() * matrix.cols() * dtype_size(dtype));
    out.insert(out.end(), kRactMagic.begin(), kRactMagic.end());
    detail::put<std::uint32_t>(out, kRactVersion);
    detail::put<std::uint8_t>(out, static_cast<std::uint8_t>(dtype));
    detail::put<std::uint64_t>(out, matrix.rows());
    detail::put<std::uint64_t>(out, matrix.cols());
    for (double v : matrix.data()) {
        if (dtype == DType::Float32) {
            detail::put<float>(out, static_cast<float>(v));
        } else {
            detail::put<double>(out, v);
        }
    }
    return out;
}

/// Parses and validates a header; `total_size` is the full byte length of the file.
inline TensorHeader decode_header(const char* bytes, std::size_t total_size) {
    if (total_size < kRactHeaderSize) {
        if (total_size >= 4 && std::memcmp(bytes, kRactMagic.data(), 4) != 0) {
            fail(ErrorKind::FormatError, "bad magic");
        }
        fail(ErrorKind::CorruptFile, "file shorter than the RACT header");
    }
    if (std::memcmp(bytes, kRactMagic.data(), 4) != 0) {
        fail(ErrorKind::FormatError, "bad magic");
    }
    TensorHeader header;
    header.version = detail::get<std::uint32_t>(bytes + 4);
    if (header.version != kRactVersion) {
        fail(ErrorKind::FormatError, "unsupported version " + std::to_string(header.version));
    }
    const auto code = detail::get<std::uint8_t>(bytes + 8);
    if (code != 1 && code != 2) {
        fail(ErrorKind::FormatError, "unknown dtype code " + std::to_string(code));
    }
    header.dtype = static_cast<DType>(code);
    header.rows = detail::get<std::uint64_t>(bytes + 9);
    header.cols = detail::get<std::uint64_t>(bytes + 17);
    if (header.rows == 0 || header.cols == 0) {
        fail(ErrorKind::CorruptFile, "zero-sized tensor");
    }

    const std::uint64_t payload = total_size - kRactHeaderSize;
    const std::uint64_t elem = dtype_size(header.dtype);
    constexpr auto kMax = std::numeric_limits<std::uint64_t>::max();
    if (header.rows > kMax / header.cols || header.rows * header.cols > kMax / elem ||
        header.rows * header.cols * elem != payload) {
        fail(ErrorKind::CorruptFile, "payload length does not match header shape");
    }
    return header;
}

inline DenseMatrix decode_tensor(const std::vector<char>& bytes) {
    const TensorHeader header = decode_header(bytes.data(), bytes.size());
    const std::size_t count = header.rows * header.cols;
    std::vector<double> values(count);
    const char* payload = bytes.data() + kRactHeaderSize;
    for (std::size_t i = 0; i < count; ++i) {
        values[i] = header.dtype == DType::Float32
                        ? static_cast<double>(detail::get<float>(payload + 4 * i))
                        : detail::get<double>(payload + 8 * i);
        if (!std::isfinite(values[i])) {
            fail(ErrorKind::InvalidInput, "non-finite value at element " + std::to_string(i));
        }
    }
    return DenseMatrix(header.rows, header.cols, values);
}

inline void write_tensor(const std::filesystem::path& path, const DenseMatrix& matrix, DType dtype) {
    const std::vector<char> bytes = encode_tensor(matrix, dtype);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        fail(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    if (!out) {
        fail(ErrorKind::IoError, "write failed for " + path.string());
    }
}

inline DenseMatrix read_tensor(const std::filesystem::path& path) {
    try {
        return decode_tensor(detail::slurp(path));
    } catch (const Error& e) {
        throw e.with_context(path.string());
    }
}

/// Reads only the header, checking it against the file size.
inline TensorHeader read_tensor_header(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) {
        fail(ErrorKind::IoError, "cannot open " + path.string());
    }
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    std::array<char, kRactHeaderSize> head{};
    in.read(head.data(), static_cast<std::streamsize>(std::min(size, kRactHeaderSize)));
    try {
        return decode_header(head.data(), size);
    } catch (const Error& e) {
        throw e.with_context(path.string());
    }
}

} // namespace repscope

#endif
