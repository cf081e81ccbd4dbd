#include "fapm/npy.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <string>

#include "fapm/error.hpp"

namespace fapm::npy {

static_assert(std::endian::native == std::endian::little,
              "NPY payloads are read and written as little-endian");

namespace {

constexpr char kMagic[] = "\x93NUMPY";
constexpr std::size_t kMagicLength = 6;

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\n");
    return std::string(s.substr(first, last - first + 1));
}

// Returns the raw text of the value for `key` in a Python dict literal.
std::string dict_value(const std::string& header, const std::string& key,
                       const std::filesystem::path& path) {
    const std::string quoted_a = "'" + key + "'";
    const std::string quoted_b = "\"" + key + "\"";
    auto pos = header.find(quoted_a);
    std::size_t key_len = quoted_a.size();
    if (pos == std::string::npos) {
        pos = header.find(quoted_b);
        key_len = quoted_b.size();
    }
    if (pos == std::string::npos) fail(ErrorKind::format, path.string() + ": header lacks '" + key + "'");
    auto colon = header.find(':', pos + key_len);
    if (colon == std::string::npos) fail(ErrorKind::format, path.string() + ": malformed header");
    std::size_t start = colon + 1;
    while (start < header.size() && header[start] == ' ') ++start;
    if (start >= header.size()) fail(ErrorKind::format, path.string() + ": malformed header");

    std::size_t end = start;
    if (header[start] == '(') {
        end = header.find(')', start);
        if (end == std::string::npos) fail(ErrorKind::format, path.string() + ": unterminated shape");
        ++end;
    } else if (header[start] == '\'' || header[start] == '"') {
        end = header.find(header[start], start + 1);
        if (end == std::string::npos) fail(ErrorKind::format, path.string() + ": unterminated string");
        ++end;
    } else {
        end = header.find_first_of(",}", start);
        if (end == std::string::npos) fail(ErrorKind::format, path.string() + ": malformed header");
    }
    return trim(std::string_view(header).substr(start, end - start));
}

std::vector<std::size_t> parse_shape(const std::string& text, const std::filesystem::path& path) {
    if (text.size() < 2 || text.front() != '(' || text.back() != ')')
        fail(ErrorKind::format, path.string() + ": shape is not a tuple");
    std::vector<std::size_t> shape;
    std::string inner = text.substr(1, text.size() - 2);
    std::size_t pos = 0;
    while (pos < inner.size()) {
        auto comma = inner.find(',', pos);
        std::string item = trim(std::string_view(inner).substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
        if (!item.empty()) {
            std::size_t consumed = 0;
            unsigned long long value = 0;
            try {
                value = std::stoull(item, &consumed);
            } catch (const std::exception&) {
                fail(ErrorKind::format, path.string() + ": bad shape entry '" + item + "'");
            }
            if (consumed != item.size()) fail(ErrorKind::format, path.string() + ": bad shape entry '" + item + "'");
            shape.push_back(static_cast<std::size_t>(value));
        }
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return shape;
}

std::string shape_literal(std::span<const std::size_t> shape) {
    std::string out = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(shape[i]);
    }
    if (shape.size() == 1) out += ",";
    out += ")";
    return out;
}

}  // namespace

std::size_t Array::element_count() const noexcept {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Array read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (bytes.size() < 10 || std::memcmp(bytes.data(), kMagic, kMagicLength) != 0)
        fail(ErrorKind::format, path.string() + ": missing NPY magic");
    const auto major = static_cast<unsigned char>(bytes[6]);
    std::size_t header_len = 0;
    std::size_t offset = 0;
    if (major == 1) {
        header_len = static_cast<unsigned char>(bytes[8]) | (static_cast<std::size_t>(static_cast<unsigned char>(bytes[9])) << 8);
        offset = 10;
    } else if (major == 2 || major == 3) {
        if (bytes.size() < 12) fail(ErrorKind::format, path.string() + ": truncated header");
        for (int i = 0; i < 4; ++i)
            header_len |= static_cast<std::size_t>(static_cast<unsigned char>(bytes[8 + i])) << (8 * i);
        offset = 12;
    } else {
        fail(ErrorKind::format, path.string() + ": unknown NPY version " + std::to_string(major));
    }
    if (bytes.size() < offset + header_len) fail(ErrorKind::format, path.string() + ": truncated header");
    const std::string header(bytes.data() + offset, header_len);
    if (header.find('{') == std::string::npos || header.find('}') == std::string::npos)
        fail(ErrorKind::format, path.string() + ": header is not a dict");

    const std::string descr = dict_value(header, "descr", path);
    const std::string fortran = dict_value(header, "fortran_order", path);
    Array array;
    array.shape = parse_shape(dict_value(header, "shape", path), path);

    if (fortran == "True") fail(ErrorKind::unsupported_encoding, path.string() + ": Fortran order is not supported");
    if (fortran != "False") fail(ErrorKind::format, path.string() + ": bad fortran_order value");

    std::size_t item_size = 0;
    if (descr == "'<f4'" || descr == "\"<f4\"") {
        array.dtype = DType::float32;
        item_size = 4;
    } else if (descr == "'|u1'" || descr == "\"|u1\"" || descr == "'<u1'" || descr == "'u1'") {
        array.dtype = DType::uint8;
        item_size = 1;
    } else {
        fail(ErrorKind::unsupported_encoding, path.string() + ": dtype " + descr + " is not supported");
    }

    const std::size_t count = array.element_count();
    const std::size_t payload = bytes.size() - offset - header_len;
    if (payload != count * item_size)
        fail(ErrorKind::format, path.string() + ": payload has " + std::to_string(payload) + " bytes, expected " +
                                    std::to_string(count * item_size));

    const char* src = bytes.data() + offset + header_len;
    array.data.resize(count);
    if (array.dtype == DType::float32) {
        std::memcpy(array.data.data(), src, count * sizeof(float));
    } else {
        for (std::size_t i = 0; i < count; ++i) array.data[i] = static_cast<unsigned char>(src[i]);
    }
    return array;
}

std::vector<std::uint8_t> encode_header(std::span<const std::size_t> shape) {
    std::string dict = "{'descr': '<f4', 'fortran_order': False, 'shape': " + shape_literal(shape) + ", }";
    // magic(6) + version(2) + length(2) + dict + padding + '\n' is a multiple of 64.
    const std::size_t unpadded = kMagicLength + 2 + 2 + dict.size() + 1;
    const std::size_t padding = (64 - unpadded % 64) % 64;
    dict.append(padding, ' ');
    dict.push_back('\n');

    std::vector<std::uint8_t> out(kMagic, kMagic + kMagicLength);
    out.push_back(1);
    out.push_back(0);
    out.push_back(static_cast<std::uint8_t>(dict.size() & 0xff));
    out.push_back(static_cast<std::uint8_t>((dict.size() >> 8) & 0xff));
    out.insert(out.end(), dict.begin(), dict.end());
    return out;
}

void write(const std::filesystem::path& path, std::span<const std::size_t> shape, std::span<const float> data) {
    const std::size_t count = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    if (count != data.size())
        fail(ErrorKind::validation, path.string() + ": shape does not match data length");
    const auto header = encode_header(shape);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(header.data()), static_cast<std::streamsize>(header.size()));
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size_bytes()));
    out.flush();
    if (!out) fail(ErrorKind::io, "failed writing " + path.string());
}

}  // namespace fapm::npy
