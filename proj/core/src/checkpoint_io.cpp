#include "meatlab/checkpoint_io.hpp"

#include "meatlab/errors.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <iterator>

namespace meat {

namespace {

constexpr char kMagic[8] = {'M', 'E', 'A', 'T', 'C', 'K', 'P', 'T'};
constexpr std::size_t kHeaderSize = 24;
constexpr std::uint8_t kLittleEndianTag = 'L';

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float f) {
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        u32(bits);
    }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void tensor(const Tensor& t) {
        u32(static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape()) u64(d);
        for (float v : t.values()) f32(v);
    }
    std::vector<std::uint8_t>& buffer() { return buf_; }

private:
    std::vector<std::uint8_t> buf_;
};

class Reader {
public:
    Reader(std::span<const std::uint8_t> bytes, std::size_t base) : bytes_(bytes), base_(base) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_ + i]} << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
        pos_ += 8;
        return v;
    }
    float f32() {
        const std::uint32_t bits = u32();
        float f;
        std::memcpy(&f, &bits, 4);
        return f;
    }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    Tensor tensor() {
        const std::uint32_t rank = u32();
        if (rank > 8) fail("tensor rank " + std::to_string(rank));
        Shape shape(rank);
        std::size_t count = 1;
        for (auto& d : shape) {
            d = u64();
            if (d > bytes_.size()) fail("tensor dimension " + std::to_string(d));
            count *= d;
        }
        need(count * 4);
        std::vector<float> data(count);
        for (auto& v : data) v = f32();
        return Tensor(std::move(shape), std::move(data));
    }
    bool done() const { return pos_ == bytes_.size(); }
    [[noreturn]] void fail(const std::string& what) const {
        throw FormatError("checkpoint: malformed payload at offset " + std::to_string(base_ + pos_) + " (" + what + ")");
    }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) fail("need " + std::to_string(n) + " more bytes");
    }
    std::span<const std::uint8_t> bytes_;
    std::size_t base_;
    std::size_t pos_ = 0;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; checkpoints stay far below 4 GiB but chunk anyway
    std::size_t off = 0;
    while (off < bytes.size()) {
        const std::size_t chunk = std::min<std::size_t>(bytes.size() - off, 1u << 30);
        crc = crc32(crc, bytes.data() + off, static_cast<uInt>(chunk));
        off += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

std::uint32_t le32(const std::uint8_t* p) {
    return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) | (std::uint32_t{p[3]} << 24);
}

std::uint64_t le64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{p[i]} << (8 * i);
    return v;
}

} // namespace

bool bit_equal(const Checkpoint& a, const Checkpoint& b) {
    return a.epoch == b.epoch && bit_equal(a.params, b.params) && bit_equal(a.bn, b.bn);
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    Writer payload;
    payload.u64(static_cast<std::uint64_t>(static_cast<std::int64_t>(ckpt.epoch)));
    payload.u32(static_cast<std::uint32_t>(ckpt.params.size()));
    for (const auto& p : ckpt.params) {
        payload.str(p.layer);
        payload.str(p.name);
        payload.tensor(p.value);
    }
    payload.u64(ckpt.bn.batches);
    payload.u32(static_cast<std::uint32_t>(ckpt.bn.layers.size()));
    for (const auto& l : ckpt.bn.layers) {
        payload.str(l.layer);
        payload.tensor(l.mean);
        payload.tensor(l.var);
    }

    Writer out;
    out.bytes(kMagic, sizeof kMagic);
    out.u32(kCheckpointVersion);
    out.u8(kLittleEndianTag);
    out.u8(0);
    out.u8(0);
    out.u8(0);
    out.u64(payload.buffer().size());
    out.bytes(payload.buffer().data(), payload.buffer().size());
    out.u32(crc32_of(out.buffer()));
    return std::move(out.buffer());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kHeaderSize) {
        throw TruncatedError("checkpoint: " + std::to_string(bytes.size()) + " bytes is shorter than the header");
    }
    if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) throw FormatError("checkpoint: bad magic at offset 0");
    const std::uint32_t version = le32(bytes.data() + 8);
    if (version != kCheckpointVersion) {
        throw VersionError("checkpoint: unsupported format version " + std::to_string(version) + " (expected " +
                           std::to_string(kCheckpointVersion) + ")");
    }
    if (bytes[12] != kLittleEndianTag) throw FormatError("checkpoint: unknown byte-order tag at offset 12");
    const std::uint64_t payload_len = le64(bytes.data() + 16);
    if (payload_len > bytes.size() || bytes.size() - kHeaderSize < payload_len + 4) {
        throw TruncatedError("checkpoint: header declares " + std::to_string(payload_len) + " payload bytes but file has " +
                             std::to_string(bytes.size()) + " bytes total");
    }
    if (bytes.size() != kHeaderSize + payload_len + 4) {
        throw FormatError("checkpoint: " + std::to_string(bytes.size() - kHeaderSize - payload_len - 4) +
                          " trailing bytes after checksum");
    }
    const std::size_t body = kHeaderSize + payload_len;
    const std::uint32_t stored = le32(bytes.data() + body);
    if (crc32_of(bytes.first(body)) != stored) throw ChecksumError("checkpoint: CRC-32 mismatch");

    Reader r(bytes.subspan(kHeaderSize, payload_len), kHeaderSize);
    Checkpoint ckpt;
    ckpt.epoch = static_cast<int>(static_cast<std::int64_t>(r.u64()));
    const std::uint32_t n = r.u32();
    std::vector<ParamTensor> params;
    for (std::uint32_t i = 0; i < n; ++i) {
        ParamTensor p;
        p.layer = r.str();
        p.name = r.str();
        p.value = r.tensor();
        params.push_back(std::move(p));
    }
    ckpt.params = NamedParams(std::move(params));
    ckpt.bn.batches = r.u64();
    const std::uint32_t nb = r.u32();
    for (std::uint32_t i = 0; i < nb; ++i) {
        BnLayerStats l;
        l.layer = r.str();
        l.mean = r.tensor();
        l.var = r.tensor();
        ckpt.bn.layers.push_back(std::move(l));
    }
    if (!r.done()) r.fail("unconsumed payload bytes");
    return ckpt;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

} // namespace meat
