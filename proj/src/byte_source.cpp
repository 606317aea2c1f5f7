#include "xlpack/byte_source.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstring>

#include "xlpack/common.hpp"

namespace xlpack {

FileSource::FileSource(const std::filesystem::path& path) : path_(path) {
    // gzread passes non-gzip files through unchanged.
    gzFile f = gzopen(path.c_str(), "rb");
    if (f == nullptr) throw InputError("cannot open " + path.string());
    gzbuffer(f, 1 << 17);
    handle_ = f;
}

FileSource::~FileSource() {
    if (handle_ != nullptr) gzclose(static_cast<gzFile>(handle_));
}

std::size_t FileSource::read(char* dst, std::size_t capacity) {
    auto chunk = static_cast<unsigned>(std::min<std::size_t>(capacity, 1u << 30));
    int n = gzread(static_cast<gzFile>(handle_), dst, chunk);
    if (n < 0) {
        int err = 0;
        const char* msg = gzerror(static_cast<gzFile>(handle_), &err);
        throw InputError("read error in " + path_.string() + ": " + (msg ? msg : "unknown"));
    }
    return static_cast<std::size_t>(n);
}

std::size_t MemorySource::read(char* dst, std::size_t capacity) {
    std::size_t n = std::min(capacity, bytes_.size() - pos_);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
    return n;
}

std::size_t StringSource::read(char* dst, std::size_t capacity) {
    std::size_t n = std::min(capacity, bytes_.size() - pos_);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
    return n;
}

BufferedReader::BufferedReader(std::unique_ptr<ByteSource> src, std::size_t capacity)
    : src_(std::move(src)), capacity_(capacity), buf_(new char[capacity]) {}

bool BufferedReader::refill() {
    consumed_ += len_;
    pos_ = 0;
    len_ = src_->read(buf_.get(), capacity_);
    return len_ > 0;
}

bool BufferedReader::getline(std::string& line) {
    line.clear();
    bool any = false;
    for (;;) {
        if (pos_ == len_ && !refill()) return any;
        any = true;
        const char* start = buf_.get() + pos_;
        const void* nl = std::memchr(start, '\n', len_ - pos_);
        if (nl != nullptr) {
            auto n = static_cast<std::size_t>(static_cast<const char*>(nl) - start);
            line.append(start, n);
            pos_ += n + 1;
            return true;
        }
        line.append(start, len_ - pos_);
        pos_ = len_;
    }
}

}  // namespace xlpack
