#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

namespace xlpack {

/// Pull-style byte stream. `read` returns 0 only at end of input.
class ByteSource {
public:
    virtual ~ByteSource() = default;
    virtual std::size_t read(char* dst, std::size_t capacity) = 0;
};

/// Reads a plain or gzip-compressed file; gzip is detected from the magic bytes.
class FileSource final : public ByteSource {
public:
    explicit FileSource(const std::filesystem::path& path);
    ~FileSource() override;
    FileSource(const FileSource&) = delete;
    FileSource& operator=(const FileSource&) = delete;

    std::size_t read(char* dst, std::size_t capacity) override;

private:
    std::filesystem::path path_;
    void* handle_ = nullptr;  // gzFile
};

/// Non-owning view over bytes already in memory.
class MemorySource final : public ByteSource {
public:
    explicit MemorySource(std::string_view bytes) : bytes_(bytes) {}
    std::size_t read(char* dst, std::size_t capacity) override;

private:
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

/// Owning variant of MemorySource.
class StringSource final : public ByteSource {
public:
    explicit StringSource(std::string bytes) : bytes_(std::move(bytes)) {}
    std::size_t read(char* dst, std::size_t capacity) override;

private:
    std::string bytes_;
    std::size_t pos_ = 0;
};

/// Fixed-capacity buffered reader on top of a ByteSource.
class BufferedReader {
public:
    static constexpr std::size_t kDefaultCapacity = 1 << 16;

    explicit BufferedReader(std::unique_ptr<ByteSource> src,
                            std::size_t capacity = kDefaultCapacity);

    /// Next byte or -1 at end of input.
    int get() {
        if (pos_ == len_ && !refill()) return -1;
        return static_cast<unsigned char>(buf_[pos_++]);
    }
    int peek() {
        if (pos_ == len_ && !refill()) return -1;
        return static_cast<unsigned char>(buf_[pos_]);
    }
    /// Reads one line without the trailing '\n'. Returns false at end of input.
    bool getline(std::string& line);

    std::uint64_t offset() const { return consumed_ + pos_; }
    std::size_t capacity() const { return capacity_; }

private:
    bool refill();

    std::unique_ptr<ByteSource> src_;
    std::size_t capacity_;
    std::unique_ptr<char[]> buf_;
    std::size_t pos_ = 0;
    std::size_t len_ = 0;
    std::uint64_t consumed_ = 0;
};

}  // namespace xlpack
