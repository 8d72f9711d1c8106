#pragma once

#include <filesystem>
#include <memory>
#include <random>
#include <string>

#include "synthetic.hpp"

namespace testing {

// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("nastl_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::shared_ptr<const nastl::Benchmark> default_bench(uint64_t seed = 1) {
    return std::make_shared<const nastl::Benchmark>(
        nastl::generate_synthetic(seed, nastl::SyntheticSpec::four_task_default()));
}

}  // namespace testing
