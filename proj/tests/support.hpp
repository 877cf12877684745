#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "aum/data.hpp"

namespace testing_support {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("aum-" + tag + "-" + std::to_string(rd()));
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

inline aum::Dataset small_synthetic(int c, std::size_t per_class, std::uint64_t seed, std::size_t d = 4,
                                    double spread = 0.35) {
    aum::SyntheticSpec spec;
    spec.num_classes = c;
    spec.feature_dim = d;
    spec.per_class = per_class;
    spec.spread = spread;
    spec.seed = seed;
    return aum::generate_synthetic(spec);
}

}  // namespace testing_support
