#pragma once

// The seed-pinned synthetic fixture shared by the slow unit tests and the
// acceptance suite: c=10, d=20, 500 samples per class.

#include "aum/aum.hpp"

namespace fixture {

inline constexpr std::uint64_t kDataSeed = 7;
inline constexpr std::uint64_t kNoiseSeed = 8;
inline constexpr std::uint64_t kPlanSeed = 9;
inline constexpr std::uint64_t kTrainSeed = 10;
inline constexpr std::uint64_t kSplitSeed = 11;
inline constexpr double kNoiseRate = 0.4;
inline constexpr double kHoldoutFraction = 0.2;

inline aum::Dataset clean() {
    aum::SyntheticSpec spec;
    spec.seed = kDataSeed;
    return aum::generate_synthetic(spec);
}

inline aum::Dataset noisy(aum::NoiseModel model = aum::NoiseModel::uniform, double rate = kNoiseRate) {
    return aum::corrupt(clean(), {model, rate, kNoiseSeed});
}

inline aum::TrainConfig identification_config() {
    return aum::TrainConfig::identification(aum::kDefaultEpochs, aum::kDefaultIdentificationBatchSize, kTrainSeed);
}

inline aum::TrainConfig full_config() {
    return aum::TrainConfig::full(aum::kDefaultEpochs, aum::kDefaultBatchSize, kTrainSeed);
}

}  // namespace fixture
