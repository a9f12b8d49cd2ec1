#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "sf/episode.hpp"

namespace sf {

class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class BadMagicError : public DatasetError {
public:
    using DatasetError::DatasetError;
};
class VersionMismatchError : public DatasetError {
public:
    using DatasetError::DatasetError;
};
class TruncatedFileError : public DatasetError {
public:
    using DatasetError::DatasetError;
};

struct Dataset {
    Difficulty difficulty = Difficulty::TwoView;
    int height = 32, width = 32, n_views = 2;
    std::vector<Episode> episodes;
};

// Binary little-endian container, magic "SFDS" version 1:
//   header:      u32 episode_count, u16 H, u16 W, u8 n_views, u8 difficulty
//   per episode: u8 M, M x u16 instruction ids, u8 step_count, u8 success
//   per step:    ee_pos 3 x f32, action 4 x f32, then per view:
//                image H*W*3 x f32, depth H*W x f32, pointmap H*W*3 x f32,
//                mask bit-packed (LSB first) padded to a whole byte
// Scene specs are not serialized; loaded episodes carry no scene.
void write_dataset(const Dataset& ds, const std::string& path);
Dataset read_dataset(const std::string& path);

constexpr std::uint8_t kDatasetVersion = 1;

}  // namespace sf
