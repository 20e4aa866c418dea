#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace skillprobe {

using TokenId = std::int32_t;

// Byte-level vocabulary: ids 0..255 are raw bytes, followed by specials.
inline constexpr TokenId kPad = 256;
inline constexpr TokenId kBos = 257;
inline constexpr TokenId kEos = 258;
inline constexpr int kByteVocabSize = 259;

std::vector<TokenId> tokenize(std::string_view text);

// Specials are dropped; any other id outside 0..255 is a ShapeError.
std::string detokenize(std::span<const TokenId> ids);

}  // namespace skillprobe
