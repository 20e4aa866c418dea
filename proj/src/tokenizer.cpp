#include "skillprobe/tokenizer.hpp"

#include "skillprobe/error.hpp"

namespace skillprobe {

std::vector<TokenId> tokenize(std::string_view text) {
  std::vector<TokenId> ids;
  ids.reserve(text.size());
  for (char c : text) ids.push_back(static_cast<TokenId>(static_cast<unsigned char>(c)));
  return ids;
}

std::string detokenize(std::span<const TokenId> ids) {
  std::string out;
  out.reserve(ids.size());
  for (TokenId id : ids) {
    if (id >= 0 && id < 256) {
      out.push_back(static_cast<char>(static_cast<unsigned char>(id)));
    } else if (id != kPad && id != kBos && id != kEos) {
      fail(ErrorCode::kShapeError, "token id " + std::to_string(id) + " is outside the vocabulary");
    }
  }
  return out;
}

}  // namespace skillprobe
