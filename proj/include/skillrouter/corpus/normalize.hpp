#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace skillrouter::corpus {

// Lowercases ASCII, drops punctuation except apostrophes between word
// characters, and splits on whitespace. Dropped punctuation acts as a token
// boundary ("on/off" -> [on, off]). Bytes >= 0x80 are kept as word characters.
std::vector<std::string> normalize(std::string_view text);

std::string join_tokens(const std::vector<std::string>& tokens);

}  // namespace skillrouter::corpus
