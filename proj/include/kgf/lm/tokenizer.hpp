#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace kgf::lm {

class TokenizerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Closed-vocabulary word-level tokenizer. Words are maximal runs of letters,
/// digits and apostrophes; every other non-space character is its own token;
/// bracketed specials such as [SEP] are single tokens.
class Tokenizer {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kSep = 3;
  static constexpr int kBlank = 4;

  Tokenizer();

  /// Adds every token of `text` to the vocabulary.
  void add_text(std::string_view text);
  /// Builds a vocabulary from texts; token ids follow first appearance.
  static Tokenizer build(const std::vector<std::string>& texts);
  static Tokenizer from_vocabulary(const std::vector<std::string>& words);

  /// Throws TokenizerError on an out-of-vocabulary token.
  std::vector<int> encode(std::string_view text) const;
  std::string decode(const std::vector<int>& ids) const;

  bool contains(std::string_view token) const;
  int id(std::string_view token) const;
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(vocab_.size()); }
  const std::vector<std::string>& vocabulary() const { return vocab_; }

  static std::vector<std::string> split(std::string_view text);

 private:
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace kgf::lm
