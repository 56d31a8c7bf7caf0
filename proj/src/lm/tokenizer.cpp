#include "kgf/lm/tokenizer.hpp"

#include <cctype>

namespace kgf::lm {
namespace {

bool word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '\''; }

bool attaches_left(const std::string& t) {
  return t == "?" || t == "." || t == "," || t == "!" || t == ":" || t == ";";
}

}  // namespace

Tokenizer::Tokenizer() {
  for (const char* s : {"[PAD]", "[BOS]", "[EOS]", "[SEP]", "[BLANK]"}) {
    index_.emplace(s, static_cast<int>(vocab_.size()));
    vocab_.emplace_back(s);
  }
}

std::vector<std::string> Tokenizer::split(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (c == '[') {
      auto close = text.find(']', i);
      if (close == std::string_view::npos) throw TokenizerError("unterminated special token");
      out.emplace_back(text.substr(i, close - i + 1));
      i = close + 1;
    } else if (word_char(c)) {
      std::size_t j = i;
      while (j < text.size() && word_char(text[j])) ++j;
      out.emplace_back(text.substr(i, j - i));
      i = j;
    } else {
      out.emplace_back(1, c);
      ++i;
    }
  }
  return out;
}

void Tokenizer::add_text(std::string_view text) {
  for (auto& t : split(text)) {
    if (!index_.contains(t)) {
      index_.emplace(t, static_cast<int>(vocab_.size()));
      vocab_.push_back(std::move(t));
    }
  }
}

Tokenizer Tokenizer::build(const std::vector<std::string>& texts) {
  Tokenizer tok;
  for (const auto& t : texts) tok.add_text(t);
  return tok;
}

Tokenizer Tokenizer::from_vocabulary(const std::vector<std::string>& words) {
  Tokenizer tok;
  if (words.size() < tok.vocab_.size()) throw TokenizerError("vocabulary lacks special tokens");
  for (std::size_t i = 0; i < tok.vocab_.size(); ++i) {
    if (words[i] != tok.vocab_[i]) throw TokenizerError("vocabulary special tokens out of order");
  }
  for (std::size_t i = tok.vocab_.size(); i < words.size(); ++i) {
    if (!tok.index_.emplace(words[i], static_cast<int>(i)).second) {
      throw TokenizerError("duplicate vocabulary entry '" + words[i] + "'");
    }
    tok.vocab_.push_back(words[i]);
  }
  return tok;
}

std::vector<int> Tokenizer::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& t : split(text)) ids.push_back(id(t));
  return ids;
}

std::string Tokenizer::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int i : ids) {
    const std::string& t = token(i);
    if (!out.empty() && !attaches_left(t)) out += ' ';
    out += t;
  }
  return out;
}

bool Tokenizer::contains(std::string_view token) const { return index_.contains(std::string(token)); }

int Tokenizer::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) throw TokenizerError("out-of-vocabulary token '" + std::string(token) + "'");
  return it->second;
}

const std::string& Tokenizer::token(int id) const {
  if (id < 0 || id >= size()) throw TokenizerError("token id " + std::to_string(id) + " out of range");
  return vocab_[static_cast<std::size_t>(id)];
}

}  // namespace kgf::lm
