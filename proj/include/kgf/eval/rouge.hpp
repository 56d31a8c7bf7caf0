#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace kgf::eval {

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Lower-cased alphanumeric word tokens; everything else separates words.
std::vector<std::string> word_tokens(std::string_view text);

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

/// Token-level ROUGE-L on case-folded words. An empty reference scores recall 0.
RougeScore rouge_l(std::string_view hypothesis, std::string_view reference);

}  // namespace kgf::eval
