#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace mnemo {

/// Lowercases ASCII letters and splits on anything that is not alphanumeric.
/// Bytes >= 0x80 are kept as token characters so UTF-8 words stay whole.
std::vector<std::string> tokenize(std::string_view text);

/// Unigram-overlap F1 with per-token clipped counts. 0 when either side has no tokens.
double rouge1(std::string_view text_a, std::string_view text_b);

/// Cosine similarity of TF-IDF vectors (raw counts, idf = ln((1+N)/(1+df)) + 1 over `corpus`).
/// 0 when either vector is all zero. Throws ArgumentError on an empty corpus.
double tfidf_similarity(std::string_view answer, std::string_view truth,
                        const std::vector<std::string>& corpus);

/// Precomputed document frequencies for repeated similarity queries against one corpus.
class TfidfIndex {
 public:
  explicit TfidfIndex(const std::vector<std::string>& corpus);
  double similarity(std::string_view answer, std::string_view truth) const;
  std::size_t documents() const { return documents_; }

 private:
  double idf(const std::string& token) const;

  std::size_t documents_ = 0;
  std::vector<std::pair<std::string, std::size_t>> df_;  // sorted by token
};

}  // namespace mnemo
