#include "mnemo/text.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "mnemo/error.hpp"

namespace mnemo {
namespace {

std::map<std::string, int> counts(const std::vector<std::string>& tokens) {
  std::map<std::string, int> out;
  for (const auto& t : tokens) ++out[t];
  return out;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c >= 'A' && c <= 'Z') {
      cur.push_back(static_cast<char>(c - 'A' + 'a'));
    } else if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c >= 0x80) {
      cur.push_back(ch);
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

double rouge1(std::string_view text_a, std::string_view text_b) {
  const auto a = tokenize(text_a);
  const auto b = tokenize(text_b);
  if (a.empty() || b.empty()) return 0.0;
  const auto ca = counts(a);
  const auto cb = counts(b);
  int overlap = 0;
  for (const auto& [tok, n] : ca) {
    auto it = cb.find(tok);
    if (it != cb.end()) overlap += std::min(n, it->second);
  }
  if (overlap == 0) return 0.0;
  const double precision = static_cast<double>(overlap) / static_cast<double>(b.size());
  const double recall = static_cast<double>(overlap) / static_cast<double>(a.size());
  return 2.0 * precision * recall / (precision + recall);
}

TfidfIndex::TfidfIndex(const std::vector<std::string>& corpus) : documents_(corpus.size()) {
  if (corpus.empty()) throw ArgumentError("TF-IDF corpus is empty");
  std::map<std::string, std::size_t> df;
  for (const auto& doc : corpus) {
    const auto toks = tokenize(doc);
    for (const auto& t : std::set<std::string>(toks.begin(), toks.end())) ++df[t];
  }
  df_.assign(df.begin(), df.end());
}

double TfidfIndex::idf(const std::string& token) const {
  auto it = std::lower_bound(df_.begin(), df_.end(), token,
                             [](const auto& entry, const std::string& t) { return entry.first < t; });
  const std::size_t df = (it != df_.end() && it->first == token) ? it->second : 0;
  return std::log((1.0 + static_cast<double>(documents_)) / (1.0 + static_cast<double>(df))) + 1.0;
}

double TfidfIndex::similarity(std::string_view answer, std::string_view truth) const {
  const auto ca = counts(tokenize(answer));
  const auto ct = counts(tokenize(truth));
  if (ca.empty() || ct.empty()) return 0.0;
  double dot = 0.0, na = 0.0, nt = 0.0;
  for (const auto& [tok, n] : ca) {
    const double w = n * idf(tok);
    na += w * w;
    auto it = ct.find(tok);
    if (it != ct.end()) dot += w * it->second * idf(tok);
  }
  for (const auto& [tok, n] : ct) {
    const double w = n * idf(tok);
    nt += w * w;
  }
  if (dot == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nt)), 0.0, 1.0);
}

double tfidf_similarity(std::string_view answer, std::string_view truth,
                        const std::vector<std::string>& corpus) {
  return TfidfIndex(corpus).similarity(answer, truth);
}

}  // namespace mnemo
