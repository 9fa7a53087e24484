// Copyright 2026 The uasr Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "uasr/ngram.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace uasr {
namespace {

constexpr double kLog10Zero = -99.0;

using Counts = std::map<std::vector<int>, std::map<int, double>>;

}  // namespace

// Counts every k-gram (k <= order) of the padded sentences, keyed by history.
// The interpolated estimate for history h is
//   P(w|h) = max(c(h,w) - d, 0) / c(h) + d * N1+(h) / c(h) * P(w|h'),
// falling straight through to P(w|h') when h was never seen. Writing it in
// backoff form gives the ARPA probability of seen n-grams and the backoff
// weight d * N1+(h) / c(h) of each history.
NGramLM NGramLM::Train(const std::vector<TokenSequence>& corpus,
                       int vocab_size, int order) {
  if (order < 1) throw std::invalid_argument("n-gram order must be >= 1");
  if (vocab_size < 1) throw std::invalid_argument("vocabulary is empty");
  if (corpus.empty()) throw std::invalid_argument("LM training corpus is empty");
  NGramLM lm;
  lm.order_ = order;
  lm.vocab_size_ = vocab_size;
  Counts counts;
  for (const auto& sentence : corpus) {
    std::vector<int> padded{lm.bos()};
    for (int t : sentence) {
      if (t < 0 || t >= vocab_size)
        throw std::invalid_argument("LM token out of range");
      padded.push_back(t);
    }
    padded.push_back(lm.eos());
    for (size_t i = 1; i < padded.size(); ++i)
      for (int k = 0; k < order && static_cast<int>(i) - k >= 0; ++k) {
        std::vector<int> history(padded.begin() + (i - k), padded.begin() + i);
        counts[history][padded[i]] += 1;
      }
  }

  const int outcomes = vocab_size + 1;
  std::function<double(const std::vector<int>&, int)> p =
      [&](const std::vector<int>& h, int w) -> double {
    const double floor =
        h.empty() ? 1.0 / outcomes
                  : p(std::vector<int>(h.begin() + 1, h.end()), w);
    auto it = counts.find(h);
    if (it == counts.end()) return floor;
    double total = 0;
    for (const auto& [word, c] : it->second) total += c;
    const auto jt = it->second.find(w);
    const double c = jt == it->second.end() ? 0.0 : jt->second;
    return std::max(c - kDiscount, 0.0) / total +
           kDiscount * it->second.size() / total * floor;
  };

  // Every token and </s> is listed as a unigram so lookups always terminate;
  // <s> only has a backoff weight.
  for (int w = 0; w < outcomes; ++w)
    lm.table_[{w}].log10_prob = std::log10(p({}, w));
  lm.table_[{lm.bos()}].log10_prob = kLog10Zero;
  for (const auto& [history, next] : counts) {
    double total = 0;
    for (const auto& [word, c] : next) total += c;
    if (!history.empty())
      lm.table_[history].log10_backoff =
          std::log10(kDiscount * next.size() / total);
    if (history.empty()) continue;
    for (const auto& [word, c] : next) {
      auto gram = history;
      gram.push_back(word);
      lm.table_[gram].log10_prob = std::log10(p(history, word));
    }
  }
  return lm;
}

double NGramLM::Log10Prob(std::vector<int> context, int token) const {
  double backoff = 0;
  while (true) {
    auto gram = context;
    gram.push_back(token);
    auto it = table_.find(gram);
    if (it != table_.end() && it->second.log10_prob != kLog10Zero)
      return backoff + it->second.log10_prob;
    if (context.empty())
      throw std::invalid_argument("token has no unigram entry");
    auto ct = table_.find(context);
    if (ct != table_.end()) backoff += ct->second.log10_backoff;
    context.erase(context.begin());
  }
}

double NGramLM::LogProb(std::span<const int> history, int token) const {
  if (token < 0 || token > eos())
    throw std::out_of_range("LM token out of range");
  std::vector<int> context;
  const int keep = order_ - 1;
  if (keep > 0) {
    const int have = static_cast<int>(history.size());
    if (have < keep) context.push_back(bos());
    for (int i = std::max(0, have - (have < keep ? keep - 1 : keep)); i < have;
         ++i) {
      if (history[i] < 0 || history[i] >= vocab_size_)
        throw std::out_of_range("LM history token out of range");
      context.push_back(history[i]);
    }
  }
  return ContextLogProb(std::move(context), token);
}

double NGramLM::ContextLogProb(std::vector<int> context, int token) const {
  return Log10Prob(std::move(context), token) * std::log(10.0);
}

std::vector<std::vector<int>> NGramLM::Contexts() const {
  std::vector<std::vector<int>> out{{}};
  for (const auto& [gram, entry] : table_) {
    if (static_cast<int>(gram.size()) >= order_) continue;
    if (gram.back() == eos()) continue;
    // Histories either span the full order or start at <s>.
    if (static_cast<int>(gram.size()) == order_ - 1 || gram.front() == bos())
      out.push_back(gram);
  }
  return out;
}

std::string NGramLM::Word(int id) const {
  if (id == eos()) return "</s>";
  if (id == bos()) return "<s>";
  return std::to_string(id);
}

int NGramLM::Id(const std::string& word) const {
  if (word == "</s>") return eos();
  if (word == "<s>") return bos();
  size_t used = 0;
  int id = -1;
  try {
    id = std::stoi(word, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != word.size() || id < 0 || id >= vocab_size_)
    throw std::invalid_argument("unknown ARPA word '" + word + "'");
  return id;
}

void NGramLM::WriteArpa(const std::string& path) const {
  std::vector<std::vector<const std::pair<const std::vector<int>, Entry>*>>
      by_order(order_);
  for (const auto& kv : table_) by_order[kv.first.size() - 1].push_back(&kv);
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << "\\data\\\n";
  for (int k = 0; k < order_; ++k)
    os << "ngram " << k + 1 << "=" << by_order[k].size() << "\n";
  char buf[64];
  for (int k = 0; k < order_; ++k) {
    os << "\n\\" << k + 1 << "-grams:\n";
    for (const auto* kv : by_order[k]) {
      std::snprintf(buf, sizeof(buf), "%.10f", kv->second.log10_prob);
      os << buf;
      for (size_t i = 0; i < kv->first.size(); ++i)
        os << (i == 0 ? "\t" : " ") << Word(kv->first[i]);
      if (k + 1 < order_ && kv->second.log10_backoff != 0) {
        std::snprintf(buf, sizeof(buf), "%.10f", kv->second.log10_backoff);
        os << "\t" << buf;
      }
      os << "\n";
    }
  }
  os << "\n\\end\\\n";
  if (!os) throw std::runtime_error("failed writing " + path);
}

NGramLM NGramLM::ReadArpa(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  NGramLM lm;
  std::map<int, size_t> declared;
  std::string line;
  int section = -1;
  std::vector<std::vector<std::string>> raw;  // order, fields
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line == "\\data\\") {
      section = 0;
      continue;
    }
    if (line == "\\end\\") break;
    if (line.front() == '\\') {
      if (std::sscanf(line.c_str(), "\\%d-grams:", &section) != 1)
        throw std::invalid_argument("bad ARPA section header: " + line);
      continue;
    }
    if (section == 0) {
      int k = 0;
      size_t n = 0;
      if (std::sscanf(line.c_str(), "ngram %d=%zu", &k, &n) != 2)
        throw std::invalid_argument("bad ARPA count line: " + line);
      declared[k] = n;
      continue;
    }
    if (section < 1) continue;
    std::istringstream fields(line);
    std::vector<std::string> f{std::to_string(section)};
    for (std::string s; fields >> s;) f.push_back(s);
    if (static_cast<int>(f.size()) < 2 + section)
      throw std::invalid_argument("short ARPA entry: " + line);
    raw.push_back(std::move(f));
  }
  if (declared.empty()) throw std::invalid_argument("ARPA file has no \\data\\");
  lm.order_ = declared.rbegin()->first;
  // Unigrams are the tokens, </s> and <s>.
  lm.vocab_size_ = static_cast<int>(declared[1]) - 2;
  if (lm.vocab_size_ < 1) throw std::invalid_argument("ARPA vocabulary is empty");
  std::map<int, size_t> seen;
  for (const auto& f : raw) {
    const int k = std::stoi(f[0]);
    std::vector<int> gram;
    for (int i = 0; i < k; ++i) gram.push_back(lm.Id(f[2 + i]));
    Entry e;
    e.log10_prob = std::stod(f[1]);
    if (static_cast<int>(f.size()) > 2 + k) e.log10_backoff = std::stod(f[2 + k]);
    lm.table_[gram] = e;
    ++seen[k];
  }
  if (seen != declared)
    throw std::invalid_argument("ARPA n-gram counts do not match header");
  return lm;
}

}  // namespace uasr
