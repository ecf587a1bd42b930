#include "vlprobe/lexicon/synset_graph.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <sstream>

#include "vlprobe/error.hpp"

namespace vlprobe::lexicon {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

SynsetGraph::SynsetGraph(std::vector<SynsetEntry> entries) : entries_(std::move(entries)) {
  if (entries_.empty()) fail(ErrorKind::SchemaError, "synset graph: no synsets");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (!by_id_.emplace(entries_[i].id, i).second)
      fail(ErrorKind::SchemaError, "synset graph: duplicate synset id " + entries_[i].id);
  }
  parent_.resize(entries_.size());
  std::optional<std::size_t> root;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (e.parent.empty()) {
      if (root) fail(ErrorKind::SchemaError, "synset graph: more than one root (" + entries_[*root].id + ", " + e.id + ")");
      root = i;
      continue;
    }
    auto it = by_id_.find(e.parent);
    if (it == by_id_.end()) fail(ErrorKind::SchemaError, "synset graph: unknown parent " + e.parent + " of " + e.id);
    parent_[i] = it->second;
  }
  if (!root) fail(ErrorKind::SchemaError, "synset graph: no root");
  root_ = *root;

  // Depths by walking parent chains; a chain longer than the node count is a cycle.
  constexpr std::size_t kUnset = static_cast<std::size_t>(-1);
  depth_.assign(entries_.size(), kUnset);
  depth_[root_] = 0;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    std::vector<std::size_t> chain;
    std::size_t cur = i;
    while (depth_[cur] == kUnset) {
      chain.push_back(cur);
      if (chain.size() > entries_.size() || !parent_[cur])
        fail(ErrorKind::SchemaError, "synset graph: " + entries_[i].id + " is not connected to the root");
      cur = *parent_[cur];
    }
    std::size_t d = depth_[cur];
    for (auto it = chain.rbegin(); it != chain.rend(); ++it) depth_[*it] = ++d;
  }

  for (std::size_t i = 0; i < entries_.size(); ++i) {
    for (const auto& lemma : entries_[i].lemmas) {
      auto& nodes = by_lemma_[lemma];
      if (std::find(nodes.begin(), nodes.end(), i) == nodes.end()) nodes.push_back(i);
    }
  }
}

SynsetGraph SynsetGraph::parse(std::istream& in) {
  std::vector<SynsetEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    auto fields = split(line, '\t');
    if (fields.size() != 3)
      fail(ErrorKind::SchemaError, "synset graph line " + std::to_string(line_no) + ": expected 3 tab-separated fields");
    SynsetEntry e;
    e.id = fields[0];
    if (e.id.empty()) fail(ErrorKind::SchemaError, "synset graph line " + std::to_string(line_no) + ": empty id");
    for (auto& lemma : split(fields[1], ','))
      if (!lemma.empty()) e.lemmas.push_back(lemma);
    if (e.lemmas.empty())
      fail(ErrorKind::SchemaError, "synset graph line " + std::to_string(line_no) + ": synset without lemmas");
    e.parent = fields[2] == "-" ? std::string() : fields[2];
    entries.push_back(std::move(e));
  }
  return SynsetGraph(std::move(entries));
}

SynsetGraph SynsetGraph::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  return parse(in);
}

std::optional<std::size_t> SynsetGraph::parent(std::size_t node) const { return parent_[node]; }

std::optional<std::size_t> SynsetGraph::find(std::string_view synset_id) const {
  auto it = by_id_.find(std::string(synset_id));
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

const std::vector<std::size_t>& SynsetGraph::synsets_of(std::string_view lemma) const {
  static const std::vector<std::size_t> kNone;
  auto it = by_lemma_.find(std::string(lemma));
  return it == by_lemma_.end() ? kNone : it->second;
}

std::vector<std::string> SynsetGraph::lemmas() const {
  std::vector<std::string> out;
  out.reserve(by_lemma_.size());
  for (const auto& [lemma, nodes] : by_lemma_) out.push_back(lemma);
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t SynsetGraph::path_length(std::size_t a, std::size_t b) const {
  std::size_t len = 0;
  while (depth_[a] > depth_[b]) a = *parent_[a], ++len;
  while (depth_[b] > depth_[a]) b = *parent_[b], ++len;
  while (a != b) {
    a = *parent_[a];
    b = *parent_[b];
    len += 2;
  }
  return len;
}

double SynsetGraph::similarity(std::string_view a, std::string_view b) const {
  const auto& sa = synsets_of(a);
  const auto& sb = synsets_of(b);
  double best = 0.0;
  for (auto x : sa)
    for (auto y : sb) best = std::max(best, 1.0 / (1.0 + static_cast<double>(path_length(x, y))));
  return best;
}

}  // namespace vlprobe::lexicon
