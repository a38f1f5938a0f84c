#include "sgnet/conllu.hpp"

#include <charconv>
#include <sstream>

#include <json.hpp>

namespace sgnet {

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> cols;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      cols.push_back(line.substr(start));
      break;
    }
    cols.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return cols;
}

std::optional<std::size_t> parse_index(std::string_view s) {
  std::size_t v = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end || s.empty()) return std::nullopt;
  return v;
}

struct PendingSentence {
  DependencyTree tree;
  std::vector<std::size_t> raw_heads;  // 1-based, 0 = root
  std::vector<std::size_t> lines;
  std::size_t first_line = 0;
};

void finish_sentence(PendingSentence& s, std::vector<DependencyTree>& out) {
  if (s.tree.tokens.empty()) return;
  const std::size_t n = s.tree.size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t h = s.raw_heads[i];
    if (h > n) {
      throw ParseError(s.lines[i], "HEAD " + std::to_string(h) + " out of range for sentence of " +
                                       std::to_string(n) + " tokens");
    }
    s.tree.tokens[i].head = h == 0 ? kRoot : h - 1;
  }
  if (auto v = validate_tree(s.tree)) {
    throw ParseError(s.first_line, "invalid tree: " + std::string(to_string(*v)));
  }
  out.push_back(std::move(s.tree));
  s = PendingSentence{};
}

}  // namespace

DependencyTree DependencyTree::from_heads(const std::vector<std::size_t>& heads) {
  DependencyTree t;
  t.tokens.reserve(heads.size());
  for (std::size_t i = 0; i < heads.size(); ++i) {
    t.tokens.push_back(Token{"w" + std::to_string(i), heads[i], heads[i] == kRoot ? "root" : "dep"});
  }
  return t;
}

std::string_view to_string(TreeViolation v) {
  switch (v) {
    case TreeViolation::kNoRoot: return "no root";
    case TreeViolation::kMultipleRoots: return "multiple roots";
    case TreeViolation::kSelfHead: return "token is its own head";
    case TreeViolation::kDanglingHead: return "dangling head index";
    case TreeViolation::kCycle: return "cycle";
  }
  return "unknown";
}

std::optional<TreeViolation> validate_tree(const DependencyTree& tree) {
  const std::size_t n = tree.size();
  std::size_t roots = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t h = tree.tokens[i].head;
    if (h == kRoot) {
      ++roots;
    } else if (h == i) {
      return TreeViolation::kSelfHead;
    } else if (h >= n) {
      return TreeViolation::kDanglingHead;
    }
  }
  if (roots == 0) return TreeViolation::kNoRoot;
  if (roots > 1) return TreeViolation::kMultipleRoots;
  // 0 = unvisited, 1 = on current path, 2 = reaches root
  std::vector<unsigned char> state(n, 0);
  std::vector<std::size_t> path;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t cur = i;
    path.clear();
    while (cur != kRoot && state[cur] == 0) {
      state[cur] = 1;
      path.push_back(cur);
      cur = tree.tokens[cur].head;
    }
    if (cur != kRoot && state[cur] == 1) return TreeViolation::kCycle;
    for (auto p : path) state[p] = 2;
  }
  return std::nullopt;
}

TreeError::TreeError(TreeViolation v)
    : std::runtime_error("invalid dependency tree: " + std::string(to_string(v))), violation_(v) {}

void require_valid(const DependencyTree& tree) {
  if (auto v = validate_tree(tree)) throw TreeError(*v);
}

ParseError::ParseError(std::size_t line, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

std::vector<DependencyTree> parse_conllu(std::string_view text) {
  std::vector<DependencyTree> out;
  PendingSentence cur;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    if (line.empty()) {
      finish_sentence(cur, out);
      if (nl == text.size()) break;
      continue;
    }
    if (line.front() == '#') continue;

    const auto cols = split_tabs(line);
    if (cols.size() != 10) {
      throw ParseError(line_no, "expected 10 tab-separated columns, found " + std::to_string(cols.size()));
    }
    const std::string_view id = cols[0];
    if (id.find('-') != std::string_view::npos || id.find('.') != std::string_view::npos) continue;
    const auto parsed_id = parse_index(id);
    if (!parsed_id || *parsed_id != cur.tree.size() + 1) {
      throw ParseError(line_no, "unexpected token ID '" + std::string(id) + "'");
    }
    const auto head = parse_index(cols[6]);
    if (!head) throw ParseError(line_no, "non-integer HEAD '" + std::string(cols[6]) + "'");
    if (cur.tree.tokens.empty()) cur.first_line = line_no;
    cur.tree.tokens.push_back(Token{std::string(cols[1]), kRoot, std::string(cols[7])});
    cur.raw_heads.push_back(*head);
    cur.lines.push_back(line_no);
    if (nl == text.size()) break;
  }
  finish_sentence(cur, out);
  return out;
}

std::string to_conllu(const std::vector<DependencyTree>& trees) {
  std::ostringstream os;
  for (const auto& t : trees) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const auto& tok = t.tokens[i];
      const std::size_t head = tok.head == kRoot ? 0 : tok.head + 1;
      os << (i + 1) << '\t' << tok.form << "\t_\t_\t_\t_\t" << head << '\t'
         << (tok.deprel.empty() ? "_" : tok.deprel) << "\t_\t_\n";
    }
    os << '\n';
  }
  return os.str();
}

bool WordPieceAlignment::tiles() const {
  std::size_t expected = 0;
  for (const auto& r : spans) {
    if (r.lo != expected || r.hi <= r.lo) return false;
    expected = r.hi;
  }
  return true;
}

WordPieceAlignment WordPieceAlignment::identity(std::size_t n) {
  WordPieceAlignment a;
  for (std::size_t i = 0; i < n; ++i) a.spans.push_back({i, i + 1});
  return a;
}

WordPieceAlignment parse_alignment_json(std::string_view text) {
  const auto doc = nlohmann::json::parse(text);
  if (!doc.is_array()) throw std::invalid_argument("alignment must be a JSON array");
  WordPieceAlignment a;
  for (const auto& pair : doc) {
    if (!pair.is_array() || pair.size() != 2) {
      throw std::invalid_argument("alignment entries must be [lo, hi] pairs");
    }
    a.spans.push_back({pair[0].get<std::size_t>(), pair[1].get<std::size_t>()});
  }
  if (!a.tiles()) throw std::invalid_argument("alignment ranges do not tile the wordpiece sequence");
  return a;
}

std::string to_alignment_json(const WordPieceAlignment& align) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& r : align.spans) doc.push_back({r.lo, r.hi});
  return doc.dump();
}

}  // namespace sgnet
