#include "rcq/words.hpp"

#include <algorithm>
#include <stdexcept>

namespace rcq {

namespace {

// Push a letter onto a reduced segment, cancelling X^2 = 1 on contact.
void push_cancel(std::vector<std::int8_t>& seg, std::int8_t idx) {
  if (!seg.empty() && seg.back() == idx) {
    seg.pop_back();
  } else {
    seg.push_back(idx);
  }
}

Word assemble(const std::vector<std::int8_t>& a_seg,
              const std::vector<std::int8_t>& c_seg) {
  Word out;
  out.letters.reserve(a_seg.size() + c_seg.size());
  for (std::int8_t x : a_seg) out.letters.push_back(Letter{0, x});
  for (std::int8_t z : c_seg) out.letters.push_back(Letter{1, z});
  out.canonical = true;
  return out;
}

void split_canonical(const Word& w, std::vector<std::int8_t>& a_seg,
                     std::vector<std::int8_t>& c_seg) {
  if (!w.canonical) {
    throw std::invalid_argument("words: canonical word required");
  }
  bool seen_c = false;
  for (const Letter& l : w.letters) {
    if (l.alphabet == 0) {
      if (seen_c) {
        throw std::invalid_argument("words: word marked canonical is not");
      }
      a_seg.push_back(l.index);
    } else {
      seen_c = true;
      c_seg.push_back(l.index);
    }
  }
}

}  // namespace

Word canonicalize(const Word& w) {
  std::vector<std::int8_t> a_seg, c_seg;
  for (const Letter& l : w.letters) {
    if (l.alphabet != 0 && l.alphabet != 1) {
      throw std::invalid_argument("words: letter alphabet must be 0 or 1");
    }
    if (l.index < 0) {
      throw std::invalid_argument("words: letter index must be nonnegative");
    }
    if (l.alphabet == 0) {
      push_cancel(a_seg, l.index);
    } else {
      push_cancel(c_seg, l.index);
    }
  }
  return assemble(a_seg, c_seg);
}

Word reversed(const Word& w) {
  std::vector<std::int8_t> a_seg, c_seg;
  split_canonical(w, a_seg, c_seg);
  std::reverse(a_seg.begin(), a_seg.end());
  std::reverse(c_seg.begin(), c_seg.end());
  return assemble(a_seg, c_seg);
}

Word entry_word(const Word& u, const Word& v) {
  Word ru = reversed(u);
  if (!v.canonical) {
    throw std::invalid_argument("words: canonical word required");
  }
  Word joined;
  joined.letters.reserve(ru.letters.size() + v.letters.size());
  joined.letters = ru.letters;
  joined.letters.insert(joined.letters.end(), v.letters.begin(),
                        v.letters.end());
  return canonicalize(joined);
}

std::uint64_t word_key(const Word& w) {
  std::vector<std::int8_t> a_seg, c_seg;
  split_canonical(w, a_seg, c_seg);
  if (a_seg.size() > 8 || c_seg.size() > 8) {
    throw std::invalid_argument("words: segment too long to pack");
  }
  // Each segment is encoded base-4 with a leading 1 marker (prefix-free);
  // letter indices must therefore be < 4.
  auto encode = [](const std::vector<std::int8_t>& seg) -> std::uint64_t {
    std::uint64_t code = 1;
    for (std::int8_t d : seg) {
      if (d >= 4) {
        throw std::invalid_argument("words: letter index too large to pack");
      }
      code = code * 4 + static_cast<std::uint64_t>(d);
    }
    return code;
  };
  return (encode(a_seg) << 20) | encode(c_seg);
}

std::uint64_t class_key(const Word& w) {
  return std::min(word_key(w), word_key(reversed(w)));
}

std::vector<std::vector<int>> reduced_segments(int n, int max_len) {
  if (n < 0 || max_len < 0) {
    throw std::invalid_argument("words: n and max_len must be nonnegative");
  }
  std::vector<std::vector<int>> out;
  out.push_back({});
  std::vector<std::vector<int>> frontier = {{}};
  for (int len = 1; len <= max_len; ++len) {
    std::vector<std::vector<int>> next;
    for (const std::vector<int>& seg : frontier) {
      for (int s = 0; s < n; ++s) {
        if (!seg.empty() && seg.back() == s) continue;
        std::vector<int> ext = seg;
        ext.push_back(s);
        next.push_back(std::move(ext));
      }
    }
    for (const std::vector<int>& seg : next) out.push_back(seg);
    frontier = std::move(next);
  }
  return out;
}

Word word_from_segments(const std::vector<int>& a_seg,
                        const std::vector<int>& c_seg) {
  Word w;
  w.letters.reserve(a_seg.size() + c_seg.size());
  for (int x : a_seg) w.letters.push_back(la(x));
  for (int z : c_seg) w.letters.push_back(lc(z));
  w.canonical = true;
  for (std::size_t i = 1; i < a_seg.size(); ++i) {
    if (a_seg[i] == a_seg[i - 1]) {
      throw std::invalid_argument("words: segment is not reduced");
    }
  }
  for (std::size_t i = 1; i < c_seg.size(); ++i) {
    if (c_seg[i] == c_seg[i - 1]) {
      throw std::invalid_argument("words: segment is not reduced");
    }
  }
  return w;
}

}  // namespace rcq
