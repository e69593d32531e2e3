#pragma once

// Words over the two commuting dichotomic alphabets {A_1..A_3} and
// {C_1..C_n_z}, with the reductions X^2 = 1 and [A_x, C_z] = 0, plus the
// reversal (adjoint) map and a packed key for dictionaries.

#include <compare>
#include <cstdint>
#include <vector>

namespace rcq {

struct Letter {
  std::int8_t alphabet;  // 0 = A, 1 = C
  std::int8_t index;     // 0-based within the alphabet
  friend auto operator<=>(const Letter&, const Letter&) = default;
};

inline Letter la(int x) { return Letter{0, static_cast<std::int8_t>(x)}; }
inline Letter lc(int z) { return Letter{1, static_cast<std::int8_t>(z)}; }

struct Word {
  std::vector<Letter> letters;
  bool canonical = false;
  friend bool operator==(const Word& lhs, const Word& rhs) {
    return lhs.letters == rhs.letters;
  }
};

// Canonical form: all A-letters before all C-letters (the alphabets
// commute; same-alphabet order is preserved), then adjacent equal letters
// cancelled to a fixed point. Idempotent and confluent.
Word canonicalize(const Word& w);

// Reversal (adjoint) of a canonical word: each segment reversed,
// canonical again. Throws on non-canonical input.
Word reversed(const Word& w);

// Concatenation reversed(u) * v, canonicalized — the entry word of a
// moment matrix at index pair (u, v). Both inputs must be canonical.
Word entry_word(const Word& u, const Word& v);

// Packed unique key of a canonical word (segments of length <= 8 each).
std::uint64_t word_key(const Word& w);

// Key of the reversal class {w, reversed(w)}: min of the two keys.
std::uint64_t class_key(const Word& w);

// All adjacent-distinct sequences over {0..n-1} of length <= max_len, in
// length-then-lexicographic order (the empty sequence first).
std::vector<std::vector<int>> reduced_segments(int n, int max_len);

// Canonical word from explicit segments (assumed already reduced).
Word word_from_segments(const std::vector<int>& a_seg,
                        const std::vector<int>& c_seg);

}  // namespace rcq
