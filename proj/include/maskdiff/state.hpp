#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace maskdiff {

// Exact-mode operations enumerate all S^d states; beyond this limit only
// Monte Carlo paths are supported.
inline constexpr std::uint64_t kExactStateLimit = std::uint64_t{1} << 24;

// Dense generators are S^d x S^d matrices; keep them small.
inline constexpr std::uint64_t kGeneratorStateLimit = std::uint64_t{1} << 10;

// Token vocabulary of size S over sequences of length d. The mask token is
// fixed to the last id, S-1, so encodings are canonical.
struct Vocab {
    int S = 2;
    int d = 1;

    int mask_id() const { return S - 1; }
    bool operator==(const Vocab&) const = default;

    // S^d, guarding against overflow of the 64-bit index range.
    std::uint64_t num_states() const;
    bool exact_mode_ok() const { return num_states() <= kExactStateLimit; }
};

Vocab make_vocab(int S, int d);

// A CTMC state: a length-d vector of token ids in {0..S-1}.
struct SequenceState {
    std::vector<int> tokens;

    bool operator==(const SequenceState&) const = default;
};

void validate_state(const Vocab& v, const SequenceState& x);

// Mixed-radix state index, little-endian: coordinate 0 is the least
// significant digit, index = sum_i tokens[i] * S^i.
std::uint64_t encode(const Vocab& v, const SequenceState& x);
SequenceState decode(const Vocab& v, std::uint64_t index);

SequenceState all_mask_state(const Vocab& v);

int hamming(const SequenceState& x, const SequenceState& y);

// m(x): number of coordinates currently equal to the mask token.
int mask_count(const Vocab& v, const SequenceState& x);

std::vector<int> masked_coordinates(const Vocab& v, const SequenceState& x);

std::string to_string(const SequenceState& x);

}  // namespace maskdiff
