#include "maskdiff/state.hpp"

#include <limits>
#include <sstream>

namespace maskdiff {

std::uint64_t Vocab::num_states() const {
    std::uint64_t n = 1;
    for (int i = 0; i < d; ++i) {
        if (n > std::numeric_limits<std::uint64_t>::max() / static_cast<std::uint64_t>(S)) {
            throw std::overflow_error("Vocab::num_states: S^d overflows 64-bit index range");
        }
        n *= static_cast<std::uint64_t>(S);
    }
    return n;
}

Vocab make_vocab(int S, int d) {
    if (S < 2) throw std::invalid_argument("make_vocab: S must be >= 2 (one real token plus mask)");
    if (d < 1) throw std::invalid_argument("make_vocab: d must be >= 1");
    Vocab v;
    v.S = S;
    v.d = d;
    v.num_states();  // overflow guard
    return v;
}

void validate_state(const Vocab& v, const SequenceState& x) {
    if (static_cast<int>(x.tokens.size()) != v.d) {
        throw std::invalid_argument("state length " + std::to_string(x.tokens.size()) +
                                    " does not match d=" + std::to_string(v.d));
    }
    for (int t : x.tokens) {
        if (t < 0 || t >= v.S) {
            throw std::invalid_argument("token id " + std::to_string(t) + " out of range [0," +
                                        std::to_string(v.S - 1) + "]");
        }
    }
}

std::uint64_t encode(const Vocab& v, const SequenceState& x) {
    validate_state(v, x);
    std::uint64_t ix = 0;
    for (int i = v.d - 1; i >= 0; --i) {
        ix = ix * static_cast<std::uint64_t>(v.S) + static_cast<std::uint64_t>(x.tokens[i]);
    }
    return ix;
}

SequenceState decode(const Vocab& v, std::uint64_t index) {
    if (index >= v.num_states()) {
        throw std::invalid_argument("decode: index " + std::to_string(index) + " out of range");
    }
    SequenceState x;
    x.tokens.resize(v.d);
    for (int i = 0; i < v.d; ++i) {
        x.tokens[i] = static_cast<int>(index % static_cast<std::uint64_t>(v.S));
        index /= static_cast<std::uint64_t>(v.S);
    }
    return x;
}

SequenceState all_mask_state(const Vocab& v) {
    SequenceState x;
    x.tokens.assign(static_cast<std::size_t>(v.d), v.mask_id());
    return x;
}

int hamming(const SequenceState& x, const SequenceState& y) {
    if (x.tokens.size() != y.tokens.size()) {
        throw std::invalid_argument("hamming: length mismatch");
    }
    int n = 0;
    for (std::size_t i = 0; i < x.tokens.size(); ++i) {
        if (x.tokens[i] != y.tokens[i]) ++n;
    }
    return n;
}

int mask_count(const Vocab& v, const SequenceState& x) {
    validate_state(v, x);
    int n = 0;
    for (int t : x.tokens) {
        if (t == v.mask_id()) ++n;
    }
    return n;
}

std::vector<int> masked_coordinates(const Vocab& v, const SequenceState& x) {
    validate_state(v, x);
    std::vector<int> out;
    for (int i = 0; i < v.d; ++i) {
        if (x.tokens[i] == v.mask_id()) out.push_back(i);
    }
    return out;
}

std::string to_string(const SequenceState& x) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < x.tokens.size(); ++i) {
        if (i) os << ',';
        os << x.tokens[i];
    }
    os << ']';
    return os.str();
}

}  // namespace maskdiff
