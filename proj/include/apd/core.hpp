#pragma once

#include <algorithm>
#include <bit>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace apd {

using StateIndex = std::size_t;
/// Index into the action list of one particular state.
using ActionIndex = std::size_t;
/// Zero-based index of a model inside an Mmdp.
using ModelIndex = std::size_t;

/// Row-sum tolerance for transition kernels read from decimal input.
inline constexpr double kProbabilityTolerance = 1e-9;
/// Entrywise tolerance when deciding whether two distributions differ.
inline constexpr double kDistributionTolerance = 1e-12;

struct StateAction {
    StateIndex state = 0;
    ActionIndex action = 0;

    auto operator<=>(const StateAction&) const = default;
};

/// Raised for malformed or inconsistent models and generator specs.
class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a caller violates an operation's precondition, or a policy
/// cannot be executed in the configuration it is asked about.
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/**
 * Subset of model indices still consistent with the observed history.
 *
 * Stored as a bitmask, so an Mmdp may hold at most 64 models. The canonical
 * external encoding is the sorted index list returned by indices().
 */
class ActiveSet {
public:
    static constexpr std::size_t kMaxModels = 64;

    constexpr ActiveSet() = default;
    constexpr explicit ActiveSet(std::uint64_t bits) : bits_(bits) {}

    static ActiveSet full(std::size_t n) {
        if (n > kMaxModels) {
            throw ModelError("at most 64 models are supported, got " + std::to_string(n));
        }
        return ActiveSet(n == kMaxModels ? ~std::uint64_t{0} : (std::uint64_t{1} << n) - 1);
    }

    static ActiveSet of(const std::vector<ModelIndex>& indices) {
        ActiveSet s;
        for (auto i : indices) {
            s.insert(i);
        }
        return s;
    }

    void insert(ModelIndex i) {
        if (i >= kMaxModels) {
            throw ModelError("model index out of range: " + std::to_string(i));
        }
        bits_ |= std::uint64_t{1} << i;
    }

    [[nodiscard]] bool contains(ModelIndex i) const {
        return i < kMaxModels && ((bits_ >> i) & 1U) != 0;
    }
    [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(std::popcount(bits_)); }
    [[nodiscard]] bool empty() const { return bits_ == 0; }
    [[nodiscard]] std::uint64_t bits() const { return bits_; }

    [[nodiscard]] bool is_subset_of(ActiveSet other) const { return (bits_ & ~other.bits_) == 0; }

    [[nodiscard]] std::vector<ModelIndex> indices() const {
        std::vector<ModelIndex> out;
        for (std::uint64_t b = bits_; b != 0; b &= b - 1) {
            out.push_back(static_cast<ModelIndex>(std::countr_zero(b)));
        }
        return out;
    }

    auto operator<=>(const ActiveSet&) const = default;

private:
    std::uint64_t bits_ = 0;
};

/// Dense membership set over the states of one model or transition system.
class StateSet {
public:
    StateSet() = default;
    explicit StateSet(std::size_t universe) : bits_(universe, false) {}

    static StateSet all(std::size_t universe) {
        StateSet s(universe);
        std::fill(s.bits_.begin(), s.bits_.end(), true);
        s.count_ = universe;
        return s;
    }

    static StateSet of(std::size_t universe, const std::vector<StateIndex>& members) {
        StateSet s(universe);
        for (auto m : members) {
            s.insert(m);
        }
        return s;
    }

    [[nodiscard]] std::size_t universe() const { return bits_.size(); }
    [[nodiscard]] std::size_t size() const { return count_; }
    [[nodiscard]] bool empty() const { return count_ == 0; }
    [[nodiscard]] bool contains(StateIndex s) const { return s < bits_.size() && bits_[s]; }

    bool insert(StateIndex s) {
        if (s >= bits_.size()) {
            throw ContractError("state index " + std::to_string(s) + " outside state set universe");
        }
        if (bits_[s]) {
            return false;
        }
        bits_[s] = true;
        ++count_;
        return true;
    }

    [[nodiscard]] std::vector<StateIndex> members() const {
        std::vector<StateIndex> out;
        out.reserve(count_);
        for (StateIndex s = 0; s < bits_.size(); ++s) {
            if (bits_[s]) {
                out.push_back(s);
            }
        }
        return out;
    }

    [[nodiscard]] bool is_subset_of(const StateSet& other) const {
        for (StateIndex s = 0; s < bits_.size(); ++s) {
            if (bits_[s] && !other.contains(s)) {
                return false;
            }
        }
        return true;
    }

    bool operator==(const StateSet&) const = default;

private:
    std::vector<bool> bits_;
    std::size_t count_ = 0;
};

}  // namespace apd
