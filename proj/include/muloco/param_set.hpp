#pragma once

// Named, ordered collection of matrices: one model replica's parameters.
// Order is declaration order and is part of the determinism contract.

#include <string>
#include <vector>

#include "muloco/linalg.hpp"

namespace muloco {

struct NamedParam {
    std::string name;
    bool hidden = false;  // hidden 2-D matrices are Muon-governed in muon mode
    Matrix value;
};

class ParamSet {
  public:
    ParamSet() = default;

    void add(std::string name, bool hidden, Matrix value) {
        entries_.push_back({std::move(name), hidden, std::move(value)});
    }

    std::size_t size() const { return entries_.size(); }
    NamedParam& operator[](std::size_t i) { return entries_[i]; }
    const NamedParam& operator[](std::size_t i) const { return entries_[i]; }

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    const NamedParam& by_name(const std::string& name) const {
        for (const auto& e : entries_)
            if (e.name == name) return e;
        throw ContractError("ParamSet: unknown parameter '" + name + "'");
    }

    Matrix& value_of(const std::string& name) {
        for (auto& e : entries_)
            if (e.name == name) return e.value;
        throw ContractError("ParamSet: unknown parameter '" + name + "'");
    }

    bool same_shapes(const ParamSet& o) const {
        if (entries_.size() != o.entries_.size()) return false;
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            if (entries_[i].name != o.entries_[i].name) return false;
            if (!entries_[i].value.same_shape(o.entries_[i].value)) return false;
        }
        return true;
    }

    ParamSet zeros_like() const {
        ParamSet z;
        for (const auto& e : entries_)
            z.add(e.name, e.hidden, Matrix(e.value.rows(), e.value.cols()));
        return z;
    }

    std::size_t total_elements() const {
        std::size_t n = 0;
        for (const auto& e : entries_) n += e.value.size();
        return n;
    }

  private:
    std::vector<NamedParam> entries_;
};

inline bool bitwise_equal(const ParamSet& a, const ParamSet& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].name != b[i].name || !bitwise_equal(a[i].value, b[i].value)) return false;
    return true;
}

}  // namespace muloco
