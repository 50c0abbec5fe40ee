#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "fpnet/error.hpp"

namespace fpnet {

using index_t = std::int64_t;

// Ordered list of positive extents. Rank-4 tensors follow (N, C, H, W).
class Shape {
public:
    Shape() = default;

    Shape(std::initializer_list<index_t> dims) : dims_(dims) { validate(); }

    explicit Shape(std::vector<index_t> dims) : dims_(std::move(dims)) { validate(); }

    index_t rank() const { return static_cast<index_t>(dims_.size()); }

    index_t operator[](index_t i) const { return dims_[static_cast<std::size_t>(i)]; }

    const std::vector<index_t>& dims() const { return dims_; }

    index_t numel() const {
        index_t n = 1;
        for (index_t d : dims_) n *= d;
        return n;
    }

    // NCHW accessors; only meaningful for rank-4 shapes.
    index_t n() const { return at_checked(0); }
    index_t c() const { return at_checked(1); }
    index_t h() const { return at_checked(2); }
    index_t w() const { return at_checked(3); }

    bool operator==(const Shape& other) const = default;

    std::string str() const {
        std::ostringstream os;
        os << '(';
        for (std::size_t i = 0; i < dims_.size(); ++i) {
            if (i) os << ", ";
            os << dims_[i];
        }
        os << ')';
        return os.str();
    }

private:
    index_t at_checked(index_t i) const {
        if (rank() != 4) throw ShapeError("NCHW accessor on non-rank-4 shape " + str());
        return dims_[static_cast<std::size_t>(i)];
    }

    void validate() const {
        unsigned __int128 n = 1;
        for (index_t d : dims_) {
            if (d < 1) throw ShapeError("shape extent must be >= 1, got " + str());
            n *= static_cast<unsigned __int128>(d);
            if (n > static_cast<unsigned __int128>(INT64_MAX)) {
                throw ShapeError("shape element count overflows addressable range: " + str());
            }
        }
    }

    std::vector<index_t> dims_;
};

}  // namespace fpnet
