#pragma once

#include <memory>
#include <string>

#include "acip/jet.hpp"

namespace acip {

// Parsed scalar expression in one variable `x`.
// Grammar: sums/products/powers (`^`, right associative), unary minus,
// constants `pi` and `e`, functions sin cos exp log sqrt abs floor tanh,
// two-argument min max pow.
class Expression {
public:
    static Expression parse(const std::string& text);

    double eval(double x) const;
    Jet eval(const Jet& x) const;
    const std::string& text() const { return text_; }

    struct Node;

private:
    std::string text_;
    std::shared_ptr<const Node> root_;
};

}  // namespace acip
