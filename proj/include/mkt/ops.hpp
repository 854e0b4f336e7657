#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mkt/tape.hpp"

// Differentiable operations over Tape variables. Binary elementwise ops need
// identical shapes; the only broadcasts are the explicitly named ones
// (add_bias, mul_rows, scale_blocks) and scalar scale.
namespace mkt::tg {

Var matmul(Var a, Var b);
// a * b^T; a is (m, k), b is (n, k).
Var matmul_nt(Var a, Var b);
// x * W^T + b^T for x (batch, in), W (out, in), b (out, 1).
Var linear(Var x, Var w, Var b);
Var linear(Var x, Var w);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double c);
Var relu(Var x);  // relu'(0) = 0
Var sigmoid(Var x);
Var tanh(Var x);
Var clamp(Var x, double lo, double hi);  // zero gradient outside [lo, hi]

// x (batch, d) plus the column vector b (d, 1) added to every row.
Var add_bias(Var x, Var b);
// Row i of x (batch, d) multiplied by s(i, 0), s of shape (batch, 1).
Var mul_rows(Var x, Var s);
// x (batch, n*d) viewed as n blocks of width d; block j of row i is
// multiplied by p(i, j).
Var scale_blocks(Var x, Var p);

Var concat(std::span<const Var> parts);
Var concat(std::initializer_list<Var> parts);
Var slice_cols(Var x, std::size_t begin, std::size_t count);

// Rows of `table` selected by ids; backward scatter-adds into the table.
Var gather(Var table, std::vector<std::int32_t> ids);

Var softmax_rows(Var x);

// Single-head scaled dot-product pooling. Sample i attends over key rows
// [offsets[i], offsets[i+1]) with query row i; keys double as values. An
// empty segment yields a zero row. When `weights` is non-null it receives the
// attention weight of every key row.
Var attention_pool(Var queries, Var keys, std::vector<std::size_t> offsets,
                   std::vector<double>* weights = nullptr);

inline constexpr double kCosineEps = 1e-12;
// Row-wise cosine similarity of a and b (batch, d) -> (batch, 1). Each norm
// is sqrt(sum x^2 + kCosineEps).
Var cosine(Var a, Var b);

// Row-wise numerically stable binary cross-entropy of logits (batch, 1)
// against labels in {0, 1} -> (batch, 1). Throws ValidationError for any
// other label.
Var bce_with_logits(Var logits, std::span<const double> labels);

Var sum(Var x);   // -> (1, 1)
Var mean(Var x);  // -> (1, 1)

// Copy of x's value as a constant: no gradient flows back through it.
Var detach(Var x);

}  // namespace mkt::tg
