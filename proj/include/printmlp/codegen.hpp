#pragma once

#include <array>
#include <cctype>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "printmlp/common.hpp"
#include "printmlp/dataio.hpp"
#include "printmlp/hwcost.hpp"
#include "printmlp/quant.hpp"

namespace printmlp {

/// One shared constant multiplier: input `column` times |code|.
struct MultiplierInstance {
  std::size_t column = 0;
  std::uint64_t abs_code = 0;
  std::vector<SignedDigit> digits;  // shift-add plan; a single digit is plain wiring
  int out_width = 0;

  bool is_wiring() const { return digits.size() <= 1; }
};

struct NeuronPlan {
  std::vector<std::size_t> positive;  // indices into LayerPlan::multipliers
  std::vector<std::size_t> negative;
  std::int64_t bias_code = 0;
  int acc_bits = 0;
};

struct QreluSpec {
  int acc_bits = 0;
  int low_bit = 0;  // first accumulator bit kept (F_acc - F_r)
  int out_bits = 0;
};

struct LayerPlan {
  int input_bits = 0;
  int product_shift = 0;
  int bias_shift = 0;
  std::vector<MultiplierInstance> multipliers;  // by column, then |code| ascending
  std::vector<NeuronPlan> neurons;
  std::vector<QreluSpec> qrelu;  // hidden layer only
};

struct NetlistPlan {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::size_t output_dim = 0;
  FixedPointFormat input;
  FixedPointFormat activation;
  std::array<LayerPlan, 2> layers;

  int class_bits() const { return std::max(1, ceil_log2(output_dim)); }

  std::size_t multiplier_count() const { return layers[0].multipliers.size() + layers[1].multipliers.size(); }
};

/// Structure of the bespoke circuit: one multiplier per distinct nonzero
/// |code| per input, products split into positive and negative groups per
/// neuron, the shift-add network chosen by the area model.
inline NetlistPlan plan_netlist(const QuantizedMLP& q, const GateLibrary& lib = {}) {
  NetlistPlan p;
  p.input_dim = q.input_dim;
  p.hidden_dim = q.hidden_dim;
  p.output_dim = q.output_dim;
  p.input = q.genes.input;
  p.activation = q.genes.activation;
  for (std::size_t l = 0; l < 2; ++l) {
    const auto& W = q.layers[l].weights;
    auto& lp = p.layers[l];
    lp.input_bits = q.layer_input_format(l).total_bits;
    lp.product_shift = q.product_shift(l);
    lp.bias_shift = q.bias_shift(l);
    std::vector<std::vector<std::size_t>> index_of(W.cols());
    for (std::size_t c = 0; c < W.cols(); ++c) {
      std::set<std::uint64_t> codes;
      for (std::size_t n = 0; n < W.rows(); ++n)
        if (W(n, c) != 0) codes.insert(static_cast<std::uint64_t>(W(n, c) < 0 ? -W(n, c) : W(n, c)));
      for (auto a : codes) {
        MultiplierInstance m;
        m.column = c;
        m.abs_code = a;
        m.digits = multiplier_plan(a, lp.input_bits, lib).digits;
        m.out_width = product_width(a, lp.input_bits);
        lp.multipliers.push_back(std::move(m));
      }
    }
    auto find = [&](std::size_t c, std::uint64_t a) {
      for (std::size_t k = 0; k < lp.multipliers.size(); ++k)
        if (lp.multipliers[k].column == c && lp.multipliers[k].abs_code == a) return k;
      throw std::logic_error("plan_netlist: missing multiplier");
    };
    for (std::size_t n = 0; n < W.rows(); ++n) {
      NeuronPlan np;
      for (std::size_t c = 0; c < W.cols(); ++c) {
        const auto v = W(n, c);
        if (v > 0) np.positive.push_back(find(c, static_cast<std::uint64_t>(v)));
        if (v < 0) np.negative.push_back(find(c, static_cast<std::uint64_t>(-v)));
      }
      np.bias_code = q.layers[l].biases[n];
      np.acc_bits = q.layers[l].acc_bits[n];
      lp.neurons.push_back(std::move(np));
      if (l == 0)
        lp.qrelu.push_back({q.layers[0].acc_bits[n], q.layers[0].acc_frac_bits - q.genes.activation.frac_bits(),
                            q.genes.activation.total_bits});
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Plan interpreter: walks the same shift-add / group-subtract / QRelu /
// argmax structure that the emitted Verilog describes, at declared widths.
// ---------------------------------------------------------------------------

inline std::uint64_t low_bits(std::uint64_t v, int width) {
  return width >= 64 ? v : (v & ((std::uint64_t{1} << width) - 1));
}

inline std::int64_t as_signed(std::uint64_t v, int width) { return wrap_signed(static_cast<std::int64_t>(v), width); }

/// Bit-level QRelu on an `acc_bits`-wide two's-complement word.
inline std::uint64_t qrelu_bits(std::uint64_t acc, const QreluSpec& s) {
  const int a = s.acc_bits;
  if ((acc >> (a - 1)) & 1) return 0;
  bool sat = false;
  for (int b = s.low_bit + s.out_bits; b <= a - 2; ++b) sat = sat || ((acc >> b) & 1);
  if (sat) return low_bits(~std::uint64_t{0}, s.out_bits);
  std::uint64_t out = 0;
  for (int k = 0; k < s.out_bits; ++k) {
    const int b = s.low_bit + k;
    if (b <= a - 2 && ((acc >> b) & 1)) out |= std::uint64_t{1} << k;
  }
  return out;
}

/// Lowest index wins ties: the left operand of every comparison holds the
/// lower indices and is kept unless the right one is strictly larger.
inline std::size_t argmax_tree(std::span<const std::int64_t> v) {
  std::vector<std::size_t> cand(v.size());
  std::iota(cand.begin(), cand.end(), 0);
  while (cand.size() > 1) {
    std::vector<std::size_t> next;
    for (std::size_t k = 0; k + 1 < cand.size(); k += 2)
      next.push_back(v[cand[k + 1]] > v[cand[k]] ? cand[k + 1] : cand[k]);
    if (cand.size() % 2) next.push_back(cand.back());
    cand = std::move(next);
  }
  return cand.empty() ? 0 : cand.front();
}

struct PlanResult {
  int class_id = 0;
  std::array<std::vector<std::int64_t>, 2> accumulators;
};

inline PlanResult evaluate_plan(const NetlistPlan& p, std::span<const std::int64_t> input_codes) {
  PlanResult r;
  std::vector<std::uint64_t> in(input_codes.begin(), input_codes.end());
  for (std::size_t l = 0; l < 2; ++l) {
    const auto& lp = p.layers[l];
    std::vector<std::uint64_t> prod(lp.multipliers.size());
    for (std::size_t k = 0; k < lp.multipliers.size(); ++k) {
      const auto& m = lp.multipliers[k];
      std::uint64_t acc = 0;
      for (const auto& d : m.digits) {
        const std::uint64_t term = in[m.column] << d.position;
        acc = d.sign > 0 ? acc + term : acc - term;
      }
      prod[k] = low_bits(acc, m.out_width);
    }
    std::vector<std::uint64_t> next;
    for (std::size_t n = 0; n < lp.neurons.size(); ++n) {
      const auto& np = lp.neurons[n];
      const int a = np.acc_bits;
      std::uint64_t pos = 0, neg = 0;
      for (auto k : np.positive) pos = low_bits(pos + prod[k], a);
      for (auto k : np.negative) neg = low_bits(neg + prod[k], a);
      const std::uint64_t bias = static_cast<std::uint64_t>(np.bias_code) << lp.bias_shift;
      const std::uint64_t acc = low_bits(((pos - neg) << lp.product_shift) + bias, a);
      r.accumulators[l].push_back(as_signed(acc, a));
      if (l == 0) next.push_back(qrelu_bits(acc, lp.qrelu[n]));
    }
    in = std::move(next);
  }
  r.class_id = static_cast<int>(argmax_tree(r.accumulators[1]));
  return r;
}

// ---------------------------------------------------------------------------
// Verilog
// ---------------------------------------------------------------------------

inline std::string sanitize_identifier(const std::string& name) {
  // IEEE 1800-2017 keywords
  static const std::set<std::string> reserved{
      "accept_on", "alias", "always", "always_comb", "always_ff", "always_latch", "and", "assert", "assign", "assume",
      "automatic", "before", "begin", "bind", "bins", "binsof", "bit", "break", "buf", "bufif0", "bufif1", "byte",
      "case", "casex", "casez", "cell", "chandle", "checker", "class", "clocking", "cmos", "config", "const",
      "constraint", "context", "continue", "cover", "covergroup", "coverpoint", "cross", "deassign", "default",
      "defparam", "design", "disable", "dist", "do", "edge", "else", "end", "endcase", "endchecker", "endclass",
      "endclocking", "endconfig", "endfunction", "endgenerate", "endgroup", "endinterface", "endmodule", "endpackage",
      "endprimitive", "endprogram", "endproperty", "endspecify", "endsequence", "endtable", "endtask", "enum",
      "event", "eventually", "expect", "export", "extends", "extern", "final", "first_match", "for", "force",
      "foreach", "forever", "fork", "forkjoin", "function", "generate", "genvar", "global", "highz0", "highz1", "if",
      "iff", "ifnone", "ignore_bins", "illegal_bins", "implements", "implies", "import", "incdir", "include",
      "initial", "inout", "input", "inside", "instance", "int", "integer", "interconnect", "interface", "intersect",
      "join", "join_any", "join_none", "large", "let", "liblist", "library", "local", "localparam", "logic",
      "longint", "macromodule", "matches", "medium", "modport", "module", "nand", "negedge", "nettype", "new",
      "nexttime", "nmos", "nor", "noshowcancelled", "not", "notif0", "notif1", "null", "or", "output", "package",
      "packed", "parameter", "pmos", "posedge", "primitive", "priority", "program", "property", "protected", "pull0",
      "pull1", "pulldown", "pullup", "pulsestyle_ondetect", "pulsestyle_onevent", "pure", "rand", "randc", "randcase",
      "randsequence", "rcmos", "real", "realtime", "ref", "reg", "reject_on", "release", "repeat", "restrict",
      "return", "rnmos", "rpmos", "rtran", "rtranif0", "rtranif1", "s_always", "s_eventually", "s_nexttime",
      "s_until", "s_until_with", "scalared", "sequence", "shortint", "shortreal", "showcancelled", "signed", "small",
      "soft", "solve", "specify", "specparam", "static", "string", "strong", "strong0", "strong1", "struct", "super",
      "supply0", "supply1", "sync_accept_on", "sync_reject_on", "table", "tagged", "task", "this", "throughout",
      "time", "timeprecision", "timeunit", "tran", "tranif0", "tranif1", "tri", "tri0", "tri1", "triand", "trior",
      "trireg", "type", "typedef", "union", "unique", "unique0", "unsigned", "until", "until_with", "untyped", "use",
      "uwire", "var", "vectored", "virtual", "void", "wait", "wait_order", "wand", "weak", "weak0", "weak1", "while",
      "wildcard", "wire", "with", "within", "wor", "xnor", "xor"};
  std::string s;
  for (char c : name) s += (std::isalnum(static_cast<unsigned char>(c)) || c == '_') ? c : '_';
  if (s.empty() || std::isdigit(static_cast<unsigned char>(s[0]))) s = "m_" + s;
  if (reserved.count(s)) s += "_";
  return s;
}

namespace detail {

inline std::string range(int width) { return width > 1 ? "[" + std::to_string(width - 1) + ":0] " : ""; }

inline std::string shifted(const std::string& x, int pos) {
  return pos == 0 ? x : "(" + x + " << " + std::to_string(pos) + ")";
}

inline std::string mult_name(std::size_t l, const MultiplierInstance& m) {
  return "l" + std::to_string(l) + "_c" + std::to_string(m.column) + "_m" + std::to_string(m.abs_code);
}

inline std::string sum_of(const std::vector<std::string>& terms, int width) {
  if (terms.empty()) return std::to_string(width) + "'d0";
  std::string s;
  for (std::size_t k = 0; k < terms.size(); ++k) s += (k ? " + " : "") + terms[k];
  return s;
}

}  // namespace detail

/// Purely combinational Verilog-2001 module. The input bus concatenates the
/// unsigned input codes with feature 0 in the least significant bits; the
/// output is the winning class index.
inline std::string emit_verilog(const NetlistPlan& p, const std::string& module_name) {
  using detail::range;
  std::ostringstream v;
  const int pi = p.input.total_bits;
  const int in_width = static_cast<int>(p.input_dim) * pi;
  const int cb = p.class_bits();
  v << "// bespoke MLP " << p.input_dim << "-" << p.hidden_dim << "-" << p.output_dim << ", inputs " << p.input.name()
    << ", activations " << p.activation.name() << "\n";
  v << "module " << sanitize_identifier(module_name) << " (\n";
  v << "  input  wire " << range(in_width) << "x,\n";
  v << "  output wire " << range(cb) << "class_id\n";
  v << ");\n";

  for (std::size_t k = 0; k < p.input_dim; ++k)
    v << "  wire " << range(pi) << "x" << k << " = x[" << (static_cast<int>(k) + 1) * pi - 1 << ":"
      << static_cast<int>(k) * pi << "];\n";

  std::vector<std::string> layer_in;
  for (std::size_t k = 0; k < p.input_dim; ++k) layer_in.push_back("x" + std::to_string(k));

  std::vector<std::string> out_acc;
  for (std::size_t l = 0; l < 2; ++l) {
    const auto& lp = p.layers[l];
    v << "\n  // layer " << l << ": shared multipliers " << lp.multipliers.size() << "\n";
    for (const auto& m : lp.multipliers) {
      std::string expr;
      for (std::size_t d = 0; d < m.digits.size(); ++d) {
        const auto term = detail::shifted(layer_in[m.column], m.digits[d].position);
        if (d == 0)
          expr = m.digits[d].sign > 0 ? term : "-" + term;
        else
          expr += (m.digits[d].sign > 0 ? " + " : " - ") + term;
      }
      v << "  wire " << range(m.out_width) << detail::mult_name(l, m) << " = " << expr << ";\n";
    }
    std::vector<std::string> next;
    for (std::size_t n = 0; n < lp.neurons.size(); ++n) {
      const auto& np = lp.neurons[n];
      const int a = np.acc_bits;
      const std::string id = "l" + std::to_string(l) + "_n" + std::to_string(n);
      std::vector<std::string> pos, neg;
      for (auto k : np.positive) pos.push_back(detail::mult_name(l, lp.multipliers[k]));
      for (auto k : np.negative) neg.push_back(detail::mult_name(l, lp.multipliers[k]));
      const std::uint64_t bias = low_bits(static_cast<std::uint64_t>(np.bias_code) << lp.bias_shift, a);
      if (!pos.empty()) v << "  wire " << range(a) << id << "_pos = " << detail::sum_of(pos, a) << ";\n";
      if (!neg.empty()) v << "  wire " << range(a) << id << "_neg = " << detail::sum_of(neg, a) << ";\n";
      std::string diff;
      if (!pos.empty() && !neg.empty())
        diff = "(" + id + "_pos - " + id + "_neg)";
      else if (!pos.empty())
        diff = id + "_pos";
      else if (!neg.empty())
        diff = "(" + std::to_string(a) + "'d0 - " + id + "_neg)";
      std::string expr;
      if (!diff.empty()) expr = detail::shifted(diff, lp.product_shift);
      if (bias != 0 || expr.empty())
        expr += (expr.empty() ? "" : " + ") + std::to_string(a) + "'d" + std::to_string(bias);
      v << "  wire " << range(a) << id << "_acc = " << expr << ";\n";
      if (l == 0) {
        const auto& s = lp.qrelu[n];
        const int top = std::min(s.low_bit + s.out_bits - 1, a - 2);
        std::string kept;
        if (s.low_bit > a - 2)
          kept = std::to_string(s.out_bits) + "'d0";
        else
          kept = id + "_acc[" + std::to_string(top) + ":" + std::to_string(s.low_bit) + "]";
        std::string sat = "1'b0";
        if (s.low_bit + s.out_bits <= a - 2)
          sat = "|" + id + "_acc[" + std::to_string(a - 2) + ":" + std::to_string(s.low_bit + s.out_bits) + "]";
        v << "  wire " << id << "_sat = " << sat << ";\n";
        v << "  wire " << range(s.out_bits) << "h" << n << " = " << id << "_acc[" << a - 1 << "] ? "
          << s.out_bits << "'d0 : (" << id << "_sat ? {" << s.out_bits << "{1'b1}} : " << kept << ");\n";
        next.push_back("h" + std::to_string(n));
      } else {
        out_acc.push_back(id + "_acc");
      }
    }
    layer_in = std::move(next);
  }

  // argmax
  const auto& outl = p.layers[1];
  v << "\n  // argmax, lowest index wins ties\n";
  const bool constant = std::all_of(outl.neurons.begin(), outl.neurons.end(),
                                    [](const NeuronPlan& n) { return n.positive.empty() && n.negative.empty(); });
  if (constant || p.output_dim == 1) {
    std::vector<std::int64_t> vals;
    for (const auto& n : outl.neurons)
      vals.push_back(as_signed(low_bits(static_cast<std::uint64_t>(n.bias_code) << outl.bias_shift, n.acc_bits),
                               n.acc_bits));
    v << "  assign class_id = " << cb << "'d" << argmax_tree(vals) << ";\n";
  } else {
    int wmax = 0;
    for (const auto& n : outl.neurons) wmax = std::max(wmax, n.acc_bits);
    struct Cand {
      std::string value, index;
    };
    std::vector<Cand> cand;
    for (std::size_t o = 0; o < p.output_dim; ++o) {
      const int a = outl.neurons[o].acc_bits;
      const std::string name = "o" + std::to_string(o);
      v << "  wire signed " << range(wmax) << name << " = ";
      if (a < wmax)
        v << "{{" << wmax - a << "{" << out_acc[o] << "[" << a - 1 << "]}}, " << out_acc[o] << "};\n";
      else
        v << out_acc[o] << ";\n";
      cand.push_back({name, std::to_string(cb) + "'d" + std::to_string(o)});
    }
    int t = 0;
    while (cand.size() > 1) {
      std::vector<Cand> next;
      for (std::size_t k = 0; k + 1 < cand.size(); k += 2) {
        const std::string id = "t" + std::to_string(t++);
        v << "  wire " << id << "_gt = " << cand[k + 1].value << " > " << cand[k].value << ";\n";
        v << "  wire signed " << range(wmax) << id << "_v = " << id << "_gt ? " << cand[k + 1].value << " : "
          << cand[k].value << ";\n";
        v << "  wire " << range(cb) << id << "_i = " << id << "_gt ? " << cand[k + 1].index << " : " << cand[k].index
          << ";\n";
        next.push_back({id + "_v", id + "_i"});
      }
      if (cand.size() % 2) next.push_back(cand.back());
      cand = std::move(next);
    }
    v << "  assign class_id = " << cand.front().index << ";\n";
  }
  v << "endmodule\n";
  return v.str();
}

// ---------------------------------------------------------------------------
// Golden vectors
// ---------------------------------------------------------------------------

/// Hex image of the concatenated input codes, feature 0 in the low bits.
inline std::string input_hex(std::span<const std::int64_t> codes, int bits_per_code) {
  const int width = static_cast<int>(codes.size()) * bits_per_code;
  const int digits = std::max(1, (width + 3) / 4);
  std::string hex(static_cast<std::size_t>(digits), '0');
  for (int d = 0; d < digits; ++d) {
    int nibble = 0;
    for (int b = 0; b < 4; ++b) {
      const int bit = d * 4 + b;
      if (bit >= width) break;
      const auto code = static_cast<std::uint64_t>(codes[bit / bits_per_code]);
      if ((code >> (bit % bits_per_code)) & 1) nibble |= 1 << b;
    }
    hex[static_cast<std::size_t>(digits - 1 - d)] = "0123456789abcdef"[nibble];
  }
  return hex;
}

/// One line per vector: hex input bits, a space, the decimal class id.
/// Expected ids come from the integer interpreter with wrapping accumulators.
inline std::string emit_golden_vectors(const QuantizedMLP& q, const Dataset& rows, std::size_t n) {
  if (n > rows.rows()) throw InputError("golden vectors: asked for more vectors than rows");
  std::ostringstream out;
  out << "# golden vectors for a " << q.input_dim << "-" << q.hidden_dim << "-" << q.output_dim << " bespoke MLP\n";
  out << "# input: " << q.input_dim << " x " << q.genes.input.total_bits
      << "-bit unsigned codes (" << q.genes.input.name() << "), feature 0 in the least significant bits\n";
  out << "# line: <input hex> <expected class id>\n";
  for (std::size_t r = 0; r < n; ++r) {
    auto codes = quantize_inputs(rows.features.row(r), q.genes.input);
    const auto res = fixed_point_inference(q, codes, OverflowPolicy::wrap);
    out << input_hex(codes, q.genes.input.total_bits) << " " << res.class_id << "\n";
  }
  return out.str();
}

struct GoldenVector {
  std::vector<std::int64_t> codes;
  int class_id = 0;
};

inline std::vector<GoldenVector> parse_golden_vectors(const std::string& text, std::size_t n_inputs, int bits_per_code) {
  std::vector<GoldenVector> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string hex;
    GoldenVector g;
    if (!(ls >> hex >> g.class_id)) throw InputError("golden vectors: malformed line '" + line + "'");
    g.codes.assign(n_inputs, 0);
    const int width = static_cast<int>(n_inputs) * bits_per_code;
    for (int bit = 0; bit < width; ++bit) {
      const int d = bit / 4;
      if (d >= static_cast<int>(hex.size())) break;
      const char c = hex[hex.size() - 1 - static_cast<std::size_t>(d)];
      const int nibble = std::isdigit(static_cast<unsigned char>(c)) ? c - '0' : std::tolower(c) - 'a' + 10;
      if ((nibble >> (bit % 4)) & 1) g.codes[static_cast<std::size_t>(bit / bits_per_code)] |= std::int64_t{1} << (bit % bits_per_code);
    }
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace printmlp
