#pragma once
// Deterministic interpreter. All mutable state lives in one Frame per invocation.
//
// Position spaces: getField indexes the record's own input; output records use
// the concatenated space of all inputs (#I = sum of input arities), so copy()
// of a second-input record lands at offset #I0.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dfopt/error.hpp"
#include "dfopt/udf_ir.hpp"
#include "dfopt/value.hpp"

namespace dfopt {

inline constexpr std::size_t default_step_budget = 1'000'000;

/// (input index, record index within that input's list)
using RecordRef = std::pair<int, std::size_t>;

struct EmittedRecord {
    std::vector<Value> values; // positional, concatenated input space
    OpCode ctor = OpCode::empty_ctor;
    // Records whose full values seed the output: copied/concatenated records,
    // or for new() the most recently consumed record of each input.
    std::vector<RecordRef> sources;
};

struct InvocationOptions {
    std::size_t step_budget = default_step_budget;
    // Arity of each input; defaults to the arity of its first record.
    std::vector<std::size_t> input_arity;
};

namespace interp_detail {

inline bool numeric(const Value& v) { return v.is_int() || v.is_float(); }
inline double as_double(const Value& v) { return v.is_int() ? static_cast<double>(v.as_int()) : v.as_float(); }

inline Value arith(ArithOp op, const Value& a, const Value& b) {
    if (op == ArithOp::neg) {
        if (a.is_int()) return Value(static_cast<std::int64_t>(0ULL - static_cast<std::uint64_t>(a.as_int())));
        if (a.is_float()) return Value(-a.as_float());
        throw InvocationError("cannot negate " + std::string(tag_name(a.tag())));
    }
    if (op == ArithOp::add && a.is_string() && b.is_string()) return Value(a.as_string() + b.as_string());
    if (!numeric(a) || !numeric(b))
        throw InvocationError(std::string("arithmetic on ") + tag_name(a.tag()) + " and " + tag_name(b.tag()));
    if (a.is_int() && b.is_int()) {
        auto x = static_cast<std::uint64_t>(a.as_int()), y = static_cast<std::uint64_t>(b.as_int());
        switch (op) {
        case ArithOp::add: return Value(static_cast<std::int64_t>(x + y));
        case ArithOp::sub: return Value(static_cast<std::int64_t>(x - y));
        case ArithOp::mul: return Value(static_cast<std::int64_t>(x * y));
        case ArithOp::div:
            if (b.as_int() == 0) throw InvocationError("division by zero");
            if (a.as_int() == INT64_MIN && b.as_int() == -1) return a;
            return Value(a.as_int() / b.as_int());
        default: break;
        }
    }
    double x = as_double(a), y = as_double(b);
    switch (op) {
    case ArithOp::add: return Value(x + y);
    case ArithOp::sub: return Value(x - y);
    case ArithOp::mul: return Value(x * y);
    case ArithOp::div:
        if (y == 0.0) throw InvocationError("division by zero");
        return Value(x / y);
    default: break;
    }
    throw InvocationError("bad arithmetic operator");
}

inline bool compare(CmpOp op, const Value& a, const Value& b) {
    if (op == CmpOp::eq || op == CmpOp::ne) {
        bool eq = numeric(a) && numeric(b) && a.tag() != b.tag() ? as_double(a) == as_double(b) : a == b;
        return op == CmpOp::eq ? eq : !eq;
    }
    int c;
    if (numeric(a) && numeric(b)) {
        double x = as_double(a), y = as_double(b);
        if (a.is_int() && b.is_int()) {
            c = a.as_int() < b.as_int() ? -1 : a.as_int() > b.as_int() ? 1 : 0;
        } else {
            if (std::isnan(x) || std::isnan(y)) return false;
            c = x < y ? -1 : x > y ? 1 : 0;
        }
    } else if (a.tag() == b.tag() && !a.is_absent()) {
        auto o = a <=> b;
        c = o < 0 ? -1 : o > 0 ? 1 : 0;
    } else {
        throw InvocationError(std::string("cannot order ") + tag_name(a.tag()) + " and " + tag_name(b.tag()));
    }
    switch (op) {
    case CmpOp::lt: return c < 0;
    case CmpOp::le: return c <= 0;
    case CmpOp::ge: return c >= 0;
    case CmpOp::gt: return c > 0;
    default: return false;
    }
}

struct OutRec {
    std::vector<Value> values;
    OpCode ctor;
    std::vector<RecordRef> sources;
};

class Frame {
public:
    Frame(const UdfProgram& p, const std::vector<std::vector<Record>>& inputs, const InvocationOptions& opt)
        : p_(p), in_(inputs), opt_(opt) {
        if (inputs.size() != p.arity())
            throw InvocationError(p.name + ": expected " + std::to_string(p.arity()) + " inputs, got " +
                                  std::to_string(inputs.size()));
        if (!p.is_kat())
            for (const auto& l : inputs)
                if (l.size() != 1) throw InvocationError(p.name + ": record-at-a-time input must hold one record");
        std::size_t off = 0;
        for (std::size_t k = 0; k < inputs.size(); ++k) {
            std::size_t ar = k < opt.input_arity.size() ? opt.input_arity[k]
                             : inputs[k].empty()        ? 0
                                                        : inputs[k][0].arity();
            arity_.push_back(ar);
            offset_.push_back(off);
            off += ar;
        }
        total_arity_ = off;
        std::size_t nv = p.var_names.size();
        vals_.assign(nv, Value::absent());
        val_set_.assign(nv, false);
        refs_.assign(nv, std::nullopt);
        outs_.assign(nv, -1);
        cursor_.assign(inputs.size(), 0);
        last_consumed_.assign(inputs.size(), std::nullopt);
        for (std::size_t k = 0; k < p.inputs.size(); ++k)
            if (p.inputs[k].mode == InputMode::record) refs_[p.inputs[k].var] = RecordRef{static_cast<int>(k), 0};
    }

    std::vector<EmittedRecord> run() {
        std::vector<EmittedRecord> emitted;
        std::size_t pc = 1, steps = 0;
        const auto& code = p_.code;
        while (true) {
            if (++steps > opt_.step_budget)
                throw InvocationError(p_.name + ": step budget of " + std::to_string(opt_.step_budget) + " exceeded");
            const Instruction& ins = code.at(pc);
            std::size_t next_pc = pc + 1;
            switch (ins.op) {
            case OpCode::header: break;
            case OpCode::ret: return emitted;
            case OpCode::jump: next_pc = p_.target_index(ins); break;
            case OpCode::branch:
                if (compare(ins.cmp, operand(ins.a), operand(ins.b))) next_pc = p_.target_index(ins);
                break;
            case OpCode::has_next_branch: {
                int k = p_.var_input[ins.rec];
                bool has = cursor_[k] < in_[k].size();
                if (has != ins.negated) next_pc = p_.target_index(ins);
                break;
            }
            case OpCode::next: {
                int k = p_.var_input[ins.rec];
                if (cursor_[k] >= in_[k].size()) throw InvocationError(p_.name + ": next() past end of input");
                RecordRef r{k, cursor_[k]++};
                refs_[ins.dst] = r;
                last_consumed_[k] = r.second;
                break;
            }
            case OpCode::rewind: cursor_[p_.var_input[ins.rec]] = 0; break;
            case OpCode::get_field: {
                const Record& r = record(ins.rec);
                std::size_t n = field(ins);
                if (n >= r.arity())
                    throw InvocationError(p_.name + ": getField index " + std::to_string(n) +
                                          " out of range for record of arity " + std::to_string(r.arity()));
                set_val(ins.dst, r[n]);
                break;
            }
            case OpCode::set_field: {
                std::size_t n = field(ins);
                auto& o = out(ins.rec);
                if (o.values.size() <= n) o.values.resize(n + 1, Value::absent());
                o.values[n] = operand(ins.a);
                break;
            }
            case OpCode::copy_ctor: {
                RecordRef r = ref(ins.rec);
                OutRec o{std::vector<Value>(offset_[r.first], Value::absent()), OpCode::copy_ctor, {r}};
                const Record& src = in_[r.first][r.second];
                o.values.insert(o.values.end(), src.values.begin(), src.values.end());
                new_out(ins.dst, std::move(o));
                break;
            }
            case OpCode::concat_ctor: {
                RecordRef a = ref(ins.rec), b = ref(ins.rec2);
                OutRec o{in_[a.first][a.second].values, OpCode::concat_ctor, {a, b}};
                o.values.resize(offset_[b.first], Value::absent());
                const auto& bv = in_[b.first][b.second].values;
                o.values.insert(o.values.end(), bv.begin(), bv.end());
                new_out(ins.dst, std::move(o));
                break;
            }
            case OpCode::empty_ctor: {
                OutRec o{{}, OpCode::empty_ctor, {}};
                for (std::size_t k = 0; k < in_.size(); ++k) {
                    if (last_consumed_[k])
                        o.sources.emplace_back(static_cast<int>(k), *last_consumed_[k]);
                    else if (!in_[k].empty())
                        o.sources.emplace_back(static_cast<int>(k), 0);
                }
                new_out(ins.dst, std::move(o));
                break;
            }
            case OpCode::emit: {
                const auto& o = out(ins.rec);
                emitted.push_back(EmittedRecord{o.values, o.ctor, o.sources});
                break;
            }
            case OpCode::assign_const: set_val(ins.dst, ins.a.constant); break;
            case OpCode::assign_var: set_val(ins.dst, operand(ins.a)); break;
            case OpCode::arith:
                set_val(ins.dst, interp_detail::arith(ins.arith, operand(ins.a),
                                                      ins.arith == ArithOp::neg ? Value::absent() : operand(ins.b)));
                break;
            }
            pc = next_pc;
        }
    }

    std::size_t total_arity() const { return total_arity_; }

private:
    const UdfProgram& p_;
    const std::vector<std::vector<Record>>& in_;
    const InvocationOptions& opt_;
    std::vector<std::size_t> arity_, offset_;
    std::size_t total_arity_ = 0;
    std::vector<Value> vals_;
    std::vector<bool> val_set_;
    std::vector<std::optional<RecordRef>> refs_;
    std::vector<int> outs_;
    std::vector<OutRec> out_store_;
    std::vector<std::size_t> cursor_;
    std::vector<std::optional<std::size_t>> last_consumed_;

    void set_val(VarId v, Value x) {
        vals_[v] = std::move(x);
        val_set_[v] = true;
    }
    Value operand(const Operand& o) const {
        if (!o.is_var()) return o.constant;
        if (!val_set_[o.var]) throw InvocationError(p_.name + ": " + p_.var_name(o.var) + " used before assignment");
        return vals_[o.var];
    }
    std::size_t field(const Instruction& ins) const {
        if (!ins.dynamic_index) return ins.field;
        Value v = operand(Operand::of_var(ins.field_var));
        if (!v.is_int() || v.as_int() < 0 || v.as_int() > 1'000'000)
            throw InvocationError(p_.name + ": field index " + v.to_string() + " is not a valid position");
        return static_cast<std::size_t>(v.as_int());
    }
    RecordRef ref(VarId v) const {
        if (!refs_[v]) throw InvocationError(p_.name + ": record " + p_.var_name(v) + " is unbound");
        return *refs_[v];
    }
    const Record& record(VarId v) const {
        auto r = ref(v);
        return in_[r.first][r.second];
    }
    OutRec& out(VarId v) {
        if (outs_[v] < 0) throw InvocationError(p_.name + ": output record " + p_.var_name(v) + " not constructed");
        return out_store_[outs_[v]];
    }
    void new_out(VarId v, OutRec o) {
        out_store_.push_back(std::move(o));
        outs_[v] = static_cast<int>(out_store_.size() - 1);
    }
};

} // namespace interp_detail

/// Runs one invocation. RAT programs take one record per input; KAT programs a list per input.
inline std::vector<EmittedRecord> run_udf(const UdfProgram& p, const std::vector<std::vector<Record>>& inputs,
                                          const InvocationOptions& opt = {}) {
    return interp_detail::Frame(p, inputs, opt).run();
}

inline std::vector<Record> interpret(const UdfProgram& p, const std::vector<std::vector<Record>>& inputs,
                                     const InvocationOptions& opt = {}) {
    std::vector<Record> out;
    for (auto& e : run_udf(p, inputs, opt)) out.push_back(Record{std::move(e.values)});
    return out;
}

inline std::vector<Record> interpret(const UdfProgram& p, const Record& r, const InvocationOptions& opt = {}) {
    return interpret(p, std::vector<std::vector<Record>>{{r}}, opt);
}

inline std::vector<Record> interpret(const UdfProgram& p, const Record& l, const Record& r,
                                     const InvocationOptions& opt = {}) {
    return interpret(p, std::vector<std::vector<Record>>{{l}, {r}}, opt);
}

} // namespace dfopt
