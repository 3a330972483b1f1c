#pragma once
// Typed three-address code for user-defined functions.
//
// One instruction per label, e.g.
//
//   20: f2(InputRecord $ir)
//   21: $a:=getField($ir,0)
//   22: if($a<0) goto 25
//   23: $or:=copy($ir)
//   24: emit($or)
//   25: return
//
// Key-at-a-time functions take `RecordList` parameters and iterate with
// `if(!hasNext($it)) goto L`, `$r:=next($it)` and `rewind($it)`.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dfopt/error.hpp"
#include "dfopt/value.hpp"

namespace dfopt {

enum class InputMode { record, list }; // RAT / KAT

enum class OpCode {
    header,
    get_field,
    set_field,
    copy_ctor,
    empty_ctor,
    concat_ctor,
    emit,
    ret,
    assign_const,
    assign_var,
    arith,
    branch,
    jump,
    has_next_branch,
    next,
    rewind,
};

enum class ArithOp { add, sub, mul, div, neg };
enum class CmpOp { lt, le, eq, ne, ge, gt };

inline const char* to_string(ArithOp op) {
    switch (op) {
    case ArithOp::add: return "+";
    case ArithOp::sub: return "-";
    case ArithOp::mul: return "*";
    case ArithOp::div: return "/";
    case ArithOp::neg: return "-";
    }
    return "?";
}

inline const char* to_string(CmpOp op) {
    switch (op) {
    case CmpOp::lt: return "<";
    case CmpOp::le: return "<=";
    case CmpOp::eq: return "==";
    case CmpOp::ne: return "!=";
    case CmpOp::ge: return ">=";
    case CmpOp::gt: return ">";
    }
    return "?";
}

using VarId = int;
inline constexpr VarId no_var = -1;

struct Operand {
    VarId var = no_var; // no_var -> constant
    Value constant;

    bool is_var() const { return var != no_var; }
    static Operand of_var(VarId v) { return Operand{v, {}}; }
    static Operand of_const(Value c) { return Operand{no_var, std::move(c)}; }
};

struct Instruction {
    std::uint32_t label = 0;
    OpCode op = OpCode::ret;
    VarId dst = no_var;  // defined variable
    VarId rec = no_var;  // record / list operand
    VarId rec2 = no_var; // right record of concat
    std::size_t field = 0;
    VarId field_var = no_var; // set when the index was given by a variable
    bool dynamic_index = false; // index not statically computable (only with ParseOptions::allow_dynamic_index)
    Operand a, b;
    ArithOp arith = ArithOp::add;
    CmpOp cmp = CmpOp::eq;
    bool negated = false; // `!hasNext`
    std::uint32_t target = 0;

    bool is_terminator() const {
        return op == OpCode::ret || op == OpCode::jump || op == OpCode::branch || op == OpCode::has_next_branch;
    }
    bool is_branch() const { return op == OpCode::branch || op == OpCode::has_next_branch; }
    bool has_target() const { return op == OpCode::jump || is_branch(); }
};

enum class VarKind { value, input_record, input_list, output_record };

struct InputParam {
    std::string type_name; // InputRecord / RecordList
    VarId var = no_var;
    InputMode mode = InputMode::record;
};

/// A parsed UDF. Immutable after parsing.
struct UdfProgram {
    std::string name;
    std::vector<InputParam> inputs;
    std::vector<Instruction> code; // code[0] is the header
    std::vector<std::string> var_names;
    std::vector<VarKind> var_kinds;
    std::vector<int> var_input; // input index for input_record/input_list vars, else -1

    std::size_t arity() const { return inputs.size(); }
    bool is_kat() const { return !inputs.empty() && inputs[0].mode == InputMode::list; }

    std::optional<std::size_t> index_of(std::uint32_t label) const {
        auto lo = std::lower_bound(code.begin(), code.end(), label,
                                   [](const Instruction& i, std::uint32_t l) { return i.label < l; });
        if (lo == code.end() || lo->label != label) return std::nullopt;
        return static_cast<std::size_t>(lo - code.begin());
    }
    std::size_t target_index(const Instruction& ins) const { return *index_of(ins.target); }

    const std::string& var_name(VarId v) const { return var_names.at(static_cast<std::size_t>(v)); }
};

namespace ir_detail {

class Cursor {
public:
    Cursor(std::string_view s, std::size_t line) : s_(s), line_(line) {}

    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    bool at_end() {
        skip_ws();
        return pos_ >= s_.size();
    }
    bool try_consume(std::string_view tok) {
        skip_ws();
        if (s_.substr(pos_, tok.size()) == tok) {
            // keywords must not run into identifier characters
            if (std::isalpha(static_cast<unsigned char>(tok.back())) && pos_ + tok.size() < s_.size()) {
                char n = s_[pos_ + tok.size()];
                if (std::isalnum(static_cast<unsigned char>(n)) || n == '_') return false;
            }
            pos_ += tok.size();
            return true;
        }
        return false;
    }
    void expect(std::string_view tok) {
        if (!try_consume(tok)) fail("expected '" + std::string(tok) + "'");
    }
    char peek() {
        skip_ws();
        return pos_ < s_.size() ? s_[pos_] : '\0';
    }
    char peek_at(std::size_t off) const { return pos_ + off < s_.size() ? s_[pos_ + off] : '\0'; }

    std::string identifier() {
        skip_ws();
        std::size_t start = pos_;
        while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
        if (start == pos_) fail("expected identifier");
        return std::string(s_.substr(start, pos_ - start));
    }
    std::string variable() {
        skip_ws();
        if (peek() != '$') fail("expected variable");
        ++pos_;
        return "$" + identifier();
    }
    std::int64_t integer() {
        skip_ws();
        std::size_t start = pos_;
        if (pos_ < s_.size() && s_[pos_] == '-') ++pos_;
        while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
        if (start == pos_ || (pos_ == start + 1 && s_[start] == '-')) fail("expected integer");
        return std::stoll(std::string(s_.substr(start, pos_ - start)));
    }

    /// int / float / "string" / true / false / null
    std::optional<Value> literal() {
        skip_ws();
        char c = peek();
        if (c == '"') {
            ++pos_;
            std::string out;
            while (pos_ < s_.size() && s_[pos_] != '"') {
                if (s_[pos_] == '\\' && pos_ + 1 < s_.size()) ++pos_;
                out += s_[pos_++];
            }
            if (pos_ >= s_.size()) fail("unterminated string literal");
            ++pos_;
            return Value(std::move(out));
        }
        if (std::isdigit(static_cast<unsigned char>(c)) ||
            (c == '-' && std::isdigit(static_cast<unsigned char>(peek_at(1))))) {
            std::size_t start = pos_;
            if (s_[pos_] == '-') ++pos_;
            bool is_float = false;
            while (pos_ < s_.size() &&
                   (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.' || s_[pos_] == 'e')) {
                if (s_[pos_] == '.' || s_[pos_] == 'e') is_float = true;
                ++pos_;
            }
            std::string text(s_.substr(start, pos_ - start));
            try {
                if (is_float) return Value(std::stod(text));
                return Value(static_cast<std::int64_t>(std::stoll(text)));
            } catch (const std::exception&) {
                fail("bad numeric literal '" + text + "'");
            }
        }
        if (try_consume("true")) return Value(true);
        if (try_consume("false")) return Value(false);
        if (try_consume("null")) return Value::absent();
        return std::nullopt;
    }

    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError(line_, msg + " in '" + std::string(s_) + "'");
    }

    std::size_t line() const { return line_; }

private:
    std::string_view s_;
    std::size_t pos_ = 0;
    std::size_t line_;
};

struct RawLine {
    std::uint32_t label;
    std::string text;
    std::size_t line;
};

// Splits source into `label: instruction` pieces; several may share a line.
inline std::vector<RawLine> split_labels(std::string_view src) {
    std::vector<RawLine> out;
    std::size_t line = 1;
    std::size_t i = 0;
    auto is_label_start = [&](std::size_t p) {
        if (p > 0 && !std::isspace(static_cast<unsigned char>(src[p - 1]))) return std::size_t{0};
        std::size_t q = p;
        while (q < src.size() && std::isdigit(static_cast<unsigned char>(src[q]))) ++q;
        if (q == p) return std::size_t{0};
        std::size_t r = q;
        while (r < src.size() && (src[r] == ' ' || src[r] == '\t')) ++r;
        if (r < src.size() && src[r] == ':' && (r + 1 >= src.size() || src[r + 1] != '=')) return r + 1;
        return std::size_t{0};
    };
    RawLine* cur = nullptr;
    while (i < src.size()) {
        char c = src[i];
        if (c == '#' || (c == '/' && i + 1 < src.size() && src[i + 1] == '/')) {
            while (i < src.size() && src[i] != '\n') ++i;
            continue;
        }
        if (c == '\n') {
            ++line;
            ++i;
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            if (std::size_t after = is_label_start(i)) {
                std::uint32_t label = static_cast<std::uint32_t>(std::stoul(std::string(src.substr(i, after - i - 1))));
                out.push_back(RawLine{label, {}, line});
                cur = &out.back();
                i = after;
                continue;
            }
        }
        if (!cur) {
            if (!std::isspace(static_cast<unsigned char>(c)))
                throw ParseError(line, "instruction without label");
            ++i;
            continue;
        }
        cur->text += c;
        ++i;
    }
    return out;
}

struct ParseOptionsImpl {
    bool allow_dynamic_index = false;
};

class Parser {
public:
    explicit Parser(ParseOptionsImpl opt = {}) : opt_(opt) {}

    UdfProgram parse(std::string_view src) {
        auto lines = split_labels(src);
        if (lines.empty()) throw ParseError(1, "empty program");
        for (std::size_t i = 0; i < lines.size(); ++i) {
            if (i > 0 && lines[i].label <= lines[i - 1].label)
                throw ParseError(lines[i].line, "labels must be strictly increasing");
            Cursor c(lines[i].text, lines[i].line);
            Instruction ins = i == 0 ? parse_header(c) : parse_instruction(c);
            ins.label = lines[i].label;
            if (!c.at_end()) c.fail("trailing input");
            p_.code.push_back(std::move(ins));
            src_lines_.push_back(lines[i].line);
        }
        finish();
        return std::move(p_);
    }

private:
    ParseOptionsImpl opt_;
    UdfProgram p_;
    std::map<std::string, VarId> vars_;
    std::vector<std::size_t> src_lines_;
    std::vector<std::pair<std::size_t, std::string>> pending_index_vars_; // code index, var

    VarId var(const std::string& name) {
        auto [it, inserted] = vars_.emplace(name, static_cast<VarId>(p_.var_names.size()));
        if (inserted) {
            p_.var_names.push_back(name);
            p_.var_kinds.push_back(VarKind::value);
            p_.var_input.push_back(-1);
        }
        return it->second;
    }

    Instruction parse_header(Cursor& c) {
        Instruction ins;
        ins.op = OpCode::header;
        p_.name = c.identifier();
        c.expect("(");
        if (!c.try_consume(")")) {
            do {
                std::string type = c.identifier();
                InputMode mode;
                if (type == "InputRecord" || type == "Record")
                    mode = InputMode::record;
                else if (type == "RecordList" || type == "Iterator")
                    mode = InputMode::list;
                else
                    c.fail("unknown parameter type '" + type + "'");
                VarId v = var(c.variable());
                p_.var_kinds[v] = mode == InputMode::record ? VarKind::input_record : VarKind::input_list;
                p_.var_input[v] = static_cast<int>(p_.inputs.size());
                p_.inputs.push_back(InputParam{type, v, mode});
            } while (c.try_consume(","));
            c.expect(")");
        }
        if (p_.inputs.size() > 2) c.fail("a UDF takes at most two inputs");
        if (p_.inputs.size() == 2 && p_.inputs[0].mode != p_.inputs[1].mode)
            c.fail("inputs must be either all records or all record lists");
        return ins;
    }

    Operand operand(Cursor& c) {
        if (c.peek() == '$') return Operand::of_var(var(c.variable()));
        if (auto lit = c.literal()) return Operand::of_const(*lit);
        c.fail("expected operand");
    }

    void field_index(Cursor& c, Instruction& ins) {
        if (c.peek() == '$') {
            std::string name = c.variable();
            ins.field_var = var(name);
            pending_index_vars_.emplace_back(p_.code.size(), name);
            return;
        }
        std::int64_t n = c.integer();
        if (n < 0) c.fail("field index must be non-negative");
        ins.field = static_cast<std::size_t>(n);
    }

    std::optional<CmpOp> comparison(Cursor& c) {
        if (c.try_consume("<=")) return CmpOp::le;
        if (c.try_consume(">=")) return CmpOp::ge;
        if (c.try_consume("==")) return CmpOp::eq;
        if (c.try_consume("!=")) return CmpOp::ne;
        if (c.try_consume("<")) return CmpOp::lt;
        if (c.try_consume(">")) return CmpOp::gt;
        return std::nullopt;
    }

    Instruction parse_instruction(Cursor& c) {
        Instruction ins;
        if (c.try_consume("return")) {
            ins.op = OpCode::ret;
            return ins;
        }
        if (c.try_consume("emit")) {
            ins.op = OpCode::emit;
            c.expect("(");
            ins.rec = var(c.variable());
            c.expect(")");
            return ins;
        }
        if (c.try_consume("goto")) {
            ins.op = OpCode::jump;
            ins.target = static_cast<std::uint32_t>(c.integer());
            return ins;
        }
        if (c.try_consume("rewind")) {
            ins.op = OpCode::rewind;
            c.expect("(");
            ins.rec = var(c.variable());
            c.expect(")");
            return ins;
        }
        if (c.try_consume("setField")) {
            ins.op = OpCode::set_field;
            c.expect("(");
            ins.rec = var(c.variable());
            c.expect(",");
            field_index(c, ins);
            c.expect(",");
            ins.a = operand(c);
            c.expect(")");
            return ins;
        }
        if (c.try_consume("if")) {
            c.expect("(");
            bool negated = c.try_consume("!");
            if (c.try_consume("hasNext")) {
                ins.op = OpCode::has_next_branch;
                ins.negated = negated;
                c.expect("(");
                ins.rec = var(c.variable());
                c.expect(")");
            } else {
                if (negated) c.fail("'!' is only allowed before hasNext");
                ins.op = OpCode::branch;
                ins.a = operand(c);
                auto cmp = comparison(c);
                if (!cmp) c.fail("expected comparison operator");
                ins.cmp = *cmp;
                ins.b = operand(c);
            }
            c.expect(")");
            c.expect("goto");
            ins.target = static_cast<std::uint32_t>(c.integer());
            return ins;
        }
        if (c.peek() == '$') {
            ins.dst = var(c.variable());
            c.expect(":=");
            parse_rhs(c, ins);
            return ins;
        }
        c.fail("unknown instruction");
    }

    void parse_rhs(Cursor& c, Instruction& ins) {
        if (c.try_consume("getField")) {
            ins.op = OpCode::get_field;
            c.expect("(");
            ins.rec = var(c.variable());
            c.expect(",");
            field_index(c, ins);
            c.expect(")");
            return;
        }
        if (c.try_consume("copy")) {
            ins.op = OpCode::copy_ctor;
            c.expect("(");
            ins.rec = var(c.variable());
            c.expect(")");
            return;
        }
        if (c.try_consume("concat")) {
            ins.op = OpCode::concat_ctor;
            c.expect("(");
            ins.rec = var(c.variable());
            c.expect(",");
            ins.rec2 = var(c.variable());
            c.expect(")");
            return;
        }
        if (c.try_consume("next")) {
            ins.op = OpCode::next;
            c.expect("(");
            ins.rec = var(c.variable());
            c.expect(")");
            return;
        }
        if (c.try_consume("new")) {
            c.try_consume("OutputRecord");
            c.expect("(");
            if (c.try_consume(")")) {
                ins.op = OpCode::empty_ctor;
                return;
            }
            ins.rec = var(c.variable());
            if (c.try_consume(",")) {
                ins.op = OpCode::concat_ctor;
                ins.rec2 = var(c.variable());
            } else {
                ins.op = OpCode::copy_ctor;
            }
            c.expect(")");
            return;
        }
        if (c.peek() == '-' && c.peek_at(1) == '$') {
            c.expect("-");
            ins.op = OpCode::arith;
            ins.arith = ArithOp::neg;
            ins.a = operand(c);
            return;
        }
        ins.a = operand(c);
        if (c.at_end()) {
            ins.op = ins.a.is_var() ? OpCode::assign_var : OpCode::assign_const;
            return;
        }
        ins.op = OpCode::arith;
        if (c.try_consume("+"))
            ins.arith = ArithOp::add;
        else if (c.try_consume("-"))
            ins.arith = ArithOp::sub;
        else if (c.try_consume("*"))
            ins.arith = ArithOp::mul;
        else if (c.try_consume("/"))
            ins.arith = ArithOp::div;
        else
            c.fail("expected arithmetic operator");
        ins.b = operand(c);
    }

    [[noreturn]] void fail_at(std::size_t code_index, const std::string& msg) const {
        throw ParseError(src_lines_.at(code_index), msg);
    }

    void set_kind(std::size_t at, VarId v, VarKind kind, int input) {
        auto& k = p_.var_kinds[v];
        auto& in = p_.var_input[v];
        bool fresh = k == VarKind::value && in == -1 && !assigned_value_[v];
        if (fresh) {
            k = kind;
            in = input;
            return;
        }
        if (k != kind || (kind != VarKind::output_record && kind != VarKind::value && in != input))
            fail_at(at, "variable " + p_.var_name(v) + " is used with inconsistent types");
    }

    void require_kind(std::size_t at, VarId v, VarKind kind, const char* what) const {
        if (p_.var_kinds[v] != kind) fail_at(at, std::string(what) + " expects " + kind_name(kind) + ", got " + p_.var_name(v));
    }

    static const char* kind_name(VarKind k) {
        switch (k) {
        case VarKind::value: return "a value";
        case VarKind::input_record: return "an input record";
        case VarKind::input_list: return "a record list";
        case VarKind::output_record: return "an output record";
        }
        return "?";
    }

    std::vector<bool> assigned_value_;

    void finish() {
        auto& code = p_.code;
        const auto& last = code.back();
        if (code.size() > 1 && last.op != OpCode::ret && last.op != OpCode::jump)
            fail_at(code.size() - 1, "control falls off the end of the program; last instruction must be return or goto");
        if (code.size() == 1) fail_at(0, "program has no body; expected at least a return");
        for (std::size_t i = 0; i < code.size(); ++i)
            if (code[i].has_target() && !p_.index_of(code[i].target))
                fail_at(i, "branch target " + std::to_string(code[i].target) + " does not exist");

        // infer variable kinds from definitions
        assigned_value_.assign(p_.var_names.size(), false);
        for (std::size_t i = 1; i < code.size(); ++i) {
            auto& ins = code[i];
            if (ins.dst == no_var) continue;
            if (p_.var_kinds[ins.dst] == VarKind::input_record && p_.var_input[ins.dst] >= 0 && ins.op != OpCode::next &&
                is_param(ins.dst))
                fail_at(i, "input parameter " + p_.var_name(ins.dst) + " cannot be reassigned");
            switch (ins.op) {
            case OpCode::copy_ctor:
            case OpCode::empty_ctor:
            case OpCode::concat_ctor: set_kind(i, ins.dst, VarKind::output_record, -1); break;
            case OpCode::next: {
                require_kind(i, ins.rec, VarKind::input_list, "next");
                set_kind(i, ins.dst, VarKind::input_record, p_.var_input[ins.rec]);
                break;
            }
            default:
                if (p_.var_kinds[ins.dst] != VarKind::value)
                    fail_at(i, "variable " + p_.var_name(ins.dst) + " is used with inconsistent types");
                assigned_value_[ins.dst] = true;
                break;
            }
        }
        // check uses
        for (std::size_t i = 1; i < code.size(); ++i) {
            auto& ins = code[i];
            auto value_operand = [&](const Operand& o) {
                if (o.is_var() && p_.var_kinds[o.var] != VarKind::value)
                    fail_at(i, p_.var_name(o.var) + " is a record, not a value");
            };
            switch (ins.op) {
            case OpCode::get_field:
                require_kind(i, ins.rec, VarKind::input_record, "getField");
                break;
            case OpCode::set_field:
                require_kind(i, ins.rec, VarKind::output_record, "setField");
                value_operand(ins.a);
                break;
            case OpCode::copy_ctor: require_kind(i, ins.rec, VarKind::input_record, "copy"); break;
            case OpCode::concat_ctor:
                require_kind(i, ins.rec, VarKind::input_record, "concat");
                require_kind(i, ins.rec2, VarKind::input_record, "concat");
                if (p_.var_input[ins.rec] != 0 || p_.var_input[ins.rec2] != 1)
                    fail_at(i, "concat expects a record of the first input followed by one of the second input");
                break;
            case OpCode::emit: require_kind(i, ins.rec, VarKind::output_record, "emit"); break;
            case OpCode::has_next_branch:
            case OpCode::rewind: require_kind(i, ins.rec, VarKind::input_list, "hasNext/rewind"); break;
            case OpCode::next: break;
            case OpCode::assign_var:
            case OpCode::arith:
            case OpCode::branch:
                value_operand(ins.a);
                if (ins.op != OpCode::assign_var && !(ins.op == OpCode::arith && ins.arith == ArithOp::neg))
                    value_operand(ins.b);
                break;
            default: break;
            }
        }
        // statically computable field indices: literal or a final constant variable
        for (auto& [at, name] : pending_index_vars_) {
            VarId v = vars_.at(name);
            const Instruction* def = nullptr;
            int defs = 0;
            for (const auto& ins : code)
                if (ins.dst == v) {
                    ++defs;
                    def = &ins;
                }
            if (defs != 1 || def->op != OpCode::assign_const || !def->a.constant.is_int() ||
                def->a.constant.as_int() < 0) {
                if (opt_.allow_dynamic_index && p_.var_kinds[v] == VarKind::value) {
                    code[at].dynamic_index = true;
                    continue;
                }
                fail_at(at, "field index " + name + " is not a literal or a final non-negative integer constant");
            }
            code[at].field = static_cast<std::size_t>(def->a.constant.as_int());
        }
    }

    bool is_param(VarId v) const {
        for (const auto& in : p_.inputs)
            if (in.var == v) return true;
        return false;
    }
};

inline std::string format_operand(const UdfProgram& p, const Operand& o) {
    if (o.is_var()) return p.var_name(o.var);
    if (o.constant.is_absent()) return "null";
    if (o.constant.is_string()) return "\"" + o.constant.as_string() + "\"";
    std::string s = o.constant.to_string();
    if (o.constant.is_float() && s.find_first_of(".e") == std::string::npos) s += ".0";
    return s;
}

} // namespace ir_detail

using ParseOptions = ir_detail::ParseOptionsImpl;

inline UdfProgram parse_udf(std::string_view text, ParseOptions opt = {}) { return ir_detail::Parser{opt}.parse(text); }

inline bool has_dynamic_index(const UdfProgram& p) {
    return std::any_of(p.code.begin(), p.code.end(), [](const Instruction& i) { return i.dynamic_index; });
}

inline std::string format_instruction(const UdfProgram& p, const Instruction& ins) {
    using ir_detail::format_operand;
    auto idx = [&] { return ins.field_var != no_var ? p.var_name(ins.field_var) : std::to_string(ins.field); };
    switch (ins.op) {
    case OpCode::header: {
        std::string s = p.name + "(";
        for (std::size_t i = 0; i < p.inputs.size(); ++i)
            s += (i ? ", " : "") + std::string(p.inputs[i].mode == InputMode::record ? "InputRecord " : "RecordList ") +
                 p.var_name(p.inputs[i].var);
        return s + ")";
    }
    case OpCode::get_field: return p.var_name(ins.dst) + ":=getField(" + p.var_name(ins.rec) + "," + idx() + ")";
    case OpCode::set_field:
        return "setField(" + p.var_name(ins.rec) + "," + idx() + "," + format_operand(p, ins.a) + ")";
    case OpCode::copy_ctor: return p.var_name(ins.dst) + ":=copy(" + p.var_name(ins.rec) + ")";
    case OpCode::empty_ctor: return p.var_name(ins.dst) + ":=new()";
    case OpCode::concat_ctor:
        return p.var_name(ins.dst) + ":=concat(" + p.var_name(ins.rec) + "," + p.var_name(ins.rec2) + ")";
    case OpCode::emit: return "emit(" + p.var_name(ins.rec) + ")";
    case OpCode::ret: return "return";
    case OpCode::assign_const:
    case OpCode::assign_var: return p.var_name(ins.dst) + ":=" + format_operand(p, ins.a);
    case OpCode::arith:
        if (ins.arith == ArithOp::neg) return p.var_name(ins.dst) + ":=-" + format_operand(p, ins.a);
        return p.var_name(ins.dst) + ":=" + format_operand(p, ins.a) + to_string(ins.arith) + format_operand(p, ins.b);
    case OpCode::branch:
        return "if(" + format_operand(p, ins.a) + to_string(ins.cmp) + format_operand(p, ins.b) + ") goto " +
               std::to_string(ins.target);
    case OpCode::jump: return "goto " + std::to_string(ins.target);
    case OpCode::has_next_branch:
        return std::string("if(") + (ins.negated ? "!" : "") + "hasNext(" + p.var_name(ins.rec) + ")) goto " +
               std::to_string(ins.target);
    case OpCode::next: return p.var_name(ins.dst) + ":=next(" + p.var_name(ins.rec) + ")";
    case OpCode::rewind: return "rewind(" + p.var_name(ins.rec) + ")";
    }
    return "?";
}

/// One `label: instruction` per line; parses back to an equivalent program.
inline std::string print_udf(const UdfProgram& p) {
    std::string out;
    for (const auto& ins : p.code) out += std::to_string(ins.label) + ": " + format_instruction(p, ins) + "\n";
    return out;
}

} // namespace dfopt
