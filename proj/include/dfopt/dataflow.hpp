#pragma once
// Tree-shaped data flows: sources, PACT operators, one sink.
//
// A DataFlow is an immutable plan tree over a shared FlowContext. The context
// owns the operators, their original layouts, the global record and the
// analyzed properties; reordering only rebuilds the tree.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp> // nlohmann::json, vendored

#include "dfopt/csv.hpp"
#include "dfopt/error.hpp"
#include "dfopt/sca.hpp"
#include "dfopt/udf_ir.hpp"
#include "dfopt/value.hpp"

namespace dfopt {

enum class OpKind { map, reduce, cross, match, cogroup };

inline const char* to_string(OpKind k) {
    switch (k) {
    case OpKind::map: return "map";
    case OpKind::reduce: return "reduce";
    case OpKind::cross: return "cross";
    case OpKind::match: return "match";
    case OpKind::cogroup: return "cogroup";
    }
    return "?";
}

inline OpKind parse_kind(const std::string& s) {
    std::string l = s;
    std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
    if (l == "map") return OpKind::map;
    if (l == "reduce") return OpKind::reduce;
    if (l == "cross") return OpKind::cross;
    if (l == "match") return OpKind::match;
    if (l == "cogroup") return OpKind::cogroup;
    throw ValidationError("unknown operator kind '" + s + "'");
}

inline bool is_unary(OpKind k) { return k == OpKind::map || k == OpKind::reduce; }
inline bool is_kat(OpKind k) { return k == OpKind::reduce || k == OpKind::cogroup; }

enum class AnalysisMode { sca, manual, both };

inline AnalysisMode parse_mode(const std::string& s) {
    if (s == "sca") return AnalysisMode::sca;
    if (s == "manual") return AnalysisMode::manual;
    if (s == "both") return AnalysisMode::both;
    throw ValidationError("unknown analysis mode '" + s + "' (expected sca, manual or both)");
}

// ---------------------------------------------------------------------------
// Flow description (what a document says, before validation)

struct ForeignKeySpec {
    std::vector<std::string> attributes;
    std::string ref_source;
    std::vector<std::string> ref_attributes;
};

struct SourceSpec {
    std::string name;
    std::string path; // CSV, relative to the document directory
    std::vector<ColumnSpec> columns;
    std::vector<std::vector<std::string>> unique_keys;
    std::vector<ForeignKeySpec> foreign_keys;
    bool singleton = false;
};

struct AnnotationSpec {
    std::optional<std::vector<std::string>> read, write;
    std::optional<EmitBounds> emit;
    std::optional<std::vector<std::vector<std::string>>> kgp; // KGP holds for keys covering one of these
    std::optional<ImplicitOp> implicit;
    std::optional<std::vector<bool>> per_record; // KAT, per input
    std::optional<int> emits_side;               // KAT
};

struct OperatorSpec {
    std::string id;
    OpKind kind = OpKind::map;
    std::vector<std::string> inputs;
    std::vector<std::string> key;                  // reduce
    std::vector<std::string> key_left, key_right;  // match / cogroup
    std::string udf_path;
    std::shared_ptr<const UdfProgram> udf;         // takes precedence over udf_path
    std::vector<std::string> new_attributes;
    std::optional<AnnotationSpec> annotation;
};

struct FlowSpec {
    std::string name;
    std::string base_dir = ".";
    std::vector<SourceSpec> sources;
    std::vector<OperatorSpec> operators;
    std::string sink_input;
    std::string sink_path;
};

// ---------------------------------------------------------------------------
// Validated model

struct ForeignKey {
    std::vector<AttributeId> attributes;
    int ref_source = -1;
    std::vector<AttributeId> ref_attributes;
};

struct DeclaredConstraints {
    std::vector<AttrSet> unique_keys; // includes the targets of foreign keys pointing here
    std::vector<ForeignKey> foreign_keys;
    bool singleton = false;
};

struct Source {
    std::string name;
    std::string path; // resolved
    std::vector<ColumnSpec> columns;
    Layout layout;
    DeclaredConstraints constraints;
};

struct OperatorProperties {
    AttrSet udf_read; // what the UDF itself reads
    AttrSet read;     // udf_read plus key attributes
    AttrSet write;
    ImplicitOp implicit_op = ImplicitOp::projection;
    EmitBounds emit;
    std::vector<AttrSet> kgp_bases; // RAT: KGP holds for K if K covers one of these
    std::vector<bool> per_record;   // KAT, per input
    std::optional<int> exclusive_side;
    bool pinned = false;
    std::string pin_reason;
    bool manual = false;

    bool kgp(const AttrSet& key) const {
        return std::any_of(kgp_bases.begin(), kgp_bases.end(), [&](const AttrSet& b) { return b.subset_of(key); });
    }
    bool is_per_record(int side = 0) const {
        return static_cast<std::size_t>(side) < per_record.size() && per_record[side];
    }
};

struct Operator {
    std::string id;
    OpKind kind = OpKind::map;
    std::vector<std::string> inputs; // original children (ids)
    std::vector<std::vector<AttributeId>> keys; // per input; empty for map/cross
    std::shared_ptr<const UdfProgram> udf;
    std::string udf_path;
    std::vector<Layout> input_layouts; // original
    Layout output_layout;
    std::vector<AttributeId> created;
    UdfShape shape;
    std::optional<AnnotationSpec> annotation;

    OperatorProperties props;                    // effective
    std::optional<OperatorProperties> sca_props; // kept for comparison
    std::optional<OperatorProperties> manual_props;
    std::optional<UdfAnalysis> analysis;

    std::size_t arity() const { return is_unary(kind) ? 1 : 2; }
    AttrSet key_set() const {
        AttrSet s;
        for (const auto& k : keys)
            for (auto a : k) s.insert(a);
        return s;
    }
    AttrSet input_attrs() const {
        AttrSet s;
        for (const auto& l : input_layouts) s |= to_set(l);
        return s;
    }
};

struct FlowContext {
    std::string name;
    std::string base_dir;
    GlobalRecord global;
    std::vector<Source> sources;
    std::vector<Operator> operators; // children before parents
    std::string sink_path;
    Layout sink_layout;
    AnalysisMode mode = AnalysisMode::sca;
    bool analyzed = false;

    int op_index(const std::string& id) const {
        for (std::size_t i = 0; i < operators.size(); ++i)
            if (operators[i].id == id) return static_cast<int>(i);
        throw ValidationError("unknown operator '" + id + "'");
    }
    int source_index(const std::string& name) const {
        for (std::size_t i = 0; i < sources.size(); ++i)
            if (sources[i].name == name) return static_cast<int>(i);
        return -1;
    }
};

// ---------------------------------------------------------------------------
// Plan trees

struct PlanNode;
using PlanPtr = std::shared_ptr<const PlanNode>;

struct PlanNode {
    bool is_source = false;
    int index = 0; // source or operator index in the context
    std::vector<PlanPtr> children;

    // derived, filled by make_*
    std::string canon;
    std::uint64_t hash = 0; // structural; equal trees have equal hashes
    std::string memo;       // operator and source bitmasks; equal for every arrangement of the same sub-flow
    AttrSet attrs;
};

namespace plan_detail {

inline std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
    h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    return h * 0xff51afd7ed558ccdULL;
}

inline std::string empty_memo(const FlowContext& ctx) {
    return std::string(8 * ((ctx.operators.size() + 63) / 64 + (ctx.sources.size() + 63) / 64), '\0');
}

inline void set_bit(std::string& memo, std::size_t bit) {
    memo[bit / 8] = static_cast<char>(static_cast<unsigned char>(memo[bit / 8]) | (1u << (bit % 8)));
}

inline std::size_t source_bit_base(const FlowContext& ctx) { return 64 * ((ctx.operators.size() + 63) / 64); }

} // namespace plan_detail

inline PlanPtr make_source_node(const FlowContext& ctx, int s) {
    auto n = std::make_shared<PlanNode>();
    n->is_source = true;
    n->index = s;
    n->canon = ctx.sources.at(s).name;
    n->attrs = to_set(ctx.sources[s].layout);
    n->hash = plan_detail::mix(0x5ca1ab1eULL, static_cast<std::uint64_t>(s));
    n->memo = plan_detail::empty_memo(ctx);
    plan_detail::set_bit(n->memo, plan_detail::source_bit_base(ctx) + static_cast<std::size_t>(s));
    return n;
}

inline PlanPtr make_op_node(const FlowContext& ctx, int op, std::vector<PlanPtr> children) {
    const auto& o = ctx.operators.at(op);
    if (children.size() != o.arity())
        throw TransformError("operator " + o.id + " needs " + std::to_string(o.arity()) + " inputs");
    auto n = std::make_shared<PlanNode>();
    n->index = op;
    n->hash = plan_detail::mix(0x0b5e55edULL, static_cast<std::uint64_t>(op));
    n->memo = plan_detail::empty_memo(ctx);
    std::size_t len = o.id.size() + 2;
    for (const auto& c : children) len += c->canon.size() + 1;
    n->canon.reserve(len);
    n->canon += o.id;
    n->canon += '(';
    for (std::size_t i = 0; i < children.size(); ++i) {
        const auto& c = *children[i];
        if (i) n->canon += ',';
        n->canon += c.canon;
        n->attrs |= c.attrs;
        n->hash = plan_detail::mix(n->hash, c.hash);
        for (std::size_t k = 0; k < n->memo.size(); ++k) n->memo[k] |= c.memo[k];
    }
    n->canon += ')';
    for (auto a : o.created) n->attrs.insert(a);
    plan_detail::set_bit(n->memo, static_cast<std::size_t>(op));
    n->children = std::move(children);
    return n;
}

class DataFlow {
public:
    DataFlow() = default;
    DataFlow(std::shared_ptr<const FlowContext> ctx, PlanPtr root) : ctx_(std::move(ctx)), root_(std::move(root)) {}

    const FlowContext& context() const { return *ctx_; }
    const std::shared_ptr<const FlowContext>& context_ptr() const { return ctx_; }
    const PlanPtr& root() const { return root_; }
    DataFlow with_root(PlanPtr r) const { return DataFlow(ctx_, std::move(r)); }

    const Operator& op(int i) const { return ctx_->operators.at(i); }
    const Operator& op(const std::string& id) const { return op(ctx_->op_index(id)); }
    const GlobalRecord& global() const { return ctx_->global; }

    /// Canonical serialization, e.g. "Map3(Map2(Map1(I)))". The sink is implicit.
    const std::string& canonical() const { return root_->canon; }

    /// Readable form: unary chains with arrows, binary inputs in parentheses.
    std::string pretty() const { return pretty(*root_); }
    std::string pretty(const PlanNode& n) const {
        if (n.is_source) return ctx_->sources[n.index].name;
        const auto& id = ctx_->operators[n.index].id;
        if (n.children.size() == 1) return pretty(*n.children[0]) + "->" + id;
        return "(" + pretty(*n.children[0]) + " | " + pretty(*n.children[1]) + ")->" + id;
    }

    friend bool operator==(const DataFlow& a, const DataFlow& b) { return a.canonical() == b.canonical(); }

private:
    std::shared_ptr<const FlowContext> ctx_;
    PlanPtr root_;
};

/// Equal for sub-flows over the same operator set and the same sources.
inline std::string memo_key(const PlanPtr& n) { return n->memo; }
inline std::string memo_key(const DataFlow& f) { return f.root()->memo; }

// ---------------------------------------------------------------------------
// Building and validation

namespace flow_detail {

inline std::string read_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string resolve_path(const std::string& base, const std::string& p) {
    if (p.empty()) return p;
    std::filesystem::path fp(p);
    if (fp.is_absolute()) return p;
    return (std::filesystem::path(base) / fp).lexically_normal().string();
}

inline AttributeId lookup(const GlobalRecord& g, const std::string& name, const std::string& where) {
    auto id = g.find(name);
    if (!id) throw ValidationError(where + ": unknown attribute '" + name + "'");
    return *id;
}

inline std::optional<std::size_t> position_in(const Layout& l, AttributeId a) {
    auto it = std::find(l.begin(), l.end(), a);
    if (it == l.end()) return std::nullopt;
    return static_cast<std::size_t>(it - l.begin());
}

inline void check_udf_kind(const Operator& o) {
    if (!o.udf) return;
    const auto& p = *o.udf;
    std::size_t want = o.arity();
    InputMode mode = is_kat(o.kind) ? InputMode::list : InputMode::record;
    if (p.arity() != want)
        throw ValidationError("operator " + o.id + ": " + to_string(o.kind) + " needs a UDF with " +
                              std::to_string(want) + " input(s), '" + p.name + "' has " +
                              std::to_string(p.arity()));
    for (const auto& in : p.inputs)
        if (in.mode != mode)
            throw ValidationError("operator " + o.id + ": " + to_string(o.kind) + " needs " +
                                  (mode == InputMode::list ? "RecordList" : "InputRecord") + " parameters");
}

} // namespace flow_detail

/// Validates a flow description and builds the global record. Properties are
/// attached by analyze_flow.
inline DataFlow build_flow(const FlowSpec& spec) {
    using namespace flow_detail;
    auto ctx = std::make_shared<FlowContext>();
    ctx->name = spec.name;
    ctx->base_dir = spec.base_dir;
    ctx->sink_path = resolve_path(spec.base_dir, spec.sink_path);

    std::set<std::string> names;
    for (const auto& s : spec.sources)
        if (!names.insert(s.name).second) throw ValidationError("duplicate name '" + s.name + "'");
    for (const auto& o : spec.operators)
        if (!names.insert(o.id).second) throw ValidationError("duplicate name '" + o.id + "'");

    for (const auto& s : spec.sources) {
        if (s.columns.empty()) throw ValidationError("source " + s.name + " has no attributes");
        Source src{s.name, resolve_path(spec.base_dir, s.path), s.columns, {}, {}};
        for (std::size_t i = 0; i < s.columns.size(); ++i)
            src.layout.push_back(ctx->global.add_attribute(s.columns[i].name, s.name, i, false, s.columns[i].type));
        ctx->global.map_layout(s.name, src.layout);
        src.constraints.singleton = s.singleton;
        ctx->sources.push_back(std::move(src));
    }
    auto source_attr = [&](const std::string& src, const std::string& attr, const std::string& where) {
        int si = ctx->source_index(src);
        if (si < 0) throw ValidationError(where + ": unknown source '" + src + "'");
        const auto& cols = ctx->sources[si].columns;
        for (std::size_t i = 0; i < cols.size(); ++i)
            if (cols[i].name == attr) return ctx->sources[si].layout[i];
        throw ValidationError(where + ": source " + src + " has no attribute '" + attr + "'");
    };
    for (std::size_t si = 0; si < spec.sources.size(); ++si) {
        const auto& s = spec.sources[si];
        for (const auto& uk : s.unique_keys) {
            AttrSet k;
            for (const auto& a : uk) k.insert(source_attr(s.name, a, "unique key of " + s.name));
            ctx->sources[si].constraints.unique_keys.push_back(k);
        }
        for (const auto& fk : s.foreign_keys) {
            if (fk.attributes.size() != fk.ref_attributes.size() || fk.attributes.empty())
                throw ValidationError("foreign key of " + s.name + " has mismatched attribute lists");
            ForeignKey f;
            f.ref_source = ctx->source_index(fk.ref_source);
            if (f.ref_source < 0) throw ValidationError("foreign key of " + s.name + " references unknown source '" +
                                                        fk.ref_source + "'");
            AttrSet target;
            for (std::size_t i = 0; i < fk.attributes.size(); ++i) {
                f.attributes.push_back(source_attr(s.name, fk.attributes[i], "foreign key of " + s.name));
                f.ref_attributes.push_back(source_attr(fk.ref_source, fk.ref_attributes[i], "foreign key of " + s.name));
                target.insert(f.ref_attributes.back());
            }
            ctx->sources[si].constraints.foreign_keys.push_back(f);
            // a referenced attribute list identifies records of the target
            auto& tgt = ctx->sources[f.ref_source].constraints.unique_keys;
            if (std::find(tgt.begin(), tgt.end(), target) == tgt.end()) tgt.push_back(target);
        }
    }

    // tree shape: walk from the sink, every node consumed exactly once
    std::map<std::string, const OperatorSpec*> op_specs;
    for (const auto& o : spec.operators) op_specs[o.id] = &o;
    std::map<std::string, std::string> parent;
    std::vector<const OperatorSpec*> order; // post-order
    std::set<std::string> on_stack;
    std::function<void(const std::string&, const std::string&)> visit = [&](const std::string& n,
                                                                              const std::string& from) {
        if (on_stack.count(n)) throw ValidationError("cycle through '" + n + "'");
        auto [it, fresh] = parent.emplace(n, from);
        if (!fresh)
            throw ValidationError("'" + n + "' has more than one consumer ('" + it->second + "' and '" + from +
                                  "'); flows must be trees");
        if (ctx->source_index(n) >= 0) return;
        auto os = op_specs.find(n);
        if (os == op_specs.end()) throw ValidationError("'" + from + "' consumes unknown input '" + n + "'");
        on_stack.insert(n);
        for (const auto& in : os->second->inputs) visit(in, n);
        on_stack.erase(n);
        order.push_back(os->second);
    };
    if (spec.sink_input.empty()) throw ValidationError("flow has no sink input");
    visit(spec.sink_input, "sink");
    for (const auto& s : spec.sources)
        if (!parent.count(s.name)) throw ValidationError("source " + s.name + " does not reach the sink");
    for (const auto& o : spec.operators)
        if (!parent.count(o.id)) throw ValidationError("operator " + o.id + " does not reach the sink");

    for (const OperatorSpec* os : order) {
        Operator o;
        o.id = os->id;
        o.kind = os->kind;
        o.inputs = os->inputs;
        o.annotation = os->annotation;
        if (os->inputs.size() != o.arity())
            throw ValidationError("operator " + o.id + ": " + to_string(o.kind) + " takes " +
                                  std::to_string(o.arity()) + " input(s), got " + std::to_string(os->inputs.size()));
        for (const auto& in : os->inputs) o.input_layouts.push_back(ctx->global.layout_of(in));

        if (os->udf) {
            o.udf = os->udf;
        } else if (!os->udf_path.empty()) {
            o.udf_path = resolve_path(spec.base_dir, os->udf_path);
            std::string text;
            try {
                text = read_text(o.udf_path);
            } catch (const ValidationError&) {
                throw ValidationError("operator " + o.id + ": missing UDF file '" + o.udf_path + "'");
            }
            try {
                o.udf = std::make_shared<UdfProgram>(parse_udf(text, ParseOptions{true}));
            } catch (const ParseError& e) {
                throw ValidationError("operator " + o.id + ": " + o.udf_path + ": " + e.what());
            }
        } else if (!os->annotation) {
            throw ValidationError("operator " + o.id + " has neither a UDF nor an annotation");
        }
        check_udf_kind(o);

        // keys
        auto resolve_keys = [&](const std::vector<std::string>& names, std::size_t side) {
            std::vector<AttributeId> out;
            for (const auto& n : names) {
                AttributeId a = lookup(ctx->global, n, "operator " + o.id);
                if (!position_in(o.input_layouts[side], a))
                    throw ValidationError("operator " + o.id + ": key attribute '" + n + "' is not in input '" +
                                          o.inputs[side] + "'");
                out.push_back(a);
            }
            return out;
        };
        switch (o.kind) {
        case OpKind::map:
            if (!os->key.empty() || !os->key_left.empty() || !os->key_right.empty())
                throw ValidationError("operator " + o.id + ": map takes no key");
            break;
        case OpKind::cross:
            if (!os->key.empty() || !os->key_left.empty() || !os->key_right.empty())
                throw ValidationError("operator " + o.id + ": cross takes no key");
            o.keys = {{}, {}};
            break;
        case OpKind::reduce:
            if (os->key.empty()) throw ValidationError("operator " + o.id + ": reduce needs a non-empty key");
            o.keys = {resolve_keys(os->key, 0)};
            break;
        case OpKind::match:
        case OpKind::cogroup: {
            if (os->key_left.empty() || os->key_left.size() != os->key_right.size())
                throw ValidationError("operator " + o.id + ": " + to_string(o.kind) +
                                      " needs non-empty left and right keys of equal length");
            o.keys = {resolve_keys(os->key_left, 0), resolve_keys(os->key_right, 1)};
            for (std::size_t i = 0; i < o.keys[0].size(); ++i) {
                auto tl = ctx->global.info(o.keys[0][i]).type, tr = ctx->global.info(o.keys[1][i]).type;
                if (tl && tr && *tl != *tr)
                    throw ValidationError("operator " + o.id + ": key attributes '" + os->key_left[i] + "' and '" +
                                          os->key_right[i] + "' have different types (" + tag_name(*tl) + " vs " +
                                          tag_name(*tr) + ")");
            }
            break;
        }
        }

        // shape and output layout (global-record extension for positions beyond the inputs)
        for (std::size_t k = 0; k < o.arity(); ++k) {
            o.shape.arity.push_back(o.input_layouts[k].size());
            std::set<std::size_t> kp;
            if (k < o.keys.size())
                for (auto a : o.keys[k]) kp.insert(*position_in(o.input_layouts[k], a));
            o.shape.key_positions.push_back(kp);
        }
        std::size_t total = o.shape.total();
        std::size_t out_arity = total;
        if (o.udf) {
            for (const auto& ins : o.udf->code)
                if (ins.op == OpCode::set_field && !ins.dynamic_index) out_arity = std::max(out_arity, ins.field + 1);
            if (os->new_attributes.size() > out_arity - total)
                throw ValidationError("operator " + o.id + ": " + std::to_string(os->new_attributes.size()) +
                                      " new attribute names given, UDF creates " + std::to_string(out_arity - total));
        } else {
            out_arity = total + os->new_attributes.size();
        }
        for (const auto& l : o.input_layouts) o.output_layout.insert(o.output_layout.end(), l.begin(), l.end());
        for (std::size_t q = total; q < out_arity; ++q) {
            std::size_t i = q - total;
            std::string nm = i < os->new_attributes.size() ? os->new_attributes[i] : o.id + "." + std::to_string(q);
            AttributeId a = ctx->global.add_attribute(nm, o.id, q, true);
            o.created.push_back(a);
            o.output_layout.push_back(a);
        }
        ctx->global.map_layout(o.id, o.output_layout);
        ctx->operators.push_back(std::move(o));
    }
    ctx->sink_layout = ctx->global.layout_of(spec.sink_input);

    std::function<PlanPtr(const std::string&)> build = [&](const std::string& n) -> PlanPtr {
        int si = ctx->source_index(n);
        if (si >= 0) return make_source_node(*ctx, si);
        int oi = ctx->op_index(n);
        std::vector<PlanPtr> ch;
        for (const auto& in : ctx->operators[oi].inputs) ch.push_back(build(in));
        return make_op_node(*ctx, oi, std::move(ch));
    };
    PlanPtr root = build(spec.sink_input);
    return DataFlow(ctx, root);
}

// ---------------------------------------------------------------------------
// Flow documents (JSON)

namespace flow_detail {

inline std::vector<std::string> string_list(const nlohmann::json& j, const char* what) {
    if (!j.is_array()) throw ValidationError(std::string(what) + " must be a list of attribute names");
    std::vector<std::string> out;
    for (const auto& e : j) out.push_back(e.get<std::string>());
    return out;
}

inline AnnotationSpec parse_annotation(const nlohmann::json& j) {
    AnnotationSpec a;
    if (j.contains("read")) a.read = string_list(j["read"], "annotation.read");
    if (j.contains("write")) a.write = string_list(j["write"], "annotation.write");
    if (j.contains("emit")) {
        const auto& e = j["emit"];
        if (!e.is_array() || e.size() != 2) throw ValidationError("annotation.emit must be [lower, upper]");
        EmitBounds b;
        b.lower = e[0].get<std::size_t>();
        b.upper = e[1].is_string() ? EmitBounds::inf : e[1].get<std::size_t>();
        if (e[1].is_string() && e[1].get<std::string>() != "inf")
            throw ValidationError("annotation.emit upper bound must be a number or \"inf\"");
        if (b.lower > b.upper) throw ValidationError("annotation.emit lower bound exceeds upper bound");
        a.emit = b;
    }
    if (j.contains("kgp")) {
        const auto& k = j["kgp"];
        if (k.is_string() && k.get<std::string>() == "any") {
            a.kgp = std::vector<std::vector<std::string>>{{}};
        } else if (k.is_array()) {
            std::vector<std::vector<std::string>> v;
            for (const auto& e : k) v.push_back(string_list(e, "annotation.kgp entry"));
            a.kgp = v;
        } else {
            throw ValidationError("annotation.kgp must be \"any\" or a list of attribute lists");
        }
    }
    if (j.contains("implicit")) {
        auto s = j["implicit"].get<std::string>();
        if (s == "copy") a.implicit = ImplicitOp::copy;
        else if (s == "projection") a.implicit = ImplicitOp::projection;
        else throw ValidationError("annotation.implicit must be copy or projection");
    }
    if (j.contains("per_record")) {
        const auto& p = j["per_record"];
        if (p.is_boolean()) a.per_record = std::vector<bool>{p.get<bool>()};
        else {
            std::vector<bool> v;
            for (const auto& e : p) v.push_back(e.get<bool>());
            a.per_record = v;
        }
    }
    if (j.contains("emits_side")) {
        const auto& s = j["emits_side"];
        if (s.is_number_integer()) a.emits_side = s.get<int>();
        else if (s == "left") a.emits_side = 0;
        else if (s == "right") a.emits_side = 1;
        else throw ValidationError("annotation.emits_side must be left, right, 0 or 1");
    }
    return a;
}

} // namespace flow_detail

inline FlowSpec parse_flow_document(const std::string& text, const std::string& base_dir) {
    using namespace flow_detail;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(std::string("flow document is not valid JSON: ") + e.what());
    }
    FlowSpec spec;
    spec.base_dir = base_dir;
    try {
        spec.name = j.value("name", std::string("flow"));
        for (const auto& s : j.at("sources")) {
            SourceSpec ss;
            ss.name = s.at("name").get<std::string>();
            ss.path = s.value("path", std::string());
            for (const auto& a : s.at("attributes")) {
                ColumnSpec c;
                c.name = a.at("name").get<std::string>();
                auto t = parse_tag(a.value("type", std::string("int64")));
                if (!t || *t == ValueTag::absent)
                    throw ValidationError("source " + ss.name + ": unknown type for attribute " + c.name);
                c.type = *t;
                ss.columns.push_back(c);
            }
            if (s.contains("constraints")) {
                const auto& c = s["constraints"];
                if (c.contains("unique_keys"))
                    for (const auto& k : c["unique_keys"]) ss.unique_keys.push_back(string_list(k, "unique key"));
                if (c.contains("foreign_keys"))
                    for (const auto& f : c["foreign_keys"]) {
                        ForeignKeySpec fk;
                        fk.attributes = string_list(f.at("attributes"), "foreign key");
                        fk.ref_source = f.at("references").at("source").get<std::string>();
                        fk.ref_attributes = string_list(f.at("references").at("attributes"), "foreign key");
                        ss.foreign_keys.push_back(fk);
                    }
                ss.singleton = c.value("singleton", false);
            }
            spec.sources.push_back(ss);
        }
        for (const auto& o : j.at("operators")) {
            OperatorSpec os;
            os.id = o.at("id").get<std::string>();
            os.kind = parse_kind(o.at("kind").get<std::string>());
            os.inputs = string_list(o.at("inputs"), "inputs");
            if (o.contains("key")) os.key = string_list(o["key"], "key");
            if (o.contains("key_left")) os.key_left = string_list(o["key_left"], "key_left");
            if (o.contains("key_right")) os.key_right = string_list(o["key_right"], "key_right");
            os.udf_path = o.value("udf", std::string());
            if (o.contains("new_attributes")) os.new_attributes = string_list(o["new_attributes"], "new_attributes");
            if (o.contains("annotation")) os.annotation = parse_annotation(o["annotation"]);
            spec.operators.push_back(os);
        }
        const auto& sink = j.at("sink");
        spec.sink_input = sink.at("input").get<std::string>();
        spec.sink_path = sink.value("path", std::string());
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed flow document: ") + e.what());
    }
    return spec;
}

inline FlowSpec read_flow_spec(const std::string& path) {
    std::string text = flow_detail::read_text(path);
    auto dir = std::filesystem::path(path).parent_path().string();
    return parse_flow_document(text, dir.empty() ? "." : dir);
}

inline DataFlow load_flow(const std::string& path) { return build_flow(read_flow_spec(path)); }

// ---------------------------------------------------------------------------
// Property attachment

namespace flow_detail {

inline OperatorProperties conservative_properties(const Operator& o, std::string reason) {
    OperatorProperties p;
    p.udf_read = o.input_attrs();
    p.write = to_set(o.output_layout);
    p.emit = EmitBounds{0, EmitBounds::inf};
    p.per_record.assign(o.arity(), false);
    p.pinned = true;
    p.pin_reason = std::move(reason);
    return p;
}

inline OperatorProperties from_analysis(const Operator& o, const UdfAnalysis& a) {
    if (!a.ok) return conservative_properties(o, "analysis failed: " + a.failure);
    OperatorProperties p;
    for (auto [k, n] : a.reads) p.udf_read.insert(o.input_layouts.at(k).at(n));
    for (auto q : a.writes) p.write.insert(o.output_layout.at(q));
    p.implicit_op = a.implicit_op;
    p.emit = a.bounds;
    if (!is_kat(o.kind)) {
        if (a.bounds.exactly_one() || a.bounds.upper == 0) {
            p.kgp_bases.push_back(AttrSet{});
        } else if (a.bounds.at_most_one() && a.branch_fields) {
            AttrSet s;
            for (auto [k, n] : *a.branch_fields) s.insert(o.input_layouts[k][n]);
            p.kgp_bases.push_back(s);
        }
    }
    p.per_record = a.per_record;
    p.per_record.resize(o.arity(), false);
    p.exclusive_side = a.exclusive_side;
    return p;
}

inline OperatorProperties from_annotation(const Operator& o, const AnnotationSpec& an,
                                          const std::optional<OperatorProperties>& fallback,
                                          const GlobalRecord& g) {
    OperatorProperties p = fallback && !fallback->pinned ? *fallback : conservative_properties(o, "");
    p.pinned = false;
    p.pin_reason.clear();
    p.manual = true;
    auto names = [&](const std::vector<std::string>& v) {
        AttrSet s;
        for (const auto& n : v) s.insert(lookup(g, n, "annotation of " + o.id));
        return s;
    };
    if (an.read) p.udf_read = names(*an.read);
    if (an.write) p.write = names(*an.write);
    if (an.emit) p.emit = *an.emit;
    if (an.implicit) p.implicit_op = *an.implicit;
    if (an.kgp) {
        p.kgp_bases.clear();
        for (const auto& k : *an.kgp) p.kgp_bases.push_back(names(k));
    }
    if (an.per_record) {
        p.per_record = *an.per_record;
        p.per_record.resize(o.arity(), false);
    }
    if (an.emits_side) {
        if (*an.emits_side < 0 || static_cast<std::size_t>(*an.emits_side) >= o.arity())
            throw ValidationError("annotation of " + o.id + ": emits_side out of range");
        p.exclusive_side = *an.emits_side;
    }
    if (!fallback && !an.read) p.pinned = true, p.pin_reason = "annotation lacks a read set";
    if (!fallback && !an.write) p.pinned = true, p.pin_reason = "annotation lacks a write set";
    return p;
}

} // namespace flow_detail

/// Attaches properties: SCA estimates, manual annotations, or both (annotations win).
/// Key attributes of KAT and Match operators are added to the read set.
inline DataFlow analyze_flow(const DataFlow& flow, AnalysisMode mode = AnalysisMode::sca) {
    using namespace flow_detail;
    auto ctx = std::make_shared<FlowContext>(flow.context());
    ctx->mode = mode;
    ctx->analyzed = true;
    for (auto& o : ctx->operators) {
        o.analysis.reset();
        o.sca_props.reset();
        o.manual_props.reset();
        if (o.udf) {
            o.analysis = analyze_udf(*o.udf, o.shape);
            o.sca_props = from_analysis(o, *o.analysis);
        }
        if (o.annotation) o.manual_props = from_annotation(o, *o.annotation, o.sca_props, ctx->global);

        if (mode != AnalysisMode::sca && o.manual_props)
            o.props = *o.manual_props;
        else if (o.sca_props)
            o.props = *o.sca_props;
        else
            o.props = conservative_properties(o, "no UDF code to analyze");
        o.props.read = o.props.udf_read | o.key_set();
        if (o.sca_props) o.sca_props->read = o.sca_props->udf_read | o.key_set();
        if (o.manual_props) o.manual_props->read = o.manual_props->udf_read | o.key_set();
    }
    // the plan tree refers to operators by index only; rebuild to point at the new context
    std::function<PlanPtr(const PlanNode&)> rebuild = [&](const PlanNode& n) -> PlanPtr {
        if (n.is_source) return make_source_node(*ctx, n.index);
        std::vector<PlanPtr> ch;
        for (const auto& c : n.children) ch.push_back(rebuild(*c));
        return make_op_node(*ctx, n.index, std::move(ch));
    };
    PlanPtr root = rebuild(*flow.root());
    return DataFlow(ctx, root);
}

} // namespace dfopt
