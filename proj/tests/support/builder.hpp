#pragma once
// Terse construction of in-memory flows for tests.

#include <memory>
#include <string>
#include <vector>

#include "dfopt/dataflow.hpp"

namespace dfopt::test {

inline std::shared_ptr<const UdfProgram> udf(const std::string& text) {
    return std::make_shared<const UdfProgram>(parse_udf(text));
}

namespace udfs {
inline const char* copy = "10: m(InputRecord $ir)\n11: $or:=copy($ir)\n12: emit($or)\n13: return\n";
inline const char* concat = "10: j(InputRecord $l, InputRecord $r)\n11: $or:=concat($l,$r)\n12: emit($or)\n13: return\n";
// keeps records whose field `pos` is positive
inline std::string positive(int pos) {
    return "10: m(InputRecord $ir)\n11: $a:=getField($ir," + std::to_string(pos) + ")\n12: if($a<=0) goto 15\n"
           "13: $or:=copy($ir)\n14: emit($or)\n15: return\n";
}
// increments field `pos`
inline std::string bump(int pos) {
    auto p = std::to_string(pos);
    return "10: m(InputRecord $ir)\n11: $a:=getField($ir," + p + ")\n12: $a:=$a+1\n13: $or:=copy($ir)\n"
           "14: setField($or," + p + ",$a)\n15: emit($or)\n16: return\n";
}
// forwards every record of the group
inline const char* forward = "10: g(RecordList $it)\n11: if(!hasNext($it)) goto 16\n12: $r:=next($it)\n"
                             "13: $or:=copy($r)\n14: emit($or)\n15: goto 11\n16: return\n";
// one record per group holding the value at `key` and the group size at `at`
inline std::string count(int key, int at) {
    return "10: g(RecordList $it)\n11: $n:=0\n12: if(!hasNext($it)) goto 17\n13: $r:=next($it)\n14: $k:=getField($r," +
           std::to_string(key) + ")\n15: $n:=$n+1\n16: goto 12\n17: $or:=new()\n18: setField($or," + std::to_string(key) +
           ",$k)\n19: setField($or," + std::to_string(at) + ",$n)\n20: emit($or)\n21: return\n";
}
// left records of groups that have a partner on the right
inline const char* semi = "10: cg(RecordList $a, RecordList $b)\n11: if(!hasNext($b)) goto 17\n"
                          "12: if(!hasNext($a)) goto 17\n13: $r:=next($a)\n14: $or:=copy($r)\n15: emit($or)\n"
                          "16: goto 12\n17: return\n";
// every left record
inline const char* left_all = "10: cg(RecordList $a, RecordList $b)\n11: if(!hasNext($a)) goto 16\n12: $r:=next($a)\n"
                              "13: $or:=copy($r)\n14: emit($or)\n15: goto 11\n16: return\n";
} // namespace udfs

class SpecBuilder {
public:
    explicit SpecBuilder(std::string name = "test") { spec_.name = std::move(name); }

    SpecBuilder& source(const std::string& name, std::vector<std::string> cols) {
        SourceSpec s;
        s.name = name;
        s.path = name + ".csv";
        for (auto& c : cols) s.columns.push_back({c, ValueTag::int64});
        spec_.sources.push_back(std::move(s));
        return *this;
    }
    SpecBuilder& unique(std::vector<std::string> key) {
        spec_.sources.back().unique_keys.push_back(std::move(key));
        return *this;
    }
    SpecBuilder& singleton() {
        spec_.sources.back().singleton = true;
        return *this;
    }
    SpecBuilder& map(const std::string& id, const std::string& in, const std::string& text,
                     std::vector<std::string> created = {}) {
        return add(id, OpKind::map, {in}, text, {}, {}, std::move(created));
    }
    SpecBuilder& reduce(const std::string& id, const std::string& in, std::vector<std::string> key,
                        const std::string& text, std::vector<std::string> created = {}) {
        return add(id, OpKind::reduce, {in}, text, std::move(key), {}, std::move(created));
    }
    SpecBuilder& match(const std::string& id, const std::string& l, const std::string& r, std::vector<std::string> kl,
                       std::vector<std::string> kr, const std::string& text = udfs::concat) {
        return add(id, OpKind::match, {l, r}, text, std::move(kl), std::move(kr), {});
    }
    SpecBuilder& cross(const std::string& id, const std::string& l, const std::string& r,
                       const std::string& text = udfs::concat) {
        return add(id, OpKind::cross, {l, r}, text, {}, {}, {});
    }
    SpecBuilder& cogroup(const std::string& id, const std::string& l, const std::string& r, std::vector<std::string> kl,
                         std::vector<std::string> kr, const std::string& text) {
        return add(id, OpKind::cogroup, {l, r}, text, std::move(kl), std::move(kr), {});
    }
    SpecBuilder& annotate(AnnotationSpec a) {
        spec_.operators.back().annotation = std::move(a);
        return *this;
    }

    FlowSpec spec() const {
        FlowSpec s = spec_;
        if (s.sink_input.empty()) s.sink_input = s.operators.back().id;
        return s;
    }
    DataFlow flow() const { return build_flow(spec()); }
    DataFlow analyzed(AnalysisMode m = AnalysisMode::sca) const { return analyze_flow(flow(), m); }

private:
    SpecBuilder& add(const std::string& id, OpKind kind, std::vector<std::string> in, const std::string& text,
                     std::vector<std::string> k1, std::vector<std::string> k2, std::vector<std::string> created) {
        OperatorSpec o;
        o.id = id;
        o.kind = kind;
        o.inputs = std::move(in);
        if (kind == OpKind::reduce) o.key = std::move(k1);
        else o.key_left = std::move(k1), o.key_right = std::move(k2);
        o.udf = udf(text);
        o.new_attributes = std::move(created);
        spec_.operators.push_back(std::move(o));
        return *this;
    }

    FlowSpec spec_;
};

} // namespace dfopt::test
