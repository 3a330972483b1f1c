#include <gtest/gtest.h>

#include "dfopt/dataflow.hpp"
#include "support/paths.hpp"

using namespace dfopt;
using dfopt::test::flow_path;

namespace {

const char* copy_map = "10: m(InputRecord $ir)\n11: $or:=copy($ir)\n12: emit($or)\n13: return\n";
const char* concat_join = "10: j(InputRecord $l, InputRecord $r)\n11: $or:=concat($l,$r)\n12: emit($or)\n13: return\n";

std::shared_ptr<const UdfProgram> udf(const char* s) { return std::make_shared<const UdfProgram>(parse_udf(s)); }

SourceSpec source(const std::string& name, std::vector<std::string> cols) {
    SourceSpec s;
    s.name = name;
    s.path = name + ".csv";
    for (auto& c : cols) s.columns.push_back({c, ValueTag::int64});
    return s;
}

OperatorSpec map_op(const std::string& id, const std::string& in) {
    OperatorSpec o;
    o.id = id;
    o.kind = OpKind::map;
    o.inputs = {in};
    o.udf = udf(copy_map);
    return o;
}

// S(a,b) -> M1 ; T(c) ; M1 x T joined on a = c -> J
FlowSpec small_spec() {
    FlowSpec f;
    f.name = "small";
    f.sources = {source("S", {"a", "b"}), source("T", {"c"})};
    f.operators.push_back(map_op("M1", "S"));
    OperatorSpec j;
    j.id = "J";
    j.kind = OpKind::match;
    j.inputs = {"M1", "T"};
    j.key_left = {"a"};
    j.key_right = {"c"};
    j.udf = udf(concat_join);
    f.operators.push_back(j);
    f.sink_input = "J";
    return f;
}

} // namespace

TEST(Flow, LoadsSampleFlows) {
    for (const char* name : {"three_maps", "odd_filter_sum", "filter_chain", "clickstream", "text_mining",
                             "supplier_revenue", "four_way_join"}) {
        auto f = load_flow(flow_path(name));
        EXPECT_FALSE(f.context().analyzed);
        EXPECT_FALSE(f.canonical().empty()) << name;
    }
}

TEST(Flow, CanonicalAndPrettyForms) {
    auto f = load_flow(flow_path("clickstream"));
    EXPECT_EQ(f.canonical(), "AddUserInfo(FilterLoggedIn(CondenseSessions(FilterBuySessions(clicks)),login),users)");
    EXPECT_EQ(f.pretty(), "((clicks->FilterBuySessions->CondenseSessions | login)->FilterLoggedIn | users)->AddUserInfo");
}

TEST(Flow, GlobalRecordNamesCreatedAttributes) {
    auto f = load_flow(flow_path("clickstream"));
    const auto& g = f.global();
    auto n = g.find("clicks_n");
    ASSERT_TRUE(n);
    EXPECT_TRUE(g.info(*n).created);
    EXPECT_EQ(g.info(*n).dataset, "CondenseSessions");
    const auto& c = f.op("CondenseSessions");
    EXPECT_EQ(c.output_layout.size(), 5u);
    EXPECT_EQ(c.output_layout.back(), *n);
    // the join output is the concatenation of its input layouts
    const auto& j = f.op("FilterLoggedIn");
    EXPECT_EQ(j.output_layout.size(), c.output_layout.size() + 2);
    EXPECT_EQ(f.context().sink_layout, f.op("AddUserInfo").output_layout);
}

TEST(Flow, SourceConstraints) {
    auto f = load_flow(flow_path("clickstream"));
    const auto& ctx = f.context();
    const auto& login = ctx.sources[ctx.source_index("login")];
    ASSERT_EQ(login.constraints.foreign_keys.size(), 1u);
    EXPECT_EQ(login.constraints.foreign_keys[0].ref_source, ctx.source_index("users"));
    const auto& users = ctx.sources[ctx.source_index("users")];
    EXPECT_FALSE(users.constraints.unique_keys.empty());
}

TEST(Analyze, ScaPropertiesOfClickstream) {
    auto f = analyze_flow(load_flow(flow_path("clickstream")), AnalysisMode::sca);
    const auto& g = f.global();
    auto attr = [&](const char* n) { return *g.find(n); };
    const auto& fb = f.op("FilterBuySessions").props;
    EXPECT_FALSE(fb.pinned);
    EXPECT_EQ(fb.udf_read, (AttrSet{attr("action")}));
    EXPECT_EQ(fb.read, (AttrSet{attr("action"), attr("sid")}));
    EXPECT_TRUE(fb.write.empty());
    EXPECT_FALSE(fb.is_per_record());

    const auto& cs = f.op("CondenseSessions").props;
    EXPECT_EQ(cs.implicit_op, ImplicitOp::projection);
    EXPECT_TRUE(cs.write.contains(attr("clicks_n")));
    EXPECT_TRUE(cs.write.contains(attr("ts")));
    EXPECT_FALSE(cs.write.contains(attr("sid")));
    EXPECT_EQ(cs.emit, (EmitBounds{1, 1}));

    const auto& j = f.op("FilterLoggedIn").props;
    EXPECT_TRUE(j.write.empty());
    EXPECT_EQ(j.read, (AttrSet{attr("sid"), attr("lsid")}));
    EXPECT_TRUE(j.kgp(AttrSet{}));
}

TEST(Analyze, ManualAnnotationsWin) {
    auto base = load_flow(flow_path("clickstream"));
    auto manual = analyze_flow(base, AnalysisMode::manual);
    auto sca = analyze_flow(base, AnalysisMode::sca);
    auto ip = *base.global().find("ip");
    // the condense UDF overwrites ip from the last record; the annotation says it only reads it
    EXPECT_TRUE(sca.op("CondenseSessions").props.write.contains(ip));
    EXPECT_FALSE(manual.op("CondenseSessions").props.write.contains(ip));
    EXPECT_TRUE(manual.op("CondenseSessions").props.manual);
    ASSERT_TRUE(manual.op("CondenseSessions").sca_props);
    EXPECT_TRUE(manual.op("CondenseSessions").sca_props->write.contains(ip));
}

TEST(Analyze, AnalysisDoesNotTouchTheInput) {
    auto base = load_flow(flow_path("three_maps"));
    auto a = analyze_flow(base);
    EXPECT_FALSE(base.context().analyzed);
    EXPECT_TRUE(a.context().analyzed);
    EXPECT_EQ(a.canonical(), base.canonical());
}

TEST(Analyze, FailedAnalysisPinsTheOperator) {
    auto spec = small_spec();
    spec.operators[0].udf = udf("10: m(InputRecord $ir)\n11: $a:=getField($ir,0)\n12: if($a>0) goto 14\n"
                                "13: $or:=copy($ir)\n14: emit($or)\n15: return\n");
    auto f = analyze_flow(build_flow(spec));
    const auto& p = f.op("M1").props;
    EXPECT_TRUE(p.pinned);
    EXPECT_NE(p.pin_reason.find("constructor"), std::string::npos);
}

TEST(Build, InMemoryFlow) {
    auto f = build_flow(small_spec());
    EXPECT_EQ(f.canonical(), "J(M1(S),T)");
    EXPECT_EQ(f.op("J").keys.size(), 2u);
    EXPECT_EQ(f.op("J").shape.arity, (std::vector<std::size_t>{2, 1}));
}

TEST(Build, RejectsInvalidFlows) {
    auto expect_invalid = [](FlowSpec s, const char* what) {
        EXPECT_THROW(build_flow(s), ValidationError) << what;
    };
    {
        auto s = small_spec();
        s.operators[1].key_right = {"zz"};
        expect_invalid(s, "unknown key attribute");
    }
    {
        auto s = small_spec();
        s.operators[1].inputs = {"M1", "M1"};
        expect_invalid(s, "two consumers");
    }
    {
        auto s = small_spec();
        s.sink_input = "M1";
        expect_invalid(s, "unreachable operator");
    }
    {
        auto s = small_spec();
        s.operators[0].inputs = {"Nope"};
        expect_invalid(s, "unknown input");
    }
    {
        auto s = small_spec();
        s.operators[1].key_left.clear();
        expect_invalid(s, "match without key");
    }
    {
        auto s = small_spec();
        s.operators[0].key = {"a"};
        expect_invalid(s, "map with key");
    }
    {
        auto s = small_spec();
        s.operators[0].udf = udf(concat_join);
        expect_invalid(s, "binary udf on map");
    }
    {
        auto s = small_spec();
        s.operators.push_back(map_op("S", "J"));
        expect_invalid(s, "duplicate name");
    }
    {
        auto s = small_spec();
        s.operators[0].inputs = {"J"};
        expect_invalid(s, "cycle");
    }
    {
        auto s = small_spec();
        s.sources[0].unique_keys = {{"q"}};
        expect_invalid(s, "unique key attribute");
    }
}

TEST(Parse, FlowDocumentErrors) {
    EXPECT_THROW(parse_flow_document("{", "."), ValidationError);
    EXPECT_THROW(parse_flow_document(R"({"sources": []})", "."), ValidationError);
    EXPECT_THROW(load_flow("/nonexistent/flow.json"), ValidationError);
    EXPECT_THROW(parse_mode("fast"), ValidationError);
}
