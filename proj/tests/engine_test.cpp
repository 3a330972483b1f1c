#include <gtest/gtest.h>

#include <set>

#include "dfopt/engine.hpp"
#include "dfopt/enumerate.hpp"
#include "support/builder.hpp"
#include "support/paths.hpp"

using namespace dfopt;
using namespace dfopt::test;

namespace {

DataFlow sample(const char* name, AnalysisMode m = AnalysisMode::sca) { return analyze_flow(load_flow(flow_path(name)), m); }

Inputs sample_data(const DataFlow& f) { return load_inputs(f.context()); }

DataSet data(const DataFlow& f, const std::string& source, std::vector<Record> rs) {
    const auto& ctx = f.context();
    return DataSet{ctx.sources[ctx.source_index(source)].layout, std::move(rs)};
}

std::vector<Record> sorted(std::vector<Record> rs) {
    std::sort(rs.begin(), rs.end());
    return rs;
}

const OperatorCounts& counts(const ExecutionReport& r, const std::string& id) {
    for (const auto& o : r.operators)
        if (o.id == id) return o;
    throw std::runtime_error("no counts for " + id);
}

const Value none = Value::absent();

} // namespace

TEST(Execute, ThreeMaps) {
    auto f = sample("three_maps");
    auto r = execute(f, sample_data(f));
    // |B| then keep A >= 0 then A := A + B: only (2,-3) survives, as (5,3)
    EXPECT_EQ(r.sink.records, (std::vector<Record>{{5, 3}}));
    EXPECT_EQ(counts(r, "Map1").output_records, 2u);
    EXPECT_EQ(counts(r, "Map2").output_records, 1u);
    EXPECT_EQ(counts(r, "Map3").input_records, 1u);
}

TEST(Execute, OddFilterSum) {
    auto f = sample("odd_filter_sum");
    EXPECT_EQ(execute(f, sample_data(f)).sink.records.size(), 1u);
}

TEST(Execute, Clickstream) {
    auto f = sample("clickstream", AnalysisMode::manual);
    auto r = execute(f, sample_data(f));
    // sessions 1, 3, 4 and 5 contain a buy; session 4 has no login
    std::vector<Record> want{{1, none, 1, none, 3, 1, 10, 10, "ada", "uk"},
                             {3, none, 3, none, 2, 3, 11, 11, "bob", "us"},
                             {5, none, 5, none, 3, 5, 10, 10, "ada", "uk"}};
    EXPECT_EQ(r.sink.records, sorted(want));
    EXPECT_EQ(counts(r, "FilterBuySessions").output_records, 9u);
    EXPECT_EQ(counts(r, "CondenseSessions").invocations, 4u);
}

TEST(Execute, MatchPairsEqualKeys) {
    auto f = SpecBuilder().source("S", {"a", "b"}).source("T", {"c", "d"}).match("J", "S", "T", {"a"}, {"c"}).flow();
    Inputs in{{"S", data(f, "S", {{1, 10}, {2, 20}, {2, 21}})}, {"T", data(f, "T", {{2, 7}, {3, 8}, {2, 9}})}};
    auto r = execute(f, in);
    EXPECT_EQ(r.sink.records, sorted({{2, 20, 2, 7}, {2, 20, 2, 9}, {2, 21, 2, 7}, {2, 21, 2, 9}}));
    EXPECT_EQ(counts(r, "J").invocations, 4u);
    EXPECT_DOUBLE_EQ(counts(r, "J").cost, 3 + 3 + 4);
}

TEST(Execute, AbsentKeysMatchEachOther) {
    auto f = SpecBuilder().source("S", {"a", "b"}).source("T", {"c"}).match("J", "S", "T", {"a"}, {"c"}).flow();
    Inputs in{{"S", data(f, "S", {{none, 1}, {1, 2}})}, {"T", data(f, "T", {{none}})}};
    EXPECT_EQ(execute(f, in).sink.records, (std::vector<Record>{{none, 1, none}}));
}

TEST(Execute, ReduceGroupsByKey) {
    auto f = SpecBuilder().source("S", {"a", "b"}).reduce("R", "S", {"a"}, udfs::count(0, 2), {"n"}).flow();
    Inputs in{{"S", data(f, "S", {{1, 5}, {1, 6}, {2, 7}})}};
    auto r = execute(f, in);
    // new() records carry nothing but what the UDF sets
    EXPECT_EQ(r.sink.records, sorted({{1, none, 2}, {2, none, 1}}));
    EXPECT_EQ(counts(r, "R").invocations, 2u);
    EXPECT_DOUBLE_EQ(counts(r, "R").cost, 3);
}

TEST(Execute, ReduceCopiesKeepUntouchedAttributes) {
    auto f = SpecBuilder().source("S", {"a", "b"}).reduce("R", "S", {"a"}, udfs::forward).flow();
    Inputs in{{"S", data(f, "S", {{1, 5}, {1, 5}, {2, 7}})}};
    EXPECT_EQ(execute(f, in).sink.records, sorted({{1, 5}, {1, 5}, {2, 7}}));
}

TEST(Execute, CoGroupSeesEveryKeyOnce) {
    auto f = SpecBuilder()
                 .source("S", {"a", "b"})
                 .source("T", {"c"})
                 .cogroup("G", "S", "T", {"a"}, {"c"}, udfs::semi)
                 .flow();
    Inputs in{{"S", data(f, "S", {{1, 1}, {2, 2}, {2, 3}})}, {"T", data(f, "T", {{2}, {4}})}};
    auto r = execute(f, in);
    EXPECT_EQ(r.sink.records, sorted({{2, 2, none}, {2, 3, none}}));
    EXPECT_EQ(counts(r, "G").invocations, 3u); // keys 1, 2 and 4
    EXPECT_DOUBLE_EQ(counts(r, "G").cost, 3 + 2 + 3);
}

TEST(Execute, CrossPairsEverything) {
    auto f = SpecBuilder().source("S", {"a"}).source("T", {"b"}).cross("X", "S", "T").flow();
    Inputs in{{"S", data(f, "S", {{1}, {2}})}, {"T", data(f, "T", {{7}, {8}, {9}})}};
    auto r = execute(f, in);
    EXPECT_EQ(r.sink.records.size(), 6u);
    EXPECT_DOUBLE_EQ(counts(r, "X").cost, 6);
}

TEST(Execute, RotatedJoinsKeepValuesFromTheOtherSide) {
    // after rotation X2's left input holds only T, so the S fields it copies
    // out are padding and must not overwrite the values S contributed
    auto f = SpecBuilder()
                 .source("S", {"a"})
                 .source("T", {"b"})
                 .cross("X1", "S", "T")
                 .source("U", {"c"})
                 .cross("X2", "X1", "U")
                 .analyzed();
    Inputs in{{"S", data(f, "S", {{1}, {2}})}, {"T", data(f, "T", {{3}})}, {"U", data(f, "U", {{4}, {5}})}};
    auto want = execute(f, in).sink.records;
    EXPECT_EQ(want, sorted({{1, 3, 4}, {1, 3, 5}, {2, 3, 4}, {2, 3, 5}}));
    auto alts = enum_alternatives(f);
    EXPECT_EQ(alts.size(), 12u);
    for (const auto& g : alts) EXPECT_EQ(execute(g, in).sink.records, want) << g.canonical();
}

TEST(Execute, UdfFailureNamesTheOperator) {
    auto f = SpecBuilder()
                 .source("S", {"a"})
                 .map("Div", "S", "10: m(InputRecord $ir)\n11: $a:=getField($ir,0)\n12: $b:=1/$a\n"
                                  "13: $or:=copy($ir)\n14: emit($or)\n15: return\n")
                 .flow();
    Inputs in{{"S", data(f, "S", {{1}, {0}})}};
    try {
        execute(f, in);
        FAIL() << "expected an invocation error";
    } catch (const InvocationError& e) {
        EXPECT_NE(std::string(e.what()).find("Div"), std::string::npos) << e.what();
    }
}

TEST(Inputs, Validation) {
    auto f = SpecBuilder().source("S", {"a", "b"}).unique({"a"}).source("T", {"c"}).singleton().cross("X", "S", "T").flow();
    const auto& ctx = f.context();
    auto ok = Inputs{{"S", data(f, "S", {{1, 1}, {2, 1}})}, {"T", data(f, "T", {{0}})}};
    EXPECT_NO_THROW(validate_inputs(ctx, ok));

    auto bad = [&](const char* what, auto change) {
        auto in = ok;
        change(in);
        EXPECT_THROW(validate_inputs(ctx, in), ValidationError) << what;
    };
    bad("arity", [](Inputs& in) { in["S"].records.push_back({3}); });
    bad("type", [](Inputs& in) { in["S"].records.push_back({3, "x"}); });
    bad("unique key", [](Inputs& in) { in["S"].records.push_back({1, 9}); });
    bad("singleton", [](Inputs& in) { in["T"].records.push_back({1}); });
    bad("missing source", [](Inputs& in) { in.erase("T"); });
}

TEST(Inputs, RandomDataHonoursConstraints) {
    auto f = sample("clickstream");
    const auto& ctx = f.context();
    auto in = random_inputs(ctx, {32, -2, 2, 7});
    EXPECT_NO_THROW(validate_inputs(ctx, in));
    std::set<Value> users;
    for (const auto& r : in["users"].records) users.insert(r[0]);
    for (const auto& r : in["login"].records) EXPECT_TRUE(users.count(r[1])) << r.to_string();
    EXPECT_EQ(in["clicks"].records.size(), 32u);

    auto again = random_inputs(ctx, {32, -2, 2, 7});
    EXPECT_EQ(again["clicks"].records, in["clicks"].records);

    auto g = SpecBuilder().source("S", {"a"}).source("T", {"b"}).singleton().cross("X", "S", "T").flow();
    EXPECT_EQ(random_inputs(g.context())["T"].records.size(), 1u);
}

TEST(Verify, ClickstreamAlternativesAgree) {
    for (auto mode : {AnalysisMode::sca, AnalysisMode::manual}) {
        auto f = sample("clickstream", mode);
        auto alts = enum_alternatives(f);
        auto rep = verify_equivalence(f, alts, sample_data(f));
        EXPECT_TRUE(rep.pass);
        EXPECT_EQ(rep.entries.size(), alts.size());
        EXPECT_EQ(rep.reference.records.size(), 3u);
        for (std::uint64_t seed = 1; seed <= 5; ++seed)
            EXPECT_TRUE(verify_equivalence(f, alts, random_inputs(f.context(), {24, -2, 2, seed})).pass) << seed;
    }
}

TEST(Verify, DetectsAnInvalidReordering) {
    auto f = sample("three_maps");
    auto forced = force_swap(f, "Map2", "Map3");
    auto rep = verify_equivalence(f, {forced}, sample_data(f));
    EXPECT_FALSE(rep.pass);
    ASSERT_EQ(rep.entries.size(), 1u);
    EXPECT_FALSE(rep.entries[0].equal);
    EXPECT_EQ(rep.entries[0].records, 2u); // (-2,3) becomes (1,3) before the filter
}

TEST(Verify, ExecutionErrorsFailTheEntry) {
    auto spec = SpecBuilder().source("S", {"a"}).map("M", "S", udfs::copy).spec();
    auto good = build_flow(spec);
    spec.operators[0].udf = udf("10: m(InputRecord $ir)\n11: $a:=getField($ir,0)\n12: $b:=1/$a\n13: return\n");
    auto broken = build_flow(spec);
    auto rep = verify_equivalence(good, {broken}, Inputs{{"S", data(good, "S", {{0}})}});
    EXPECT_FALSE(rep.pass);
    EXPECT_FALSE(rep.entries[0].error.empty());
}

TEST(Cost, FilterFirstIsCheaper) {
    auto f = sample("three_maps");
    auto in = sample_data(f);
    EXPECT_DOUBLE_EQ(cost(f, in).total, 2 + 2 + 1);
    auto ranked = rank(enum_alternatives(f), in);
    ASSERT_EQ(ranked.size(), 2u);
    EXPECT_EQ(ranked[0].flow.canonical(), "Map3(Map1(Map2(I)))");
    EXPECT_EQ(ranked[0].rank, 1u);
    EXPECT_DOUBLE_EQ(ranked[0].cost.total, 2 + 1 + 1);
    EXPECT_DOUBLE_EQ(ranked[0].normalized, 1.0);
    EXPECT_DOUBLE_EQ(ranked[1].normalized, 5.0 / 4.0);
}

TEST(Cost, TiesOrderByCanonicalForm) {
    auto f = sample("three_maps");
    Inputs in{{"I", data(f, "I", {{1, 1}})}};
    auto ranked = rank(enum_alternatives(f), in);
    ASSERT_EQ(ranked.size(), 2u);
    EXPECT_EQ(ranked[0].flow.canonical(), "Map3(Map1(Map2(I)))");
    EXPECT_EQ(ranked[1].flow.canonical(), "Map3(Map2(Map1(I)))");
    EXPECT_DOUBLE_EQ(ranked[1].normalized, 1.0);
    EXPECT_EQ(ranked[1].rank, 2u);
}

TEST(Cost, PerOperatorBreakdown) {
    auto f = sample("clickstream", AnalysisMode::manual);
    auto c = cost(f, sample_data(f));
    ASSERT_EQ(c.per_operator.size(), 4u);
    double sum = 0;
    for (const auto& [id, v] : c.per_operator) sum += v;
    EXPECT_DOUBLE_EQ(sum, c.total);
    // 12 clicks, 9 forwarded, then 4 sessions + 4 logins + 3 pairs, then 3 + 3 users + 3 pairs
    EXPECT_DOUBLE_EQ(c.total, 12 + 9 + 11 + 9);
}
