#include <doctest.h>

#include <cstdint>
#include <fstream>
#include <sstream>

#include "ias/archgraph.hpp"
#include "support/builders.hpp"

using ias::ArchitectureGraph;
using ias::CostMetric;
using ias::ValidationError;
using ias::WidthAssignment;
using testsupport::GraphBuilder;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::string reference_config_path() { return std::string(IAS_CONFIG_DIR) + "/resnet50.json"; }

}  // namespace

TEST_CASE("parse: minimal single-conv document") {
  GraphBuilder b(8, 8, 3);
  b.tap("input", 3, true).tap("out", 64);
  b.layer("conv", "conv", 3, 1, "input", "out");
  const ArchitectureGraph g = b.build();

  CHECK(g.layers.size() == 1);
  CHECK(g.tap("out").width == 64);
  CHECK_FALSE(g.tap("out").tie_group.has_value());
  int non_fixed = 0;
  for (const auto& t : g.taps) non_fixed += t.fixed ? 0 : 1;
  CHECK(non_fixed == 1);
}

TEST_CASE("parse: stage-5 shortcut taps of the reference config share one max group") {
  const ArchitectureGraph g = ias::parse_arch_file(reference_config_path());
  const ias::TieGroup& grp = g.group("stage5_shortcut");
  CHECK(grp.rule == ias::TieRule::Max);
  CHECK(grp.members.size() == 4);  // three block outputs plus the projection
  for (const auto& m : grp.members) {
    CHECK(g.tap(m).tie_group == std::string("stage5_shortcut"));
    CHECK(g.tap(m).width == 2048);
  }
}

TEST_CASE("parse: validation failures name the offender") {
  GraphBuilder base(8, 8, 3);
  base.tap("input", 3, true).tap("out", 64);

  SUBCASE("dangling input tap") {
    GraphBuilder b = base;
    b.layer("conv", "conv", 3, 1, "missing", "out");
    CHECK_THROWS_WITH_AS(b.build(), doctest::Contains("missing"), ValidationError);
  }
  SUBCASE("dangling output tap") {
    GraphBuilder b = base;
    b.layer("conv", "conv", 3, 1, "input", "nowhere");
    CHECK_THROWS_WITH_AS(b.build(), doctest::Contains("nowhere"), ValidationError);
  }
  SUBCASE("duplicate tap id") {
    GraphBuilder b = base;
    b.tap("out", 32);
    b.layer("conv", "conv", 3, 1, "input", "out");
    CHECK_THROWS_WITH_AS(b.build(), doctest::Contains("duplicate tap"), ValidationError);
  }
  SUBCASE("duplicate layer id") {
    GraphBuilder b = base;
    b.tap("out2", 64);
    b.layer("conv", "conv", 3, 1, "input", "out");
    b.layer("conv", "conv", 3, 1, "out", "out2");
    CHECK_THROWS_WITH_AS(b.build(), doctest::Contains("duplicate layer"), ValidationError);
  }
  SUBCASE("non-positive width") {
    GraphBuilder b(8, 8, 3);
    b.tap("input", 3, true).tap("out", 0);
    b.layer("conv", "conv", 3, 1, "input", "out");
    CHECK_THROWS_AS(b.build(), ValidationError);
  }
  SUBCASE("fc with kernel != 1") {
    GraphBuilder b = base;
    b.layer("fc", "fc", 3, 1, "input", "out");
    CHECK_THROWS_WITH_AS(b.build(), doctest::Contains("fc"), ValidationError);
  }
  SUBCASE("cycle") {
    GraphBuilder b(8, 8, 3);
    b.tap("a", 8).tap("b", 8);
    b.layer("l1", "conv", 1, 1, "a", "b");
    b.layer("l2", "conv", 1, 1, "b", "a");
    CHECK_THROWS_WITH_AS(b.build(), doctest::Contains("cycle"), ValidationError);
  }
  SUBCASE("two producers for one tap") {
    GraphBuilder b = base;
    b.layer("l1", "conv", 3, 1, "input", "out");
    b.layer("l2", "conv", 1, 1, "input", "out");
    CHECK_THROWS_WITH_AS(b.build(), doctest::Contains("two producers"), ValidationError);
  }
  SUBCASE("tie group mixing fixed and non-fixed taps") {
    GraphBuilder b(8, 8, 3);
    b.tap("input", 3, true);
    b.tap("a", 64, true, "g");
    b.tap("b", 64, false, "g");
    b.group("g", "max", {"a", "b"});
    b.layer("l1", "conv", 3, 1, "input", "a");
    b.layer("l2", "conv", 3, 1, "a", "b");
    CHECK_THROWS_WITH_AS(b.build(), doctest::Contains("mixes fixed"), ValidationError);
  }
  SUBCASE("tie group with unequal widths") {
    GraphBuilder b(8, 8, 3);
    b.tap("input", 3, true);
    b.tap("a", 64, false, "g");
    b.tap("b", 96, false, "g");
    b.group("g", "max", {"a", "b"});
    b.layer("l1", "conv", 3, 1, "input", "a");
    b.layer("l2", "conv", 3, 1, "a", "b");
    CHECK_THROWS_WITH_AS(b.build(), doctest::Contains("unequal"), ValidationError);
  }
  SUBCASE("member without back-reference") {
    GraphBuilder b(8, 8, 3);
    b.tap("input", 3, true);
    b.tap("a", 64, false, "g");
    b.tap("b", 64);
    b.group("g", "max", {"a", "b"});
    b.layer("l1", "conv", 3, 1, "input", "a");
    b.layer("l2", "conv", 3, 1, "a", "b");
    CHECK_THROWS_AS(b.build(), ValidationError);
  }
  SUBCASE("empty layer list") {
    GraphBuilder b(8, 8, 3);
    b.tap("input", 3, true);
    CHECK_THROWS_WITH_AS(b.build(), doctest::Contains("no layers"), ValidationError);
  }
  SUBCASE("not JSON at all") {
    CHECK_THROWS_AS(ias::parse_arch("widths: 64"), ValidationError);
  }
}

TEST_CASE("spatial_dims: stride division, overrides, fc, transposed conv") {
  GraphBuilder b(224, 224, 3);
  b.tap("input", 3, true).tap("a", 64).tap("b", 64).tap("c", 64).tap("d", 10).tap("e", 64);
  b.layer("s2", "conv", 3, 2, "input", "a");
  b.layer("over", "conv", 3, 1, "a", "b", {17, 19});
  b.layer("fc", "fc", 1, 1, "b", "d");
  b.layer("up", "transposed-conv", 4, 2, "b", "c");
  b.layer("after_fc", "conv", 1, 1, "d", "e");
  const ArchitectureGraph g = b.build();

  CHECK(ias::spatial_dims(g, "s2") == std::pair<int, int>{112, 112});
  CHECK(ias::spatial_dims(g, "over") == std::pair<int, int>{17, 19});
  CHECK(ias::spatial_dims(g, "fc") == std::pair<int, int>{1, 1});
  CHECK(ias::spatial_dims(g, "up") == std::pair<int, int>{34, 38});
  CHECK(ias::spatial_dims(g, "after_fc") == std::pair<int, int>{1, 1});
}

TEST_CASE("spatial_dims: ceil division chain 800x1216 through three stride-2 convs") {
  GraphBuilder b(800, 1216, 3);
  b.tap("input", 3, true).tap("a", 8).tap("b", 8).tap("c", 8);
  b.layer("l1", "conv", 3, 2, "input", "a");
  b.layer("l2", "conv", 3, 2, "a", "b");
  b.layer("l3", "conv", 3, 2, "b", "c");
  const ArchitectureGraph g = b.build();
  CHECK(ias::spatial_dims(g, "l3") == std::pair<int, int>{100, 152});
}

TEST_CASE("spatial_dims: unresolvable chain is rejected at parse") {
  GraphBuilder b(8, 8, 3);
  b.tap("input", 3, true).tap("floating", 16).tap("out", 16);
  // "floating" has no producer and is not the graph input (width != channels).
  b.layer("l", "conv", 3, 1, "floating", "out");
  CHECK_THROWS_WITH_AS(b.build(), doctest::Contains("no producer"), ValidationError);
}

TEST_CASE("compute_cost: single conv worked example") {
  GraphBuilder b(224, 224, 3);
  b.tap("input", 3, true).tap("out", 64);
  b.layer("conv1", "conv", 7, 2, "input", "out");
  const ArchitectureGraph g = b.build();

  CHECK(ias::compute_cost(g, CostMetric::Macs) == 118013952);  // 3*64*49*112*112
  CHECK(ias::compute_cost(g, CostMetric::Params) == 9408);     // 3*64*49
}

TEST_CASE("compute_cost: reference config reproduces published costs within 2%") {
  const ArchitectureGraph g = ias::parse_arch_file(reference_config_path());
  const auto macs = ias::compute_cost(g, CostMetric::Macs);
  const auto params = ias::compute_cost(g, CostMetric::Params);
  CHECK(macs == 4089184256);
  CHECK(params == 25502912);
  CHECK(std::abs(static_cast<double>(macs) - 4.09e9) <= 0.02 * 4.09e9);
  CHECK(std::abs(static_cast<double>(params) - 25.5e6) <= 0.02 * 25.5e6);
}

TEST_CASE("compute_cost: doubling non-fixed widths never lowers cost") {
  const ArchitectureGraph g = testsupport::chain_graph({16, 32, 64});
  WidthAssignment doubled;
  for (const auto& t : g.taps) {
    if (!t.fixed) doubled[t.id] = 2 * t.width;
  }
  for (CostMetric metric : {CostMetric::Macs, CostMetric::Params}) {
    CHECK(ias::compute_cost(g, doubled, metric) >= ias::compute_cost(g, metric));
  }
}

TEST_CASE("compute_cost: additivity over layers") {
  const ArchitectureGraph g = ias::parse_arch_file(reference_config_path());
  for (CostMetric metric : {CostMetric::Macs, CostMetric::Params}) {
    std::int64_t sum = 0;
    for (const auto& l : g.layers) {
      ArchitectureGraph single = g;
      single.layers.clear();
      ias::LayerSpec copy = l;
      copy.out_spatial = ias::spatial_dims(g, l.id);  // isolate from the producer chain
      single.layers.push_back(copy);
      sum += ias::compute_cost(single, metric);
    }
    CHECK(sum == ias::compute_cost(g, metric));
  }
}

TEST_CASE("compute_cost: strict monotonicity in a referenced tap") {
  const ArchitectureGraph g = testsupport::chain_graph({16, 32, 64});
  for (CostMetric metric : {CostMetric::Macs, CostMetric::Params}) {
    const auto base = ias::compute_cost(g, metric);
    for (const auto& t : g.taps) {
      if (t.fixed) continue;
      WidthAssignment bump{{t.id, t.width + 1}};
      CHECK(ias::compute_cost(g, bump, metric) > base);
    }
  }
}

TEST_CASE("compute_cost: params equals macs on an fc-only network") {
  GraphBuilder b(1, 1, 8);
  b.tap("input", 8, true).tap("h", 32).tap("out", 10);
  b.layer("fc1", "fc", 1, 1, "input", "h");
  b.layer("fc2", "fc", 1, 1, "h", "out");
  const ArchitectureGraph g = b.build();
  CHECK(ias::compute_cost(g, CostMetric::Macs) == ias::compute_cost(g, CostMetric::Params));
}

TEST_CASE("compute_cost: bad assignments are rejected") {
  const ArchitectureGraph g = testsupport::chain_graph({32, 32});
  CHECK_THROWS_AS(ias::compute_cost(g, {{"t0", 0}}, CostMetric::Macs), ValidationError);
  CHECK_THROWS_AS(ias::compute_cost(g, {{"t0", -4}}, CostMetric::Params), ValidationError);

  GraphBuilder b(8, 8, 3);
  b.tap("input", 3, true);
  b.tap("a", 64, false, "g").tap("b", 64, false, "g");
  b.group("g", "max", {"a", "b"});
  b.layer("l1", "conv", 3, 1, "input", "a");
  b.layer("l2", "conv", 3, 1, "a", "b");
  const ArchitectureGraph tied = b.build();
  CHECK_THROWS_WITH_AS(ias::compute_cost(tied, {{"a", 96}, {"b", 128}}, CostMetric::Macs),
                       doctest::Contains("tie group"), ValidationError);
}

TEST_CASE("apply_widths: identity assignment reproduces the graph") {
  const ArchitectureGraph g = ias::parse_arch_file(reference_config_path());
  WidthAssignment identity;
  for (const auto& t : g.taps) {
    if (!t.fixed) identity[t.id] = t.width;
  }
  const ArchitectureGraph h = ias::apply_widths(g, identity);
  CHECK(ias::serialize_arch(h) == ias::serialize_arch(g));
}

TEST_CASE("apply_widths: tie violations and fixed-tap changes are rejected") {
  GraphBuilder b(8, 8, 3);
  b.tap("input", 3, true);
  b.tap("a", 64, false, "g").tap("b", 64, false, "g");
  b.group("g", "max", {"a", "b"});
  b.layer("l1", "conv", 3, 1, "input", "a");
  b.layer("l2", "conv", 3, 1, "a", "b");
  const ArchitectureGraph g = b.build();

  CHECK_THROWS_WITH_AS(ias::apply_widths(g, {{"a", 96}, {"b", 128}}),
                       doctest::Contains("tie group"), ValidationError);
  CHECK_THROWS_WITH_AS(ias::apply_widths(g, {{"input", 4}}), doctest::Contains("fixed"),
                       ValidationError);
  // Restating a fixed tap's own width is a no-op, not an error.
  const ArchitectureGraph same = ias::apply_widths(g, {{"input", 3}, {"a", 96}, {"b", 96}});
  CHECK(same.tap("a").width == 96);
}

TEST_CASE("apply_widths: published width vector lands on the reference skeleton") {
  const ArchitectureGraph g = ias::parse_arch_file(reference_config_path());
  const std::map<std::string, int> stage_widths = {
      {"stage2_inner", 64},  {"stage2_shortcut", 224}, {"stage3_inner", 128},
      {"stage3_shortcut", 576}, {"stage4_inner", 256}, {"stage4_shortcut", 1152},
      {"stage5_inner", 544}, {"stage5_shortcut", 896},
  };
  WidthAssignment widths;
  for (const auto& [group_id, value] : stage_widths) {
    for (const auto& member : g.group(group_id).members) widths[member] = value;
  }
  const ArchitectureGraph h = ias::apply_widths(g, widths);

  CHECK(h.tap("conv1_out").width == 64);  // fixed stem
  CHECK(h.tap("conv2_1_1_out").width == 64);
  CHECK(h.tap("conv2_proj_out").width == 224);
  CHECK(h.tap("conv3_2_2_out").width == 128);
  CHECK(h.tap("conv3_proj_out").width == 576);
  CHECK(h.tap("conv4_1_1_out").width == 256);
  CHECK(h.tap("conv4_6_3_out").width == 1152);
  CHECK(h.tap("conv5_3_2_out").width == 544);
  CHECK(h.tap("conv5_proj_out").width == 896);
  CHECK(h.tap("fc_out").width == 1000);
}

TEST_CASE("serialize: parse o serialize is the identity on canonical documents") {
  const std::string canonical = read_file(reference_config_path());
  CHECK(ias::serialize_arch(ias::parse_arch(canonical)) == canonical);

  GraphBuilder b(8, 8, 3);
  b.tap("input", 3, true).tap("out", 64);
  b.layer("conv", "conv", 3, 1, "input", "out");
  const std::string once = ias::serialize_arch(b.build());
  CHECK(ias::serialize_arch(ias::parse_arch(once)) == once);
}
