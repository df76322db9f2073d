#include "hodi/case_io.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace hodi;

namespace {

const char* kMinimal = R"({
  "name": "two-bus",
  "buses": [
    {"id": 1, "type": "generator"},
    {"id": 2, "type": "generator", "voltage": 0.98, "angle_rad": -0.05}
  ],
  "lines": [{"from": 1, "to": 2, "susceptance": 5}],
  "units": [
    {"id": "A", "bus": 1, "type": "GFM", "m_range": [0, 10], "d_range": [0, 20]},
    {"id": "B", "bus": 2, "type": "SG", "inertia": 3, "droop_inverse": 4, "time_constant": 5}
  ]
})";

std::string error_of(const std::string& text)
{
    try {
        parse_case_text(text);
    } catch (const Error& e) {
        return e.what();
    }
    return "";
}

} // namespace

TEST(CaseIo, MinimalTwoBus)
{
    const ParsedCase p = parse_case_text(kMinimal);
    const SystemCase& c = p.system;
    EXPECT_EQ(c.buses.size(), 2u);
    EXPECT_EQ(c.base_mva, 100.0);
    EXPECT_EQ(c.bus(2).voltage, 0.98);
    EXPECT_EQ(c.units[1].kind, UnitKind::SG);
    EXPECT_EQ(c.units[1].m_range, (Range{3.0, 3.0}));
    EXPECT_FALSE(c.params.has_value());
    EXPECT_FALSE(p.defaults_applied.empty());
}

TEST(CaseIo, RoundTripIsExact)
{
    std::mt19937_64 rng(5);
    for (int k = 0; k < 5; ++k) {
        SystemCase c = fixtures::random_allocation_case(rng, 4, 2);
        UncertaintySpec u;
        u.line_scaling_percent = 10;
        u.damping_box = {{c.generator_bus_ids()[0], -0.1, 0.3}};
        LoadCase lc;
        lc.name = "light";
        lc.bus_overrides = {c.buses.back()};
        lc.bus_overrides[0].voltage = 0.1 + 1.0 / 3.0;
        u.load_cases.push_back(lc);
        c.uncertainty = u;
        c.market = MarketConfig{};
        c.market->payment_cap = 1.0 / 7.0;
        c.disturbances = {{c.buses.back().id, 300.0}};
        const std::string text = serialize_case(c, {"generated"});
        const SystemCase back = parse_case_text(text).system;
        EXPECT_TRUE(back == c) << text;
        EXPECT_EQ(serialize_case(back, {"generated"}), text);
    }
}

TEST(CaseIo, HzLimitsConvert)
{
    std::string t = kMinimal;
    t.insert(t.rfind('}'), R"(, "constraints": {"beta": 3, "cos_zeta": 0.1, "rocof_limit_hz": 1, "disturbance_mw": 300})");
    const ParsedCase p = parse_case_text(t);
    EXPECT_DOUBLE_EQ(p.system.params->rocof_limit, kTwoPi);
    EXPECT_DOUBLE_EQ(p.system.params->nadir_limit, hz_to_rad(0.3));
}

TEST(CaseIo, Diagnostics)
{
    std::string dangling = kMinimal;
    dangling.replace(dangling.find("\"to\": 2"), 7, "\"to\": 9");
    EXPECT_NE(error_of(dangling).find("referential integrity"), std::string::npos);

    std::string unknown = kMinimal;
    unknown.replace(unknown.find("\"voltage\""), 9, "\"voltagee\"");
    EXPECT_NE(error_of(unknown).find("buses[1]"), std::string::npos);
    EXPECT_NE(error_of(unknown).find("voltagee"), std::string::npos);

    std::string bad_range = kMinimal;
    bad_range.replace(bad_range.find("[0, 10]"), 7, "[0]");
    EXPECT_NE(error_of(bad_range).find("units[0].m_range"), std::string::npos);

    std::string broken = kMinimal;
    broken.replace(broken.find("\"lines\""), 7, "lines");
    EXPECT_NE(error_of(broken).find("<string>:7:"), std::string::npos) << error_of(broken);
}

TEST(CaseIo, BidsCsv)
{
    std::istringstream in("unit,rho_m,mu_m,rho_d,mu_d,m_min,m_max,d_min,d_max\nA,1,2,3,4,0,10,0,20\n\nB,0,0,0,1.5,0,1,0,2\n");
    const auto bids = parse_bids_csv(in);
    ASSERT_EQ(bids.size(), 2u);
    EXPECT_EQ(bids[1].cost.mu_d, 1.5);
    std::ostringstream os;
    write_bids_csv(os, bids);
    std::istringstream again(os.str());
    EXPECT_EQ(parse_bids_csv(again), bids);

    std::istringstream dup("unit,rho_m,mu_m,rho_d,mu_d,m_min,m_max,d_min,d_max\nA,1,2,3,4,0,10,0,20\nA,1,2,3,4,0,10,0,20\n");
    EXPECT_THROW(parse_bids_csv(dup), Error);
    std::istringstream bad("unit,rho_m,mu_m,rho_d,mu_d,m_min,m_max,d_min,d_max\nA,1,x,3,4,0,10,0,20\n");
    EXPECT_THROW(parse_bids_csv(bad), Error);
}
