#include <doctest.h>

#include <cmath>
#include <sstream>

#include "stormloss/features.hpp"
#include "stormloss/ingest.hpp"
#include "support.hpp"

using namespace stormloss;

namespace {

std::string serialize(const DatasetBundle& b) {
  std::ostringstream s;
  write_zcta_centroids(s, b.zctas);
  write_storms(s, b.storms);
  write_hydro(s, b.hydro);
  write_buildings(s, b.buildings);
  write_losses(s, b.losses);
  write_hpi(s, b.hpi);
  return s.str();
}

}  // namespace

TEST_CASE("read_csv handles quotes, CRLF and a BOM") {
  std::istringstream in("\xEF\xBB\xBF" "a,b\r\n\"x, y\",\"he said \"\"hi\"\"\"\r\n\r\n1,\"multi\nline\"\n");
  CsvDocument doc = read_csv(in);
  CHECK(doc.header == std::vector<std::string>{"a", "b"});
  REQUIRE(doc.rows.size() == 2);
  CHECK(doc.rows[0].cells == std::vector<std::string>{"x, y", "he said \"hi\""});
  CHECK(doc.rows[0].line == 2);
  CHECK(doc.rows[1].cells[1] == "multi\nline");
  CHECK(doc.rows[1].line == 4);
}

TEST_CASE("csv_escape quotes only when needed") {
  CHECK(csv_escape("plain") == "plain");
  CHECK(csv_escape("a,b") == "\"a,b\"");
  CHECK(csv_escape("q\"") == "\"q\"\"\"");
}

TEST_CASE("parse_storms: header-only file") {
  std::istringstream in("storm_id,name,observed_at,lat,lon,max_wind_kt,category,min_pressure_mb\n");
  auto p = parse_storms(in);
  CHECK(p.records.empty());
  CHECK(p.report.rejected.empty());
  CHECK(p.report.total_rows == 0);
}

TEST_CASE("parse_storms: category 6 is rejected with a reason") {
  std::istringstream in(
      "storm_id,name,observed_at,lat,lon,max_wind_kt,category,min_pressure_mb\n"
      "AL01,A,2005-08-25T18:00:00Z,25.0,-80.0,170,6,900\n");
  auto p = parse_storms(in);
  CHECK(p.records.empty());
  REQUIRE(p.report.rejected.size() == 1);
  CHECK(p.report.rejected[0].line == 2);
  CHECK(p.report.rejected[0].reason.find("category out of range") != std::string::npos);
}

TEST_CASE("parse_storms: well-formed fixture field by field") {
  std::istringstream in(
      "storm_id,name,observed_at,lat,lon,max_wind_kt,category,min_pressure_mb\n"
      "AL122005,KATRINA,2005-08-25T18:00:00Z,26.0,-79.9,70,1,985\n"
      "AL122005,KATRINA,2005-08-26 00:00,25.9,-80.3,75,1,984\n"
      "AL092004,IVAN,2004-09-16T06:00Z,30.2,-87.9,105,2,946\n");
  auto p = parse_storms(in);
  REQUIRE(p.records.size() == 3);
  CHECK(p.report.accepted == 3);
  const auto& r = p.records[0];
  CHECK(r.storm_id == "AL122005");
  CHECK(r.name == "KATRINA");
  CHECK(r.observed_at.to_string() == "2005-08-25T18:00:00Z");
  CHECK(r.position.lat() == 26.0);
  CHECK(r.position.lon() == -79.9);
  CHECK(r.max_wind == 70);
  CHECK(r.category == 1);
  CHECK(r.min_pressure == 985);
  CHECK(p.records[1].observed_at.to_string() == "2005-08-26T00:00:00Z");
  CHECK(p.records[2].name == "IVAN");
  CHECK(p.records[2].category == 2);
  // 105 kt is category 3: kept, but warned about
  REQUIRE(p.report.warnings.size() == 1);
  CHECK(p.report.warnings[0].find("AL092004") != std::string::npos);
}

TEST_CASE("parse_storms: missing header columns are fatal and named") {
  std::istringstream in("storm_id,name,lat,lon\nX,Y,1,2\n");
  try {
    parse_storms(in);
    FAIL("expected throw");
  } catch (const IngestError& e) {
    std::string msg = e.what();
    CHECK(msg.find("observed_at") != std::string::npos);
    CHECK(msg.find("max_wind_kt") != std::string::npos);
    CHECK(msg.find("min_pressure_mb") != std::string::npos);
  }
}

TEST_CASE("parse_hydro fixture and missing markers") {
  std::istringstream in("zcta,dams,outlets,stations,streamgages\n32301,3,1,0,2\n32302,,1,,0\n");
  auto p = parse_hydro(in);
  REQUIRE(p.records.size() == 2);
  CHECK(p.records[0] == HydroCounts("32301", 3, 1, 0, 2));
  CHECK_FALSE(p.records[1].dams.has_value());
  CHECK_FALSE(p.records[1].stations.has_value());
  CHECK(p.records[1].streamgages == 0.0);
  CHECK(p.report.missing_per_column.at("dams") == 1);
  CHECK(p.report.missing_per_column.at("stations") == 1);
}

TEST_CASE("parse_hydro rejects bad rows and duplicates but keeps counting") {
  std::istringstream in(
      "zcta,dams,outlets,stations,streamgages\n"
      "32301,3,1,0,2\n"
      "3230,1,1,1,1\n"
      "32303,-1,1,1,1\n"
      "32304,1,1,1\n"
      "32301,0,0,0,0\n"
      "32305,x,0,0,0\n");
  auto p = parse_hydro(in);
  CHECK(p.records.size() == 1);
  CHECK(p.report.total_rows == 6);
  CHECK(p.report.accepted + p.report.rejected.size() == p.report.total_rows);
  std::vector<std::size_t> lines;
  for (const auto& r : p.report.rejected) lines.push_back(r.line);
  CHECK(lines == std::vector<std::size_t>{3, 4, 5, 6, 7});
}

TEST_CASE("parse_buildings enforces the closed occupancy label set") {
  std::istringstream in(
      "zcta,avg_building_age,avg_floors,avg_elevation_diff_ft,avg_elevated_buildings,occupancy_type\n"
      "32301,30,1.5,-2.5,4,single_family\n"
      "32302,30,1.5,-2.5,4,castle\n");
  auto p = parse_buildings(in);
  CHECK(p.records.size() == 1);
  REQUIRE(p.report.rejected.size() == 1);
  CHECK(p.report.rejected[0].reason.find("castle") != std::string::npos);

  IngestOptions opts;
  opts.occupancy_labels = {"castle"};
  std::istringstream again(
      "zcta,avg_building_age,avg_floors,avg_elevation_diff_ft,avg_elevated_buildings,occupancy_type\n"
      "32302,30,1.5,-2.5,4,castle\n");
  CHECK(parse_buildings(again, opts).records.size() == 1);
}

TEST_CASE("parse_losses rejects a negative building cost") {
  std::istringstream in(
      "zcta,loss_date,building_cost_usd,contents_cost_usd\n"
      "32301,2017-09-10,1000,200\n"
      "32301,2017-09-11,-1000,200\n"
      "32301,2017-02-30,1000,200\n");
  auto p = parse_losses(in);
  CHECK(p.records.size() == 1);
  CHECK(p.report.rejected.size() == 2);
  CHECK(p.report.rejected[0].line == 3);
}

TEST_CASE("parse_hpi: non-increasing months are fatal") {
  std::istringstream in("month,value\n2024-01,800\n2024-03,810\n2024-02,805\n");
  try {
    parse_hpi(in);
    FAIL("expected throw");
  } catch (const IngestError& e) {
    CHECK(std::string(e.what()).find("months not strictly increasing") != std::string::npos);
  }
}

TEST_CASE("parse_zcta_centroids") {
  std::istringstream in("lon,zcta,lat\n-84.28,32301,30.44\n-80.19,33101,95\n");
  auto p = parse_zcta_centroids(in);
  REQUIRE(p.records.size() == 1);
  CHECK(p.records[0].zcta_id == "32301");
  CHECK(p.records[0].centroid.lat() == 30.44);
  CHECK(p.report.rejected.size() == 1);
}

TEST_CASE("synthetic bundles are deterministic") {
  SyntheticOptions o;
  o.n_zctas = 300;
  o.n_storms = 10;
  auto a = generate_synthetic(Seed{42}, o);
  auto b = generate_synthetic(Seed{42}, o);
  CHECK(a == b);
  CHECK(serialize(a) == serialize(b));
  CHECK(serialize(a) != serialize(generate_synthetic(Seed{43}, o)));
}

TEST_CASE("synthetic bundle shape and bounds") {
  SyntheticOptions o;
  o.n_zctas = 200;
  o.n_storms = 7;
  auto b = generate_synthetic(Seed{9}, o);
  CHECK(b.zctas.size() == 200);
  CHECK(b.hydro.size() == 200);
  CHECK(b.buildings.size() == 200);
  CHECK(b.losses.size() >= 200);
  std::set<std::string> storms;
  for (const auto& s : b.storms) storms.insert(s.storm_id);
  CHECK(storms.size() == 7);
  for (const auto& z : b.zctas) {
    CHECK(z.centroid.lat() >= SyntheticLaw::kLatMin);
    CHECK(z.centroid.lat() <= SyntheticLaw::kLatMax);
    CHECK(z.centroid.lon() >= SyntheticLaw::kLonMin);
    CHECK(z.centroid.lon() <= SyntheticLaw::kLonMax);
  }
  CHECK(b.hpi.value_at({2025, 1}) == kHpiBaseline);
}

TEST_CASE("synthetic with one ZCTA has one row per ZCTA-keyed table") {
  SyntheticOptions o;
  o.n_zctas = 1;
  o.n_storms = 1;
  auto b = generate_synthetic(Seed{1}, o);
  CHECK(b.zctas.size() == 1);
  CHECK(b.hydro.size() == 1);
  CHECK(b.buildings.size() == 1);
}

TEST_CASE("synthetic preconditions") {
  SyntheticOptions o;
  o.n_zctas = 0;
  CHECK_THROWS(generate_synthetic(Seed{1}, o));
  o.n_zctas = 5;
  o.n_storms = 0;
  CHECK_THROWS(generate_synthetic(Seed{1}, o));
}

TEST_CASE("write then load reproduces the bundle exactly") {
  SyntheticOptions o;
  o.n_zctas = 150;
  o.n_storms = 6;
  o.hydro_missing_fraction = 0.2;
  auto b = generate_synthetic(Seed{77}, o);
  auto dir = testutil::temp_dir("ingest_roundtrip");
  write_bundle(b, dir);
  auto loaded = load_bundle(BundlePaths::in_directory(dir));
  CHECK(loaded.bundle == b);
  CHECK(loaded.report.unmatched_zctas.empty());
  for (const auto& s : loaded.report.sources) CHECK(s.accepted + s.rejected.size() == s.total_rows);
  const auto* hydro = loaded.report.find("hydro");
  REQUIRE(hydro != nullptr);
  CHECK(hydro->missing_per_column.at("dams") > 0);

  // and a second pass is byte-identical
  auto dir2 = testutil::temp_dir("ingest_roundtrip2");
  write_bundle(loaded.bundle, dir2);
  for (const char* f : {"zcta_centroids.csv", "storms.csv", "hydro.csv", "buildings.csv", "losses.csv", "hpi.csv"})
    CHECK(testutil::slurp(dir / f) == testutil::slurp(dir2 / f));
}

TEST_CASE("load_bundle flags ZCTAs without a centroid") {
  auto dir = testutil::temp_dir("ingest_unmatched");
  testutil::spit(dir / "zcta_centroids.csv", "zcta,lat,lon\n32301,30.4,-84.3\n");
  testutil::spit(dir / "storms.csv",
                 "storm_id,name,observed_at,lat,lon,max_wind_kt,category,min_pressure_mb\n"
                 "S1,,2017-09-10,25,-81,100,3,950\n");
  testutil::spit(dir / "hydro.csv", "zcta,dams,outlets,stations,streamgages\n32301,1,1,1,1\n32399,1,1,1,1\n");
  testutil::spit(dir / "buildings.csv",
                 "zcta,avg_building_age,avg_floors,avg_elevation_diff_ft,avg_elevated_buildings,occupancy_type\n"
                 "32301,20,1,0,1,single_family\n");
  testutil::spit(dir / "losses.csv", "zcta,loss_date,building_cost_usd,contents_cost_usd\n33000,2017-09-10,1,1\n");
  testutil::spit(dir / "hpi.csv", "month,value\n2017-01,600\n");
  auto loaded = load_bundle(BundlePaths::in_directory(dir));
  CHECK(loaded.report.unmatched_zctas == std::vector<std::string>{"32399", "33000"});
  CHECK(loaded.report.summary().find("unmatched zctas: 32399 33000") != std::string::npos);
}
