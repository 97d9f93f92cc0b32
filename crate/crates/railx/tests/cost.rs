use approx::assert_relative_eq;
use railx::cost::*;

// (label, scale, switches, pcc K, aot K, cost M$, cost/inject, gbw %, cost/gbw)
const TABLE: [(&str, u64, u64, f64, f64, f64, f64, f64, f64); 12] = [
    ("2-Tier Nonbl. FT", 2048, 3456, 0.0, 294.9, 415.9, 1.0, 100.0, 1.0),
    ("1:3 Tap. 2-Tier FT", 3072, 2880, 0.0, 294.9, 395.7, 0.65, 33.3, 1.90),
    ("Hx4Mesh (1-Tier FT)", 16384, 2304, 0.0, 294.9, 375.6, 0.11, 12.5, 0.90),
    ("Hx7Mesh (1-Tier FT)", 50176, 4032, 0.0, 516.1, 657.2, 0.06, 7.1, 0.91),
    ("3D-Torus w/ OCS", 4096, 288, 30.7, 36.9, 185.7, 0.22, 4.2, 5.52),
    ("3D-Torus w/o OCS", 4096, 0, 30.7, 36.9, 45.0, 0.05, 4.2, 1.46),
    ("Rail-Only (2D FT)", 4096, 2304, 0.0, 294.9, 375.6, 0.45, 50.0, 0.90),
    ("RailX4Mesh", 65536, 4608, 0.0, 589.8, 751.1, 0.06, 12.5, 0.45),
    ("RailX7Mesh", 200704, 8064, 0.0, 1032.2, 1314.4, 0.03, 7.1, 0.45),
    ("4-Tier Nonbl. FT", 196608, 774144, 0.0, 56623.0, 83718.0, 2.10, 100.0, 2.10),
    ("1:7:49 Tap. 3-Tier FT", 200704, 149760, 0.0, 16810.0, 22052.0, 0.54, 2.0, 26.5),
    ("Hx7Mesh (2-Tier FT)", 200704, 48384, 0.0, 4128.0, 5822.0, 0.14, 7.1, 2.01),
];

fn table() -> Vec<CostReport> {
    comparison_table(&CostParams::default(), &PriceBook::default()).unwrap()
}

// counts print in thousands at 0.1K; the larger rows print whole thousands
fn thousands(count: u64, printed: f64) -> bool {
    let k = count as f64 / 1e3;
    if printed >= 1000.0 && printed.fract() == 0.0 {
        (k - printed).abs() < 1.0
    } else {
        (k * 10.0).round() / 10.0 == printed
    }
}

#[test]
fn component_counts_match_every_row() {
    for (report, row) in table().iter().zip(TABLE) {
        assert_eq!(report.label, row.0);
        assert_eq!(report.scale, row.1, "{}", row.0);
        assert_eq!(report.switches, row.2, "{}", row.0);
        assert!(thousands(report.pcc, row.3), "{} pcc {}", row.0, report.pcc);
        assert!(thousands(report.aot, row.4), "{} aot {}", row.0, report.aot);
    }
}

#[test]
fn totals_match_switched_and_railx_rows() {
    for (report, row) in table().iter().zip(TABLE) {
        if row.0.starts_with("3D-Torus") {
            continue;
        }
        // large rows print whole millions
        let tol = if row.5.fract() == 0.0 && row.5 >= 1000.0 { 0.5 } else { 0.1 };
        assert!((report.total_usd / 1e6 - row.5).abs() <= tol, "{}: {}", row.0, report.total_usd / 1e6);
        assert!((report.cost_per_injection.unwrap() - row.6).abs() <= 0.02, "{}", row.0);
        assert!((report.global_bw_pct - row.7).abs() <= 0.05, "{}", row.0);
        assert!((report.cost_per_gbw.unwrap() - row.8).abs() <= 0.02 * row.8.max(1.0), "{}", row.0);
    }
}

#[test]
fn torus_totals_follow_the_price_book() {
    // 288 OCS, 30720 PCC, 36864 AOT at list prices
    let r = &table()[4];
    assert_eq!((r.switches, r.pcc, r.aot), (288, 30720, 36864));
    assert_relative_eq!(r.total_usd, 288.0 * 35e3 + 30720.0 * 250.0 + 36864.0 * 1e3);
    let r = &table()[5];
    assert_relative_eq!(r.total_usd, 30720.0 * 250.0 + 36864.0 * 1e3);
}

#[test]
fn railx7_cell() {
    let r = &table()[8];
    assert_eq!((r.scale, r.switches, r.aot), (200_704, 8064, 1_032_192));
    assert!((r.total_usd / 1e6 - 1314.4).abs() < 0.05);
    assert!((r.cost_per_gbw.unwrap() - 0.45).abs() < 0.01);
}

#[test]
fn baseline_cell() {
    let r = &table()[0];
    assert_eq!((r.scale, r.switches, r.aot), (2048, 3456, 294_912));
    assert!((r.total_usd / 1e6 - 415.9).abs() < 0.05);
    assert_eq!(r.cost_per_injection, Some(1.0));
}

#[test]
fn zero_prices_cost_nothing() {
    for r in comparison_table(&CostParams::default(), &PriceBook::zero()).unwrap() {
        assert_eq!(r.total_usd, 0.0);
        assert_eq!(r.cost_per_injection, None);
    }
}

#[test]
fn scaling_prices_is_homogeneous() {
    let base = table();
    let scaled = comparison_table(&CostParams::default(), &PriceBook::default().scaled(3.5)).unwrap();
    for (a, b) in base.iter().zip(&scaled) {
        assert_relative_eq!(b.total_usd, 3.5 * a.total_usd, max_relative = 1e-12);
        assert_relative_eq!(b.cost_per_injection.unwrap(), a.cost_per_injection.unwrap(), max_relative = 1e-12);
        assert_relative_eq!(b.cost_per_gbw.unwrap(), a.cost_per_gbw.unwrap(), max_relative = 1e-12);
    }
}

#[test]
fn invalid_parameters_rejected() {
    let p = CostParams::default();
    assert!(components(&Family::FatTree { chips: 10, tiers: 0, tapers: vec![] }, &p).is_err());
    assert!(components(&Family::FatTree { chips: 10, tiers: 2, tapers: vec![Taper { up: 1, down: 2 }] }, &p).is_err());
    assert!(components(&Family::RailX { mesh: 4, ports_per_edge: 9, grid: 65 }, &p).is_err());
    assert!(components(&Family::Torus3d { cube: 3, cubes: 2, ocs: true }, &p).is_err());
    let neg = PriceBook { aot_usd: -1.0, ..PriceBook::default() };
    assert!(cost_model("x", &baseline_family(&p), &p, &neg).is_err());
}

#[test]
fn families_roundtrip_through_json() {
    for (_, f) in comparison_rows() {
        let s = serde_json::to_string(&f).unwrap();
        assert_eq!(serde_json::from_str::<Family>(&s).unwrap(), f);
    }
    assert!(serde_json::from_str::<Family>(r#"{"family":"butterfly"}"#).is_err());
}

#[test]
fn scale_bounds() {
    assert_eq!(scale_bound(ScaleFamily::RailX { ocs_radix: 128, mesh: 5 }), 102_400);
    assert_eq!(scale_bound(ScaleFamily::RailX { ocs_radix: 320, mesh: 2 }), 102_400);
    assert_eq!(scale_bound(ScaleFamily::RailX { ocs_radix: 128, mesh: 7 }), 200_704);
    assert_eq!(scale_bound(ScaleFamily::Tpuv4 { ocs_radix: 128, mesh: 4 }), 4096);
    assert_eq!(scale_bound(ScaleFamily::HyperX { rails: 8, mesh: 4 }), 81 * 16);
    assert_eq!(scale_bound(ScaleFamily::Dragonfly { rails: 8, ocs_radix: 128, mesh: 4 }), 9 * 64 * 16);
    assert_eq!(scale_bound(ScaleFamily::SingleDragonfly { rails: 2, mesh: 1 }), 3 * 7);
    assert_eq!(scale_bound(ScaleFamily::RailOptimized { radix: 64, gpus_per_server: 8 }), 512);
}
