//! Acceptance gate: one check per shipped claim, each printing a single
//! PASS/FAIL line. Run with `-- --nocapture` to see the lines on success:
//!
//! ```text
//! cargo test -p mitbid-core --test acceptance -- --nocapture
//! ```
//!
//! Tolerances are pinned here, next to the value they guard.

use std::path::{Path, PathBuf};
use std::time::Instant;

use mitbid_core::bidding::{solve_bid, threshold_sweep, Strategy};
use mitbid_core::clearing::{clear, OfferSet};
use mitbid_core::mitigation::run_pipeline;
use mitbid_core::network::{load_scenario, DemandProfile, Scenario};
use mitbid_core::oracle::{brute_force_bid, symmetric_play, GridSpec};
use mitbid_core::report::{hourly_run, strategy_comparison, StrategyOutcome};
use mitbid_core::verify::{run_verify, VerifyOptions};

/// Absolute tolerance on dollar and megawatt values reproduced from the
/// small duopoly tables.
const TABLE_TOL: f64 = 1e-4;
/// Relative tolerance on the six-bus benchmark row.
const SIX_BUS_REL_TOL: f64 = 0.005;
/// Low-demand hours must agree across strategies to within this, $.
const LOW_HOUR_SPREAD_TOL: f64 = 1e-3;
/// No strategic mode may beat truthful welfare by more than this, $.
const WELFARE_TOL: f64 = 1e-6;
/// Hours at or below this total are the low-demand band, MW.
const LOW_DEMAND_MW: f64 = 110.0;
/// Strict-inequality margin for qualitative price/profit orderings, $.
const STRICT: f64 = 1e-6;

fn scenario_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn load(stem: &str) -> Scenario {
    load_scenario(scenario_dir().join(format!("{stem}.json"))).expect(stem)
}

struct Gate {
    failures: Vec<String>,
}

impl Gate {
    fn record(&mut self, number: &str, title: &str, passed: bool, detail: String) {
        let verdict = if passed { "PASS" } else { "FAIL" };
        println!("{verdict} {number:>2} {title} — {detail}");
        if !passed {
            self.failures.push(format!("{number} {title}: {detail}"));
        }
    }
}

struct Check {
    ok: bool,
    notes: Vec<String>,
}

impl Check {
    fn new() -> Self {
        Check {
            ok: true,
            notes: Vec::new(),
        }
    }

    fn require(&mut self, what: &str, passed: bool, detail: String) {
        if !passed {
            self.ok = false;
            self.notes.push(format!("{what}: {detail}"));
        }
    }

    fn close(&mut self, ok_detail: String) -> (bool, String) {
        if self.ok {
            (true, ok_detail)
        } else {
            (false, self.notes.join("; "))
        }
    }
}

fn near(actual: f64, expected: f64, tol: f64) -> bool {
    (actual - expected).abs() <= tol
}

fn rel_near(actual: f64, expected: f64, rel: f64) -> bool {
    (actual - expected).abs() <= rel * expected.abs().max(1e-12)
}

/// Table cells for one strategy row: submitted price, pre-screen dispatch
/// and price at the unit's bus, pre-screen profit, post-screen profit.
struct Row {
    offer: f64,
    dispatch: f64,
    lmp: f64,
    profit_before: f64,
    profit_after: f64,
}

fn row(s: &Scenario, outcome: &StrategyOutcome, unit: &str) -> Row {
    let i = s.unit_index(unit).unwrap();
    let bus = s.bus_index(s.units[i].bus).unwrap();
    let rep = &outcome.report;
    Row {
        offer: rep.submitted_offers().prices[i][0],
        dispatch: rep.before.unit_dispatch[i],
        lmp: rep.before.lmp[bus],
        profit_before: rep.before.profits[i],
        profit_after: rep.after.profits[i],
    }
}

fn check_row(c: &mut Check, label: &str, r: &Row, expect: &Row) {
    c.require(
        label,
        near(r.offer, expect.offer, TABLE_TOL)
            && near(r.dispatch, expect.dispatch, TABLE_TOL)
            && near(r.lmp, expect.lmp, TABLE_TOL)
            && near(r.profit_before, expect.profit_before, TABLE_TOL)
            && near(r.profit_after, expect.profit_after, TABLE_TOL),
        format!(
            "got (ĉ {:.4}, g {:.4}, λ {:.4}, {:.4} → {:.4}), want (ĉ {:.4}, g {:.4}, λ {:.4}, {:.4} → {:.4})",
            r.offer, r.dispatch, r.lmp, r.profit_before, r.profit_after,
            expect.offer, expect.dispatch, expect.lmp, expect.profit_before, expect.profit_after
        ),
    );
}

// Index of each strategy in `strategy_comparison` output (Strategy::ALL
// order).
const NON: usize = 0;
const UNAWARE: usize = 1;
const CONDUCT: usize = 2;
const IMPACT: usize = 3;

fn criterion_1(gate: &mut Gate) {
    let t0 = Instant::now();
    let s = load("2bus_homogeneous");
    let rows = strategy_comparison(&s).unwrap();
    let mut c = Check::new();

    // Strategic unit A across the four strategies.
    check_row(
        &mut c,
        "non-strategic A",
        &row(&s, &rows[NON], "A"),
        &Row { offer: 20.0, dispatch: 25.0, lmp: 20.0, profit_before: 0.0, profit_after: 0.0 },
    );
    check_row(
        &mut c,
        "unaware A",
        &row(&s, &rows[UNAWARE], "A"),
        &Row { offer: 100.0, dispatch: 20.0, lmp: 100.0, profit_before: 1600.0, profit_after: 0.0 },
    );
    check_row(
        &mut c,
        "conduct-aware A",
        &row(&s, &rows[CONDUCT], "A"),
        &Row { offer: 40.0, dispatch: 20.0, lmp: 40.0, profit_before: 400.0, profit_after: 400.0 },
    );
    check_row(
        &mut c,
        "impact-aware A",
        &row(&s, &rows[IMPACT], "A"),
        &Row { offer: 40.0, dispatch: 20.0, lmp: 40.0, profit_before: 400.0, profit_after: 400.0 },
    );

    // Competitor B rides the price move: full output at the final price.
    let b = |k: usize| row(&s, &rows[k], "B");
    c.require(
        "competitor B",
        near(b(NON).profit_after, 0.0, TABLE_TOL)
            && near(b(UNAWARE).profit_before, 2400.0, TABLE_TOL)
            && near(b(UNAWARE).profit_after, 0.0, TABLE_TOL)
            && near(b(CONDUCT).profit_after, 600.0, TABLE_TOL)
            && near(b(IMPACT).profit_after, 600.0, TABLE_TOL),
        format!(
            "B profits before/after: unaware {:.4}/{:.4}, conduct {:.4}, impact {:.4}",
            b(UNAWARE).profit_before,
            b(UNAWARE).profit_after,
            b(CONDUCT).profit_after,
            b(IMPACT).profit_after
        ),
    );

    let dt = t0.elapsed().as_secs_f64();
    c.require("runtime", dt < 5.0, format!("{dt:.2}s (budget 5s)"));
    let (ok, detail) = c.close(format!(
        "homogeneous duopoly rows reproduced, {dt:.2}s"
    ));
    gate.record("1", "homogeneous duopoly table", ok, detail);
}

fn criterion_2(gate: &mut Gate) {
    let s = load("2bus_heterogeneous");
    let rows = strategy_comparison(&s).unwrap();
    let mut c = Check::new();
    let eps = s.epsilon_price;

    // The conduct screen caps the cheap unit at twice its cost; one price
    // tick below keeps it ahead of the competitor's identical offer.
    check_row(
        &mut c,
        "conduct-aware A",
        &row(&s, &rows[CONDUCT], "A"),
        &Row {
            offer: 20.0 - eps,
            dispatch: 30.0,
            lmp: 20.0,
            profit_before: 300.0 - 30.0 * eps,
            profit_after: 300.0 - 30.0 * eps,
        },
    );
    c.require(
        "conduct realized ≈ 300",
        near(rows[CONDUCT].realized_profit, 300.0, 30.0 * eps + TABLE_TOL),
        format!("realized {:.4}", rows[CONDUCT].realized_profit),
    );
    check_row(
        &mut c,
        "impact-aware A",
        &row(&s, &rows[IMPACT], "A"),
        &Row { offer: 40.0, dispatch: 20.0, lmp: 40.0, profit_before: 600.0, profit_after: 600.0 },
    );

    let (ok, detail) = c.close(format!(
        "conduct {:.2} at ĉ = 20 − ε, impact {:.2} at λ = 40",
        rows[CONDUCT].realized_profit, rows[IMPACT].realized_profit
    ));
    gate.record("2", "heterogeneous duopoly table", ok, detail);
}

fn criterion_3(gate: &mut Gate) {
    let s = load("2bus_congested");
    let rows = strategy_comparison(&s).unwrap();
    let mut c = Check::new();

    let non_a = row(&s, &rows[NON], "A");
    let non_b = row(&s, &rows[NON], "B");
    c.require(
        "non-strategic dispatch (27, 23)",
        near(non_a.dispatch, 27.0, TABLE_TOL) && near(non_b.dispatch, 23.0, TABLE_TOL),
        format!("got ({:.4}, {:.4})", non_a.dispatch, non_b.dispatch),
    );
    check_row(
        &mut c,
        "unaware A",
        &row(&s, &rows[UNAWARE], "A"),
        &Row { offer: 100.0, dispatch: 27.0, lmp: 100.0, profit_before: 2160.0, profit_after: 0.0 },
    );
    for (k, name) in [(CONDUCT, "conduct-aware A"), (IMPACT, "impact-aware A")] {
        check_row(
            &mut c,
            name,
            &row(&s, &rows[k], "A"),
            &Row { offer: 40.0, dispatch: 27.0, lmp: 40.0, profit_before: 540.0, profit_after: 540.0 },
        );
    }

    let (ok, detail) = c.close(format!(
        "import-limited bus: unaware {:.0} → {:.0}, aware strategies {:.0}",
        rows[UNAWARE].report.before.profits[0],
        rows[UNAWARE].realized_profit,
        rows[CONDUCT].realized_profit
    ));
    gate.record("3", "congested duopoly table", ok, detail);
}

fn criterion_4(gate: &mut Gate) {
    let s = load("2bus_homogeneous");
    let out = symmetric_play(&s, Strategy::ConductAware).unwrap();
    let mut c = Check::new();
    c.require(
        "profits (500, 500)",
        near(out.after_profits[0], 500.0, 1e-9) && near(out.after_profits[1], 500.0, 1e-9),
        format!("got ({:.9}, {:.9})", out.after_profits[0], out.after_profits[1]),
    );
    c.require(
        "survives screening",
        !out.mitigated,
        "symmetric conduct-aware offers were mitigated".to_string(),
    );
    let (ok, detail) = c.close(format!(
        "both units conduct-aware → ({:.1}, {:.1})",
        out.after_profits[0], out.after_profits[1]
    ));
    gate.record("4", "symmetric strategic play", ok, detail);
}

fn criterion_5(gate: &mut Gate) {
    let fractions: Vec<f64> = (0..11).map(|k| 0.5 + 0.25 * k as f64).collect();
    let heter = load("2bus_heterogeneous");
    let homog = load("2bus_homogeneous");
    let cong = load("2bus_congested");
    let mut c = Check::new();

    let sweep = |s: &Scenario, strat: Strategy| threshold_sweep(s, strat, &fractions).unwrap();
    let named = [
        ("heterogeneous", &heter),
        ("homogeneous", &homog),
        ("congested", &cong),
    ];
    let mut realized = std::collections::HashMap::new();
    for (name, s) in named {
        for strat in [Strategy::ConductAware, Strategy::ImpactAware] {
            let points = sweep(s, strat);
            let vals: Vec<f64> = points.iter().map(|p| p.realized_profit).collect();
            for w in vals.windows(2) {
                c.require(
                    &format!("monotone {name}/{strat}"),
                    w[1] >= w[0] - STRICT,
                    format!("drops {:.4} → {:.4}", w[0], w[1]),
                );
            }
            realized.insert((name, strat), vals);
        }
    }

    // Cheap-unit plateau: while the conduct bound stays under the
    // competitor-price crossover, the optimum is to undercut the
    // competitor and collect the same margin regardless of the bound.
    let plateau = &realized[&("heterogeneous", Strategy::ConductAware)];
    for (f, v) in fractions.iter().zip(plateau) {
        if *f <= 1.5 + 1e-9 {
            c.require(
                "heterogeneous conduct plateau",
                near(*v, 300.0, 30.0 * heter.epsilon_price + TABLE_TOL),
                format!("fraction {f}: {v:.4} ≠ 300"),
            );
        }
    }
    c.require(
        "plateau ends",
        plateau[10] > 300.0 + 1.0,
        format!("fraction 3.0 realized {:.4} not above 300", plateau[10]),
    );

    for (name, _) in named {
        let con = &realized[&(name, Strategy::ConductAware)];
        let imp = &realized[&(name, Strategy::ImpactAware)];
        for ((f, cv), iv) in fractions.iter().zip(con).zip(imp) {
            c.require(
                &format!("impact ≥ conduct on {name}"),
                iv >= &(cv - STRICT),
                format!("fraction {f}: impact {iv:.4} < conduct {cv:.4}"),
            );
        }
    }

    // Same fleet and costs with the interface limit on vs. off: the
    // residual-demand curve is steeper behind the constraint, so every
    // threshold buys at least as much profit.
    for strat in [Strategy::ConductAware, Strategy::ImpactAware] {
        let with_limit = &realized[&("congested", strat)];
        let without = &realized[&("homogeneous", strat)];
        for ((f, w), wo) in fractions.iter().zip(with_limit).zip(without) {
            c.require(
                &format!("congestion amplifies {strat}"),
                w >= &(wo - STRICT),
                format!("fraction {f}: congested {w:.4} < uncongested {wo:.4}"),
            );
        }
    }

    let (ok, detail) = c.close(format!(
        "6 sweeps × 11 fractions: monotone, plateau at 300 through 1.5, impact ≥ conduct, congestion dominates"
    ));
    gate.record("5", "threshold sweep shape", ok, detail);
}

fn criterion_6(gate: &mut Gate) {
    let t0 = Instant::now();
    let mut c = Check::new();
    let grid_step = 0.25;
    for stem in ["2bus_homogeneous", "2bus_heterogeneous", "2bus_congested"] {
        let s = load(stem);
        let grid = GridSpec::with_step(&s, grid_step);
        for strat in [
            Strategy::MitigationUnaware,
            Strategy::ConductAware,
            Strategy::ImpactAware,
        ] {
            let brute = brute_force_bid(&s, strat, &grid).unwrap();
            let bid = solve_bid(&s, strat).unwrap();
            let (milp_value, best_value) = if strat == Strategy::MitigationUnaware {
                (bid.predicted_profit, brute.best_predicted)
            } else {
                let rep = run_pipeline(&s, &bid.offers).unwrap();
                (
                    mitbid_core::bidding::owner_profit(&s, &s.strategic_owner, &rep.after),
                    brute.best_realized,
                )
            };
            let tol = 0.01 * best_value.abs().max(1.0);
            c.require(
                &format!("profit agreement {stem}/{strat}"),
                (milp_value - best_value).abs() <= tol,
                format!("optimizer {milp_value:.4} vs grid {best_value:.4}"),
            );

            // The optimizer's price vector must sit within one grid step
            // of a scanned candidate that is itself within 1% of the
            // argmax (optimal plateaus make the raw argmax ambiguous).
            let milp_prices: Vec<f64> = brute
                .decision_blocks
                .iter()
                .map(|&(i, b)| bid.offers.prices[i][b])
                .collect();
            let mut best_near = f64::NEG_INFINITY;
            let mut dist_used = f64::INFINITY;
            for p in &brute.surface {
                let dist = p
                    .prices
                    .iter()
                    .zip(&milp_prices)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max);
                if dist <= grid_step + 1e-9 {
                    let v = if strat == Strategy::MitigationUnaware {
                        p.predicted
                    } else {
                        p.realized
                    };
                    if v > best_near {
                        best_near = v;
                        dist_used = dist;
                    }
                }
            }
            c.require(
                &format!("argmax proximity {stem}/{strat}"),
                best_near >= best_value - tol,
                format!(
                    "no scanned candidate within {grid_step} of the optimizer offer reaches {best_value:.4} (best nearby {best_near:.4} at distance {dist_used:.3})"
                ),
            );
        }
    }
    let dt = t0.elapsed().as_secs_f64();
    c.require("runtime", dt < 30.0, format!("{dt:.2}s (budget 30s)"));
    let (ok, detail) = c.close(format!(
        "9 optimizer-vs-grid cross-checks within 1% and one 0.25 step, {dt:.2}s"
    ));
    gate.record("6", "grid-scan oracle agreement", ok, detail);
}

fn criterion_7(gate: &mut Gate) {
    let opts = VerifyOptions {
        oracle: false,
        golden: false,
        ..VerifyOptions::default()
    };
    let rep = run_verify(&scenario_dir(), &opts).unwrap();
    let mut c = Check::new();
    for check in &rep.checks {
        c.require(&check.name, check.passed, check.detail.clone());
    }
    let (ok, detail) = c.close(format!(
        "{} property checks green (duality, KKT, idempotence, monotonicity, ties, dominance, randomized clearing)",
        rep.checks.len()
    ));
    gate.record("7", "property suite", ok, detail);
}

fn criterion_8(gate: &mut Gate) {
    let mut c = Check::new();

    // Six-bus benchmark: the bundled strategic offer set clears at the
    // published operating point.
    let s6 = load("6bus");
    let offers: OfferSet = serde_json::from_str(
        &std::fs::read_to_string(scenario_dir().join("6bus_offers_1400.json")).unwrap(),
    )
    .unwrap();
    let r = clear(&s6, &offers, true).unwrap();
    let ia = s6.unit_index("A").unwrap();
    let ih = s6.unit_index("H").unwrap();
    let ba = s6.bus_index(s6.units[ia].bus).unwrap();
    let bh = s6.bus_index(s6.units[ih].bus).unwrap();
    let cells = [
        ("dispatch A", r.unit_dispatch[ia], 119.08),
        ("price at A's bus", r.lmp[ba], 15.20),
        ("profit A", r.profits[ia], 595.94),
        ("dispatch H", r.unit_dispatch[ih], 157.60),
        ("price at H's bus", r.lmp[bh], 23.44),
        ("profit H", r.profits[ih], 2037.16),
    ];
    for (name, actual, expect) in cells {
        c.require(
            name,
            rel_near(actual, expect, SIX_BUS_REL_TOL),
            format!("{actual:.4} vs {expect} (0.5%)"),
        );
    }

    // Three-bus loop: withholding at the strategic bus congests the loop
    // and raises the competitor's price above the strategic unit's own.
    let s3 = load("3bus_loop");
    let bid = solve_bid(&s3, Strategy::ConductAware).unwrap();
    let rep = run_pipeline(&s3, &bid.offers).unwrap();
    let a_bus = s3.bus_index(s3.units[s3.unit_index("A").unwrap()].bus).unwrap();
    let b_bus = s3.bus_index(s3.units[s3.unit_index("B").unwrap()].bus).unwrap();
    let (la, lb) = (rep.after.lmp[a_bus], rep.after.lmp[b_bus]);
    c.require(
        "loop-flow price split",
        lb > la + STRICT,
        format!("λ_B {lb:.4} not above λ_A {la:.4}"),
    );

    let (ok, detail) = c.close(format!(
        "six-bus operating point within 0.5%; three-bus λ_B {lb:.2} > λ_A {la:.2}"
    ));
    gate.record("8", "meshed-network benchmarks", ok, detail);
}

fn criterion_9(gate: &mut Gate) {
    let t0 = Instant::now();
    let s6 = load("6bus");
    let total = s6.total_load();
    let shares: Vec<f64> = s6.network.buses.iter().map(|b| b.load_mw / total).collect();
    let profile =
        DemandProfile::from_csv(scenario_dir().join("demand_profile_24h.csv"), shares).unwrap();
    let rows = hourly_run(&s6, &profile).unwrap();
    let mut c = Check::new();

    let low_hours: Vec<u32> = rows
        .iter()
        .filter(|r| r.total_mw <= LOW_DEMAND_MW)
        .map(|r| r.hour)
        .collect();
    c.require(
        "low-demand band exists",
        low_hours.len() >= 6,
        format!("only {} hours at or below {LOW_DEMAND_MW} MW", low_hours.len()),
    );
    let mut spread = 0.0f64;
    for r in rows.iter().filter(|r| r.total_mw <= LOW_DEMAND_MW) {
        for k in 1..4 {
            spread = spread.max((r.profit[k] - r.profit[0]).abs());
        }
    }
    c.require(
        "low-demand indistinguishability",
        spread <= LOW_HOUR_SPREAD_TOL,
        format!("profit spread {spread:.3e} over hours {low_hours:?}"),
    );

    let mut worst_excess = f64::NEG_INFINITY;
    for r in &rows {
        for k in 1..4 {
            worst_excess = worst_excess.max(r.welfare[k] - r.welfare[0]);
        }
    }
    c.require(
        "truthful welfare dominance",
        worst_excess <= WELFARE_TOL,
        format!("a strategic mode beats truthful welfare by {worst_excess:.3e}"),
    );

    let loss_hours: Vec<u32> = rows
        .iter()
        .filter(|r| r.profit[1] < r.profit[0] - STRICT)
        .map(|r| r.hour)
        .collect();
    c.require(
        "screening backfires somewhere",
        !loss_hours.is_empty(),
        "no hour has unaware realized profit below truthful play".to_string(),
    );

    let dt = t0.elapsed().as_secs_f64();
    let (ok, detail) = c.close(format!(
        "24 hours: {} low-demand hours agree (spread {spread:.1e}), welfare excess {worst_excess:.1e}, unaware loses at hours {loss_hours:?}; {dt:.0}s",
        low_hours.len()
    ));
    gate.record("9", "hourly profile qualities", ok, detail);
}

#[test]
fn acceptance_criteria() {
    let mut gate = Gate { failures: Vec::new() };
    criterion_1(&mut gate);
    criterion_2(&mut gate);
    criterion_3(&mut gate);
    criterion_4(&mut gate);
    criterion_5(&mut gate);
    criterion_6(&mut gate);
    criterion_7(&mut gate);
    criterion_8(&mut gate);
    criterion_9(&mut gate);
    assert!(
        gate.failures.is_empty(),
        "acceptance failures:\n{}",
        gate.failures.join("\n")
    );
}
