//! Generates the scenario corpus under `scenarios/`.
//!
//! The two-bus and three-bus files are fixed constructions. The six-bus
//! system is a reconstruction: unit data, the demand share vector, the
//! 230 MW interface limit, and one hour's clearing outcome are frozen
//! anchors, but the interface susceptances and the anchor-hour total
//! demand are not independently known. This script searches the two free
//! parameters — the susceptance scale of tie-line 1-3 and the hour-14
//! total demand — until clearing the anchor offer set reproduces the
//! anchor dispatch and prices, then writes the scenario, the 24-hour
//! demand profile, and prints a full verification table.
//!
//! Run from the workspace root:
//!
//! ```text
//! cargo run --release -p mitbid-core --example derive_scenarios [--skip-hourly]
//! ```
//!
//! `--skip-hourly` writes the files without the (slower) hourly scan that
//! re-checks the qualitative properties of the demand profile.

use std::time::Instant;

use mitbid_core::bidding::{owner_profit, solve_bid, Strategy};
use mitbid_core::clearing::{clear, OfferSet};
use mitbid_core::mitigation::run_pipeline;
use mitbid_core::network::{
    save_scenario, scale_loads, two_bus_scenario, Branch, Bus, DemandProfile, GenUnit, Network,
    OfferBlock, Scenario,
};

// ─── frozen anchors (hour-14 conduct-aware clearing of GenCo G) ──────────────

const ANCHOR_A_OFFERS: [f64; 4] = [9.92, 10.25, 15.20, 15.20];
const ANCHOR_H_OFFERS: [f64; 4] = [10.08, 10.66, 11.09, 23.44];
const ANCHOR_G_A: f64 = 119.08;
const ANCHOR_LMP_1: f64 = 15.20;
const ANCHOR_PROFIT_A: f64 = 595.94;
const ANCHOR_G_H: f64 = 157.60;
const ANCHOR_LMP_4: f64 = 23.44;
const ANCHOR_PROFIT_H: f64 = 2037.16;
const ANCHOR_LMP_2: f64 = 11.09;
const ANCHOR_TOL: f64 = 0.005; // relative

const SHARES: [f64; 6] = [0.0, 0.0, 0.19, 0.27, 0.27, 0.27];
// Nodal prices depend on susceptance ratios only; the absolute scale is
// chosen large so angle bounds stay slack at peak demand.
const BASE_SUSCEPTANCE: f64 = 1500.0;
const INTERFACE_LIMIT: f64 = 230.0;
// The limited interface is electrically weak relative to the mesh, so
// flows onto it grow slowly with demand and the system still clears the
// evening peak; its price effect is unchanged (shadow prices adapt).
const INTERFACE_SUSCEPTANCE_FRAC: f64 = 0.2;
// Line 1-2 is weak relative to line 1-3: the anchor price pattern needs
// bus 1 to sit about a third of the electrical distance from bus 2
// towards bus 4, which requires the 1-3 coupling to be roughly twice the
// 1-2 coupling.
const LINE_12_FRAC: f64 = 0.20;
// The second tie-line also carries a finite rating.  It never binds in any
// observed clearing: once line 2-4 saturates, replacement power sourced at
// bus 2 splits between the two tie-lines in a fixed proportion (~56% onto
// 2-4), so the corridor tops out near 145 MW.  The rating is kept because
// an unrated tie-line is a reconstruction fiction, and it is slack in every
// anchored clearing (the 14:00 flow is about 181 MW).
const CORRIDOR_LIMIT: f64 = 250.0;
// Line 3-4 is kept moderate so the corridor rating is actually reachable:
// pushing power through the weak 1-3 line needs a large angle spread
// between buses 3 and 4, and a stiff 3-4 line converts that spread into a
// circulating flow beyond its own rating, choking imports long before the
// tie-line ratings are met.  Half of the base keeps the loop loose enough
// that the two tie-lines, not the mesh, set the transfer ceiling.
const LINE_34_FRAC: f64 = 0.5;
// Unrated mesh lines get a rating far above any physical flow (pocket
// circulation can pass 1000 MW when the corridor runs full), so the only
// binding branch constraints are the two tie-line ratings.
const OPEN_LIMIT: f64 = 9999.0;

// Overridable copy of LINE_12_FRAC for the --scan exploration mode.
static GAMMA12_BITS: std::sync::atomic::AtomicU64 = std::sync::atomic::AtomicU64::new(0);

fn gamma12() -> f64 {
    let bits = GAMMA12_BITS.load(std::sync::atomic::Ordering::Relaxed);
    if bits == 0 {
        LINE_12_FRAC
    } else {
        f64::from_bits(bits)
    }
}

fn unit(id: &str, bus: u32, owner: &str, caps: [f64; 4], costs: [f64; 4]) -> GenUnit {
    GenUnit {
        id: id.into(),
        bus,
        owner: owner.into(),
        blocks: caps
            .iter()
            .zip(&costs)
            .map(|(&capacity_mw, &true_cost)| OfferBlock {
                capacity_mw,
                true_cost,
                offered_price: true_cost,
            })
            .collect(),
    }
}

/// Six-bus system: generation-heavy buses 1-2, load-heavy buses 3-6, two
/// rated tie-lines (1-3 at 250 MW, 2-4 at 230 MW). `beta` scales the 1-3
/// susceptance; `d_tot` is the total demand split by `SHARES`.
fn six_bus(beta: f64, d_tot: f64) -> Scenario {
    let caps_a = [54.25, 38.75, 31.0, 31.0];
    let costs_a = [9.92, 10.25, 10.68, 11.26];
    let caps_b = [140.0, 97.5, 52.5, 70.0];
    let costs_b = [19.20, 20.32, 21.22, 22.13];
    let caps_c = [25.0, 25.0, 20.0, 20.0];
    let costs_c = [18.60, 20.03, 21.67, 22.72];
    let caps_d = [68.95, 49.25, 39.40, 39.40];
    let costs_d = [10.08, 10.66, 11.09, 11.72];

    Scenario {
        notes: Some(
            "Derived configuration: tie-line susceptance and hour-14 demand were searched so \
             the bundled hour-14 offer set clears at the anchor values checked by the test \
             suite; see crates/core/examples/derive_scenarios.rs."
                .into(),
        ),
        network: Network {
            buses: (1..=6)
                .map(|id| Bus {
                    id,
                    load_mw: d_tot * SHARES[id as usize - 1],
                })
                .collect(),
            branches: vec![
                Branch { from_bus: 1, to_bus: 2, susceptance: BASE_SUSCEPTANCE * gamma12(), limit_mw: OPEN_LIMIT },
                Branch { from_bus: 1, to_bus: 3, susceptance: BASE_SUSCEPTANCE * beta, limit_mw: CORRIDOR_LIMIT },
                Branch { from_bus: 2, to_bus: 4, susceptance: BASE_SUSCEPTANCE * INTERFACE_SUSCEPTANCE_FRAC, limit_mw: INTERFACE_LIMIT },
                Branch { from_bus: 3, to_bus: 4, susceptance: BASE_SUSCEPTANCE * LINE_34_FRAC, limit_mw: OPEN_LIMIT },
                Branch { from_bus: 4, to_bus: 5, susceptance: BASE_SUSCEPTANCE, limit_mw: OPEN_LIMIT },
                Branch { from_bus: 5, to_bus: 6, susceptance: BASE_SUSCEPTANCE, limit_mw: OPEN_LIMIT },
                Branch { from_bus: 3, to_bus: 6, susceptance: BASE_SUSCEPTANCE, limit_mw: OPEN_LIMIT },
            ],
        },
        units: vec![
            unit("A", 1, "G", caps_a, costs_a),
            unit("B", 2, "B", caps_b, costs_b),
            unit("C", 2, "G", caps_c, costs_c),
            unit("D", 4, "D", caps_d, costs_d),
            unit("E", 1, "E", caps_a, costs_a),
            unit("F", 2, "F", caps_d, costs_d),
            unit("H", 4, "G", caps_d, costs_d),
            unit("J", 3, "J", caps_a, costs_a),
        ],
        strategic_owner: "G".into(),
        offer_cap: 100.0,
        price_cap: 200.0,
        // The conduct width is pinned by the frozen offer curve: unit H's
        // top block asks exactly twice its cost, i.e. it presses against a
        // 100% conduct ceiling. The impact width is not identifiable from
        // the frozen outputs and is set below 100%: at 100% the impact
        // screen trips only when the pocket price doubles, which is also
        // the point where every pocket block fails conduct (the top block
        // is truthfully marginal, so reference price ≈ its cost), making
        // mitigation all-or-nothing and the realized outcome of an unaware
        // bidder identical to honest bidding at every hour. A 50% width
        // lets partially-elevated portfolios trigger the screen, which the
        // hourly study exercises.
        conduct_threshold_frac: 1.0,
        impact_threshold_frac: 0.5,
        tie_break_penalty: 1e-4,
        epsilon_price: 0.01,
    }
}

/// The anchor offer set: strategic units A and H at their anchor prices,
/// everything else (including strategic unit C) at true cost.
fn anchor_offers(s: &Scenario) -> OfferSet {
    let mut offers = OfferSet::truthful(s);
    let a = s.unit_index("A").unwrap();
    let h = s.unit_index("H").unwrap();
    offers.prices[a] = ANCHOR_A_OFFERS.to_vec();
    offers.prices[h] = ANCHOR_H_OFFERS.to_vec();
    offers
}

struct Probe {
    lmp: Vec<f64>,
    unit_dispatch: Vec<f64>,
    profits: Vec<f64>,
    interface_flow: f64,
    corridor_flow: f64,
    h4_dispatch: f64,
}

fn probe(beta: f64, d_tot: f64) -> Result<Probe, mitbid_core::Error> {
    let s = six_bus(beta, d_tot);
    let r = clear(&s, &anchor_offers(&s), true)?;
    let h = s.unit_index("H").unwrap();
    Ok(Probe {
        lmp: r.lmp.clone(),
        unit_dispatch: r.unit_dispatch.clone(),
        profits: r.profits.clone(),
        interface_flow: r.flows[2],
        corridor_flow: r.flows[1],
        h4_dispatch: r.dispatch[h][3],
    })
}

/// Effective bus-4 price used for the susceptance bisection: when block
/// H4 starts dispatching the price pegs at its offer, so the surplus
/// dispatch is added to keep the objective strictly monotone.
fn lmp4_effective(p: &Probe) -> f64 {
    p.lmp[3] + p.h4_dispatch.max(0.0)
}

fn rel_err(actual: f64, target: f64) -> f64 {
    (actual - target).abs() / target.abs().max(1e-12)
}

// ─── hourly profile ───────────────────────────────────────────────────────────

/// 24 hourly totals; hour 14 is replaced by the calibrated value.
///
/// Hours 1-9 stay at or below 108.5 MW, the combined first blocks of the
/// two competitor units that share the strategic unit's 9.92 cost: those
/// blocks alone can serve the whole load, so no matter what the strategic
/// owner offers the price stays 9.92 and its margin is zero — every
/// strategy is indistinguishable overnight.
///
/// Hour 24 sits at 190 MW, inside (162.75, ~231.7): the 9.92-cost blocks
/// are exhausted and the residual is small enough that the strategic
/// first blocks plus their 10.08-cost twin can cover it alone. A bid
/// optimizer that ignores mitigation tops its sole surviving cheap block
/// at the 10.08 plateau edge; the operator then ties it with the twin's
/// identical offer curve and splits the pair proportionally, stranding
/// part of the one block that carries a margin — realized profit drops
/// below truthful bidding, and undercutting the tie re-prices the margin
/// away instead of rescuing it. Evening hours run past the competitors'
/// low-cost fleet so the bus-2 units with costs near 19-22 set prices.
fn hourly_totals(d14: f64) -> Vec<(u32, f64)> {
    let mut rows: Vec<(u32, f64)> = vec![
        (1, 96.0),
        (2, 88.0),
        (3, 82.0),
        (4, 80.0),
        (5, 82.0),
        (6, 88.0),
        (7, 96.0),
        (8, 102.0),
        (9, 106.0),
        (10, 420.0),
        (11, 560.0),
        (12, 700.0),
        (13, 860.0),
        (14, 0.0),
        (15, 932.0),
        (16, 940.0),
        (17, 944.0),
        (18, 938.0),
        (19, 928.0),
        (20, 905.0),
        (21, 870.0),
        (22, 780.0),
        (23, 600.0),
        (24, 190.0),
    ];
    rows[13].1 = d14;
    rows
}

fn write_profile(path: &str, rows: &[(u32, f64)]) -> std::io::Result<()> {
    let mut out = String::from("hour,total_mw\n");
    for (h, t) in rows {
        out.push_str(&format!("{h},{t:.6}\n"));
    }
    std::fs::write(path, out)
}

// ─── fixed constructions ─────────────────────────────────────────────────────

fn three_bus() -> Scenario {
    let block = |cost: f64| OfferBlock {
        capacity_mw: 30.0,
        true_cost: cost,
        offered_price: cost,
    };
    Scenario {
        notes: Some(
            "Derived configuration: equal-susceptance triangle with uniform 23 MW line \
             limits and the whole load at bus 2, chosen so loop congestion reproduces the \
             anchor price pattern checked by the test suite."
                .into(),
        ),
        network: Network {
            buses: vec![
                Bus { id: 1, load_mw: 0.0 },
                Bus { id: 2, load_mw: 75.0 },
                Bus { id: 3, load_mw: 0.0 },
            ],
            branches: vec![
                Branch { from_bus: 1, to_bus: 2, susceptance: 1000.0, limit_mw: 23.0 },
                Branch { from_bus: 2, to_bus: 3, susceptance: 1000.0, limit_mw: 23.0 },
                Branch { from_bus: 1, to_bus: 3, susceptance: 1000.0, limit_mw: 23.0 },
            ],
        },
        units: vec![
            GenUnit { id: "A".into(), bus: 1, owner: "A".into(), blocks: vec![block(20.0)] },
            GenUnit { id: "B".into(), bus: 2, owner: "B".into(), blocks: vec![block(20.0)] },
            GenUnit { id: "C".into(), bus: 3, owner: "C".into(), blocks: vec![block(20.0)] },
        ],
        strategic_owner: "A".into(),
        offer_cap: 100.0,
        price_cap: 200.0,
        conduct_threshold_frac: 1.0,
        impact_threshold_frac: 2.0,
        tie_break_penalty: 1e-4,
        epsilon_price: 0.01,
    }
}

/// Bisects the 1-3 susceptance scale so the anchor-offer clearing puts the
/// bus-4 price just below the H4 offer. Weakening 1-3 pushes bus-1 exports
/// through 2-4; once the interface binds, bus-4 prices rise as beta falls.
fn calibrate_beta(d: f64, verbose: bool) -> f64 {
    let target = ANCHOR_LMP_4 - 0.0025;
    if verbose {
        println!("\nbeta scan (d = {d:.3}):");
    }
    let mut bracket: Option<(f64, f64)> = None;
    let mut prev: Option<(f64, f64)> = None;
    for k in 0..40 {
        let beta = 1.0 - 0.024 * k as f64;
        let p = match probe(beta, d) {
            Ok(p) => p,
            Err(e) => {
                if verbose {
                    println!("  beta {beta:.3}: {e}");
                }
                continue;
            }
        };
        // The target price pattern lives in the regime where the interface
        // is the single binding line; with strong 1-3 coupling the corridor
        // rating saturates instead, which pins bus-4 prices over a wide
        // range of scales and would fool the bracket search.
        if p.corridor_flow.abs() >= CORRIDOR_LIMIT - 1e-6 {
            if verbose {
                println!("  beta {beta:.3}: corridor saturated, out of regime");
            }
            continue;
        }
        let v = lmp4_effective(&p);
        if verbose {
            println!(
                "  beta {beta:.3}: lmp = [{:.2} {:.2} {:.2} {:.2} {:.2} {:.2}], p24 = {:.1}, gA = {:.2}, gH4 = {:.3}",
                p.lmp[0], p.lmp[1], p.lmp[2], p.lmp[3], p.lmp[4], p.lmp[5],
                p.interface_flow, p.unit_dispatch[0], p.h4_dispatch
            );
        }
        if let Some((pb, pv)) = prev {
            if (pv - target) * (v - target) < 0.0 {
                bracket = Some((pb, beta));
                break;
            }
        }
        prev = Some((beta, v));
    }
    let (mut lo, mut hi) = bracket.expect("no beta bracket found");
    // Invariant: lmp4_effective(lo) < target < lmp4_effective(hi).
    if lmp4_effective(&probe(lo, d).unwrap()) > target {
        std::mem::swap(&mut lo, &mut hi);
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if lmp4_effective(&probe(mid, d).unwrap()) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Bisects total demand so the anchor-offer clearing dispatches unit A at
/// its anchor output. The search is capped at the feasibility edge so a
/// topology whose edge sits close to the target fails with a clear message
/// instead of overshooting into infeasible territory.
fn calibrate_demand(beta: f64, d_center: f64) -> f64 {
    let g_a = |d: f64| probe(beta, d).unwrap().unit_dispatch[0];
    let mut lo = d_center - 80.0;
    while probe(beta, lo).is_err() {
        lo -= 60.0;
    }
    let edge = feasible_max(beta, lo);
    let mut hi = (d_center + 80.0).min(edge - 0.5);
    while g_a(lo) > ANCHOR_G_A {
        lo -= 60.0;
    }
    if g_a(hi) < ANCHOR_G_A {
        hi = edge - 0.5;
        assert!(
            g_a(hi) >= ANCHOR_G_A,
            "dispatch target unreachable before the feasibility edge (gA({hi:.1}) = {}, edge = {edge:.1})",
            g_a(hi)
        );
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if g_a(mid) < ANCHOR_G_A {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Largest total demand the network clears at all (anchor offers).
fn feasible_max(beta: f64, known_good: f64) -> f64 {
    let mut lo = known_good;
    let mut hi = 1700.0;
    assert!(probe(beta, hi).is_err(), "expected {hi} MW to be infeasible");
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if probe(beta, mid).is_ok() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

fn main() {
    let skip_hourly = std::env::args().any(|a| a == "--skip-hourly");
    let probe_mpec = std::env::args().any(|a| a == "--probe-mpec");
    let args: Vec<String> = std::env::args().collect();
    let probe_hour: Option<f64> = args
        .iter()
        .position(|a| a == "--probe-hour")
        .map(|k| args[k + 1].parse().unwrap());
    if let Some(k) = args.iter().position(|a| a == "--scan") {
        // Fine regime scan: --scan BETA_LO BETA_HI STEPS D [GAMMA12]
        let lo: f64 = args[k + 1].parse().unwrap();
        let hi: f64 = args[k + 2].parse().unwrap();
        let n: usize = args[k + 3].parse().unwrap();
        let d: f64 = args[k + 4].parse().unwrap();
        if let Some(g) = args.get(k + 5) {
            let g: f64 = g.parse().unwrap();
            GAMMA12_BITS.store(g.to_bits(), std::sync::atomic::Ordering::Relaxed);
        }
        for i in 0..=n {
            let beta = lo + (hi - lo) * i as f64 / n as f64;
            match probe(beta, d) {
                Ok(p) => {
                    let s = six_bus(beta, d);
                    let r = clear(&s, &anchor_offers(&s), true).unwrap();
                    let fi = s.unit_index("F").unwrap();
                    println!(
                        "beta {beta:.4}: lmp = [{:7.4} {:7.4} {:7.4} {:7.4} {:7.4} {:7.4}] p24 {:7.2} gA {:7.3} gF3 {:6.2} gF4 {:6.2} gH4 {:6.3}",
                        p.lmp[0], p.lmp[1], p.lmp[2], p.lmp[3], p.lmp[4], p.lmp[5],
                        p.interface_flow, p.unit_dispatch[0],
                        r.dispatch[fi][2], r.dispatch[fi][3], p.h4_dispatch
                    );
                }
                Err(e) => println!("beta {beta:.4}: {e}"),
            }
        }
        return;
    }
    std::fs::create_dir_all("scenarios").expect("create scenarios dir");

    // Fixed constructions.
    let homog = two_bus_scenario((20.0, 20.0), (30.0, 30.0), (0.0, 50.0), 100.0);
    let heter = two_bus_scenario((10.0, 20.0), (30.0, 30.0), (0.0, 50.0), 100.0);
    let cong = two_bus_scenario((20.0, 20.0), (30.0, 30.0), (50.0, 0.0), 23.0);
    save_scenario(&homog, "scenarios/2bus_homogeneous.json").unwrap();
    save_scenario(&heter, "scenarios/2bus_heterogeneous.json").unwrap();
    save_scenario(&cong, "scenarios/2bus_congested.json").unwrap();
    save_scenario(&three_bus(), "scenarios/3bus_loop.json").unwrap();
    println!("wrote 2-bus and 3-bus scenarios");

    // The two calibration targets interact through the marginal-block
    // pattern (which block of F is marginal depends on demand, and the
    // price plane depends on the susceptances), so alternate until fixed.
    let mut d14 = 920.0;
    let mut beta = f64::NAN;
    for round in 1..=12 {
        let prev = (beta, d14);
        beta = calibrate_beta(d14, round == 1);
        d14 = calibrate_demand(beta, d14);
        let p = probe(beta, d14).unwrap();
        println!(
            "round {round}: beta = {beta:.9}, d14 = {d14:.6}, lmp = [{:.4} {:.4} {:.4} {:.4} {:.4} {:.4}]",
            p.lmp[0], p.lmp[1], p.lmp[2], p.lmp[3], p.lmp[4], p.lmp[5]
        );
        if (beta - prev.0).abs() < 1e-7 && (d14 - prev.1).abs() < 1e-4 {
            break;
        }
    }

    // ── verification against every anchor ──
    let p = probe(beta, d14).unwrap();
    let checks = [
        ("dispatch A", p.unit_dispatch[0], ANCHOR_G_A),
        ("price bus 1", p.lmp[0], ANCHOR_LMP_1),
        ("profit A", p.profits[0], ANCHOR_PROFIT_A),
        ("dispatch H", p.unit_dispatch[6], ANCHOR_G_H),
        ("price bus 4", p.lmp[3], ANCHOR_LMP_4),
        ("profit H", p.profits[6], ANCHOR_PROFIT_H),
        ("price bus 2", p.lmp[1], ANCHOR_LMP_2),
    ];
    println!("\nanchor verification:");
    let mut worst = 0.0f64;
    for (name, actual, target) in checks {
        let e = rel_err(actual, target);
        worst = worst.max(e);
        println!("  {name:<12} {actual:>10.4}  target {target:>10.4}  rel err {e:.2e}");
    }
    println!(
        "  interface    {:>10.4}  limit  {INTERFACE_LIMIT:>10.4}",
        p.interface_flow
    );
    println!(
        "  prices 3,5,6 {:>10.4} {:>9.4} {:>9.4}",
        p.lmp[2], p.lmp[4], p.lmp[5]
    );
    assert!(
        worst <= ANCHOR_TOL,
        "anchor verification failed: worst rel err {worst:.3e}"
    );

    let max_d = feasible_max(beta, d14);
    println!("largest clearable total demand: {max_d:.1} MW");

    let s14 = six_bus(beta, d14);
    save_scenario(&s14, "scenarios/6bus.json").unwrap();
    let offers14 = anchor_offers(&s14);
    std::fs::write(
        "scenarios/6bus_offers_1400.json",
        serde_json::to_string_pretty(&offers14).unwrap() + "\n",
    )
    .unwrap();
    let rows = hourly_totals(d14);
    let peak = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    assert!(
        peak <= 0.97 * max_d,
        "peak hour {peak} too close to the feasibility edge {max_d}"
    );
    write_profile("scenarios/demand_profile_24h.csv", &rows).unwrap();
    println!("wrote scenarios/6bus.json, 6bus_offers_1400.json, demand_profile_24h.csv");

    if let Some(total) = probe_hour {
        // Detailed look at one load level: offer curves, screens, profits.
        let one = DemandProfile {
            rows: vec![(1, total)],
            shares: SHARES.to_vec(),
        };
        let sh = scale_loads(&s14, 1, &one).unwrap();
        let truthful = OfferSet::truthful(&sh);
        let base = run_pipeline(&sh, &truthful).unwrap();
        println!(
            "\nload {total}: truthful lmp = {:?}, G profit {:.4}",
            base.after.lmp.iter().map(|l| (l * 100.0).round() / 100.0).collect::<Vec<_>>(),
            owner_profit(&sh, "G", &base.after)
        );
        // Displacement test: every strategic block at the cap. How much of
        // the owner's capacity does the rest of the system replace?
        let mut capped = truthful.clone();
        for (i, u) in sh.units.iter().enumerate() {
            if u.owner == sh.strategic_owner {
                for p in &mut capped.prices[i] {
                    *p = sh.offer_cap;
                }
            }
        }
        match clear(&sh, &capped, true) {
            Ok(r) => {
                let g: f64 = sh
                    .units
                    .iter()
                    .enumerate()
                    .filter(|(_, u)| u.owner == sh.strategic_owner)
                    .map(|(i, _)| r.unit_dispatch[i])
                    .sum();
                println!(
                    "  all-G-at-cap: lmp = {:?}, G dispatch {:.2}, flows 1-2 {:.1} / 1-3 {:.1} / 2-4 {:.1}",
                    r.lmp.iter().map(|l| (l * 100.0).round() / 100.0).collect::<Vec<_>>(),
                    g,
                    r.flows[0],
                    r.flows[1],
                    r.flows[2]
                );
            }
            Err(e) => println!("  all-G-at-cap: {e}"),
        }
        for strat in [
            Strategy::MitigationUnaware,
            Strategy::ConductAware,
            Strategy::ImpactAware,
        ] {
            let bid = match solve_bid(&sh, strat) {
                Ok(b) => b,
                Err(e) => {
                    println!("{strat}: FAILED: {e}");
                    continue;
                }
            };
            let rep = run_pipeline(&sh, &bid.offers).unwrap();
            println!(
                "{strat}: predicted {:.4} realized {:.4} undercut {}",
                bid.predicted_profit,
                owner_profit(&sh, "G", &rep.after),
                bid.undercut_applied
            );
            for uid in ["A", "C", "H"] {
                let i = sh.unit_index(uid).unwrap();
                let offers: Vec<f64> = bid.offers.prices[i]
                    .iter()
                    .map(|p| (p * 10000.0).round() / 10000.0)
                    .collect();
                let fails: Vec<bool> = rep.conduct_failures[i].clone();
                println!(
                    "  {uid}: offers {offers:?} conduct_fail {fails:?} dispatch {:.2}",
                    rep.after.unit_dispatch[i]
                );
            }
            println!(
                "  impact_triggered {} final lmp {:?}",
                rep.impact_triggered,
                rep.after.lmp.iter().map(|l| (l * 100.0).round() / 100.0).collect::<Vec<_>>()
            );
        }
        return;
    }

    if probe_mpec {
        // Time one bilevel solve per strategy at the peak hour and at the
        // calibrated hour before committing to the full 24-hour scan.
        let profile = DemandProfile {
            rows: rows.clone(),
            shares: SHARES.to_vec(),
        };
        for hour in [14u32, 18] {
            let sh = scale_loads(&s14, hour, &profile).unwrap();
            for strat in [
                Strategy::MitigationUnaware,
                Strategy::ConductAware,
                Strategy::ImpactAware,
            ] {
                let t0 = Instant::now();
                match solve_bid(&sh, strat) {
                    Ok(bid) => println!(
                        "hour {hour} {strat}: predicted {:.2} in {:.2}s ({} nodes)",
                        bid.predicted_profit,
                        t0.elapsed().as_secs_f64(),
                        bid.nodes
                    ),
                    Err(e) => println!(
                        "hour {hour} {strat}: FAILED in {:.2}s: {e}",
                        t0.elapsed().as_secs_f64()
                    ),
                }
            }
        }
        return;
    }

    if skip_hourly {
        println!("skipping hourly scan");
        return;
    }

    // ── hourly scan: profile qualities the acceptance checks rely on ──
    let profile = DemandProfile {
        rows: rows.clone(),
        shares: SHARES.to_vec(),
    };
    println!("\nhourly scan (profit = realized GenCo G, welfare = value - true cost):");
    println!(
        "{:>4} {:>8} | {:>9} {:>9} {:>9} {:>9} | {:>10} {:>8}",
        "hour", "load", "non", "unaware", "conduct", "impact", "welfare_n", "worst_dt"
    );
    let mut low_spread = 0.0f64;
    let mut strict_loss_hours = Vec::new();
    let mut welfare_violation = 0.0f64;
    for &(hour, total) in &rows {
        let sh = scale_loads(&s14, hour, &profile).unwrap();
        let truthful = OfferSet::truthful(&sh);
        let base = run_pipeline(&sh, &truthful).unwrap();
        let profit_non = owner_profit(&sh, "G", &base.after);
        let welfare_non = 25.0 * total - base.after.total_true_cost;

        let mut profits = [0.0f64; 3];
        let mut welfare = [0.0f64; 3];
        let mut worst_dt = 0.0f64;
        for (k, strat) in [
            Strategy::MitigationUnaware,
            Strategy::ConductAware,
            Strategy::ImpactAware,
        ]
        .iter()
        .enumerate()
        {
            let t0 = Instant::now();
            let bid = solve_bid(&sh, *strat).unwrap();
            let rep = run_pipeline(&sh, &bid.offers).unwrap();
            worst_dt = worst_dt.max(t0.elapsed().as_secs_f64());
            profits[k] = owner_profit(&sh, "G", &rep.after);
            welfare[k] = 25.0 * total - rep.after.total_true_cost;
        }
        println!(
            "{hour:>4} {total:>8.1} | {profit_non:>9.2} {:>9.2} {:>9.2} {:>9.2} | {welfare_non:>10.1} {worst_dt:>7.2}s",
            profits[0], profits[1], profits[2]
        );
        if hour <= 9 {
            for pk in profits {
                low_spread = low_spread.max((pk - profit_non).abs());
            }
        }
        for wk in welfare {
            welfare_violation = welfare_violation.max(wk - welfare_non);
        }
        if profits[0] < profit_non - 1e-6 {
            strict_loss_hours.push(hour);
        }
    }
    println!("\nlow-demand (1-9) max profit spread vs non-strategic: {low_spread:.3e}");
    println!("max welfare excess over non-strategic (should be <= 0 + tol): {welfare_violation:.3e}");
    println!("hours with unaware realized strictly below non-strategic: {strict_loss_hours:?}");
    assert!(low_spread <= 1e-3, "low-demand hours are distinguishable");
    assert!(
        welfare_violation <= 1e-6,
        "a strategic mode beat non-strategic welfare"
    );
    assert!(
        !strict_loss_hours.is_empty(),
        "no hour exhibits unaware realized < non-strategic (expected at hour 24)"
    );
    println!("\nprofile qualities checked");
}
