//! Strategic bid optimization.
//!
//! One owner chooses block offer prices; the operator then clears the
//! market at least offered cost. Because the clearing problem is an LP,
//! its optimality conditions are linear equations plus complementarity
//! products, so the two-level problem collapses into a single MILP:
//!
//! * clearing feasibility (balance, flow definition, bounds) with the
//!   owner's offer prices appearing as variables,
//! * stationarity rows linking prices, bus prices, and bound multipliers,
//! * complementarity products encoded as SOS1 pairs,
//! * the bilinear revenue term replaced by its dual-objective identity,
//!   which is linear in the remaining variables,
//! * strategy-specific rows: offer caps, anticipated-price caps, and the
//!   screen bounds the owner chooses to respect.
//!
//! The MILP objective carries two small shaping terms besides negated
//! profit: a proportional-dispatch penalty on price-tied identical units
//! (weight `tie_break_penalty`) so predicted dispatch matches the
//! operator's tie handling, and a tiny bias toward higher offer prices
//! (weight [`OFFER_BIAS`]) so plateaus of equal profit resolve to their
//! top vertex deterministically. Reported profits are always recomputed
//! from the solution point, never read off the shaped objective.
//!
//! Optima that require undercutting a competitor's price strictly are
//! handled after the solve: if the chosen price ties a competitor block
//! and lowering it by the scenario's price step strictly improves the
//! realized (post-mitigation) profit while staying inside the strategy's
//! own constraints, the undercut offer is adopted.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clearing::{clear, ClearingResult, OfferSet};
use crate::error::{Error, Result};
use crate::lp::Sense;
use crate::milp::{
    complementarity_to_sos1, solve_milp, AffineExpr, MilpProblem, MilpStatus, Sos1Set,
};
use crate::mitigation::{run_pipeline_with, ReferenceLevels, Thresholds};
use crate::network::Scenario;

/// Weight of the resolve-plateaus-upward bias on strategic offer prices.
pub const OFFER_BIAS: f64 = 1e-7;
/// Tolerance used when matching true costs or pinned reference offers.
pub const TIE_MATCH_TOL: f64 = 1e-9;
/// Tolerance used when matching a returned offer price to a competitor
/// price for the strict-undercut step. Returned prices sit on plateau
/// tops only up to solver roundoff, so this is wider than
/// [`TIE_MATCH_TOL`] while staying far below `epsilon_price`.
pub const UNDERCUT_MATCH_TOL: f64 = 1e-5;
/// Maximum accepted optimality-condition residual at a returned solution.
pub const KKT_TOL: f64 = 1e-6;

/// How much of the mitigation pipeline the bidding owner anticipates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    /// Offer true costs; no optimization.
    NonStrategic,
    /// Maximize profit under offer and price caps only.
    MitigationUnaware,
    /// Additionally keep every offer within the conduct screen width.
    ConductAware,
    /// Additionally keep anticipated prices within the impact screen width.
    ImpactAware,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::NonStrategic,
        Strategy::MitigationUnaware,
        Strategy::ConductAware,
        Strategy::ImpactAware,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::NonStrategic => "nonstrategic",
            Strategy::MitigationUnaware => "unaware",
            Strategy::ConductAware => "conduct",
            Strategy::ImpactAware => "impact",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text.to_ascii_lowercase().as_str() {
            "nonstrategic" | "non-strategic" | "truthful" => Ok(Strategy::NonStrategic),
            "unaware" | "mitigation-unaware" => Ok(Strategy::MitigationUnaware),
            "conduct" | "conduct-aware" => Ok(Strategy::ConductAware),
            "impact" | "impact-aware" => Ok(Strategy::ImpactAware),
            other => Err(Error::Validation(format!(
                "unknown strategy {other:?} (expected nonstrategic|unaware|conduct|impact)"
            ))),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Variable indices of one assembled bid MILP.
#[derive(Debug, Clone)]
pub struct MpecLayout {
    /// Offer-price variable per `[unit][block]`; `None` for competitors,
    /// whose prices enter as constants.
    pub offer_price: Vec<Vec<Option<usize>>>,
    pub g: Vec<Vec<usize>>,
    pub p: Vec<usize>,
    pub theta: Vec<usize>,
    /// Bus-price variables (balance multipliers of the inner problem).
    pub lmp: Vec<usize>,
    /// Multiplier of each flow definition equality.
    pub flow_def_dual: Vec<usize>,
    /// Multiplier of the reference-angle pin (free).
    pub ref_angle_dual: usize,
    pub cap_lower_dual: Vec<Vec<usize>>,
    pub cap_upper_dual: Vec<Vec<usize>>,
    pub flow_lower_dual: Vec<usize>,
    pub flow_upper_dual: Vec<usize>,
    /// Angle-bound multipliers; `None` at the reference bus.
    pub angle_lower_dual: Vec<Option<usize>>,
    pub angle_upper_dual: Vec<Option<usize>>,
    /// `(unit_i, unit_j, tb_hi, tb_lo)` per tie-candidate pair.
    pub tie_vars: Vec<(usize, usize, usize, usize)>,
    pub reference_bus: usize,
}

/// Result of one bid optimization.
#[derive(Debug, Clone)]
pub struct BilevelSolution {
    pub strategy: Strategy,
    /// Final offers for every unit (competitors at true cost).
    pub offers: OfferSet,
    /// Anticipated market outcome at the final offers.
    pub predicted: ClearingResult,
    /// Anticipated profit of the strategic owner at true costs, $.
    pub predicted_profit: f64,
    pub nodes: usize,
    pub gap: f64,
    /// Whether the post-solve strict undercut was adopted.
    pub undercut_applied: bool,
}

/// One point of a threshold sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub fraction: f64,
    pub predicted_profit: f64,
    pub realized_profit: f64,
}

/// Price adjusted to strictly undercut a tied competitor offer.
pub fn strict_inequality_offer(price: f64, s: &Scenario) -> f64 {
    price - s.epsilon_price
}

/// Sum of a clearing result's profits over one owner's units.
pub fn owner_profit(s: &Scenario, owner: &str, r: &ClearingResult) -> f64 {
    s.units_of(owner).iter().map(|&i| r.profits[i]).sum()
}

// ─── MILP assembly ───────────────────────────────────────────────────────────

/// Unit pairs with identical true-cost curves: the candidates whose
/// dispatch the tie penalty keeps proportional to capacity.
fn true_cost_tied_pairs(s: &Scenario) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..s.units.len() {
        for j in i + 1..s.units.len() {
            let (a, b) = (&s.units[i].blocks, &s.units[j].blocks);
            if a.len() != b.len() {
                continue;
            }
            let same = a
                .iter()
                .zip(b)
                .all(|(x, y)| (x.true_cost - y.true_cost).abs() <= TIE_MATCH_TOL);
            if same {
                out.push((i, j));
            }
        }
    }
    out
}

/// Builds the single-level bid MILP and its variable map.
pub fn build_mpec_with_layout(
    s: &Scenario,
    strategy: Strategy,
    refs: &ReferenceLevels,
    th: &Thresholds,
) -> Result<(MilpProblem, MpecLayout)> {
    s.validate()?;
    let mut lp = crate::lp::LinearProgram::default();
    let mut sos1: Vec<Sos1Set> = Vec::new();
    let angle_bound = crate::clearing::ANGLE_BOUND;

    let reference_bus = s
        .network
        .buses
        .iter()
        .enumerate()
        .min_by_key(|(_, b)| b.id)
        .map(|(k, _)| k)
        .expect("validated");
    let strategic: Vec<bool> = s.units.iter().map(|u| u.owner == s.strategic_owner).collect();

    // Decision prices for the strategic owner. Non-strategic builds pin
    // them to true cost so the same program degenerates to clearing.
    let offer_price: Vec<Vec<Option<usize>>> = s
        .units
        .iter()
        .enumerate()
        .map(|(i, u)| {
            u.blocks
                .iter()
                .enumerate()
                .map(|(b, blk)| {
                    if !strategic[i] {
                        return None;
                    }
                    let (lo, hi) = match strategy {
                        Strategy::NonStrategic => (blk.true_cost, blk.true_cost),
                        _ => (0.0, s.offer_cap),
                    };
                    Some(lp.add_var(format!("c.{}.{b}", u.id), lo, hi, -OFFER_BIAS))
                })
                .collect()
        })
        .collect();

    // Inner primal variables.
    let g: Vec<Vec<usize>> = s
        .units
        .iter()
        .map(|u| {
            u.blocks
                .iter()
                .enumerate()
                .map(|(b, blk)| lp.add_var(format!("g.{}.{b}", u.id), 0.0, blk.capacity_mw, 0.0))
                .collect()
        })
        .collect();
    let p: Vec<usize> = s
        .network
        .branches
        .iter()
        .map(|br| {
            lp.add_var(
                format!("p.{}.{}", br.from_bus, br.to_bus),
                -br.limit_mw,
                br.limit_mw,
                0.0,
            )
        })
        .collect();
    let theta: Vec<usize> = s
        .network
        .buses
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let (lo, hi) = if k == reference_bus {
                (0.0, 0.0)
            } else {
                (-angle_bound, angle_bound)
            };
            lp.add_var(format!("theta.{}", b.id), lo, hi, 0.0)
        })
        .collect();

    // Inner duals. Bus prices are kept within [0, price_cap] in every
    // build: strategic modes require it, and for the degenerate build it
    // never binds at competitive prices while keeping relaxations bounded.
    let lmp: Vec<usize> = s
        .network
        .buses
        .iter()
        .map(|b| lp.add_var(format!("lmp.{}", b.id), 0.0, s.price_cap, 0.0))
        .collect();
    let flow_def_dual: Vec<usize> = s
        .network
        .branches
        .iter()
        .map(|br| {
            lp.add_var(
                format!("mult.flowdef.{}.{}", br.from_bus, br.to_bus),
                f64::NEG_INFINITY,
                f64::INFINITY,
                0.0,
            )
        })
        .collect();
    let ref_angle_dual = lp.add_var("mult.refangle", f64::NEG_INFINITY, f64::INFINITY, 0.0);

    let mut cap_lower_dual = Vec::with_capacity(s.units.len());
    let mut cap_upper_dual = Vec::with_capacity(s.units.len());
    for (i, u) in s.units.iter().enumerate() {
        let mut lo_row = Vec::new();
        let mut up_row = Vec::new();
        for b in 0..u.blocks.len() {
            lo_row.push(lp.add_var(format!("mult.gmin.{}.{b}", u.id), 0.0, f64::INFINITY, 0.0));
            // Competitor at-capacity multipliers price capacity out of the
            // dual objective; strategic ones cancel there.
            let obj = if strategic[i] { 0.0 } else { u.blocks[b].capacity_mw };
            up_row.push(lp.add_var(format!("mult.gmax.{}.{b}", u.id), 0.0, f64::INFINITY, obj));
        }
        cap_lower_dual.push(lo_row);
        cap_upper_dual.push(up_row);
    }
    let flow_lower_dual: Vec<usize> = s
        .network
        .branches
        .iter()
        .map(|br| {
            lp.add_var(
                format!("mult.pmin.{}.{}", br.from_bus, br.to_bus),
                0.0,
                f64::INFINITY,
                br.limit_mw,
            )
        })
        .collect();
    let flow_upper_dual: Vec<usize> = s
        .network
        .branches
        .iter()
        .map(|br| {
            lp.add_var(
                format!("mult.pmax.{}.{}", br.from_bus, br.to_bus),
                0.0,
                f64::INFINITY,
                br.limit_mw,
            )
        })
        .collect();
    let angle_lower_dual: Vec<Option<usize>> = s
        .network
        .buses
        .iter()
        .enumerate()
        .map(|(k, b)| {
            (k != reference_bus)
                .then(|| lp.add_var(format!("mult.thmin.{}", b.id), 0.0, f64::INFINITY, angle_bound))
        })
        .collect();
    let angle_upper_dual: Vec<Option<usize>> = s
        .network
        .buses
        .iter()
        .enumerate()
        .map(|(k, b)| {
            (k != reference_bus)
                .then(|| lp.add_var(format!("mult.thmax.{}", b.id), 0.0, f64::INFINITY, angle_bound))
        })
        .collect();

    // Objective so far covers the dual-identity terms that price the
    // revenue Σ price(bus(i)) * g of strategic blocks:
    //   revenue = Σ lmp_m * load_m - Σ_comp offer_j * g_j
    //           - Σ_comp gmax-mult_j * cap_j - Σ (pmin+pmax mult) * limit
    //           - Σ (thmin+thmax mult) * angle_bound
    // Minimizing negated profit, lmp gets -load, competitor g gets +offer,
    // and the multiplier terms above enter positively; strategic g then
    // adds its true cost (profit = revenue - true cost).
    for (k, bus) in s.network.buses.iter().enumerate() {
        lp.objective[lmp[k]] = -bus.load_mw;
    }
    for (i, u) in s.units.iter().enumerate() {
        for (b, blk) in u.blocks.iter().enumerate() {
            if strategic[i] {
                lp.objective[g[i][b]] = blk.true_cost;
            } else {
                lp.objective[g[i][b]] = blk.offered_price;
            }
        }
    }

    // Inner primal feasibility: nodal balance and flow definition.
    for bus in &s.network.buses {
        let mut terms: Vec<(usize, f64)> = Vec::new();
        for (i, u) in s.units.iter().enumerate() {
            if u.bus == bus.id {
                for &gv in &g[i] {
                    terms.push((gv, 1.0));
                }
            }
        }
        for (e, br) in s.network.branches.iter().enumerate() {
            if br.from_bus == bus.id {
                terms.push((p[e], -1.0));
            } else if br.to_bus == bus.id {
                terms.push((p[e], 1.0));
            }
        }
        lp.add_row(format!("balance.{}", bus.id), terms, Sense::Eq, bus.load_mw);
    }
    for (e, br) in s.network.branches.iter().enumerate() {
        let from = s.bus_index(br.from_bus).expect("validated");
        let to = s.bus_index(br.to_bus).expect("validated");
        lp.add_row(
            format!("flowdef.{}.{}", br.from_bus, br.to_bus),
            vec![
                (p[e], 1.0),
                (theta[from], -br.susceptance),
                (theta[to], br.susceptance),
            ],
            Sense::Eq,
            0.0,
        );
    }

    // Stationarity of the inner problem w.r.t. each block dispatch:
    // offer - price(bus) - gmin-mult + gmax-mult = 0.
    for (i, u) in s.units.iter().enumerate() {
        let bus = s.bus_index(u.bus).expect("validated");
        for (b, blk) in u.blocks.iter().enumerate() {
            let mut terms = vec![
                (lmp[bus], -1.0),
                (cap_lower_dual[i][b], -1.0),
                (cap_upper_dual[i][b], 1.0),
            ];
            let rhs = match offer_price[i][b] {
                Some(cv) => {
                    terms.push((cv, 1.0));
                    0.0
                }
                None => -blk.offered_price,
            };
            lp.add_row(format!("stat.g.{}.{b}", u.id), terms, Sense::Eq, rhs);
        }
    }
    // ... w.r.t. each flow: price(from) - price(to) - flowdef-mult
    //                       - pmin-mult + pmax-mult = 0.
    for (e, br) in s.network.branches.iter().enumerate() {
        let from = s.bus_index(br.from_bus).expect("validated");
        let to = s.bus_index(br.to_bus).expect("validated");
        lp.add_row(
            format!("stat.p.{}.{}", br.from_bus, br.to_bus),
            vec![
                (lmp[from], 1.0),
                (lmp[to], -1.0),
                (flow_def_dual[e], -1.0),
                (flow_lower_dual[e], -1.0),
                (flow_upper_dual[e], 1.0),
            ],
            Sense::Eq,
            0.0,
        );
    }
    // ... w.r.t. each angle: susceptance-weighted multipliers of incident
    // flow definitions, plus angle-bound multipliers (reference bus gets
    // the free pin multiplier instead).
    for (k, bus) in s.network.buses.iter().enumerate() {
        let mut terms: Vec<(usize, f64)> = Vec::new();
        for (e, br) in s.network.branches.iter().enumerate() {
            if br.from_bus == bus.id {
                terms.push((flow_def_dual[e], br.susceptance));
            } else if br.to_bus == bus.id {
                terms.push((flow_def_dual[e], -br.susceptance));
            }
        }
        if k == reference_bus {
            terms.push((ref_angle_dual, 1.0));
        } else {
            terms.push((angle_lower_dual[k].unwrap(), -1.0));
            terms.push((angle_upper_dual[k].unwrap(), 1.0));
        }
        lp.add_row(format!("stat.theta.{}", bus.id), terms, Sense::Eq, 0.0);
    }

    // Complementarity products, one SOS1 pair per bound multiplier.
    for (i, u) in s.units.iter().enumerate() {
        for (b, blk) in u.blocks.iter().enumerate() {
            sos1.push(complementarity_to_sos1(
                &mut lp,
                &format!("cs.gmin.{}.{b}", u.id),
                cap_lower_dual[i][b],
                &AffineExpr::var(g[i][b]),
            ));
            sos1.push(complementarity_to_sos1(
                &mut lp,
                &format!("cs.gmax.{}.{b}", u.id),
                cap_upper_dual[i][b],
                &AffineExpr {
                    terms: vec![(g[i][b], -1.0)],
                    constant: blk.capacity_mw,
                },
            ));
        }
    }
    for (e, br) in s.network.branches.iter().enumerate() {
        sos1.push(complementarity_to_sos1(
            &mut lp,
            &format!("cs.pmin.{}.{}", br.from_bus, br.to_bus),
            flow_lower_dual[e],
            &AffineExpr {
                terms: vec![(p[e], 1.0)],
                constant: br.limit_mw,
            },
        ));
        sos1.push(complementarity_to_sos1(
            &mut lp,
            &format!("cs.pmax.{}.{}", br.from_bus, br.to_bus),
            flow_upper_dual[e],
            &AffineExpr {
                terms: vec![(p[e], -1.0)],
                constant: br.limit_mw,
            },
        ));
    }
    for (k, bus) in s.network.buses.iter().enumerate() {
        if k == reference_bus {
            continue;
        }
        sos1.push(complementarity_to_sos1(
            &mut lp,
            &format!("cs.thmin.{}", bus.id),
            angle_lower_dual[k].unwrap(),
            &AffineExpr {
                terms: vec![(theta[k], 1.0)],
                constant: angle_bound,
            },
        ));
        sos1.push(complementarity_to_sos1(
            &mut lp,
            &format!("cs.thmax.{}", bus.id),
            angle_upper_dual[k].unwrap(),
            &AffineExpr {
                terms: vec![(theta[k], -1.0)],
                constant: angle_bound,
            },
        ));
    }

    // Offer-curve monotonicity across blocks of each strategic unit.
    for (i, u) in s.units.iter().enumerate() {
        if !strategic[i] {
            continue;
        }
        for b in 1..u.blocks.len() {
            let (hi, lo) = (offer_price[i][b].unwrap(), offer_price[i][b - 1].unwrap());
            lp.add_row(
                format!("mono.{}.{b}", u.id),
                vec![(hi, 1.0), (lo, -1.0)],
                Sense::Ge,
                0.0,
            );
        }
    }

    // Strategy rows.
    match strategy {
        Strategy::NonStrategic | Strategy::MitigationUnaware => {}
        Strategy::ConductAware => {
            for (i, u) in s.units.iter().enumerate() {
                if !strategic[i] {
                    continue;
                }
                for b in 0..u.blocks.len() {
                    let cv = offer_price[i][b].unwrap();
                    let c0 = refs.block_prices[i][b];
                    let x = th.conduct[i][b];
                    lp.add_row(
                        format!("conduct.hi.{}.{b}", u.id),
                        vec![(cv, 1.0)],
                        Sense::Le,
                        c0 + x,
                    );
                    lp.add_row(
                        format!("conduct.lo.{}.{b}", u.id),
                        vec![(cv, 1.0)],
                        Sense::Ge,
                        c0 - x,
                    );
                }
            }
        }
        Strategy::ImpactAware => {
            for (k, bus) in s.network.buses.iter().enumerate() {
                let l0 = refs.bus_prices[k];
                let y = th.impact[k];
                lp.add_row(
                    format!("impact.hi.{}", bus.id),
                    vec![(lmp[k], 1.0)],
                    Sense::Le,
                    l0 + y,
                );
                lp.add_row(
                    format!("impact.lo.{}", bus.id),
                    vec![(lmp[k], 1.0)],
                    Sense::Ge,
                    l0 - y,
                );
            }
        }
    }

    // Tie-break penalty variables and rows over identical-cost unit pairs.
    let mut tie_vars = Vec::new();
    for (i, j) in true_cost_tied_pairs(s) {
        let cap_i = s.units[i].capacity_mw();
        let cap_j = s.units[j].capacity_mw();
        let t_hi = lp.add_var(
            format!("tb1.{}.{}", s.units[i].id, s.units[j].id),
            0.0,
            f64::INFINITY,
            s.tie_break_penalty,
        );
        let t_lo = lp.add_var(
            format!("tb2.{}.{}", s.units[i].id, s.units[j].id),
            0.0,
            f64::INFINITY,
            s.tie_break_penalty,
        );
        let mut r1 = vec![(t_hi, 1.0)];
        let mut r2 = vec![(t_lo, 1.0)];
        for &gv in &g[i] {
            r1.push((gv, cap_j));
            r2.push((gv, -cap_j));
        }
        for &gv in &g[j] {
            r1.push((gv, -cap_i));
            r2.push((gv, cap_i));
        }
        lp.add_row(format!("tiehi.{i}.{j}"), r1, Sense::Ge, 0.0);
        lp.add_row(format!("tielo.{i}.{j}"), r2, Sense::Ge, 0.0);
        tie_vars.push((i, j, t_hi, t_lo));
    }

    let layout = MpecLayout {
        offer_price,
        g,
        p,
        theta,
        lmp,
        flow_def_dual,
        ref_angle_dual,
        cap_lower_dual,
        cap_upper_dual,
        flow_lower_dual,
        flow_upper_dual,
        angle_lower_dual,
        angle_upper_dual,
        tie_vars,
        reference_bus,
    };
    Ok((MilpProblem { lp, sos1 }, layout))
}

/// Builds the single-level bid MILP (variable map discarded).
pub fn build_mpec(
    s: &Scenario,
    strategy: Strategy,
    refs: &ReferenceLevels,
    th: &Thresholds,
) -> Result<MilpProblem> {
    Ok(build_mpec_with_layout(s, strategy, refs, th)?.0)
}

// ─── solution reconstruction and checks ──────────────────────────────────────

/// Offers encoded in an MPEC solution point: strategic prices from the
/// decision variables, competitor prices as submitted.
pub fn offers_at(s: &Scenario, layout: &MpecLayout, x: &[f64]) -> OfferSet {
    let mut prices: Vec<Vec<f64>> = s
        .units
        .iter()
        .enumerate()
        .map(|(i, u)| {
            u.blocks
                .iter()
                .enumerate()
                .map(|(b, blk)| match layout.offer_price[i][b] {
                    Some(v) => x[v].clamp(0.0, s.offer_cap),
                    None => blk.offered_price,
                })
                .collect()
        })
        .collect();
    // The monotonicity rows hold only to the LP feasibility tolerance;
    // project decision rows back onto the nondecreasing set so the curve
    // validates. The move is bounded by the solver residual (guarded in
    // `solve_bid_with`), far below any money tolerance.
    for (i, row) in prices.iter_mut().enumerate() {
        if layout.offer_price[i].iter().all(Option::is_some) && !row.is_empty() {
            for b in (0..row.len() - 1).rev() {
                row[b] = row[b].min(row[b + 1]);
            }
        }
    }
    OfferSet { prices }
}

/// Assembles the anticipated market outcome from an MPEC solution point.
pub fn predicted_result(s: &Scenario, layout: &MpecLayout, x: &[f64]) -> ClearingResult {
    let offers = offers_at(s, layout, x);
    let dispatch: Vec<Vec<f64>> = layout
        .g
        .iter()
        .map(|row| row.iter().map(|&v| x[v]).collect())
        .collect();
    let unit_dispatch: Vec<f64> = dispatch.iter().map(|d| d.iter().sum()).collect();
    let lmp: Vec<f64> = layout.lmp.iter().map(|&v| x[v]).collect();
    let total_offered_cost = s
        .units
        .iter()
        .enumerate()
        .map(|(i, u)| {
            (0..u.blocks.len())
                .map(|b| offers.prices[i][b] * dispatch[i][b])
                .sum::<f64>()
        })
        .sum();
    let total_true_cost = s
        .units
        .iter()
        .enumerate()
        .map(|(i, u)| {
            u.blocks
                .iter()
                .enumerate()
                .map(|(b, blk)| blk.true_cost * dispatch[i][b])
                .sum::<f64>()
        })
        .sum();
    let profits: Vec<f64> = s
        .units
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let bus = s.bus_index(u.bus).expect("validated");
            u.blocks
                .iter()
                .enumerate()
                .map(|(b, blk)| (lmp[bus] - blk.true_cost) * dispatch[i][b])
                .sum::<f64>()
        })
        .collect();

    ClearingResult {
        dispatch,
        unit_dispatch,
        lmp,
        flows: layout.p.iter().map(|&v| x[v]).collect(),
        angles: layout.theta.iter().map(|&v| x[v]).collect(),
        flow_def_duals: layout.flow_def_dual.iter().map(|&v| x[v]).collect(),
        flow_upper_duals: layout.flow_upper_dual.iter().map(|&v| x[v]).collect(),
        flow_lower_duals: layout.flow_lower_dual.iter().map(|&v| x[v]).collect(),
        capacity_upper_duals: layout
            .cap_upper_dual
            .iter()
            .map(|row| row.iter().map(|&v| x[v]).collect())
            .collect(),
        capacity_lower_duals: layout
            .cap_lower_dual
            .iter()
            .map(|row| row.iter().map(|&v| x[v]).collect())
            .collect(),
        angle_upper_duals: layout
            .angle_upper_dual
            .iter()
            .map(|slot| slot.map(|v| x[v]).unwrap_or(0.0))
            .collect(),
        angle_lower_duals: layout
            .angle_lower_dual
            .iter()
            .map(|slot| slot.map(|v| x[v]).unwrap_or(0.0))
            .collect(),
        total_offered_cost,
        total_true_cost,
        profits,
    }
}

/// Worst optimality-condition residual of an MPEC point: inner primal
/// feasibility, stationarity rows recomputed nonlinearly, and every
/// complementarity product (scaled by factor magnitude).
pub fn mpec_kkt_residual(s: &Scenario, layout: &MpecLayout, x: &[f64]) -> f64 {
    let offers = offers_at(s, layout, x);
    let r = predicted_result(s, layout, x);
    let mut worst = crate::clearing::physical_residual(s, &r).max(0.0);

    let comp = |dual: f64, slack: f64| (dual * slack).abs() / (1.0 + dual.abs().max(slack.abs()));

    for (i, u) in s.units.iter().enumerate() {
        let bus = s.bus_index(u.bus).expect("validated");
        for (b, blk) in u.blocks.iter().enumerate() {
            let stat = offers.prices[i][b] - r.lmp[bus] - r.capacity_lower_duals[i][b]
                + r.capacity_upper_duals[i][b];
            worst = worst.max(stat.abs());
            worst = worst.max(comp(r.capacity_lower_duals[i][b], r.dispatch[i][b]));
            worst = worst.max(comp(
                r.capacity_upper_duals[i][b],
                blk.capacity_mw - r.dispatch[i][b],
            ));
        }
    }
    for (e, br) in s.network.branches.iter().enumerate() {
        let from = s.bus_index(br.from_bus).expect("validated");
        let to = s.bus_index(br.to_bus).expect("validated");
        let stat = r.lmp[from] - r.lmp[to] - r.flow_def_duals[e] - r.flow_lower_duals[e]
            + r.flow_upper_duals[e];
        worst = worst.max(stat.abs());
        worst = worst.max(comp(r.flow_lower_duals[e], r.flows[e] + br.limit_mw));
        worst = worst.max(comp(r.flow_upper_duals[e], br.limit_mw - r.flows[e]));
    }
    for (k, bus) in s.network.buses.iter().enumerate() {
        let mut stat = 0.0;
        for (e, br) in s.network.branches.iter().enumerate() {
            if br.from_bus == bus.id {
                stat += br.susceptance * r.flow_def_duals[e];
            } else if br.to_bus == bus.id {
                stat -= br.susceptance * r.flow_def_duals[e];
            }
        }
        if k == layout.reference_bus {
            stat += x[layout.ref_angle_dual];
        } else {
            stat += r.angle_upper_duals[k] - r.angle_lower_duals[k];
            let bound = crate::clearing::ANGLE_BOUND;
            worst = worst.max(comp(r.angle_lower_duals[k], r.angles[k] + bound));
            worst = worst.max(comp(r.angle_upper_duals[k], bound - r.angles[k]));
        }
        worst = worst.max(stat.abs());
    }
    worst
}

/// Gap between the directly computed strategic revenue Σ price * dispatch
/// and its linear dual-identity expression at an MPEC point (relative).
pub fn strong_duality_gap(s: &Scenario, layout: &MpecLayout, x: &[f64]) -> f64 {
    let r = predicted_result(s, layout, x);
    let strategic = s.units_of(&s.strategic_owner);
    let direct: f64 = strategic
        .iter()
        .map(|&i| {
            let bus = s.bus_index(s.units[i].bus).expect("validated");
            r.lmp[bus] * r.unit_dispatch[i]
        })
        .sum();

    let mut linear: f64 = s
        .network
        .buses
        .iter()
        .enumerate()
        .map(|(k, b)| r.lmp[k] * b.load_mw)
        .sum();
    for (i, u) in s.units.iter().enumerate() {
        if u.owner == s.strategic_owner {
            continue;
        }
        for (b, blk) in u.blocks.iter().enumerate() {
            linear -= blk.offered_price * r.dispatch[i][b];
            linear -= r.capacity_upper_duals[i][b] * blk.capacity_mw;
        }
    }
    for (e, br) in s.network.branches.iter().enumerate() {
        linear -= (r.flow_lower_duals[e] + r.flow_upper_duals[e]) * br.limit_mw;
    }
    for k in 0..s.network.buses.len() {
        linear -=
            (r.angle_lower_duals[k] + r.angle_upper_duals[k]) * crate::clearing::ANGLE_BOUND;
    }
    (direct - linear).abs() / (1.0 + direct.abs())
}

// ─── solve ───────────────────────────────────────────────────────────────────

/// Optimizes the strategic owner's offers under the scenario's own
/// threshold fractions.
pub fn solve_bid(s: &Scenario, strategy: Strategy) -> Result<BilevelSolution> {
    let refs = ReferenceLevels::perfect(s)?;
    let th = Thresholds::from_scenario(s, &refs);
    solve_bid_with(s, strategy, &refs, &th)
}

/// Optimizes the strategic owner's offers under explicit references and
/// thresholds (the pipeline consulted by the undercut step uses the same).
pub fn solve_bid_with(
    s: &Scenario,
    strategy: Strategy,
    refs: &ReferenceLevels,
    th: &Thresholds,
) -> Result<BilevelSolution> {
    let (problem, layout) = build_mpec_with_layout(s, strategy, refs, th)?;
    let milp = solve_milp(&problem)?;
    match milp.status {
        MilpStatus::Optimal => {}
        MilpStatus::Infeasible => {
            return Err(Error::Infeasible(format!(
                "bid problem for strategy {strategy} has no feasible point"
            )))
        }
        MilpStatus::Unbounded => {
            return Err(Error::Unbounded(format!(
                "bid problem for strategy {strategy} is unbounded"
            )))
        }
        MilpStatus::NodeLimit => {
            return Err(Error::Numerical(format!(
                "bid problem for strategy {strategy} hit the node limit (gap {:.3e})",
                milp.gap
            )))
        }
    }

    let resid = mpec_kkt_residual(s, &layout, &milp.x);
    if resid > KKT_TOL {
        return Err(Error::Numerical(format!(
            "bid solution violates optimality conditions (residual {resid:.3e})"
        )));
    }

    // Raw price-curve inversions must be solver roundoff, nothing larger.
    let mut mono_resid = 0.0f64;
    for row in &layout.offer_price {
        for pair in row.windows(2) {
            if let (Some(lo), Some(hi)) = (pair[0], pair[1]) {
                mono_resid = mono_resid.max(milp.x[lo] - milp.x[hi]);
            }
        }
    }
    if mono_resid > 1e-5 {
        return Err(Error::Numerical(format!(
            "bid solution breaks offer-curve order by {mono_resid:.3e}"
        )));
    }

    let offers = offers_at(s, &layout, &milp.x);
    let predicted = predicted_result(s, &layout, &milp.x);
    let predicted_profit = owner_profit(s, &s.strategic_owner, &predicted);

    let mut solution = BilevelSolution {
        strategy,
        offers,
        predicted,
        predicted_profit,
        nodes: milp.nodes,
        gap: milp.gap,
        undercut_applied: false,
    };

    if strategy != Strategy::NonStrategic {
        apply_undercut(s, strategy, refs, th, &mut solution)?;
    }
    Ok(solution)
}

/// Whether an offer set lies inside the rows the strategy imposes on
/// itself: offer caps always, conduct widths for conduct-aware owners,
/// anticipated-price widths (via a clearing) for impact-aware owners.
/// Non-strategic owners only accept reference offers.
pub fn strategy_allows(
    s: &Scenario,
    strategy: Strategy,
    refs: &ReferenceLevels,
    th: &Thresholds,
    offers: &OfferSet,
) -> Result<bool> {
    let strategic_units = s.units_of(&s.strategic_owner);
    for &i in &strategic_units {
        for b in 0..offers.prices[i].len() {
            let price = offers.prices[i][b];
            if !(0.0 - 1e-9..=s.offer_cap + 1e-9).contains(&price) {
                return Ok(false);
            }
            match strategy {
                Strategy::NonStrategic => {
                    if (price - refs.block_prices[i][b]).abs() > TIE_MATCH_TOL {
                        return Ok(false);
                    }
                }
                Strategy::ConductAware => {
                    if (price - refs.block_prices[i][b]).abs() > th.conduct[i][b] + 1e-9 {
                        return Ok(false);
                    }
                }
                _ => {}
            }
        }
    }
    if strategy == Strategy::ImpactAware {
        let anticipated = clear(s, offers, true)?;
        for (k, (&l, &l0)) in anticipated.lmp.iter().zip(&refs.bus_prices).enumerate() {
            if (l - l0).abs() > th.impact[k] + 1e-9 {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Adopts `price - step` on strategic blocks tied with a competitor price
/// when that strictly improves realized post-pipeline profit and stays
/// within the strategy's own rows.
fn apply_undercut(
    s: &Scenario,
    strategy: Strategy,
    refs: &ReferenceLevels,
    th: &Thresholds,
    solution: &mut BilevelSolution,
) -> Result<()> {
    if s.epsilon_price <= 0.0 {
        return Ok(());
    }
    let strategic_units = s.units_of(&s.strategic_owner);
    let competitor_prices: Vec<f64> = s
        .units
        .iter()
        .enumerate()
        .filter(|(i, _)| !strategic_units.contains(i))
        .flat_map(|(i, _)| solution.offers.prices[i].iter().copied())
        .collect();

    let mut candidate = solution.offers.clone();
    let mut any = false;
    for &i in &strategic_units {
        for b in 0..candidate.prices[i].len() {
            let price = candidate.prices[i][b];
            let tied = competitor_prices
                .iter()
                .any(|&cp| (cp - price).abs() <= UNDERCUT_MATCH_TOL);
            if tied && price > s.epsilon_price {
                candidate.prices[i][b] = strict_inequality_offer(price, s);
                any = true;
            }
        }
    }
    if !any || candidate.validate(s).is_err() {
        return Ok(());
    }
    // The undercut must remain feasible for the strategy itself.
    if !strategy_allows(s, strategy, refs, th, &candidate)? {
        return Ok(());
    }

    let realized_now =
        owner_profit(s, &s.strategic_owner, &run_pipeline_with(s, &solution.offers, refs, th)?.after);
    let realized_cut =
        owner_profit(s, &s.strategic_owner, &run_pipeline_with(s, &candidate, refs, th)?.after);
    if realized_cut > realized_now + 1e-9 {
        solution.predicted = clear(s, &candidate, true)?;
        solution.predicted_profit = owner_profit(s, &s.strategic_owner, &solution.predicted);
        solution.offers = candidate;
        solution.undercut_applied = true;
    }
    Ok(())
}

/// Post-mitigation profit of the strategic owner for each threshold
/// fraction (applied to both screens).
pub fn threshold_sweep(
    s: &Scenario,
    strategy: Strategy,
    fractions: &[f64],
) -> Result<Vec<SweepPoint>> {
    let refs = ReferenceLevels::perfect(s)?;
    fractions
        .par_iter()
        .map(|&fraction| {
            if !(fraction > 0.0) {
                return Err(Error::Validation(format!(
                    "threshold fraction must be positive, got {fraction}"
                )));
            }
            let th = Thresholds::from_fractions(&refs, fraction, fraction);
            let bid = solve_bid_with(s, strategy, &refs, &th)?;
            let report = run_pipeline_with(s, &bid.offers, &refs, &th)?;
            Ok(SweepPoint {
                fraction,
                predicted_profit: bid.predicted_profit,
                realized_profit: owner_profit(s, &s.strategic_owner, &report.after),
            })
        })
        .collect()
}
