//! Operator-side market clearing.
//!
//! [`clear`] dispatches all offered blocks at least offered cost subject to
//! DC power flow: nodal balance, flow-angle coupling, line limits, block
//! capacities, and angle bounds, with the lowest-id bus fixed as the angle
//! reference. Locational marginal prices are the balance-row duals; the
//! remaining duals (flow definition rows, line/capacity/angle bounds) are
//! extracted alongside so downstream consumers can verify optimality
//! conditions or rebuild them inside larger programs.
//!
//! Tie-breaking: when `tie_break` is set and several units submit identical
//! offer curves, a second LP minimizes pairwise dispatch disproportion
//! among those units while pinning total offered cost to the stage-1
//! optimum. Prices and duals always come from stage 1 — the penalty stage
//! only selects among cost-equal dispatches, so it must not perturb the
//! price vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{solve_lp, LinearProgram, LpStatus, Sense};
use crate::network::Scenario;

/// Bound on |angle| at every non-reference bus, radians.
pub const ANGLE_BOUND: f64 = std::f64::consts::PI;
/// Two offered prices closer than this count as tied.
pub const PRICE_TIE_TOL: f64 = 1e-9;
/// Stage-2 slack on the stage-1 optimal cost (scaled by cost magnitude).
/// Must exceed the simplex's cost roundoff (~1e-12 relative) but stay far
/// below any price gap times a block capacity: every dollar of slack is
/// offered cost stage 2 may trade away for a smoother tie split, shifting
/// the dispatch (and its true cost) by slack / price-gap megawatts.
const COST_PIN_TOL: f64 = 1e-11;

// ─── offers ──────────────────────────────────────────────────────────────────

/// Submitted block prices, aligned with `scenario.units` by position
/// (quantities are always the nominal block capacities).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfferSet {
    pub prices: Vec<Vec<f64>>,
}

impl OfferSet {
    /// Offers equal to true block costs.
    pub fn truthful(s: &Scenario) -> Self {
        OfferSet {
            prices: s
                .units
                .iter()
                .map(|u| u.blocks.iter().map(|b| b.true_cost).collect())
                .collect(),
        }
    }

    /// Offers as recorded in the scenario's `offered_price` fields.
    pub fn from_scenario(s: &Scenario) -> Self {
        OfferSet {
            prices: s
                .units
                .iter()
                .map(|u| u.blocks.iter().map(|b| b.offered_price).collect())
                .collect(),
        }
    }

    /// Copy with one block price replaced.
    pub fn with_price(&self, unit: usize, block: usize, price: f64) -> Self {
        let mut out = self.clone();
        out.prices[unit][block] = price;
        out
    }

    /// Copy with every block of `unit` set to `price`.
    pub fn with_unit_price(&self, unit: usize, price: f64) -> Self {
        let mut out = self.clone();
        for p in out.prices[unit].iter_mut() {
            *p = price;
        }
        out
    }

    /// Shape and cap checks against a scenario. Replacement curves built
    /// by the mitigation screens interleave reset blocks with kept ones,
    /// so they satisfy this but not necessarily [`Self::validate`].
    pub fn validate_shape(&self, s: &Scenario) -> Result<()> {
        if self.prices.len() != s.units.len() {
            return Err(Error::Validation(format!(
                "offer set covers {} units, scenario has {}",
                self.prices.len(),
                s.units.len()
            )));
        }
        for (i, u) in s.units.iter().enumerate() {
            if self.prices[i].len() != u.blocks.len() {
                return Err(Error::Validation(format!(
                    "unit {}: offer has {} blocks, unit has {}",
                    u.id,
                    self.prices[i].len(),
                    u.blocks.len()
                )));
            }
            for (b, &p) in self.prices[i].iter().enumerate() {
                if !p.is_finite() || p < 0.0 || p > s.offer_cap + 1e-9 {
                    return Err(Error::Validation(format!(
                        "unit {} block {b}: offered price {p} outside [0, {}]",
                        u.id, s.offer_cap
                    )));
                }
            }
        }
        Ok(())
    }

    /// Full submission-format checks: shape, caps, and per-unit price
    /// monotonicity.
    pub fn validate(&self, s: &Scenario) -> Result<()> {
        self.validate_shape(s)?;
        for (i, u) in s.units.iter().enumerate() {
            let mut prev = 0.0;
            for (b, &p) in self.prices[i].iter().enumerate() {
                if b > 0 && p < prev - 1e-9 {
                    return Err(Error::Validation(format!(
                        "unit {} block {b}: offered prices must be nondecreasing",
                        u.id
                    )));
                }
                prev = p;
            }
        }
        Ok(())
    }
}

// ─── result ──────────────────────────────────────────────────────────────────

/// Dispatch, prices, and the full dual set of one clearing.
#[derive(Debug, Clone)]
pub struct ClearingResult {
    /// Block dispatch, MW, `[unit][block]`.
    pub dispatch: Vec<Vec<f64>>,
    /// Per-unit total dispatch, MW.
    pub unit_dispatch: Vec<f64>,
    /// Locational marginal price per bus, $/MWh (balance-row duals).
    pub lmp: Vec<f64>,
    /// Branch flows, MW, oriented from `from_bus` to `to_bus`.
    pub flows: Vec<f64>,
    /// Bus angles, radians (reference bus pinned to 0).
    pub angles: Vec<f64>,
    /// Duals of the flow definition equalities, per branch.
    pub flow_def_duals: Vec<f64>,
    /// Duals of the upper/lower flow limits, per branch (both ≥ 0).
    pub flow_upper_duals: Vec<f64>,
    pub flow_lower_duals: Vec<f64>,
    /// Duals of block capacity upper/lower bounds, `[unit][block]` (≥ 0).
    pub capacity_upper_duals: Vec<Vec<f64>>,
    pub capacity_lower_duals: Vec<Vec<f64>>,
    /// Duals of the angle bounds, per bus (≥ 0; zero at the reference).
    pub angle_upper_duals: Vec<f64>,
    pub angle_lower_duals: Vec<f64>,
    /// Objective of the dispatch LP: offered cost of the dispatch, $.
    pub total_offered_cost: f64,
    /// Same dispatch priced at true block costs, $.
    pub total_true_cost: f64,
    /// Per-unit profit at the unit's bus price over true costs, $.
    pub profits: Vec<f64>,
}

impl ClearingResult {
    /// CSV rows `unit,block,dispatch_mw,lmp,profit`; profit is the unit
    /// total, repeated on each of its block rows. Fixed six-decimal
    /// formatting keeps output byte-stable across runs.
    pub fn to_csv(&self, s: &Scenario) -> String {
        let mut out = String::from("unit,block,dispatch_mw,lmp,profit\n");
        for (i, u) in s.units.iter().enumerate() {
            let bus = s.bus_index(u.bus).expect("validated bus");
            for b in 0..u.blocks.len() {
                out.push_str(&format!(
                    "{},{},{:.6},{:.6},{:.6}\n",
                    u.id, b, self.dispatch[i][b], self.lmp[bus], self.profits[i]
                ));
            }
        }
        out
    }
}

// ─── clearing ────────────────────────────────────────────────────────────────

struct DispatchLayout {
    /// g variable index per `[unit][block]`.
    g: Vec<Vec<usize>>,
    /// Flow variable per branch.
    p: Vec<usize>,
    /// Angle variable per bus.
    theta: Vec<usize>,
    /// Balance row per bus.
    balance: Vec<usize>,
    /// Flow definition row per branch.
    flow_def: Vec<usize>,
    reference_bus: usize,
}

/// Builds the dispatch LP for the given offers. Bounds on blocks, flows,
/// and angles are variable bounds; their duals are recovered from reduced
/// costs on extraction.
fn build_dispatch_lp(s: &Scenario, offers: &OfferSet) -> (LinearProgram, DispatchLayout) {
    let mut lp = LinearProgram::default();
    let nb = s.network.buses.len();

    let reference_bus = s
        .network
        .buses
        .iter()
        .enumerate()
        .min_by_key(|(_, b)| b.id)
        .map(|(k, _)| k)
        .expect("validated: at least one bus");

    let g: Vec<Vec<usize>> = s
        .units
        .iter()
        .enumerate()
        .map(|(i, u)| {
            u.blocks
                .iter()
                .enumerate()
                .map(|(b, blk)| {
                    lp.add_var(
                        format!("g.{}.{b}", u.id),
                        0.0,
                        blk.capacity_mw,
                        offers.prices[i][b],
                    )
                })
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
                (-ANGLE_BOUND, ANGLE_BOUND)
            };
            lp.add_var(format!("theta.{}", b.id), lo, hi, 0.0)
        })
        .collect();

    // Nodal balance: generation plus inflows minus outflows equals load.
    let mut balance = Vec::with_capacity(nb);
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
        balance.push(lp.add_row(format!("balance.{}", bus.id), terms, Sense::Eq, bus.load_mw));
    }

    // Flow definition: p = susceptance * (angle_from - angle_to).
    let mut flow_def = Vec::with_capacity(s.network.branches.len());
    for (e, br) in s.network.branches.iter().enumerate() {
        let from = s.bus_index(br.from_bus).expect("validated");
        let to = s.bus_index(br.to_bus).expect("validated");
        flow_def.push(lp.add_row(
            format!("flowdef.{}.{}", br.from_bus, br.to_bus),
            vec![
                (p[e], 1.0),
                (theta[from], -br.susceptance),
                (theta[to], br.susceptance),
            ],
            Sense::Eq,
            0.0,
        ));
    }

    (
        lp,
        DispatchLayout {
            g,
            p,
            theta,
            balance,
            flow_def,
            reference_bus,
        },
    )
}

/// Unit pairs with identical offered curves (same block count, prices equal
/// within [`PRICE_TIE_TOL`]), eligible for proportional tie-breaking.
pub fn tied_pairs(s: &Scenario, offers: &OfferSet) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..s.units.len() {
        for j in i + 1..s.units.len() {
            if offers.prices[i].len() != offers.prices[j].len() {
                continue;
            }
            let same = offers.prices[i]
                .iter()
                .zip(&offers.prices[j])
                .all(|(a, b)| (a - b).abs() <= PRICE_TIE_TOL);
            if same {
                out.push((i, j));
            }
        }
    }
    out
}

/// Clears the market. With `tie_break`, identically-priced units are
/// dispatched proportionally to capacity among cost-optimal solutions.
pub fn clear(s: &Scenario, offers: &OfferSet, tie_break: bool) -> Result<ClearingResult> {
    offers.validate(s)?;
    clear_validated(s, offers, tie_break)
}

/// Clears an operator-constructed offer set: shape and caps are checked,
/// but the curve need not be nondecreasing (mitigation resets interleave
/// reference prices with kept submissions). The dispatch program treats
/// blocks independently, so ordering is not required for correctness.
pub fn clear_replacement(
    s: &Scenario,
    offers: &OfferSet,
    tie_break: bool,
) -> Result<ClearingResult> {
    offers.validate_shape(s)?;
    clear_validated(s, offers, tie_break)
}

fn clear_validated(s: &Scenario, offers: &OfferSet, tie_break: bool) -> Result<ClearingResult> {
    let (lp, layout) = build_dispatch_lp(s, offers);
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return Err(Error::Infeasible(format!(
                "no dispatch serves {} MW of load ({} MW of capacity, network limits apply)",
                s.total_load(),
                s.total_capacity()
            )))
        }
        LpStatus::Unbounded => {
            return Err(Error::Numerical("dispatch problem reported unbounded".into()))
        }
    }

    let mut x = sol.x.clone();
    if tie_break {
        let pairs = tied_pairs(s, offers);
        if !pairs.is_empty() {
            x = rebalance_ties(s, offers, &lp, &layout, sol.objective, &pairs)?;
        }
    }
    Ok(extract_result(s, offers, &layout, &x, &sol))
}

/// Stage-2 LP: among dispatches with stage-1 cost, minimize pairwise
/// capacity-weighted dispatch differences for tied units. Returns the
/// stage-2 primal point (dispatch/flows/angles); duals stay stage-1.
fn rebalance_ties(
    s: &Scenario,
    offers: &OfferSet,
    stage1: &LinearProgram,
    layout: &DispatchLayout,
    optimal_cost: f64,
    pairs: &[(usize, usize)],
) -> Result<Vec<f64>> {
    let mut lp = stage1.clone();
    let n_orig = lp.num_vars();
    // Zero the cost row out of the objective; replace with penalty terms.
    for c in lp.objective.iter_mut() {
        *c = 0.0;
    }

    // Pin offered cost to the stage-1 optimum.
    let cost_terms: Vec<(usize, f64)> = s
        .units
        .iter()
        .enumerate()
        .flat_map(|(i, u)| {
            (0..u.blocks.len()).map(move |b| (layout.g[i][b], offers.prices[i][b]))
        })
        .filter(|&(_, c)| c != 0.0)
        .collect();
    lp.add_row(
        "cost_pin",
        cost_terms,
        Sense::Le,
        optimal_cost + COST_PIN_TOL * (1.0 + optimal_cost.abs()),
    );

    for &(i, j) in pairs {
        let cap_i = s.units[i].capacity_mw();
        let cap_j = s.units[j].capacity_mw();
        let t1 = lp.add_var(
            format!("tb1.{}.{}", s.units[i].id, s.units[j].id),
            0.0,
            f64::INFINITY,
            1.0,
        );
        let t2 = lp.add_var(
            format!("tb2.{}.{}", s.units[i].id, s.units[j].id),
            0.0,
            f64::INFINITY,
            1.0,
        );
        // t1 >= cap_i * g_j - cap_j * g_i  and symmetric for t2: both zero
        // exactly when dispatch is proportional to capacity.
        let mut r1 = vec![(t1, 1.0)];
        let mut r2 = vec![(t2, 1.0)];
        for &gv in &layout.g[i] {
            r1.push((gv, cap_j));
            r2.push((gv, -cap_j));
        }
        for &gv in &layout.g[j] {
            r1.push((gv, -cap_i));
            r2.push((gv, cap_i));
        }
        lp.add_row(format!("tiehi.{i}.{j}"), r1, Sense::Ge, 0.0);
        lp.add_row(format!("tielo.{i}.{j}"), r2, Sense::Ge, 0.0);
    }

    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Numerical(
            "tie-break stage must stay feasible at the pinned optimal cost".into(),
        ));
    }
    Ok(sol.x[..n_orig].to_vec())
}

/// Maps the LP primal/dual vectors back to network quantities.
fn extract_result(
    s: &Scenario,
    offers: &OfferSet,
    layout: &DispatchLayout,
    x: &[f64],
    sol: &crate::lp::LpSolution,
) -> ClearingResult {
    let dispatch: Vec<Vec<f64>> = layout
        .g
        .iter()
        .map(|blocks| blocks.iter().map(|&v| x[v]).collect())
        .collect();
    let unit_dispatch: Vec<f64> = dispatch.iter().map(|d| d.iter().sum()).collect();
    let lmp: Vec<f64> = layout.balance.iter().map(|&r| sol.duals[r]).collect();
    let flows: Vec<f64> = layout.p.iter().map(|&v| x[v]).collect();
    let angles: Vec<f64> = layout.theta.iter().map(|&v| x[v]).collect();
    let flow_def_duals: Vec<f64> = layout.flow_def.iter().map(|&r| sol.duals[r]).collect();

    // Bound duals from reduced costs: for a minimization, a variable at its
    // lower bound has reduced cost >= 0 (the lower-bound multiplier), one at
    // its upper bound has reduced cost <= 0 (negated upper multiplier).
    let lower_dual = |v: usize| sol.reduced_costs[v].max(0.0);
    let upper_dual = |v: usize| (-sol.reduced_costs[v]).max(0.0);

    let capacity_lower_duals: Vec<Vec<f64>> = layout
        .g
        .iter()
        .map(|blocks| blocks.iter().map(|&v| lower_dual(v)).collect())
        .collect();
    let capacity_upper_duals: Vec<Vec<f64>> = layout
        .g
        .iter()
        .map(|blocks| blocks.iter().map(|&v| upper_dual(v)).collect())
        .collect();
    let flow_lower_duals: Vec<f64> = layout.p.iter().map(|&v| lower_dual(v)).collect();
    let flow_upper_duals: Vec<f64> = layout.p.iter().map(|&v| upper_dual(v)).collect();
    let angle_lower_duals: Vec<f64> = layout
        .theta
        .iter()
        .enumerate()
        .map(|(k, &v)| if k == layout.reference_bus { 0.0 } else { lower_dual(v) })
        .collect();
    let angle_upper_duals: Vec<f64> = layout
        .theta
        .iter()
        .enumerate()
        .map(|(k, &v)| if k == layout.reference_bus { 0.0 } else { upper_dual(v) })
        .collect();

    let total_offered_cost: f64 = s
        .units
        .iter()
        .enumerate()
        .map(|(i, u)| {
            (0..u.blocks.len())
                .map(|b| offers.prices[i][b] * dispatch[i][b])
                .sum::<f64>()
        })
        .sum();
    let total_true_cost: f64 = s
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
        flows,
        angles,
        flow_def_duals,
        flow_upper_duals,
        flow_lower_duals,
        capacity_upper_duals,
        capacity_lower_duals,
        angle_upper_duals,
        angle_lower_duals,
        total_offered_cost,
        total_true_cost,
        profits,
    }
}

/// LMPs under truthful offers: the operator's estimate of competitive
/// prices, used as the price reference for mitigation and bidding.
pub fn reference_prices(s: &Scenario) -> Result<Vec<f64>> {
    Ok(clear(s, &OfferSet::truthful(s), true)?.lmp)
}

/// Physical-consistency residuals of a clearing result: nodal balance,
/// flow-angle coupling, and all primal limits. Returns the worst residual.
pub fn physical_residual(s: &Scenario, r: &ClearingResult) -> f64 {
    let mut worst: f64 = 0.0;
    for (k, bus) in s.network.buses.iter().enumerate() {
        let gen: f64 = s
            .units
            .iter()
            .enumerate()
            .filter(|(_, u)| u.bus == bus.id)
            .map(|(i, _)| r.unit_dispatch[i])
            .sum();
        let mut net_in = 0.0;
        for (e, br) in s.network.branches.iter().enumerate() {
            if br.to_bus == bus.id {
                net_in += r.flows[e];
            } else if br.from_bus == bus.id {
                net_in -= r.flows[e];
            }
        }
        worst = worst.max((gen + net_in - bus.load_mw).abs());
        worst = worst.max(r.angles[k].abs() - ANGLE_BOUND);
    }
    for (e, br) in s.network.branches.iter().enumerate() {
        let from = s.bus_index(br.from_bus).expect("validated");
        let to = s.bus_index(br.to_bus).expect("validated");
        let def = r.flows[e] - br.susceptance * (r.angles[from] - r.angles[to]);
        worst = worst.max(def.abs());
        worst = worst.max(r.flows[e].abs() - br.limit_mw);
    }
    for (i, u) in s.units.iter().enumerate() {
        for (b, blk) in u.blocks.iter().enumerate() {
            worst = worst.max(-r.dispatch[i][b]);
            worst = worst.max(r.dispatch[i][b] - blk.capacity_mw);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::two_bus_scenario;

    const TOL: f64 = 1e-6;

    fn homogeneous() -> Scenario {
        two_bus_scenario((20.0, 20.0), (30.0, 30.0), (0.0, 50.0), 100.0)
    }

    #[test]
    fn truthful_tie_splits_evenly() {
        let s = homogeneous();
        let r = clear(&s, &OfferSet::truthful(&s), true).unwrap();
        assert!((r.unit_dispatch[0] - 25.0).abs() < TOL);
        assert!((r.unit_dispatch[1] - 25.0).abs() < TOL);
        assert!((r.lmp[0] - 20.0).abs() < TOL);
        assert!((r.lmp[1] - 20.0).abs() < TOL);
        assert!(r.profits[0].abs() < TOL && r.profits[1].abs() < TOL);
        assert!(physical_residual(&s, &r) < TOL);
    }

    #[test]
    fn high_offer_sets_price_at_both_buses() {
        let s = homogeneous();
        let offers = OfferSet::truthful(&s).with_unit_price(0, 100.0);
        let r = clear(&s, &offers, true).unwrap();
        assert!((r.unit_dispatch[0] - 20.0).abs() < TOL);
        assert!((r.unit_dispatch[1] - 30.0).abs() < TOL);
        assert!((r.lmp[0] - 100.0).abs() < TOL);
        assert!((r.lmp[1] - 100.0).abs() < TOL);
        assert!((r.profits[0] - 1600.0).abs() < TOL);
        assert!((r.profits[1] - 2400.0).abs() < TOL);
    }

    #[test]
    fn congested_line_separates_prices() {
        // Load at the strategic bus, 23 MW line: the remote unit is capped
        // by the line, the local expensive offer sets the local price.
        let s = two_bus_scenario((20.0, 20.0), (30.0, 30.0), (50.0, 0.0), 23.0);
        let offers = OfferSet::truthful(&s).with_unit_price(0, 40.0);
        let r = clear(&s, &offers, true).unwrap();
        assert!((r.unit_dispatch[0] - 27.0).abs() < TOL);
        assert!((r.unit_dispatch[1] - 23.0).abs() < TOL);
        assert!((r.lmp[0] - 40.0).abs() < TOL);
        assert!((r.lmp[1] - 20.0).abs() < TOL);
        assert!((r.profits[0] - 540.0).abs() < TOL);
        // Line binds toward the load bus; its lower flow bound carries the
        // congestion rent.
        assert!((r.flows[0] + 23.0).abs() < TOL);
        assert!(r.flow_lower_duals[0] > 1.0);
    }

    #[test]
    fn congested_truthful_tie_respects_limit() {
        let s = two_bus_scenario((20.0, 20.0), (30.0, 30.0), (50.0, 0.0), 23.0);
        let r = clear(&s, &OfferSet::truthful(&s), true).unwrap();
        assert!((r.unit_dispatch[0] - 27.0).abs() < TOL);
        assert!((r.unit_dispatch[1] - 23.0).abs() < TOL);
        assert!((r.lmp[0] - 20.0).abs() < TOL);
        assert!((r.lmp[1] - 20.0).abs() < TOL);
    }

    #[test]
    fn zero_load_zero_dispatch() {
        let s = two_bus_scenario((20.0, 20.0), (30.0, 30.0), (0.0, 0.0), 100.0);
        let r = clear(&s, &OfferSet::truthful(&s), true).unwrap();
        assert!(r.unit_dispatch.iter().all(|&g| g.abs() < TOL));
        assert!(r.total_offered_cost.abs() < TOL);
    }

    #[test]
    fn overload_is_infeasible() {
        let s = two_bus_scenario((20.0, 20.0), (30.0, 30.0), (0.0, 80.0), 100.0);
        match clear(&s, &OfferSet::truthful(&s), true) {
            Err(Error::Infeasible(_)) => {}
            other => panic!("expected infeasible market, got {other:?}"),
        }
    }

    #[test]
    fn reference_prices_heterogeneous() {
        let s = two_bus_scenario((10.0, 20.0), (30.0, 30.0), (0.0, 50.0), 100.0);
        let lmp = reference_prices(&s).unwrap();
        assert!((lmp[0] - 20.0).abs() < TOL);
        assert!((lmp[1] - 20.0).abs() < TOL);
    }

    #[test]
    fn payment_covers_offered_cost() {
        let s = two_bus_scenario((10.0, 20.0), (30.0, 30.0), (10.0, 40.0), 23.0);
        let offers = OfferSet::truthful(&s).with_unit_price(0, 35.0);
        let r = clear(&s, &offers, true).unwrap();
        let payment: f64 = s
            .network
            .buses
            .iter()
            .enumerate()
            .map(|(k, b)| r.lmp[k] * b.load_mw)
            .sum();
        assert!(payment >= r.total_offered_cost - 1e-6);
    }

    #[test]
    fn csv_shape() {
        let s = homogeneous();
        let r = clear(&s, &OfferSet::truthful(&s), true).unwrap();
        let csv = r.to_csv(&s);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("unit,block,dispatch_mw,lmp,profit"));
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.contains("A,0,25.000000,20.000000,0.000000"));
    }
}
