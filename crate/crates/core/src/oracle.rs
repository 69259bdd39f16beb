//! Brute-force validation of the bid optimizer.
//!
//! Instead of optimality conditions, this module scans a price grid: every
//! candidate offer vector is filtered by the strategy's own rows, cleared,
//! pushed through the mitigation pipeline, and scored twice — once on the
//! anticipated (pre-screen) profit and once on the realized (post-screen)
//! profit. Grid points whose price ties a competitor block are also tried
//! with the strict-undercut variant. The argmax of each surface provides
//! an independent answer the MILP route has to agree with.
//!
//! The scan is exact only up to the grid resolution, so comparisons
//! against the optimizer should accept any offer within one grid step of
//! a near-optimal point rather than demand the identical argmax: flat
//! profit plateaus make the literal argmax a tie-break artifact.

use serde::{Deserialize, Serialize};

use crate::bidding::{owner_profit, strategy_allows, strict_inequality_offer, Strategy};
use crate::clearing::{clear, OfferSet};
use crate::error::{Error, Result};
use crate::mitigation::{run_pipeline_with, ReferenceLevels, Thresholds};
use crate::network::Scenario;

/// Largest number of candidate grid points a scan may enumerate.
pub const MAX_GRID_POINTS: usize = 1_000_000;
/// Most decision prices a grid scan supports.
pub const MAX_GRID_DIMS: usize = 2;
/// Profits closer than this count as tied when picking the argmax.
pub const PROFIT_TIE_TOL: f64 = 1e-9;

/// Price grid scanned for each decision block.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl GridSpec {
    /// Full offer range at the default quarter-dollar resolution.
    pub fn full(s: &Scenario) -> Self {
        GridSpec {
            lo: 0.0,
            hi: s.offer_cap,
            step: 0.25,
        }
    }

    pub fn with_step(s: &Scenario, step: f64) -> Self {
        GridSpec {
            step,
            ..GridSpec::full(s)
        }
    }

    fn points(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::Validation(format!(
                "grid step must be positive, got {}",
                self.step
            )));
        }
        if self.hi < self.lo {
            return Err(Error::Validation(format!(
                "grid range [{}, {}] is empty",
                self.lo, self.hi
            )));
        }
        let n = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1;
        Ok((0..n).map(|k| self.lo + k as f64 * self.step).collect())
    }
}

/// One evaluated candidate offer vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurfacePoint {
    /// Decision-block prices in `(unit, block)` scan order.
    pub prices: Vec<f64>,
    /// Owner profit of the operator clearing at these offers, $.
    pub predicted: f64,
    /// Owner profit after the mitigation pipeline, $.
    pub realized: f64,
}

/// Outcome of a grid scan.
#[derive(Debug, Clone)]
pub struct BruteForceResult {
    pub strategy: Strategy,
    /// Decision blocks in scan order.
    pub decision_blocks: Vec<(usize, usize)>,
    /// Realized-profit argmax (lowest prices on ties).
    pub best_offers: Vec<f64>,
    pub best_realized: f64,
    /// Predicted-profit argmax (lowest prices on ties).
    pub best_predicted_offers: Vec<f64>,
    pub best_predicted: f64,
    /// Every strategy-feasible candidate evaluated, in scan order.
    pub surface: Vec<SurfacePoint>,
    pub evaluations: usize,
}

impl BruteForceResult {
    /// CSV of the scanned surface: one price column per decision block,
    /// then predicted and realized profit. Byte-stable formatting.
    pub fn surface_csv(&self) -> String {
        let mut out = String::new();
        for d in 0..self.decision_blocks.len() {
            out.push_str(&format!("price{},", d + 1));
        }
        out.push_str("predicted,realized\n");
        for pt in &self.surface {
            for price in &pt.prices {
                out.push_str(&format!("{price:.6},"));
            }
            out.push_str(&format!("{:.6},{:.6}\n", pt.predicted, pt.realized));
        }
        out
    }
}

/// Scans the grid of strategic offer prices and returns both surfaces.
pub fn brute_force_bid(
    s: &Scenario,
    strategy: Strategy,
    grid: &GridSpec,
) -> Result<BruteForceResult> {
    s.validate()?;
    let refs = ReferenceLevels::perfect(s)?;
    let th = Thresholds::from_scenario(s, &refs);
    brute_force_bid_with(s, strategy, grid, &refs, &th)
}

/// Grid scan under explicit references and thresholds.
pub fn brute_force_bid_with(
    s: &Scenario,
    strategy: Strategy,
    grid: &GridSpec,
    refs: &ReferenceLevels,
    th: &Thresholds,
) -> Result<BruteForceResult> {
    let strategic_units = s.units_of(&s.strategic_owner);
    let decision_blocks: Vec<(usize, usize)> = strategic_units
        .iter()
        .flat_map(|&i| (0..s.units[i].blocks.len()).map(move |b| (i, b)))
        .collect();
    if decision_blocks.is_empty() {
        return Err(Error::Validation(format!(
            "owner {:?} has no offer blocks to scan",
            s.strategic_owner
        )));
    }
    if decision_blocks.len() > MAX_GRID_DIMS {
        return Err(Error::Unsupported(format!(
            "grid scan supports at most {MAX_GRID_DIMS} decision prices, owner {:?} has {}",
            s.strategic_owner,
            decision_blocks.len()
        )));
    }

    // Candidate prices per decision block: the grid, plus the strict
    // undercut of every competitor price inside the range.
    let base = grid.points()?;
    let competitor_prices: Vec<f64> = s
        .units
        .iter()
        .enumerate()
        .filter(|(i, _)| !strategic_units.contains(i))
        .flat_map(|(_, u)| u.blocks.iter().map(|b| b.offered_price))
        .collect();
    let mut axis = base;
    for &cp in &competitor_prices {
        let cut = strict_inequality_offer(cp, s);
        if cut >= grid.lo - 1e-9 && cut <= grid.hi + 1e-9 {
            axis.push(cut);
        }
    }
    axis.sort_by(|a, b| a.partial_cmp(b).unwrap());
    axis.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);

    let total = axis.len().pow(decision_blocks.len() as u32);
    if total > MAX_GRID_POINTS {
        return Err(Error::Unsupported(format!(
            "grid scan would evaluate {total} points (limit {MAX_GRID_POINTS}); coarsen the step"
        )));
    }

    let truthful = OfferSet::truthful(s);
    let mut surface = Vec::new();
    let mut evaluations = 0usize;
    let mut best_offers: Option<Vec<f64>> = None;
    let mut best_realized = f64::NEG_INFINITY;
    let mut best_predicted_offers: Option<Vec<f64>> = None;
    let mut best_predicted = f64::NEG_INFINITY;

    let mut index = vec![0usize; decision_blocks.len()];
    'scan: loop {
        let prices: Vec<f64> = index.iter().map(|&k| axis[k]).collect();
        let mut offers = truthful.clone();
        for (d, &(i, b)) in decision_blocks.iter().enumerate() {
            offers.prices[i][b] = prices[d];
        }
        if offers.validate(s).is_ok() && strategy_allows(s, strategy, refs, th, &offers)? {
            evaluations += 1;
            let predicted = owner_profit(s, &s.strategic_owner, &clear(s, &offers, true)?);
            let report = run_pipeline_with(s, &offers, refs, th)?;
            let realized = owner_profit(s, &s.strategic_owner, &report.after);
            surface.push(SurfacePoint {
                prices: prices.clone(),
                predicted,
                realized,
            });
            // Strictly better wins; ties keep the lexicographically
            // lowest price vector (scan order is ascending).
            if realized > best_realized + PROFIT_TIE_TOL {
                best_realized = realized;
                best_offers = Some(prices.clone());
            }
            if predicted > best_predicted + PROFIT_TIE_TOL {
                best_predicted = predicted;
                best_predicted_offers = Some(prices.clone());
            }
        }

        // Odometer increment over the candidate axes.
        for d in (0..index.len()).rev() {
            index[d] += 1;
            if index[d] < axis.len() {
                continue 'scan;
            }
            index[d] = 0;
        }
        break;
    }

    let best_offers = best_offers.ok_or_else(|| {
        Error::Infeasible(format!(
            "no grid point satisfies the {strategy} strategy rows"
        ))
    })?;
    Ok(BruteForceResult {
        strategy,
        decision_blocks,
        best_offers,
        best_realized,
        best_predicted_offers: best_predicted_offers.expect("set with best_offers"),
        best_predicted,
        surface,
        evaluations,
    })
}

// ─── symmetric play ──────────────────────────────────────────────────────────

/// Outcome when every owner submits the same strategy profile.
#[derive(Debug, Clone)]
pub struct SymmetricOutcome {
    pub strategy: Strategy,
    pub offers: OfferSet,
    /// Per-unit profit of the operator clearing at the submitted offers, $.
    pub before_profits: Vec<f64>,
    /// Per-unit profit after the mitigation pipeline, $.
    pub after_profits: Vec<f64>,
    /// Bus prices after the pipeline, $/MWh.
    pub lmp_after: Vec<f64>,
    pub mitigated: bool,
}

/// Plays one strategy symmetrically across all owners of a two-unit
/// scenario: each unit submits the profile price the strategy saturates
/// to — true cost, the offer cap, the conduct width, or the impact width.
pub fn symmetric_play(s: &Scenario, strategy: Strategy) -> Result<SymmetricOutcome> {
    s.validate()?;
    if s.units.len() != 2 {
        return Err(Error::Unsupported(format!(
            "symmetric play is defined for two-unit scenarios, got {}",
            s.units.len()
        )));
    }
    let refs = ReferenceLevels::perfect(s)?;
    let th = Thresholds::from_scenario(s, &refs);

    let mut offers = OfferSet::truthful(s);
    for (i, u) in s.units.iter().enumerate() {
        let bus = s.bus_index(u.bus).expect("validated");
        for (b, blk) in u.blocks.iter().enumerate() {
            offers.prices[i][b] = match strategy {
                Strategy::NonStrategic => blk.true_cost,
                Strategy::MitigationUnaware => s.offer_cap,
                Strategy::ConductAware => {
                    (refs.block_prices[i][b] + th.conduct[i][b]).min(s.offer_cap)
                }
                Strategy::ImpactAware => {
                    (refs.bus_prices[bus] + th.impact[bus]).min(s.offer_cap)
                }
            };
        }
        // Keep multi-block offers a valid nondecreasing curve.
        for b in 1..offers.prices[i].len() {
            if offers.prices[i][b] < offers.prices[i][b - 1] {
                offers.prices[i][b] = offers.prices[i][b - 1];
            }
        }
    }

    let report = run_pipeline_with(s, &offers, &refs, &th)?;
    Ok(SymmetricOutcome {
        strategy,
        offers,
        before_profits: report.before.profits.clone(),
        after_profits: report.after.profits.clone(),
        lmp_after: report.after.lmp.clone(),
        mitigated: report.mitigated(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::two_bus_scenario;

    const TOL: f64 = 1e-4;

    fn homogeneous() -> Scenario {
        two_bus_scenario((20.0, 20.0), (30.0, 30.0), (0.0, 50.0), 100.0)
    }

    fn heterogeneous() -> Scenario {
        two_bus_scenario((10.0, 20.0), (30.0, 30.0), (0.0, 50.0), 100.0)
    }

    #[test]
    fn conduct_scan_peaks_at_full_width() {
        let s = homogeneous();
        let r = brute_force_bid(&s, Strategy::ConductAware, &GridSpec::full(&s)).unwrap();
        assert!((r.best_realized - 400.0).abs() < TOL);
        assert!((r.best_offers[0] - 40.0).abs() < TOL);
        // Within the conduct width prediction and realization agree.
        for pt in &r.surface {
            assert!((pt.predicted - pt.realized).abs() < TOL);
        }
    }

    #[test]
    fn unaware_scan_separates_surfaces() {
        let s = homogeneous();
        let r = brute_force_bid(&s, Strategy::MitigationUnaware, &GridSpec::full(&s)).unwrap();
        assert!((r.best_predicted - 1600.0).abs() < TOL);
        assert!((r.best_predicted_offers[0] - 100.0).abs() < TOL);
        // Everything the screens catch realizes to the competitive level.
        assert!((r.best_realized - 400.0).abs() < TOL);
        assert!((r.best_offers[0] - 40.0).abs() < TOL);
    }

    #[test]
    fn undercut_candidates_join_the_scan() {
        let s = heterogeneous();
        let r = brute_force_bid(&s, Strategy::ConductAware, &GridSpec::full(&s)).unwrap();
        assert!((r.best_realized - 300.0).abs() < TOL);
        // The plateau tie-break lands on the lowest feasible price.
        assert!((r.best_offers[0] - 0.0).abs() < TOL);
        // The undercut price itself was evaluated and matches the plateau.
        let cut = r
            .surface
            .iter()
            .find(|pt| (pt.prices[0] - 19.99).abs() < 1e-9)
            .expect("undercut candidate present");
        assert!((cut.realized - 300.0).abs() < TOL);
    }

    #[test]
    fn single_point_grid_is_truthful_play() {
        let s = homogeneous();
        let grid = GridSpec {
            lo: 20.0,
            hi: 20.0,
            step: 1.0,
        };
        let r = brute_force_bid(&s, Strategy::MitigationUnaware, &grid).unwrap();
        assert_eq!(r.surface.len(), 1);
        assert!(r.best_realized.abs() < TOL);
    }

    #[test]
    fn profit_is_linear_inside_a_dispatch_regime() {
        // Between the rival's price and the screens, the strategic unit is
        // marginal: profit grows linearly with its offer.
        let s = homogeneous();
        let r = brute_force_bid(&s, Strategy::ConductAware, &GridSpec::full(&s)).unwrap();
        let sample = |price: f64| {
            r.surface
                .iter()
                .find(|pt| (pt.prices[0] - price).abs() < 1e-9)
                .map(|pt| pt.realized)
                .unwrap()
        };
        let (a, b, c) = (sample(25.0), sample(30.0), sample(35.0));
        assert!((b - 0.5 * (a + c)).abs() < TOL);
        assert!(c > a);
    }

    #[test]
    fn symmetric_profiles() {
        let s = homogeneous();
        let conduct = symmetric_play(&s, Strategy::ConductAware).unwrap();
        assert!((conduct.after_profits[0] - 500.0).abs() < TOL);
        assert!((conduct.after_profits[1] - 500.0).abs() < TOL);
        assert!(!conduct.mitigated);

        let truthful = symmetric_play(&s, Strategy::NonStrategic).unwrap();
        assert!(truthful.after_profits[0].abs() < TOL);
        assert!(truthful.after_profits[1].abs() < TOL);

        let unaware = symmetric_play(&s, Strategy::MitigationUnaware).unwrap();
        assert!((unaware.before_profits[0] - 2000.0).abs() < TOL);
        assert!(unaware.mitigated);
        assert!(unaware.after_profits[0].abs() < TOL);
        assert!(unaware.after_profits[1].abs() < TOL);
        assert!((unaware.lmp_after[0] - 20.0).abs() < TOL);
    }

    #[test]
    fn oversized_scan_is_rejected() {
        let s = homogeneous();
        let grid = GridSpec {
            lo: 0.0,
            hi: 100.0,
            step: 1e-5,
        };
        assert!(matches!(
            brute_force_bid(&s, Strategy::ConductAware, &grid),
            Err(Error::Unsupported(_))
        ));
    }
}
