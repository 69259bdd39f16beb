//! Offer mitigation: conduct and impact screening with reference-level
//! replacement.
//!
//! The pipeline is two staged screens followed by an all-or-nothing
//! correction. The conduct screen flags blocks whose offered price strays
//! from its reference by more than the block threshold. If any block is
//! flagged, the impact screen re-clears with the flagged blocks priced at
//! reference and compares bus prices: only when some bus price moved by
//! more than its threshold is mitigation applied — then ALL flagged blocks
//! are reset to reference and the market clears once more. Both screens use
//! inclusive comparisons, so offers sitting exactly on a threshold pass.
//!
//! References come from [`ReferenceLevels::perfect`]: block references are
//! true costs and price references are truthful-clearing prices, the
//! perfect-information operator model used throughout this crate.

use crate::clearing::{clear, clear_replacement, reference_prices, ClearingResult, OfferSet};
use crate::error::Result;
use crate::network::Scenario;

/// Slack added to threshold comparisons so exact-boundary offers pass
/// regardless of floating-point noise in references.
pub const BOUNDARY_SLACK: f64 = 1e-9;

/// Operator estimates of competitive behaviour: per-block offer references
/// and per-bus price references.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceLevels {
    /// `[unit][block]` reference offer prices, $/MWh.
    pub block_prices: Vec<Vec<f64>>,
    /// Per-bus reference clearing prices, $/MWh.
    pub bus_prices: Vec<f64>,
}

impl ReferenceLevels {
    /// Perfect-information references: true costs and truthful-clearing
    /// prices.
    pub fn perfect(s: &Scenario) -> Result<Self> {
        Ok(ReferenceLevels {
            block_prices: s
                .units
                .iter()
                .map(|u| u.blocks.iter().map(|b| b.true_cost).collect())
                .collect(),
            bus_prices: reference_prices(s)?,
        })
    }
}

/// Screen widths: how far offers and prices may stray from reference.
#[derive(Debug, Clone, PartialEq)]
pub struct Thresholds {
    /// `[unit][block]` conduct widths, $/MWh.
    pub conduct: Vec<Vec<f64>>,
    /// Per-bus impact widths, $/MWh.
    pub impact: Vec<f64>,
}

impl Thresholds {
    /// Widths as fixed fractions of the reference levels.
    pub fn from_fractions(refs: &ReferenceLevels, conduct_frac: f64, impact_frac: f64) -> Self {
        Thresholds {
            conduct: refs
                .block_prices
                .iter()
                .map(|u| u.iter().map(|c| conduct_frac * c).collect())
                .collect(),
            impact: refs.bus_prices.iter().map(|l| impact_frac * l).collect(),
        }
    }

    /// Widths using the scenario's configured fractions.
    pub fn from_scenario(s: &Scenario, refs: &ReferenceLevels) -> Self {
        Self::from_fractions(refs, s.conduct_threshold_frac, s.impact_threshold_frac)
    }
}

/// Outcome of one pipeline run.
#[derive(Debug, Clone)]
pub struct MitigationReport {
    /// `[unit][block]`, true where the conduct screen flagged the block.
    pub conduct_failures: Vec<Vec<bool>>,
    /// Whether the impact screen confirmed mitigation.
    pub impact_triggered: bool,
    /// Per-bus |price - reference-replacement price| from the impact
    /// screen; zeros when the screen never ran.
    pub price_deviation: Vec<f64>,
    /// Offers forwarded to the final clearing (mitigated or original).
    pub final_offers: OfferSet,
    pub before: ClearingResult,
    pub after: ClearingResult,
    /// Offers as submitted, echoed for reporting.
    submitted: OfferSet,
}

impl MitigationReport {
    pub fn any_conduct_failure(&self) -> bool {
        self.conduct_failures.iter().flatten().any(|&f| f)
    }

    pub fn mitigated(&self) -> bool {
        self.impact_triggered
    }

    /// CSV with one row per unit: before/after dispatch, price, profit.
    pub fn to_csv(&self, s: &Scenario) -> String {
        let mut out = String::from(
            "unit,offer_before,dispatch_before,lmp_before,profit_before,offer_after,dispatch_after,lmp_after,profit_after\n",
        );
        for (i, u) in s.units.iter().enumerate() {
            let bus = s.bus_index(u.bus).expect("validated");
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                u.id,
                self.before_offer(i),
                self.before.unit_dispatch[i],
                self.before.lmp[bus],
                self.before.profits[i],
                self.final_offers.prices[i][0],
                self.after.unit_dispatch[i],
                self.after.lmp[bus],
                self.after.profits[i],
            ));
        }
        out
    }

    fn before_offer(&self, unit: usize) -> f64 {
        self.submitted.prices[unit][0]
    }

    /// Offers as submitted (before any mitigation).
    pub fn submitted_offers(&self) -> &OfferSet {
        &self.submitted
    }
}

/// Conduct screen: flag each block whose offered price deviates from its
/// reference by strictly more than the threshold width.
pub fn conduct_test(
    offers: &OfferSet,
    refs: &ReferenceLevels,
    th: &Thresholds,
) -> Vec<Vec<bool>> {
    offers
        .prices
        .iter()
        .enumerate()
        .map(|(i, unit_prices)| {
            unit_prices
                .iter()
                .enumerate()
                .map(|(b, &p)| (p - refs.block_prices[i][b]).abs() > th.conduct[i][b] + BOUNDARY_SLACK)
                .collect()
        })
        .collect()
}

/// Impact screen: price deviation caused by the flagged blocks, assessed
/// collectively. Returns `(triggered, per-bus deviation)`; with no flagged
/// blocks the screen does not run and reports zeros.
pub fn impact_test(
    s: &Scenario,
    offers: &OfferSet,
    failed: &[Vec<bool>],
    refs: &ReferenceLevels,
    th: &Thresholds,
) -> Result<(bool, Vec<f64>)> {
    let n_buses = s.network.buses.len();
    if !failed.iter().flatten().any(|&f| f) {
        return Ok((false, vec![0.0; n_buses]));
    }
    let submitted = clear(s, offers, true)?;
    let replaced = replace_failed(offers, failed, refs);
    let reference_run = clear_replacement(s, &replaced, true)?;
    let deviation: Vec<f64> = submitted
        .lmp
        .iter()
        .zip(&reference_run.lmp)
        .map(|(a, b)| (a - b).abs())
        .collect();
    let triggered = deviation
        .iter()
        .zip(&th.impact)
        .any(|(d, y)| *d > y + BOUNDARY_SLACK);
    Ok((triggered, deviation))
}

fn replace_failed(offers: &OfferSet, failed: &[Vec<bool>], refs: &ReferenceLevels) -> OfferSet {
    let mut out = offers.clone();
    for (i, unit_failed) in failed.iter().enumerate() {
        for (b, &f) in unit_failed.iter().enumerate() {
            if f {
                out.prices[i][b] = refs.block_prices[i][b];
            }
        }
    }
    out
}

/// Full screen-and-correct pipeline with explicit references/thresholds.
pub fn run_pipeline_with(
    s: &Scenario,
    offers: &OfferSet,
    refs: &ReferenceLevels,
    th: &Thresholds,
) -> Result<MitigationReport> {
    offers.validate(s)?;
    let before = clear(s, offers, true)?;
    let conduct_failures = conduct_test(offers, refs, th);
    let (impact_triggered, price_deviation) =
        impact_test(s, offers, &conduct_failures, refs, th)?;
    let (final_offers, after) = if impact_triggered {
        let mitigated = replace_failed(offers, &conduct_failures, refs);
        let after = clear_replacement(s, &mitigated, true)?;
        (mitigated, after)
    } else {
        (offers.clone(), before.clone())
    };
    Ok(MitigationReport {
        conduct_failures,
        impact_triggered,
        price_deviation,
        final_offers,
        before,
        after,
        submitted: offers.clone(),
    })
}

/// Pipeline under the scenario's own fractions and perfect references.
pub fn run_pipeline(s: &Scenario, offers: &OfferSet) -> Result<MitigationReport> {
    let refs = ReferenceLevels::perfect(s)?;
    let th = Thresholds::from_scenario(s, &refs);
    run_pipeline_with(s, offers, &refs, &th)
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
    fn high_offer_is_reset() {
        let s = homogeneous();
        let offers = OfferSet::truthful(&s).with_unit_price(0, 100.0);
        let rep = run_pipeline(&s, &offers).unwrap();
        assert!(rep.conduct_failures[0][0]);
        assert!(!rep.conduct_failures[1][0]);
        assert!(rep.impact_triggered);
        assert!((rep.price_deviation[0] - 80.0).abs() < TOL);
        assert!((rep.final_offers.prices[0][0] - 20.0).abs() < TOL);
        // Post-mitigation market: even split at the competitive price.
        assert!((rep.after.unit_dispatch[0] - 25.0).abs() < TOL);
        assert!((rep.after.lmp[0] - 20.0).abs() < TOL);
        assert!(rep.after.profits[0].abs() < TOL);
        // Pre-mitigation market kept for reporting.
        assert!((rep.before.profits[0] - 1600.0).abs() < TOL);
    }

    #[test]
    fn boundary_offer_passes_conduct() {
        // Exactly double the reference with a 100% width: inclusive pass.
        let s = homogeneous();
        let offers = OfferSet::truthful(&s).with_unit_price(0, 40.0);
        let rep = run_pipeline(&s, &offers).unwrap();
        assert!(!rep.any_conduct_failure());
        assert!(!rep.impact_triggered);
        assert_eq!(rep.final_offers, offers);
        assert!((rep.after.profits[0] - 400.0).abs() < TOL);
    }

    #[test]
    fn truthful_offers_are_identity() {
        let s = homogeneous();
        let offers = OfferSet::truthful(&s);
        let rep = run_pipeline(&s, &offers).unwrap();
        assert!(!rep.any_conduct_failure());
        assert!(!rep.impact_triggered);
        assert_eq!(rep.final_offers, offers);
    }

    #[test]
    fn impact_screen_can_save_conduct_failures() {
        // Narrow conduct width flags the offer, but a wide impact width
        // tolerates the 20 $/MWh price move: no mitigation.
        let mut s = homogeneous();
        s.conduct_threshold_frac = 0.5;
        s.impact_threshold_frac = 2.0;
        let offers = OfferSet::truthful(&s).with_unit_price(0, 40.0);
        let rep = run_pipeline(&s, &offers).unwrap();
        assert!(rep.conduct_failures[0][0]);
        assert!(!rep.impact_triggered);
        assert!((rep.price_deviation[0] - 20.0).abs() < TOL);
        assert_eq!(rep.final_offers, offers);
        assert!((rep.after.profits[0] - 400.0).abs() < TOL);
    }

    #[test]
    fn no_failures_skips_impact() {
        let s = homogeneous();
        let refs = ReferenceLevels::perfect(&s).unwrap();
        let th = Thresholds::from_scenario(&s, &refs);
        let offers = OfferSet::truthful(&s);
        let failed = vec![vec![false], vec![false]];
        let (triggered, dev) = impact_test(&s, &offers, &failed, &refs, &th).unwrap();
        assert!(!triggered);
        assert!(dev.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn pipeline_is_idempotent() {
        let s = homogeneous();
        let offers = OfferSet::truthful(&s).with_unit_price(0, 100.0);
        let first = run_pipeline(&s, &offers).unwrap();
        let second = run_pipeline(&s, &first.final_offers).unwrap();
        assert!(!second.impact_triggered);
        assert_eq!(second.final_offers, first.final_offers);
        assert!((second.after.total_offered_cost - first.after.total_offered_cost).abs() < TOL);
    }

    #[test]
    fn mitigation_never_raises_offers() {
        let s = homogeneous();
        for submitted in [0.0, 10.0, 45.0, 80.0, 100.0] {
            let offers = OfferSet::truthful(&s).with_unit_price(0, submitted);
            let rep = run_pipeline(&s, &offers).unwrap();
            let fin = rep.final_offers.prices[0][0];
            assert!(
                fin <= submitted.max(20.0) + TOL,
                "submitted {submitted} became {fin}"
            );
        }
    }
}
