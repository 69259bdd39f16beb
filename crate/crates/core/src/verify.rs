//! Fast self-check suite: re-derives the bundled golden tables and runs
//! the cross-cutting numerical checks that every release of the solvers
//! must satisfy. The whole suite is built to finish in well under a
//! minute on the shipped scenario set so it can run on every change.
//!
//! Checks are reported individually by name; callers decide whether a
//! failure is fatal (the CLI exits nonzero on any failed check).

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bidding::{
    build_mpec_with_layout, mpec_kkt_residual, solve_bid, strong_duality_gap, Strategy,
};
use crate::clearing::{clear, physical_residual, OfferSet};
use crate::milp::solve_milp;
use crate::mitigation::{run_pipeline, ReferenceLevels, Thresholds};
use crate::network::{load_scenario, two_bus_scenario, Scenario};
use crate::oracle::{brute_force_bid, GridSpec};
use crate::report::{comparison_csv, strategy_comparison};
use crate::{Error, Result};

/// Outcome of one named check.
#[derive(Debug, Clone)]
pub struct VerifyCheck {
    pub name: String,
    pub passed: bool,
    /// Measured value, tolerance, or diff excerpt backing the verdict.
    pub detail: String,
}

/// All checks from one verification run.
#[derive(Debug, Default)]
pub struct VerifyReport {
    pub checks: Vec<VerifyCheck>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// One line per check: `PASS name — detail`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&format!(
                "{} {} — {}\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            ));
        }
        out.push_str(&format!(
            "{} of {} checks passed\n",
            self.checks.iter().filter(|c| c.passed).count(),
            self.checks.len()
        ));
        out
    }

    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(VerifyCheck {
            name: name.to_string(),
            passed,
            detail,
        });
    }
}

/// Knobs for [`run_verify`].
#[derive(Debug, Clone)]
pub struct VerifyOptions {
    /// Run the brute-force-vs-optimizer cross-check (the slowest part).
    pub oracle: bool,
    /// Grid resolution of the brute-force scan, $/MWh.
    pub grid_step: f64,
    /// Seed of the randomized clearing suite.
    pub seed: u64,
    /// Diff freshly computed tables against `golden/` copies.
    pub golden: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            oracle: true,
            grid_step: 0.25,
            seed: 7,
            golden: true,
        }
    }
}

/// The golden table set: stable file names and freshly computed contents
/// for the shipped scenarios. Used both to regenerate the files and to
/// check them.
pub fn golden_tables(scenario_dir: &Path) -> Result<Vec<(String, String)>> {
    let mut tables = Vec::new();
    for stem in [
        "2bus_homogeneous",
        "2bus_heterogeneous",
        "2bus_congested",
    ] {
        let s = load_scenario(scenario_dir.join(format!("{stem}.json")))?;
        let rows = strategy_comparison(&s)?;
        tables.push((format!("table_{stem}.csv"), comparison_csv(&s, &rows)));
    }
    let s6 = load_scenario(scenario_dir.join("6bus.json"))?;
    let offers: OfferSet = serde_json::from_str(
        &std::fs::read_to_string(scenario_dir.join("6bus_offers_1400.json"))
            .map_err(Error::Io)?,
    )
    .map_err(|e| Error::Scenario(format!("6bus_offers_1400.json: {e}")))?;
    let r = clear(&s6, &offers, true)?;
    tables.push(("clear_6bus_1400.csv".to_string(), r.to_csv(&s6)));
    Ok(tables)
}

/// First line where two texts differ, rendered for a failure message.
fn first_diff(expected: &str, actual: &str) -> String {
    for (k, (e, a)) in expected.lines().zip(actual.lines()).enumerate() {
        if e != a {
            return format!("line {}: golden {e:?} vs computed {a:?}", k + 1);
        }
    }
    let (ne, na) = (expected.lines().count(), actual.lines().count());
    if ne != na {
        format!("line counts differ: golden {ne} vs computed {na}")
    } else {
        "texts identical".to_string()
    }
}

/// Runs the full suite against the scenario directory.
pub fn run_verify(scenario_dir: &Path, opts: &VerifyOptions) -> Result<VerifyReport> {
    let mut rep = VerifyReport::default();

    let homog = load_scenario(scenario_dir.join("2bus_homogeneous.json"))?;
    let heter = load_scenario(scenario_dir.join("2bus_heterogeneous.json"))?;
    let cong = load_scenario(scenario_dir.join("2bus_congested.json"))?;
    let named: [(&str, &Scenario); 3] = [
        ("2bus_homogeneous", &homog),
        ("2bus_heterogeneous", &heter),
        ("2bus_congested", &cong),
    ];

    // Optimality-condition residuals at every bilevel solution.
    for (name, s) in named {
        let refs = ReferenceLevels::perfect(s)?;
        let th = Thresholds::from_scenario(s, &refs);
        for strategy in [
            Strategy::MitigationUnaware,
            Strategy::ConductAware,
            Strategy::ImpactAware,
        ] {
            let (problem, layout) = build_mpec_with_layout(s, strategy, &refs, &th)?;
            let milp = solve_milp(&problem)?;
            let gap = strong_duality_gap(s, &layout, &milp.x);
            let kkt = mpec_kkt_residual(s, &layout, &milp.x);
            rep.push(
                &format!("duality_gap/{name}/{strategy}"),
                gap <= 1e-7,
                format!("{gap:.3e} (tol 1e-7)"),
            );
            rep.push(
                &format!("kkt_residual/{name}/{strategy}"),
                kkt <= 1e-6,
                format!("{kkt:.3e} (tol 1e-6)"),
            );
        }
    }

    // Mitigation idempotence: the pipeline's final offers pass unchanged.
    for (name, s) in named {
        let bid = solve_bid(s, Strategy::MitigationUnaware)?;
        let first = run_pipeline(s, &bid.offers)?;
        let second = run_pipeline(s, &first.final_offers)?;
        let drift = first
            .final_offers
            .prices
            .iter()
            .flatten()
            .zip(second.final_offers.prices.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        rep.push(
            &format!("mitigation_idempotence/{name}"),
            !second.mitigated() && drift == 0.0,
            format!("second pass mitigated={}, offer drift {drift:.1e}", second.mitigated()),
        );
    }

    // Truthful offers satisfy every strategy's constraint set, so the
    // optimized expected profit can never fall below the truthful-play
    // profit.
    for (name, s) in named {
        let truthful = run_pipeline(s, &OfferSet::truthful(s))?;
        let floor = crate::bidding::owner_profit(s, &s.strategic_owner, &truthful.after);
        for strategy in [
            Strategy::MitigationUnaware,
            Strategy::ConductAware,
            Strategy::ImpactAware,
        ] {
            let bid = solve_bid(s, strategy)?;
            rep.push(
                &format!("dominates_truthful/{name}/{strategy}"),
                bid.predicted_profit >= floor - 1e-7,
                format!(
                    "expected {:.4} vs truthful {floor:.4}",
                    bid.predicted_profit
                ),
            );
        }
    }

    // Proportional tie-breaking on the homogeneous duopoly.
    {
        let r = clear(&homog, &OfferSet::truthful(&homog), true)?;
        let spread = (r.unit_dispatch[0] - r.unit_dispatch[1]).abs();
        rep.push(
            "tie_proportionality/2bus_homogeneous",
            spread <= 1e-6,
            format!("|g1-g2| = {spread:.3e} (tol 1e-6)"),
        );
    }

    // Offer curves returned by the optimizer are valid nondecreasing
    // curves. Uses the six-bus system (multi-block units) scaled to a
    // mild demand so the bid problem stays fast.
    {
        let s6 = load_scenario(scenario_dir.join("6bus.json"))?;
        let total = s6.total_load();
        let shares: Vec<f64> = s6
            .network
            .buses
            .iter()
            .map(|b| b.load_mw / total)
            .collect();
        let profile = crate::network::DemandProfile {
            rows: vec![(1, 0.45 * total)],
            shares,
        };
        let mild = crate::network::scale_loads(&s6, 1, &profile)?;
        let bid = solve_bid(&mild, Strategy::ConductAware)?;
        let valid = bid.offers.validate(&mild).is_ok();
        rep.push(
            "offer_monotonicity/6bus_conduct",
            valid,
            "optimizer offer curves nondecreasing within 1e-9".to_string(),
        );
    }

    // Randomized clearing suite: physical feasibility and determinism on
    // perturbed two-bus systems.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut worst_resid = 0.0f64;
        let mut stable = true;
        for _ in 0..25 {
            let c1 = rng.gen_range(5.0..40.0);
            let c2 = rng.gen_range(5.0..40.0);
            let cap1 = rng.gen_range(10.0..60.0);
            let cap2 = rng.gen_range(10.0..60.0);
            let demand = rng.gen_range(5.0..(0.9 * (cap1 + cap2)));
            let split = rng.gen_range(0.0..1.0);
            let limit = rng.gen_range(5.0..100.0);
            let s = two_bus_scenario(
                (c1, c2),
                (cap1, cap2),
                (demand * split, demand * (1.0 - split)),
                limit,
            );
            match clear(&s, &OfferSet::truthful(&s), true) {
                Ok(r) => {
                    worst_resid = worst_resid.max(physical_residual(&s, &r));
                    let again = clear(&s, &OfferSet::truthful(&s), true)?;
                    stable &= r.to_csv(&s) == again.to_csv(&s);
                }
                // Tight line limits can make the sampled system unservable;
                // that is a legitimate outcome, not a solver defect.
                Err(Error::Infeasible(_)) => {}
                Err(e) => return Err(e),
            }
        }
        rep.push(
            "random_clearing_feasibility",
            worst_resid <= 1e-8 && stable,
            format!("worst physical residual {worst_resid:.3e} (tol 1e-8), byte-stable: {stable}"),
        );
    }

    if opts.oracle {
        for (name, s) in named {
            for strategy in [
                Strategy::MitigationUnaware,
                Strategy::ConductAware,
                Strategy::ImpactAware,
            ] {
                let grid = GridSpec::with_step(s, opts.grid_step);
                let brute = brute_force_bid(s, strategy, &grid)?;
                let bid = solve_bid(s, strategy)?;
                // The unaware strategy optimizes its own prediction; the
                // aware strategies are judged on what survives mitigation.
                let (milp_value, oracle_value) = if strategy == Strategy::MitigationUnaware {
                    (bid.predicted_profit, brute.best_predicted)
                } else {
                    let realized = crate::bidding::owner_profit(
                        s,
                        &s.strategic_owner,
                        &run_pipeline(s, &bid.offers)?.after,
                    );
                    (realized, brute.best_realized)
                };
                let tol = 0.01 * oracle_value.abs().max(1.0);
                rep.push(
                    &format!("oracle_agreement/{name}/{strategy}"),
                    milp_value >= oracle_value - tol,
                    format!(
                        "optimizer {milp_value:.4} vs grid best {oracle_value:.4} (within 1%)"
                    ),
                );
            }
        }
    }

    if opts.golden {
        let golden_dir = scenario_dir.join("golden");
        for (file, computed) in golden_tables(scenario_dir)? {
            let path = golden_dir.join(&file);
            match std::fs::read_to_string(&path) {
                Ok(golden) => {
                    let same = golden == computed;
                    rep.push(
                        &format!("golden_regression/{file}"),
                        same,
                        if same {
                            "byte-identical".to_string()
                        } else {
                            first_diff(&golden, &computed)
                        },
                    );
                }
                Err(e) => rep.push(
                    &format!("golden_regression/{file}"),
                    false,
                    format!("cannot read {}: {e}", path.display()),
                ),
            }
        }
    }

    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario_dir() -> std::path::PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
    }

    #[test]
    fn quick_suite_passes_without_oracle() {
        let opts = VerifyOptions {
            oracle: false,
            golden: false,
            ..VerifyOptions::default()
        };
        let rep = run_verify(&scenario_dir(), &opts).unwrap();
        assert!(rep.passed(), "{}", rep.to_text());
    }

    #[test]
    fn corrupted_golden_is_reported_with_diff() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path();
        // Copy the shipped scenario corpus, then corrupt one golden file.
        std::fs::create_dir(dir.join("golden")).unwrap();
        for entry in std::fs::read_dir(scenario_dir()).unwrap() {
            let p = entry.unwrap().path();
            if p.is_file() {
                std::fs::copy(&p, dir.join(p.file_name().unwrap())).unwrap();
            }
        }
        for (file, contents) in golden_tables(dir).unwrap() {
            std::fs::write(dir.join("golden").join(file), contents).unwrap();
        }
        let victim = dir.join("golden/table_2bus_homogeneous.csv");
        let good = std::fs::read_to_string(&victim).unwrap();
        std::fs::write(&victim, good.replace("400.000000", "401.000000")).unwrap();

        let opts = VerifyOptions {
            oracle: false,
            golden: true,
            ..VerifyOptions::default()
        };
        let rep = run_verify(dir, &opts).unwrap();
        assert!(!rep.passed());
        let failing: Vec<_> = rep.checks.iter().filter(|c| !c.passed).collect();
        assert_eq!(failing.len(), 1);
        assert!(failing[0].name.contains("table_2bus_homogeneous"));
        assert!(failing[0].detail.contains("line"), "{}", failing[0].detail);
    }

    #[test]
    fn diff_helper_pinpoints_line() {
        let d = first_diff("a\nb\nc\n", "a\nX\nc\n");
        assert!(d.contains("line 2"));
        assert!(d.contains('X'));
    }
}
