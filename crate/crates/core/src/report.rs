//! Result tables and small self-contained SVG charts.
//!
//! Everything here is presentation: the numbers come from [`clearing`],
//! [`mitigation`], and [`bidding`](crate::bidding), and this module lays
//! them out as byte-stable CSV (fixed six-decimal formatting, `\n` line
//! ends) and as dependency-free SVG line charts. Byte stability matters
//! because the verification suite diffs freshly computed tables against
//! the golden copies shipped under `scenarios/golden/`.
//!
//! [`clearing`]: crate::clearing
//! [`mitigation`]: crate::mitigation

use rayon::prelude::*;

use crate::bidding::{owner_profit, solve_bid, Strategy};
use crate::clearing::OfferSet;
use crate::mitigation::{run_pipeline, MitigationReport};
use crate::network::{scale_loads, DemandProfile, Scenario};
use crate::Result;

/// Marginal utility of served demand used in every welfare figure, $/MWh.
pub const DEMAND_UTILITY: f64 = 25.0;

/// One strategy's full before/after outcome on a scenario.
#[derive(Debug)]
pub struct StrategyOutcome {
    pub strategy: Strategy,
    /// Profit the bidder expected when choosing the offers.
    pub predicted_profit: f64,
    /// Strategic owner's profit from the post-mitigation clearing.
    pub realized_profit: f64,
    /// The submitted offers and both clearings.
    pub report: MitigationReport,
}

/// Runs all four strategies through bid selection and the mitigation
/// pipeline. The non-strategic row submits true costs; its predicted and
/// realized profits coincide by construction.
pub fn strategy_comparison(s: &Scenario) -> Result<Vec<StrategyOutcome>> {
    Strategy::ALL
        .iter()
        .map(|&strategy| {
            let (offers, predicted_profit) = if strategy == Strategy::NonStrategic {
                (OfferSet::truthful(s), f64::NAN)
            } else {
                let bid = solve_bid(s, strategy)?;
                (bid.offers, bid.predicted_profit)
            };
            let report = run_pipeline(s, &offers)?;
            let realized_profit = owner_profit(s, &s.strategic_owner, &report.after);
            let predicted_profit = if predicted_profit.is_nan() {
                realized_profit
            } else {
                predicted_profit
            };
            Ok(StrategyOutcome {
                strategy,
                predicted_profit,
                realized_profit,
                report,
            })
        })
        .collect()
}

/// Joins a unit's block prices as `p1;p2;...` with six decimals — the
/// cell format for multi-block offer curves inside a comma-separated table.
pub fn curve_cell(prices: &[f64]) -> String {
    prices
        .iter()
        .map(|p| format!("{p:.6}"))
        .collect::<Vec<_>>()
        .join(";")
}

/// One row per (strategy, unit): offers, dispatch, bus price, and profit
/// before and after mitigation, plus the strategy's predicted profit on
/// its own units.
pub fn comparison_csv(s: &Scenario, rows: &[StrategyOutcome]) -> String {
    let mut out = String::from(
        "strategy,unit,owner,offer_before,dispatch_before,lmp_before,profit_before,\
         mitigated,offer_after,dispatch_after,lmp_after,profit_after,\
         predicted_owner_profit,realized_owner_profit\n",
    );
    for row in rows {
        for (i, u) in s.units.iter().enumerate() {
            let bus = s.bus_index(u.bus).expect("validated scenario");
            out.push_str(&format!(
                "{},{},{},{},{:.6},{:.6},{:.6},{},{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                row.strategy,
                u.id,
                u.owner,
                curve_cell(&row.report.submitted_offers().prices[i]),
                row.report.before.unit_dispatch[i],
                row.report.before.lmp[bus],
                row.report.before.profits[i],
                row.report.mitigated(),
                curve_cell(&row.report.final_offers.prices[i]),
                row.report.after.unit_dispatch[i],
                row.report.after.lmp[bus],
                row.report.after.profits[i],
                row.predicted_profit,
                row.realized_profit,
            ));
        }
    }
    out
}

/// Social welfare of a clearing: utility-valued served demand minus true
/// generation cost. Demand is inelastic, so served load equals total load
/// whenever the clearing exists.
pub fn welfare(s: &Scenario, total_true_cost: f64) -> f64 {
    DEMAND_UTILITY * s.total_load() - total_true_cost
}

/// Residual of the accounting identity
/// `utility·D − Σ c·g = Σ unit profits + Σ (utility − λ)·D` on a clearing
/// whose bus prices are uniform. With congestion the two sides differ by
/// the network rent, so callers should only assert this on uniform-price
/// results.
pub fn welfare_identity_gap(s: &Scenario, r: &crate::clearing::ClearingResult) -> f64 {
    let total_load = s.total_load();
    let lhs = DEMAND_UTILITY * total_load - r.total_true_cost;
    let producer: f64 = r.profits.iter().sum();
    let consumer: f64 = s
        .network
        .buses
        .iter()
        .enumerate()
        .map(|(m, b)| (DEMAND_UTILITY - r.lmp[m]) * b.load_mw)
        .sum();
    (lhs - (producer + consumer)).abs()
}

/// One hour of the day-long comparison: strategic-owner profit and social
/// welfare per strategy, ordered as [`Strategy::ALL`].
#[derive(Debug, Clone)]
pub struct HourlyRow {
    pub hour: u32,
    pub total_mw: f64,
    pub profit: [f64; 4],
    pub welfare: [f64; 4],
}

/// Runs the full strategy set at every hour of a demand profile. Hours are
/// independent problems and run concurrently; the returned rows are sorted
/// by hour regardless of completion order.
pub fn hourly_run(s: &Scenario, profile: &DemandProfile) -> Result<Vec<HourlyRow>> {
    let mut rows: Vec<HourlyRow> = profile
        .rows
        .par_iter()
        .map(|&(hour, total_mw)| {
            let sh = scale_loads(s, hour, profile)?;
            let mut profit = [0.0f64; 4];
            let mut welfare_h = [0.0f64; 4];
            for (k, &strategy) in Strategy::ALL.iter().enumerate() {
                let offers = if strategy == Strategy::NonStrategic {
                    OfferSet::truthful(&sh)
                } else {
                    solve_bid(&sh, strategy)?.offers
                };
                let report = run_pipeline(&sh, &offers)?;
                profit[k] = owner_profit(&sh, &sh.strategic_owner, &report.after);
                welfare_h[k] = welfare(&sh, report.after.total_true_cost);
            }
            Ok(HourlyRow {
                hour,
                total_mw,
                profit,
                welfare: welfare_h,
            })
        })
        .collect::<Result<_>>()?;
    rows.sort_by_key(|r| r.hour);
    Ok(rows)
}

/// CSV of an hourly run: one row per hour, profit and welfare columns per
/// strategy.
pub fn hourly_csv(rows: &[HourlyRow]) -> String {
    let mut out = String::from("hour,total_mw");
    for strat in Strategy::ALL {
        out.push_str(&format!(",profit_{strat}"));
    }
    for strat in Strategy::ALL {
        out.push_str(&format!(",welfare_{strat}"));
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{:.6}", r.hour, r.total_mw));
        for p in r.profit {
            out.push_str(&format!(",{p:.6}"));
        }
        for w in r.welfare {
            out.push_str(&format!(",{w:.6}"));
        }
        out.push('\n');
    }
    out
}

/// One named polyline for [`svg_line_chart`].
#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const CHART_COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|&s| s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() * step;
    let mut ticks = Vec::new();
    let mut t = first;
    while t <= hi + 1e-9 * step {
        // Snap -0.0 and accumulated drift to clean multiples.
        ticks.push((t / step).round() * step);
        t += step;
    }
    ticks
}

/// Renders named series as a self-contained SVG line chart (no external
/// fonts, CSS, or scripts). Output is deterministic for identical input.
pub fn svg_line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    const W: f64 = 720.0;
    const H: f64 = 440.0;
    const ML: f64 = 70.0; // left margin (y labels)
    const MR: f64 = 160.0; // right margin (legend)
    const MT: f64 = 40.0;
    const MB: f64 = 55.0;

    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x_lo, mut x_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x_lo = x_lo.min(x);
        x_hi = x_hi.max(x);
        y_lo = y_lo.min(y);
        y_hi = y_hi.max(y);
    }
    if !x_lo.is_finite() {
        (x_lo, x_hi, y_lo, y_hi) = (0.0, 1.0, 0.0, 1.0);
    }
    if x_hi - x_lo < 1e-12 {
        x_hi = x_lo + 1.0;
    }
    // Headroom so lines do not sit on the frame.
    let pad = ((y_hi - y_lo) * 0.06).max(1e-9);
    y_lo -= pad;
    y_hi += pad;

    let sx = |x: f64| ML + (x - x_lo) / (x_hi - x_lo) * (W - ML - MR);
    let sy = |y: f64| H - MB - (y - y_lo) / (y_hi - y_lo) * (H - MT - MB);

    let mut svg = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">
<rect width="{W}" height="{H}" fill="white"/>
<text x="{tx}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{title}</text>
"#,
        tx = (ML + W - MR) / 2.0,
        title = xml_escape(title),
    );

    for t in nice_ticks(x_lo, x_hi) {
        let x = sx(t);
        svg.push_str(&format!(
            "<line x1=\"{x:.1}\" y1=\"{}\" x2=\"{x:.1}\" y2=\"{}\" stroke=\"#ddd\"/>\n\
             <text x=\"{x:.1}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
            MT, H - MB, H - MB + 16.0, trim_num(t)
        ));
    }
    for t in nice_ticks(y_lo, y_hi) {
        let y = sy(t);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{y:.1}\" x2=\"{}\" y2=\"{y:.1}\" stroke=\"#ddd\"/>\n\
             <text x=\"{}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
            ML, W - MR, ML - 6.0, y + 4.0, trim_num(t)
        ));
    }
    svg.push_str(&format!(
        "<rect x=\"{ML}\" y=\"{MT}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333\"/>\n",
        W - ML - MR,
        H - MT - MB
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">{}</text>\n",
        (ML + W - MR) / 2.0,
        H - 12.0,
        xml_escape(x_label)
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{}</text>\n",
        (MT + H - MB) / 2.0,
        (MT + H - MB) / 2.0,
        xml_escape(y_label)
    ));

    for (k, s) in series.iter().enumerate() {
        let color = CHART_COLORS[k % CHART_COLORS.len()];
        let path: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            path.join(" ")
        ));
        let ly = MT + 18.0 + 20.0 * k as f64;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{ly:.1}\" x2=\"{}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"2\"/>\n\
             <text x=\"{}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            W - MR + 10.0,
            W - MR + 36.0,
            W - MR + 42.0,
            ly + 4.0,
            xml_escape(&s.name)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Formats tick labels without trailing zeros (`1.5`, `20`, `0.25`).
fn trim_num(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::two_bus_scenario;

    #[test]
    fn comparison_matches_direct_pipeline() {
        let s = two_bus_scenario((20.0, 20.0), (30.0, 30.0), (0.0, 50.0), 100.0);
        let rows = strategy_comparison(&s).unwrap();
        assert_eq!(rows.len(), 4);
        let non = &rows[0];
        assert_eq!(non.strategy, Strategy::NonStrategic);
        assert!((non.realized_profit - 0.0).abs() < 1e-9);
        let conduct = rows
            .iter()
            .find(|r| r.strategy == Strategy::ConductAware)
            .unwrap();
        assert!((conduct.realized_profit - 400.0).abs() < 1e-6);
        let csv = comparison_csv(&s, &rows);
        assert_eq!(csv.lines().count(), 1 + 4 * s.units.len());
        assert!(csv.starts_with("strategy,unit,owner,"));
    }

    #[test]
    fn csv_is_byte_stable() {
        let s = two_bus_scenario((10.0, 20.0), (30.0, 30.0), (0.0, 50.0), 100.0);
        let a = comparison_csv(&s, &strategy_comparison(&s).unwrap());
        let b = comparison_csv(&s, &strategy_comparison(&s).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn welfare_identity_on_uniform_prices() {
        let s = two_bus_scenario((20.0, 20.0), (30.0, 30.0), (0.0, 50.0), 100.0);
        let r = crate::clearing::clear(&s, &OfferSet::truthful(&s), true).unwrap();
        assert!(r.lmp.iter().all(|&l| (l - r.lmp[0]).abs() < 1e-9));
        assert!(welfare_identity_gap(&s, &r) < 1e-6);
    }

    #[test]
    fn chart_contains_each_series() {
        let svg = svg_line_chart(
            "profits",
            "threshold fraction",
            "profit",
            &[
                Series {
                    name: "conduct".into(),
                    points: vec![(0.5, 300.0), (1.0, 300.0), (1.5, 450.0)],
                },
                Series {
                    name: "impact".into(),
                    points: vec![(0.5, 300.0), (1.0, 600.0), (1.5, 650.0)],
                },
            ],
        );
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("conduct") && svg.contains("impact"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(!svg.contains("http://") || svg.contains("xmlns"));
    }

    #[test]
    fn tick_helper_spans_range() {
        let ticks = nice_ticks(0.4, 3.1);
        assert!(ticks.first().copied().unwrap() >= 0.4);
        assert!(ticks.last().copied().unwrap() <= 3.1 + 1e-9);
        assert!(ticks.len() >= 3);
    }
}
