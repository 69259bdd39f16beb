//! `mitbid` — batch front end for the market toolkit.
//!
//! Verbs: `clear`, `bid`, `mitigate`, `sweep`, `hourly`, `verify`,
//! `report-tables`. Outputs are byte-stable CSV files plus self-contained
//! SVG charts. Exit codes: 0 success, 1 usage or input error, 2 infeasible
//! market.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mitbid_core::bidding::{solve_bid, threshold_sweep, Strategy};
use mitbid_core::clearing::{clear, OfferSet};
use mitbid_core::mitigation::run_pipeline;
use mitbid_core::network::{load_scenario, DemandProfile, Scenario};
use mitbid_core::report::{hourly_csv, hourly_run, svg_line_chart, Series};
use mitbid_core::verify::{golden_tables, run_verify, VerifyOptions};
use mitbid_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "mitbid",
    about = "Market clearing, offer mitigation, and strategic bidding studies",
    version,
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutDir {
    /// Directory for output files (created if missing).
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Clear the market once and write dispatch/price rows.
    Clear {
        /// Scenario JSON file.
        scenario: PathBuf,
        /// `truthful` or a JSON offer-set file.
        #[arg(long, default_value = "truthful")]
        offers: String,
        #[command(flatten)]
        out: OutDir,
    },
    /// Optimize offers for one strategy, run mitigation, write both tables.
    Bid {
        scenario: PathBuf,
        /// nonstrategic | unaware | conduct | impact
        #[arg(long)]
        strategy: String,
        #[command(flatten)]
        out: OutDir,
    },
    /// Screen an offer file and write the before/after table.
    Mitigate {
        scenario: PathBuf,
        /// JSON offer-set file to screen.
        #[arg(long)]
        offers: PathBuf,
        #[command(flatten)]
        out: OutDir,
    },
    /// Post-mitigation profit vs. threshold fraction for both aware
    /// strategies; writes CSV and an SVG chart.
    Sweep {
        scenario: PathBuf,
        /// Fractions as lo:hi:step, e.g. 0.5:3.0:0.25.
        #[arg(long, default_value = "0.5:3.0:0.25")]
        thresholds: String,
        #[command(flatten)]
        out: OutDir,
    },
    /// All four strategies at every hour of a demand profile; writes CSV
    /// and profit/welfare charts.
    Hourly {
        scenario: PathBuf,
        /// Hourly totals CSV (hour,total_mw rows).
        #[arg(long)]
        profile: PathBuf,
        #[command(flatten)]
        out: OutDir,
    },
    /// Run the self-check suite; nonzero exit on any failed check.
    Verify {
        /// Directory holding the scenario corpus and golden/ tables.
        #[arg(long, default_value = "scenarios")]
        scenario_dir: PathBuf,
        /// Skip the brute-force cross-check.
        #[arg(long)]
        no_oracle: bool,
        /// Grid resolution of the brute-force scan, $/MWh.
        #[arg(long, default_value_t = 0.25)]
        grid_step: f64,
        /// Seed of the randomized clearing suite.
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Recompute the golden strategy tables into a directory.
    ReportTables {
        /// Directory holding the scenario corpus.
        #[arg(long, default_value = "scenarios")]
        scenario_dir: PathBuf,
        #[command(flatten)]
        out: OutDir,
    },
}

fn main() -> ExitCode {
    // clap's own exit code for bad usage is 2; the contract here is 1 for
    // usage errors and 2 for infeasible markets, so parse manually.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are successful output, not errors.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(Error::Infeasible(msg)) => {
            eprintln!("mitbid: infeasible market: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("mitbid: {e}");
            ExitCode::from(1)
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(Error::Io)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    ensure_dir(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(Error::Io)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".into())
}

fn load_offers(s: &Scenario, spec: &str) -> Result<OfferSet> {
    if spec == "truthful" {
        return Ok(OfferSet::truthful(s));
    }
    let text = std::fs::read_to_string(spec).map_err(Error::Io)?;
    let offers: OfferSet = serde_json::from_str(&text)
        .map_err(|e| Error::Scenario(format!("offer file {spec}: {e}")))?;
    offers.validate(s)?;
    Ok(offers)
}

fn parse_thresholds(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::Validation(format!(
            "thresholds must be lo:hi:step, got {spec:?}"
        )));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| {
            p.parse::<f64>()
                .map_err(|_| Error::Validation(format!("bad threshold number {p:?}")))
        })
        .collect::<Result<_>>()?;
    let (lo, hi, step) = (nums[0], nums[1], nums[2]);
    if !(lo > 0.0) || !(step > 0.0) || hi < lo {
        return Err(Error::Validation(format!(
            "thresholds need 0 < lo <= hi and step > 0, got {spec:?}"
        )));
    }
    let mut out = Vec::new();
    let mut k = 0usize;
    loop {
        let f = lo + step * k as f64;
        if f > hi + 1e-9 {
            break;
        }
        out.push(f);
        k += 1;
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Clear {
            scenario,
            offers,
            out,
        } => {
            let s = load_scenario(&scenario)?;
            let offer_set = load_offers(&s, &offers)?;
            let r = clear(&s, &offer_set, true)?;
            write_file(&out.out, &format!("clear_{}.csv", stem(&scenario)), &r.to_csv(&s))?;
            let prices: Vec<String> = r.lmp.iter().map(|l| format!("{l:.4}")).collect();
            println!("cleared: lmp [{}]", prices.join(", "));
        }
        Command::Bid {
            scenario,
            strategy,
            out,
        } => {
            let s = load_scenario(&scenario)?;
            let strategy = Strategy::parse(&strategy)?;
            let offers = if strategy == Strategy::NonStrategic {
                OfferSet::truthful(&s)
            } else {
                let bid = solve_bid(&s, strategy)?;
                println!(
                    "optimized: predicted profit {:.4} ({} nodes, gap {:.2e})",
                    bid.predicted_profit, bid.nodes, bid.gap
                );
                bid.offers
            };
            let report = run_pipeline(&s, &offers)?;
            let base = format!("bid_{}_{}", stem(&scenario), strategy);
            write_file(&out.out, &format!("{base}_offers.json"), &{
                serde_json::to_string_pretty(&offers)
                    .map_err(|e| Error::Scenario(e.to_string()))?
                    + "\n"
            })?;
            write_file(&out.out, &format!("{base}.csv"), &report.to_csv(&s))?;
            let owner = &s.strategic_owner;
            println!(
                "strategy {strategy}: realized owner {owner} profit {:.4} (mitigated: {})",
                mitbid_core::bidding::owner_profit(&s, owner, &report.after),
                report.mitigated()
            );
        }
        Command::Mitigate {
            scenario,
            offers,
            out,
        } => {
            let s = load_scenario(&scenario)?;
            let offer_set = load_offers(&s, &offers.to_string_lossy())?;
            let report = run_pipeline(&s, &offer_set)?;
            write_file(
                &out.out,
                &format!("mitigate_{}.csv", stem(&scenario)),
                &report.to_csv(&s),
            )?;
            println!(
                "conduct failures: {}, impact triggered: {}, mitigated: {}",
                report
                    .conduct_failures
                    .iter()
                    .flatten()
                    .filter(|&&f| f)
                    .count(),
                report.impact_triggered,
                report.mitigated()
            );
        }
        Command::Sweep {
            scenario,
            thresholds,
            out,
        } => {
            let s = load_scenario(&scenario)?;
            let fractions = parse_thresholds(&thresholds)?;
            let conduct = threshold_sweep(&s, Strategy::ConductAware, &fractions)?;
            let impact = threshold_sweep(&s, Strategy::ImpactAware, &fractions)?;
            let mut csv = String::from(
                "fraction,conduct_predicted,conduct_realized,impact_predicted,impact_realized\n",
            );
            for (c, i) in conduct.iter().zip(&impact) {
                csv.push_str(&format!(
                    "{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                    c.fraction, c.predicted_profit, c.realized_profit, i.predicted_profit,
                    i.realized_profit
                ));
            }
            let name = stem(&scenario);
            write_file(&out.out, &format!("sweep_{name}.csv"), &csv)?;
            let chart = svg_line_chart(
                &format!("Post-mitigation profit vs threshold — {name}"),
                "threshold fraction",
                "realized profit, $",
                &[
                    Series {
                        name: "conduct-aware".into(),
                        points: conduct
                            .iter()
                            .map(|p| (p.fraction, p.realized_profit))
                            .collect(),
                    },
                    Series {
                        name: "impact-aware".into(),
                        points: impact
                            .iter()
                            .map(|p| (p.fraction, p.realized_profit))
                            .collect(),
                    },
                ],
            );
            write_file(&out.out, &format!("sweep_{name}.svg"), &chart)?;
        }
        Command::Hourly {
            scenario,
            profile,
            out,
        } => {
            let s = load_scenario(&scenario)?;
            let total = s.total_load();
            let shares: Vec<f64> = s.network.buses.iter().map(|b| b.load_mw / total).collect();
            let profile = DemandProfile::from_csv(&profile, shares)?;
            let rows = hourly_run(&s, &profile)?;
            let name = stem(&scenario);
            write_file(&out.out, &format!("hourly_{name}.csv"), &hourly_csv(&rows))?;
            for (what, select) in [
                ("profit", 0usize),
                ("welfare", 1usize),
            ] {
                let series: Vec<Series> = Strategy::ALL
                    .iter()
                    .enumerate()
                    .map(|(k, strat)| Series {
                        name: strat.name().into(),
                        points: rows
                            .iter()
                            .map(|r| {
                                let v = if select == 0 { r.profit[k] } else { r.welfare[k] };
                                (r.hour as f64, v)
                            })
                            .collect(),
                    })
                    .collect();
                let chart = svg_line_chart(
                    &format!("Hourly {what} — {name}"),
                    "hour",
                    &format!("{what}, $"),
                    &series,
                );
                write_file(&out.out, &format!("hourly_{name}_{what}.svg"), &chart)?;
            }
        }
        Command::Verify {
            scenario_dir,
            no_oracle,
            grid_step,
            seed,
        } => {
            let opts = VerifyOptions {
                oracle: !no_oracle,
                grid_step,
                seed,
                golden: true,
            };
            let report = run_verify(&scenario_dir, &opts)?;
            print!("{}", report.to_text());
            if !report.passed() {
                return Ok(ExitCode::from(1));
            }
        }
        Command::ReportTables { scenario_dir, out } => {
            for (name, contents) in golden_tables(&scenario_dir)? {
                write_file(&out.out, &name, &contents)?;
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
