//! Network, unit, and scenario data model.
//!
//! A [`Scenario`] bundles one network (buses and branches), a fleet of
//! generating units with block offer curves, and the market-rule scalars
//! (offer/price caps, mitigation threshold fractions, tie-break penalty,
//! undercut step). Scenario files are JSON; hourly demand profiles are CSV
//! with columns `hour,total_mw`, distributed over buses by fixed shares.
//!
//! Everything is immutable after [`load_scenario`]/[`Scenario::validate`]:
//! downstream code clones and edits copies (e.g. to scale loads or swap
//! offered prices) rather than mutating shared state.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

// ─── data model ──────────────────────────────────────────────────────────────

/// A network node carrying (inelastic) load in MW.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Bus {
    pub id: u32,
    pub load_mw: f64,
}

/// A transmission line. `susceptance` is in MW per radian of angle
/// difference: flow = susceptance * (angle_from - angle_to).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Branch {
    pub from_bus: u32,
    pub to_bus: u32,
    pub susceptance: f64,
    pub limit_mw: f64,
}

/// One step of a unit's offer curve. `offered_price` defaults to
/// `true_cost` when the scenario file omits it.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct OfferBlock {
    pub capacity_mw: f64,
    pub true_cost: f64,
    #[serde(default = "default_nan")]
    pub offered_price: f64,
}

fn default_nan() -> f64 {
    f64::NAN
}

/// A generating unit: located at one bus, owned by one trading entity,
/// offering an ordered list of blocks with nondecreasing true costs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GenUnit {
    pub id: String,
    pub bus: u32,
    pub owner: String,
    pub blocks: Vec<OfferBlock>,
}

impl GenUnit {
    /// Total nameplate capacity (sum over blocks), MW.
    pub fn capacity_mw(&self) -> f64 {
        self.blocks.iter().map(|b| b.capacity_mw).sum()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
pub struct Network {
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
}

/// One market case: network + units + market rules.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Scenario {
    /// Free-text provenance notes (e.g. which values are reconstructed
    /// rather than published); not used by any computation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
    pub network: Network,
    pub units: Vec<GenUnit>,
    /// Owner whose offers the bidding module optimizes.
    pub strategic_owner: String,
    /// Upper bound on any offered block price, $/MWh.
    pub offer_cap: f64,
    /// Upper bound on anticipated clearing prices in the bid problem, $/MWh.
    pub price_cap: f64,
    /// Conduct threshold as a fraction of the block reference price.
    pub conduct_threshold_frac: f64,
    /// Impact threshold as a fraction of the bus reference price.
    pub impact_threshold_frac: f64,
    /// Weight of the proportional-dispatch penalty among tied units.
    #[serde(default = "default_tie_break_penalty")]
    pub tie_break_penalty: f64,
    /// Price decrement used to realize strict undercuts, $/MWh.
    #[serde(default = "default_epsilon_price")]
    pub epsilon_price: f64,
}

fn default_tie_break_penalty() -> f64 {
    1e-4
}

fn default_epsilon_price() -> f64 {
    0.01
}

/// Hourly totals plus the fixed per-bus split applied to each total.
/// `shares[k]` corresponds to `scenario.network.buses[k]` by position.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandProfile {
    pub rows: Vec<(u32, f64)>,
    pub shares: Vec<f64>,
}

// ─── loading and validation ──────────────────────────────────────────────────

/// Loads and validates a scenario JSON file. Blocks without an explicit
/// `offered_price` are filled with their `true_cost`.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Scenario(format!("{}: {e}", path.display())))?;
    let mut s: Scenario = serde_json::from_str(&text)
        .map_err(|e| Error::Scenario(format!("{}: {e}", path.display())))?;
    for u in s.units.iter_mut() {
        for b in u.blocks.iter_mut() {
            if b.offered_price.is_nan() {
                b.offered_price = b.true_cost;
            }
        }
    }
    s.validate()?;
    Ok(s)
}

/// Writes a scenario as pretty-printed JSON.
pub fn save_scenario(s: &Scenario, path: impl AsRef<Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(s)
        .map_err(|e| Error::Scenario(format!("serialize: {e}")))?;
    std::fs::write(path.as_ref(), text + "\n")?;
    Ok(())
}

impl Scenario {
    /// Checks every structural invariant, naming the first violation.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashMap::new();
        for b in &self.network.buses {
            if b.load_mw < 0.0 || !b.load_mw.is_finite() {
                return Err(Error::Validation(format!(
                    "bus {}: load_mw must be finite and nonnegative",
                    b.id
                )));
            }
            if seen.insert(b.id, ()).is_some() {
                return Err(Error::Validation(format!("duplicate bus id {}", b.id)));
            }
        }
        if self.network.buses.is_empty() {
            return Err(Error::Validation("scenario has no buses".into()));
        }

        let mut pairs = HashMap::new();
        for br in &self.network.branches {
            if br.from_bus == br.to_bus {
                return Err(Error::Validation(format!(
                    "branch {}-{}: endpoints must differ",
                    br.from_bus, br.to_bus
                )));
            }
            if !(br.susceptance > 0.0) {
                return Err(Error::Validation(format!(
                    "branch {}-{}: susceptance must be positive",
                    br.from_bus, br.to_bus
                )));
            }
            if !(br.limit_mw > 0.0) {
                return Err(Error::Validation(format!(
                    "branch {}-{}: limit_mw must be positive",
                    br.from_bus, br.to_bus
                )));
            }
            for end in [br.from_bus, br.to_bus] {
                if !seen.contains_key(&end) {
                    return Err(Error::Validation(format!(
                        "branch {}-{}: bus {} does not exist",
                        br.from_bus, br.to_bus, end
                    )));
                }
            }
            if pairs.insert((br.from_bus, br.to_bus), ()).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate branch {}-{}",
                    br.from_bus, br.to_bus
                )));
            }
        }

        let mut unit_ids = HashMap::new();
        for u in &self.units {
            if unit_ids.insert(u.id.clone(), ()).is_some() {
                return Err(Error::Validation(format!("duplicate unit id {}", u.id)));
            }
            if !seen.contains_key(&u.bus) {
                return Err(Error::Validation(format!(
                    "unit {}: bus {} does not exist",
                    u.id, u.bus
                )));
            }
            if u.blocks.is_empty() {
                return Err(Error::Validation(format!("unit {}: no blocks", u.id)));
            }
            let mut prev_cost = f64::NEG_INFINITY;
            for (k, blk) in u.blocks.iter().enumerate() {
                if !(blk.capacity_mw > 0.0) {
                    return Err(Error::Validation(format!(
                        "unit {} block {k}: capacity_mw must be positive",
                        u.id
                    )));
                }
                if blk.true_cost < 0.0 || !blk.true_cost.is_finite() {
                    return Err(Error::Validation(format!(
                        "unit {} block {k}: true_cost must be finite and nonnegative",
                        u.id
                    )));
                }
                if blk.true_cost < prev_cost - 1e-12 {
                    return Err(Error::Validation(format!(
                        "unit {} block {k}: true costs must be nondecreasing",
                        u.id
                    )));
                }
                prev_cost = blk.true_cost;
                if blk.offered_price.is_nan()
                    || blk.offered_price < 0.0
                    || blk.offered_price > self.offer_cap + 1e-12
                {
                    return Err(Error::Validation(format!(
                        "unit {} block {k}: offered_price must lie in [0, offer_cap]",
                        u.id
                    )));
                }
            }
        }

        if !(self.offer_cap > 0.0) {
            return Err(Error::Validation("offer_cap must be positive".into()));
        }
        if !(self.price_cap > 0.0) {
            return Err(Error::Validation("price_cap must be positive".into()));
        }
        if self.conduct_threshold_frac < 0.0 || self.impact_threshold_frac < 0.0 {
            return Err(Error::Validation("threshold fractions must be nonnegative".into()));
        }
        if !(self.tie_break_penalty > 0.0) {
            return Err(Error::Validation("tie_break_penalty must be positive".into()));
        }
        if self.epsilon_price < 0.0 {
            return Err(Error::Validation("epsilon_price must be nonnegative".into()));
        }
        if !self.units.iter().any(|u| u.owner == self.strategic_owner) {
            return Err(Error::Validation(format!(
                "strategic owner {} owns no unit",
                self.strategic_owner
            )));
        }
        Ok(())
    }

    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.network.buses.iter().position(|b| b.id == id)
    }

    pub fn unit_index(&self, id: &str) -> Option<usize> {
        self.units.iter().position(|u| u.id == id)
    }

    /// Indices of units belonging to `owner`.
    pub fn units_of(&self, owner: &str) -> Vec<usize> {
        self.units
            .iter()
            .enumerate()
            .filter(|(_, u)| u.owner == owner)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn total_load(&self) -> f64 {
        self.network.buses.iter().map(|b| b.load_mw).sum()
    }

    pub fn total_capacity(&self) -> f64 {
        self.units.iter().map(|u| u.capacity_mw()).sum()
    }
}

// ─── demand profiles ─────────────────────────────────────────────────────────

impl DemandProfile {
    /// Reads `hour,total_mw` rows; `shares` gives the per-bus split in bus
    /// order and must sum to 1.
    pub fn from_csv(path: impl AsRef<Path>, shares: Vec<f64>) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::Scenario(format!("{}: {e}", path.display())))?;
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Scenario(format!("{}: {e}", path.display())))?;
            if rec.len() < 2 {
                return Err(Error::Scenario(format!(
                    "{}: expected columns hour,total_mw",
                    path.display()
                )));
            }
            let hour: u32 = rec[0]
                .parse()
                .map_err(|_| Error::Scenario(format!("{}: bad hour {:?}", path.display(), &rec[0])))?;
            let total: f64 = rec[1]
                .parse()
                .map_err(|_| Error::Scenario(format!("{}: bad total {:?}", path.display(), &rec[1])))?;
            rows.push((hour, total));
        }
        let p = DemandProfile { rows, shares };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.shares.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!(
                "demand shares must sum to 1, got {sum}"
            )));
        }
        if self.shares.iter().any(|&s| s < 0.0) {
            return Err(Error::Validation("demand shares must be nonnegative".into()));
        }
        for &(h, total) in &self.rows {
            if total < 0.0 || !total.is_finite() {
                return Err(Error::Validation(format!(
                    "hour {h}: total load must be finite and nonnegative"
                )));
            }
        }
        Ok(())
    }

    pub fn total_at(&self, hour: u32) -> Option<f64> {
        self.rows.iter().find(|&&(h, _)| h == hour).map(|&(_, t)| t)
    }
}

/// Returns a copy of the scenario with bus loads set to
/// `profile.total(hour) * share(bus)`; everything else unchanged.
pub fn scale_loads(s: &Scenario, hour: u32, profile: &DemandProfile) -> Result<Scenario> {
    if profile.shares.len() != s.network.buses.len() {
        return Err(Error::Validation(format!(
            "profile has {} shares for {} buses",
            profile.shares.len(),
            s.network.buses.len()
        )));
    }
    profile.validate()?;
    let total = profile
        .total_at(hour)
        .ok_or_else(|| Error::Validation(format!("hour {hour} not in demand profile")))?;
    let mut out = s.clone();
    for (bus, &share) in out.network.buses.iter_mut().zip(&profile.shares) {
        bus.load_mw = total * share;
    }
    Ok(out)
}

// ─── programmatic builders (used heavily by tests) ───────────────────────────

/// Two buses joined by one line; one single-block unit at each bus.
/// Loads are per-bus; thresholds and caps are the common study defaults.
pub fn two_bus_scenario(
    costs: (f64, f64),
    caps: (f64, f64),
    loads: (f64, f64),
    line_limit: f64,
) -> Scenario {
    Scenario {
        notes: None,
        network: Network {
            buses: vec![
                Bus { id: 1, load_mw: loads.0 },
                Bus { id: 2, load_mw: loads.1 },
            ],
            branches: vec![Branch {
                from_bus: 1,
                to_bus: 2,
                susceptance: 1000.0,
                limit_mw: line_limit,
            }],
        },
        units: vec![
            GenUnit {
                id: "A".into(),
                bus: 1,
                owner: "A".into(),
                blocks: vec![OfferBlock {
                    capacity_mw: caps.0,
                    true_cost: costs.0,
                    offered_price: costs.0,
                }],
            },
            GenUnit {
                id: "B".into(),
                bus: 2,
                owner: "B".into(),
                blocks: vec![OfferBlock {
                    capacity_mw: caps.1,
                    true_cost: costs.1,
                    offered_price: costs.1,
                }],
            },
        ],
        strategic_owner: "A".into(),
        offer_cap: 100.0,
        price_cap: 200.0,
        conduct_threshold_frac: 1.0,
        impact_threshold_frac: 1.0,
        tie_break_penalty: default_tie_break_penalty(),
        epsilon_price: default_epsilon_price(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builder_validates() {
        let s = two_bus_scenario((20.0, 20.0), (30.0, 30.0), (0.0, 50.0), 100.0);
        s.validate().unwrap();
        assert_eq!(s.total_load(), 50.0);
        assert_eq!(s.total_capacity(), 60.0);
        assert_eq!(s.units_of("A"), vec![0]);
    }

    #[test]
    fn rejects_zero_susceptance() {
        let mut s = two_bus_scenario((20.0, 20.0), (30.0, 30.0), (0.0, 50.0), 100.0);
        s.network.branches[0].susceptance = 0.0;
        let err = s.validate().unwrap_err();
        assert!(err.to_string().contains("susceptance"));
    }

    #[test]
    fn rejects_decreasing_block_costs() {
        let mut s = two_bus_scenario((20.0, 20.0), (30.0, 30.0), (0.0, 50.0), 100.0);
        s.units[0].blocks.push(OfferBlock {
            capacity_mw: 10.0,
            true_cost: 5.0,
            offered_price: 5.0,
        });
        let err = s.validate().unwrap_err();
        assert!(err.to_string().contains("nondecreasing"));
    }

    #[test]
    fn round_trip_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("case.json");
        let s = two_bus_scenario((10.0, 20.0), (30.0, 30.0), (0.0, 50.0), 100.0);
        save_scenario(&s, &path).unwrap();
        let back = load_scenario(&path).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn scale_loads_distributes_by_share() {
        let s = two_bus_scenario((20.0, 20.0), (30.0, 30.0), (0.0, 50.0), 100.0);
        let profile = DemandProfile {
            rows: vec![(1, 100.0), (2, 0.0)],
            shares: vec![0.19, 0.81],
        };
        let scaled = scale_loads(&s, 1, &profile).unwrap();
        assert!((scaled.network.buses[0].load_mw - 19.0).abs() < 1e-12);
        assert!((scaled.network.buses[1].load_mw - 81.0).abs() < 1e-12);
        let zero = scale_loads(&s, 2, &profile).unwrap();
        assert_eq!(zero.total_load(), 0.0);
        assert!(scale_loads(&s, 7, &profile).is_err());
    }

    #[test]
    fn bad_shares_rejected() {
        let profile = DemandProfile {
            rows: vec![(1, 100.0)],
            shares: vec![0.5, 0.4],
        };
        assert!(profile.validate().is_err());
    }
}
