//! Synthetic fleets anchored on measured inter-region latencies.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{ClusterGraph, CommEdge, MachineNode};

/// Regions of the measured latency table, in table order.
pub const KNOWN_REGIONS: [&str; 10] = [
    "Beijing",
    "Nanjing",
    "California",
    "Tokyo",
    "Berlin",
    "London",
    "New Delhi",
    "Paris",
    "Rome",
    "Brasilia",
];

// Measured ms per 64 bytes from Beijing, Nanjing and California to the other
// sites. `None` marks a pair that could not communicate.
const MEASURED: [(&str, &str, Option<f64>); 23] = [
    ("Beijing", "California", Some(89.1)),
    ("Beijing", "Tokyo", Some(74.3)),
    ("Beijing", "Berlin", Some(250.5)),
    ("Beijing", "London", Some(229.8)),
    ("Beijing", "New Delhi", Some(341.9)),
    ("Beijing", "Paris", None),
    ("Beijing", "Rome", Some(296.0)),
    ("Beijing", "Brasilia", Some(341.8)),
    ("Nanjing", "California", Some(97.9)),
    ("Nanjing", "Tokyo", Some(173.8)),
    ("Nanjing", "Berlin", Some(213.7)),
    ("Nanjing", "London", Some(176.7)),
    ("Nanjing", "New Delhi", Some(236.3)),
    ("Nanjing", "Paris", Some(265.1)),
    ("Nanjing", "Rome", Some(741.3)),
    ("Nanjing", "Brasilia", Some(351.3)),
    ("California", "Tokyo", Some(118.8)),
    ("California", "Berlin", Some(144.8)),
    ("California", "London", Some(132.3)),
    ("California", "New Delhi", Some(197.0)),
    ("California", "Paris", Some(133.9)),
    ("California", "Rome", Some(158.6)),
    ("California", "Brasilia", Some(158.6)),
];

// Pairs that were never measured. Placeholder magnitudes chosen to be
// consistent with the measured rows (nearby European sites are cheap,
// intercontinental hops cost 130-330 ms).
const ASSUMED: [(&str, &str, f64); 22] = [
    ("Beijing", "Nanjing", 30.0),
    ("Tokyo", "Berlin", 235.0),
    ("Tokyo", "London", 225.0),
    ("Tokyo", "New Delhi", 130.0),
    ("Tokyo", "Paris", 230.0),
    ("Tokyo", "Rome", 240.0),
    ("Tokyo", "Brasilia", 270.0),
    ("Berlin", "London", 25.0),
    ("Berlin", "New Delhi", 150.0),
    ("Berlin", "Paris", 20.0),
    ("Berlin", "Rome", 30.0),
    ("Berlin", "Brasilia", 210.0),
    ("London", "New Delhi", 140.0),
    ("London", "Paris", 15.0),
    ("London", "Rome", 35.0),
    ("London", "Brasilia", 195.0),
    ("New Delhi", "Paris", 145.0),
    ("New Delhi", "Rome", 150.0),
    ("New Delhi", "Brasilia", 330.0),
    ("Paris", "Rome", 25.0),
    ("Paris", "Brasilia", 200.0),
    ("Rome", "Brasilia", 215.0),
];

/// Symmetric inter-region base latencies; `None` = no connectivity.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionLatencyTable {
    regions: Vec<String>,
    base: Vec<Option<f64>>,
}

impl RegionLatencyTable {
    pub fn new(regions: Vec<String>) -> Self {
        let k = regions.len();
        Self {
            regions,
            base: vec![None; k * k],
        }
    }

    /// Ten-region table: measured rows plus placeholder values for the rest.
    pub fn standard() -> Self {
        let mut t = Self::new(KNOWN_REGIONS.iter().map(|s| s.to_string()).collect());
        for (a, b, w) in MEASURED {
            t.set(a, b, w);
        }
        for (a, b, w) in ASSUMED {
            t.set(a, b, Some(w));
        }
        t
    }

    pub fn regions(&self) -> &[String] {
        &self.regions
    }

    fn slot(&self, region: &str) -> Option<usize> {
        self.regions.iter().position(|r| r == region)
    }

    pub fn set(&mut self, a: &str, b: &str, latency: Option<f64>) {
        let (i, j) = (self.slot(a).expect("known region"), self.slot(b).expect("known region"));
        let k = self.regions.len();
        self.base[i * k + j] = latency;
        self.base[j * k + i] = latency;
    }

    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let (i, j) = (self.slot(a)?, self.slot(b)?);
        self.base[i * self.regions.len() + j]
    }
}

/// GPU models seen in the fleet: (name, compute capability, GB per GPU).
pub const GPU_ROSTER: [(&str, f64, f64); 9] = [
    ("A100-80GB", 8.0, 80.0),
    ("A100-40GB", 8.0, 40.0),
    ("A40", 8.6, 48.0),
    ("V100-32GB", 7.0, 32.0),
    ("V100-16GB", 7.0, 16.0),
    ("RTX A5000", 8.6, 24.0),
    ("GTX 1080 Ti", 6.1, 11.0),
    ("RTX 3090", 8.6, 24.0),
    ("TITAN Xp", 6.1, 12.0),
];

#[derive(Debug, Clone, PartialEq)]
pub struct FleetConfig {
    pub gpus_per_machine: u32,
    /// Relative jitter applied to inter-region base latency.
    pub jitter: f64,
    pub intra_region_ms: (f64, f64),
    /// Fraction of otherwise-connected pairs dropped.
    pub disconnect_fraction: f64,
}

impl Default for FleetConfig {
    fn default() -> Self {
        Self {
            gpus_per_machine: 8,
            jitter: 0.10,
            intra_region_ms: (1.0, 5.0),
            disconnect_fraction: 0.05,
        }
    }
}

fn round_tenth(x: f64) -> f64 {
    ((x * 10.0).round() / 10.0).max(0.1)
}

pub fn generate_fleet(seed: u64, n: usize, table: &RegionLatencyTable) -> ClusterGraph {
    generate_fleet_with(seed, n, table, &FleetConfig::default())
}

/// Seeded fleet of `n ≥ 1` machines with ids `0..n`.
pub fn generate_fleet_with(seed: u64, n: usize, table: &RegionLatencyTable, cfg: &FleetConfig) -> ClusterGraph {
    assert!(n >= 1, "fleet needs at least one machine");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes: Vec<MachineNode> = (0..n)
        .map(|i| {
            let region = table.regions().choose(&mut rng).expect("non-empty table").clone();
            let &(_, cc, per_gpu) = GPU_ROSTER.choose(&mut rng).expect("non-empty roster");
            MachineNode::new(i as u32, region, cc, per_gpu * f64::from(cfg.gpus_per_machine))
        })
        .collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let (ri, rj) = (&nodes[i].region, &nodes[j].region);
            let latency = if ri == rj {
                let (lo, hi) = cfg.intra_region_ms;
                Some(rng.gen_range(lo..=hi))
            } else {
                let jitter: f64 = rng.gen_range(-cfg.jitter..=cfg.jitter);
                table.get(ri, rj).map(|b| b * (1.0 + jitter))
            };
            let dropped = rng.gen_bool(cfg.disconnect_fraction);
            if let (Some(w), false) = (latency, dropped) {
                edges.push(CommEdge::new(i as u32, j as u32, round_tenth(w)));
            }
        }
    }
    ClusterGraph::from_parts(nodes, edges).expect("generated fleet is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_is_complete_and_symmetric() {
        let t = RegionLatencyTable::standard();
        let mut missing = Vec::new();
        for a in KNOWN_REGIONS {
            for b in KNOWN_REGIONS {
                if a != b {
                    assert_eq!(t.get(a, b), t.get(b, a));
                    if t.get(a, b).is_none() && a < b {
                        missing.push((a, b));
                    }
                }
            }
        }
        assert_eq!(missing, vec![("Beijing", "Paris")]);
        assert_eq!(t.get("Beijing", "Tokyo"), Some(74.3));
    }

    #[test]
    fn deterministic_46_node_fleet() {
        let t = RegionLatencyTable::standard();
        let a = generate_fleet(11, 46, &t);
        assert_eq!(a.len(), 46);
        assert_eq!(a, generate_fleet(11, 46, &t));
        assert_ne!(a, generate_fleet(12, 46, &t));
        assert!(a.validate().is_empty());
    }

    #[test]
    fn latency_ranges_follow_regions() {
        let t = RegionLatencyTable::standard();
        for seed in 0..20 {
            let g = generate_fleet(seed, 46, &t);
            for e in g.edges() {
                let (ra, rb) = (&g.node(e.a).unwrap().region, &g.node(e.b).unwrap().region);
                if ra == rb {
                    assert!((1.0..=5.0).contains(&e.latency_ms_per_64b));
                } else {
                    let base = t.get(ra, rb).expect("only connected regions get edges");
                    assert!((e.latency_ms_per_64b - base).abs() <= 0.1 * base + 0.05);
                }
                assert!(!(ra == "Beijing" && rb == "Paris" || ra == "Paris" && rb == "Beijing"));
            }
        }
    }
}
