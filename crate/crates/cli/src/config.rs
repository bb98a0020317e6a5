use std::path::{Path, PathBuf};

use collinear::dynamics::DEFAULT_ENERGY;
use collinear::harness::{SampleBox, SamplingConfig, ShootingConfig};
use collinear::manifolds::ManifoldConfig;
use collinear::pullback::{ChainConfig, Quantities};
use collinear::symbolic::RegionSampling;
use collinear::{Error, FlowConfig, MassTriple, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Masses as three positive numbers or the keyword `"equal"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MassSpec {
    Named(String),
    Values([f64; 3]),
}

impl MassSpec {
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim() == "equal" {
            return Ok(MassSpec::Named("equal".into()));
        }
        let parts: Vec<f64> = text
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::InvalidConfig(format!("cannot parse masses {text:?}")))?;
        let values: [f64; 3] = parts
            .try_into()
            .map_err(|_| Error::InvalidConfig(format!("expected three masses, got {text:?}")))?;
        Ok(MassSpec::Values(values))
    }

    pub fn triple(&self) -> Result<MassTriple> {
        match self {
            MassSpec::Named(name) if name == "equal" => Ok(MassTriple::equal()),
            MassSpec::Named(name) => Err(Error::InvalidConfig(format!("unknown mass preset {name:?}"))),
            MassSpec::Values([a, b, c]) => MassTriple::new(*a, *b, *c),
        }
    }
}

/// Polyline resolutions for manifold arcs and pullback chains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Resolution {
    pub arc_max_gap: f64,
    pub chain_max_gap: f64,
    pub max_turn_degrees: f64,
    /// Samples per region when estimating partition transitions.
    pub region_samples: usize,
}

impl Default for Resolution {
    fn default() -> Self {
        Self {
            arc_max_gap: 1e-3,
            chain_max_gap: 1e-3,
            max_turn_degrees: 15.0,
            region_samples: 400,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sampling {
    pub n_orbits: usize,
    pub max_letters: usize,
    pub margin: f64,
    /// Realize every lower-bound word up to this length (0 skips).
    pub realize_max_length: usize,
    pub shooting_budget: usize,
}

impl Default for Sampling {
    fn default() -> Self {
        Self {
            n_orbits: 10_000,
            max_letters: 12,
            margin: 0.2,
            realize_max_length: 0,
            shooting_budget: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub masses: MassSpec,
    pub energy: f64,
    pub tolerance: f64,
    pub max_pullbacks: u32,
    pub seed: u64,
    pub resolution: Resolution,
    pub sampling: Sampling,
    /// Quantities given directly; skips the manifold computation where possible.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quantities: Option<Quantities>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<String>,
    /// Not part of the hash.
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            masses: MassSpec::Named("equal".into()),
            energy: DEFAULT_ENERGY,
            tolerance: 1e-12,
            max_pullbacks: 64,
            seed: 1,
            resolution: Resolution::default(),
            sampling: Sampling::default(),
            quantities: None,
            grid: None,
            out: PathBuf::from("out"),
        }
    }
}

fn check(ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidConfig(what.into()))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        self.masses.triple().map_err(|e| Error::InvalidConfig(e.to_string()))?;
        check(self.energy.is_finite() && self.energy < 0.0, "energy must be negative")?;
        check((1e-14..=1e-6).contains(&self.tolerance), "tolerance must lie in [1e-14, 1e-6]")?;
        check((1..=1000).contains(&self.max_pullbacks), "max_pullbacks must lie in [1, 1000]")?;
        let r = &self.resolution;
        for (name, gap) in [("arc_max_gap", r.arc_max_gap), ("chain_max_gap", r.chain_max_gap)] {
            check(gap > 0.0 && gap <= 0.1, &format!("{name} must lie in (0, 0.1]"))?;
        }
        check(r.max_turn_degrees > 0.0 && r.max_turn_degrees <= 90.0, "max_turn_degrees must lie in (0, 90]")?;
        check(r.region_samples >= 1, "region_samples must be positive")?;
        let s = &self.sampling;
        check(s.n_orbits >= 1, "n_orbits must be positive")?;
        check((1..=64).contains(&s.max_letters), "max_letters must lie in [1, 64]")?;
        check(s.margin.is_finite() && s.margin >= 0.0, "margin must be non-negative")?;
        check(s.realize_max_length <= 16, "realize_max_length must not exceed 16")?;
        check(s.shooting_budget >= 1, "shooting_budget must be positive")?;
        if let Some(q) = &self.quantities {
            q.validate().map_err(|e| Error::InvalidConfig(format!("supplied quantities: {e}")))?;
        }
        if let Some(grid) = &self.grid {
            parse_grid(grid)?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, output directory excluded.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out = PathBuf::new();
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn flow_config(&self) -> FlowConfig {
        FlowConfig {
            tolerance: self.tolerance,
            ..FlowConfig::default()
        }
    }

    pub fn manifold_config(&self) -> ManifoldConfig {
        ManifoldConfig {
            max_gap: self.resolution.arc_max_gap,
            max_turn_degrees: self.resolution.max_turn_degrees,
            ..ManifoldConfig::default()
        }
    }

    pub fn chain_config(&self) -> ChainConfig {
        ChainConfig {
            budget: self.max_pullbacks,
            max_gap: self.resolution.chain_max_gap,
            max_turn_degrees: self.resolution.max_turn_degrees,
            ..ChainConfig::default()
        }
    }

    pub fn region_sampling(&self) -> RegionSampling {
        RegionSampling {
            samples_per_region: self.resolution.region_samples,
            seed: self.seed,
            ..RegionSampling::default()
        }
    }

    pub fn sampling_config(&self) -> SamplingConfig {
        SamplingConfig {
            n_orbits: self.sampling.n_orbits,
            max_letters: self.sampling.max_letters,
            seed: self.seed,
            margin: self.sampling.margin,
        }
    }

    pub fn shooting_config(&self) -> ShootingConfig {
        ShootingConfig {
            budget: self.sampling.shooting_budget,
            seed: self.seed,
            ..ShootingConfig::default()
        }
    }

    pub fn sample_box(&self, seeds: &collinear::pullback::SeedArcs) -> SampleBox {
        SampleBox::around(seeds, self.sampling.margin)
    }
}

/// Grid of mass triples.
///
/// `simplex:K` lists every `(i, j, k) / K` with positive integers summing to
/// `K`; otherwise the spec is a `;`-separated list of `a,b,c` triples or
/// `equal`.
pub fn parse_grid(spec: &str) -> Result<Vec<MassSpec>> {
    if let Some(k) = spec.trim().strip_prefix("simplex:") {
        let k: u32 = k
            .trim()
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad simplex resolution in {spec:?}")))?;
        check((3..=200).contains(&k), "simplex resolution must lie in [3, 200]")?;
        let mut cells = Vec::new();
        for i in 1..k {
            for j in 1..k - i {
                let l = k - i - j;
                cells.push(MassSpec::Values([i as f64 / k as f64, j as f64 / k as f64, l as f64 / k as f64]));
            }
        }
        return Ok(cells);
    }
    let cells = spec
        .split(';')
        .filter(|s| !s.trim().is_empty())
        .map(MassSpec::parse)
        .collect::<Result<Vec<_>>>()?;
    check(!cells.is_empty(), "empty grid")?;
    for c in &cells {
        c.triple().map_err(|e| Error::InvalidConfig(e.to_string()))?;
    }
    Ok(cells)
}
