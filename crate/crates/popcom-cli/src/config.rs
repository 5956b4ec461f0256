use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use popcom::kernel::KernelParams;
use popcom::sampler::GenerativeConfig;

/// Synthetic dataset description for `--generate`: the model part feeds the
/// sampler, the content part the planted-cluster content generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerateSpec {
    #[serde(flatten)]
    pub model: GenerativeConfig,
    pub content: ContentSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContentSpec {
    /// Number of content attributes.
    pub attrs: usize,
    /// Planted cluster separation in within-cluster standard deviations.
    pub separation: f64,
    #[serde(default)]
    pub seed: u64,
}

pub fn load_generate_spec(path: &PathBuf) -> Result<GenerateSpec> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let spec: GenerateSpec =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    spec.model.validate()?;
    Ok(spec)
}

/// One swept kernel parameter and its values.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Theta,
    Sigma2,
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::Theta => "theta",
            SweepParam::Sigma2 => "sigma2",
        }
    }

    pub fn apply(&self, params: &KernelParams, value: f64) -> KernelParams {
        let mut out = *params;
        match self {
            SweepParam::Theta => out.theta = value,
            SweepParam::Sigma2 => out.sigma2 = value,
        }
        out
    }
}

/// Parse `theta=0.5,1,2` or `sigma2=1,5,10`.
pub fn parse_sweep(text: &str) -> Result<SweepSpec> {
    let (name, values) = text
        .split_once('=')
        .with_context(|| format!("expected `<param>=<v1,v2,..>`, got {text:?}"))?;
    let param = match name.trim() {
        "theta" => SweepParam::Theta,
        "sigma2" => SweepParam::Sigma2,
        other => bail!("unknown sweep parameter {other:?} (use theta or sigma2)"),
    };
    let values: Vec<f64> = values
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .with_context(|| format!("bad sweep value {v:?}"))
        })
        .collect::<Result<_>>()?;
    if values.is_empty() {
        bail!("sweep needs at least one value");
    }
    Ok(SweepSpec { param, values })
}

/// Per-point seeds for sweeps: point 0 reuses the base seed (so a
/// single-value sweep reproduces a plain run exactly), later points get
/// splitmix64-derived seeds.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    if index == 0 {
        return base;
    }
    let mut z = base ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
