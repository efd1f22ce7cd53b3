//! Experiment configuration: a TOML document with nested tables for the
//! domain, coefficients, initial law and grid, plus per-subcommand tables.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;

use kmv_core::coefficients::{CoefficientField, Hypothesis, Kernel, Metadata};
use kmv_core::geometry::Domain;
use kmv_core::killed_sde::{ParticleEnsemble, Semantics, SimulationOptions};
use kmv_core::measures::{LyapunovV, SubProbMeasure, TimeGrid};
use kmv_core::picard::MetricKind;
use kmv_core::rng::{derive_seed, CounterStream};

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    pub domain: DomainSpec,
    pub coefficients: CoefficientSpec,
    #[serde(default)]
    pub initial: Option<InitialSpec>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub simulate: SimulateSpec,
    #[serde(default)]
    pub picard: PicardSpec,
    #[serde(default)]
    pub couple: Option<CoupleSpec>,
    #[serde(default)]
    pub dist: Option<DistSpec>,
    #[serde(default)]
    pub girsanov: Option<GirsanovSpec>,
    #[serde(default)]
    pub validate: ValidateSpec,
    #[serde(default)]
    pub fp_residual: FpSpec,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub kind: String,
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub b: Option<f64>,
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub normal: Option<Vec<f64>>,
    #[serde(default)]
    pub offset: Option<f64>,
    #[serde(default)]
    pub r0: Option<f64>,
    #[serde(default)]
    pub anchor: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSpec {
    pub family: String,
    #[serde(default = "default_tag")]
    pub hypothesis: String,
    #[serde(default = "one", rename = "K")]
    pub k: f64,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default)]
    pub kappa: f64,
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub slope: f64,
    #[serde(default)]
    pub shift: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub sigma: f64,
    #[serde(default = "one")]
    pub beta: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub kernel: Option<String>,
    #[serde(default)]
    pub width: Option<f64>,
    #[serde(default)]
    pub cap: Option<f64>,
    #[serde(default)]
    pub drift: Option<Vec<String>>,
    #[serde(default)]
    pub diffusion: Option<Vec<String>>,
    #[serde(default)]
    pub noise_dim: Option<usize>,
}

fn default_tag() -> String {
    "A".into()
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    /// `uniform`, `point` or `atoms`.
    pub sampler: String,
    #[serde(default)]
    pub lo: Option<Vec<f64>>,
    #[serde(default)]
    pub hi: Option<Vec<f64>>,
    #[serde(default)]
    pub x: Option<Vec<f64>>,
    /// Rows `[x1, …, xd, weight]`.
    #[serde(default)]
    pub atoms: Option<Vec<Vec<f64>>>,
    pub particles: usize,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub t_end: f64,
    pub intervals: usize,
    pub dt: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    #[serde(default = "freeze")]
    pub semantics: String,
    #[serde(default = "yes")]
    pub bridge: bool,
}

impl Default for SimulateSpec {
    fn default() -> Self {
        Self {
            semantics: freeze(),
            bridge: true,
        }
    }
}

fn freeze() -> String {
    "freeze_at_exit".into()
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PicardSpec {
    #[serde(default)]
    pub metric: Option<String>,
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_iter")]
    pub max_iter: usize,
    /// Cap for V on unbounded domains in weighted-variation mode.
    #[serde(default)]
    pub v_cap: Option<f64>,
    #[serde(default)]
    pub v: Option<String>,
}

impl Default for PicardSpec {
    fn default() -> Self {
        Self {
            metric: None,
            theta: None,
            tol: default_tol(),
            max_iter: default_iter(),
            v_cap: None,
            v: None,
        }
    }
}

fn default_tol() -> f64 {
    1e-3
}

fn default_iter() -> usize {
    20
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupleSpec {
    /// Initial law of the second ensemble; defaults to the first.
    #[serde(default)]
    pub initial2: Option<InitialSpec>,
    /// Additive shift of the second side's drift.
    #[serde(default)]
    pub drift_shift: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistSpec {
    pub first: PathBuf,
    pub second: PathBuf,
    #[serde(default)]
    pub method: Option<String>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GirsanovSpec {
    /// Initial law whose constant flow is μ²; μ¹ is the constant flow of
    /// the main initial law.
    pub second: InitialSpec,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
}

fn default_lambdas() -> Vec<f64> {
    vec![1.0, 10.0, 100.0]
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateSpec {
    #[serde(default = "default_samples")]
    pub samples: usize,
}

impl Default for ValidateSpec {
    fn default() -> Self {
        Self { samples: default_samples() }
    }
}

fn default_samples() -> usize {
    2000
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FpSpec {
    /// `sine` or `zero`.
    #[serde(default = "sine")]
    pub test_function: String,
    /// Evaluate on the Picard fixed point instead of one simulate pass.
    #[serde(default)]
    pub fixed_point: bool,
}

impl Default for FpSpec {
    fn default() -> Self {
        Self {
            test_function: sine(),
            fixed_point: false,
        }
    }
}

fn sine() -> String {
    "sine".into()
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| anyhow!("config parse error: {e}"))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<u8>)> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let text = std::str::from_utf8(&bytes).context("config is not UTF-8")?;
        Ok((Self::parse(text)?, bytes))
    }

    /// Name and consistency checks beyond the schema.
    fn check(&self) -> Result<()> {
        self.build_domain()?;
        self.build_field()?;
        semantics(&self.simulate.semantics)?;
        if let Some(g) = &self.grid {
            TimeGrid::new(g.t_end, g.intervals)
                .map_err(|e| anyhow!("grid: {e}"))?
                .substeps(g.dt)
                .map_err(|e| anyhow!("grid: {e}"))?;
        }
        if let Some(m) = &self.picard.metric {
            MetricKind::parse(m).map_err(|e| anyhow!("picard.metric: {e}"))?;
        }
        if let Some(i) = &self.initial {
            self.build_initial(i)?;
        }
        Ok(())
    }

    pub fn build_domain(&self) -> Result<Arc<Domain>> {
        let s = &self.domain;
        let need = |v: Option<f64>, name: &str| v.ok_or_else(|| anyhow!("domain.{name} is required for kind `{}`", s.kind));
        let mut d = match s.kind.as_str() {
            "interval" => Domain::interval(need(s.a, "a")?, need(s.b, "b")?),
            "ball" => Domain::ball(
                s.center.clone().ok_or_else(|| anyhow!("domain.center is required for kind `ball`"))?,
                need(s.radius, "radius")?,
            ),
            "half_space" => Domain::half_space(
                s.normal.clone().ok_or_else(|| anyhow!("domain.normal is required for kind `half_space`"))?,
                s.offset.unwrap_or(0.0),
            ),
            other => bail!("unknown domain kind `{other}` (expected interval, ball or half_space)"),
        }
        .map_err(|e| anyhow!("domain: {e}"))?;
        if let Some(r0) = s.r0 {
            d = d.with_r0(r0).map_err(|e| anyhow!("domain.r0: {e}"))?;
        }
        if let Some(a) = &s.anchor {
            d = d.with_anchor(a.clone()).map_err(|e| anyhow!("domain.anchor: {e}"))?;
        }
        Ok(Arc::new(d))
    }

    pub fn dim(&self) -> Result<usize> {
        Ok(self.build_domain()?.dim())
    }

    pub fn build_field(&self) -> Result<CoefficientField> {
        build_field(&self.coefficients, self.dim()?)
    }

    pub fn grid(&self) -> Result<GridSpec> {
        self.grid.ok_or_else(|| anyhow!("this subcommand needs a [grid] table"))
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        let g = self.grid()?;
        TimeGrid::new(g.t_end, g.intervals).map_err(|e| anyhow!("grid: {e}"))
    }

    pub fn simulation_options(&self) -> Result<SimulationOptions> {
        Ok(SimulationOptions {
            dt: self.grid()?.dt,
            semantics: semantics(&self.simulate.semantics)?,
            bridge_correction: self.simulate.bridge,
            record_paths: false,
        })
    }

    pub fn initial(&self) -> Result<&InitialSpec> {
        self.initial.as_ref().ok_or_else(|| anyhow!("this subcommand needs an [initial] table"))
    }

    pub fn build_initial(&self, spec: &InitialSpec) -> Result<ParticleEnsemble> {
        build_initial(&self.build_domain()?, spec, self.seed)
    }

    pub fn metric(&self) -> Result<MetricKind> {
        match &self.picard.metric {
            Some(m) => Ok(MetricKind::parse(m)?),
            None => Ok(MetricKind::for_hypothesis(self.build_field()?.meta().tag)),
        }
    }

    pub fn lyapunov(&self) -> Result<Option<LyapunovV>> {
        let d = self.dim()?;
        let v = match self.picard.v.as_deref() {
            None | Some("one") => None,
            Some("quadratic") => Some(LyapunovV::quadratic(d)),
            Some(other) => bail!("unknown Lyapunov weight `{other}` (expected one or quadratic)"),
        };
        match (v, self.picard.v_cap) {
            (Some(v), Some(c)) => Ok(Some(v.with_cap(c)?)),
            (v, _) => Ok(v),
        }
    }
}

pub fn semantics(s: &str) -> Result<Semantics> {
    match s {
        "freeze_at_exit" | "freeze" => Ok(Semantics::FreezeAtExit),
        "indicator_gated" | "gated" => Ok(Semantics::IndicatorGated),
        other => bail!("unknown semantics `{other}` (expected freeze_at_exit or indicator_gated)"),
    }
}

pub fn build_field(s: &CoefficientSpec, dim: usize) -> Result<CoefficientField> {
    let tag = Hypothesis::parse(&s.hypothesis)?;
    let meta = Metadata::new(tag, s.k, s.alpha, s.kappa);
    if let Some(d) = s.dim {
        if d != dim {
            bail!("coefficients.dim = {d} but the domain has dimension {dim}");
        }
    }
    let field = match s.family.as_str() {
        "linear" => CoefficientField::linear(dim, s.slope, s.shift.clone().unwrap_or_else(|| vec![0.0; dim]), s.sigma, meta)?,
        "mean_field" => {
            let kernel = match s.kernel.as_deref().unwrap_or("truncated_distance") {
                "truncated_distance" => Kernel::TruncatedDistance,
                "mass" => Kernel::Mass,
                "linear" => Kernel::Linear,
                "gaussian" => Kernel::Gaussian {
                    width: s.width.ok_or_else(|| anyhow!("kernel gaussian needs coefficients.width"))?,
                },
                "capped_moment" => Kernel::CappedMoment {
                    cap: s.cap.ok_or_else(|| anyhow!("kernel capped_moment needs coefficients.cap"))?,
                },
                other => bail!("unknown interaction kernel `{other}`"),
            };
            CoefficientField::mean_field(dim, s.beta, s.lambda, kernel, s.sigma, meta)?
        }
        "cir" => {
            if dim != 1 {
                bail!("the cir family is one-dimensional");
            }
            CoefficientField::cir_square().with_metadata(meta)
        }
        "expression" => {
            let drift = s.drift.as_ref().ok_or_else(|| anyhow!("expression family needs coefficients.drift"))?;
            let diffusion = s.diffusion.as_ref().ok_or_else(|| anyhow!("expression family needs coefficients.diffusion"))?;
            let m = s.noise_dim.unwrap_or(dim);
            let dr: Vec<&str> = drift.iter().map(String::as_str).collect();
            let di: Vec<&str> = diffusion.iter().map(String::as_str).collect();
            CoefficientField::from_expressions(&dr, &di, m, meta)?
        }
        other => bail!("unknown coefficient family `{other}` (expected linear, mean_field, cir or expression)"),
    };
    if field.dim() != dim {
        bail!("coefficient dimension {} does not match the domain dimension {dim}", field.dim());
    }
    Ok(field)
}

/// Init-law sub-seed purpose for the harness samplers.
const SAMPLER_PURPOSE: u64 = 0x5A;

pub fn build_initial(dom: &Arc<Domain>, s: &InitialSpec, seed: u64) -> Result<ParticleEnsemble> {
    let d = dom.dim();
    let n = s.particles;
    if n == 0 {
        bail!("initial.particles must be positive");
    }
    match s.sampler.as_str() {
        "uniform" => {
            let lo = s.lo.clone().ok_or_else(|| anyhow!("uniform sampler needs initial.lo"))?;
            let hi = s.hi.clone().ok_or_else(|| anyhow!("uniform sampler needs initial.hi"))?;
            if lo.len() != d || hi.len() != d {
                bail!("initial.lo/hi must have dimension {d}");
            }
            Ok(ParticleEnsemble::from_points(dom, uniform_points(&lo, &hi, n, seed), seed)?)
        }
        "point" => {
            let x = s.x.clone().ok_or_else(|| anyhow!("point sampler needs initial.x"))?;
            if x.len() != d {
                bail!("initial.x must have dimension {d}");
            }
            Ok(ParticleEnsemble::from_points(dom, x.repeat(n), seed)?)
        }
        "atoms" => {
            let rows = s.atoms.as_ref().ok_or_else(|| anyhow!("atoms sampler needs initial.atoms"))?;
            let atoms: Vec<(Vec<f64>, f64)> = rows
                .iter()
                .map(|r| {
                    if r.len() != d + 1 {
                        bail!("each atom row needs {d} coordinates and a weight");
                    }
                    Ok((r[..d].to_vec(), r[d]))
                })
                .collect::<Result<_>>()?;
            let g = SubProbMeasure::from_atoms(dom.clone(), &atoms)?;
            Ok(ParticleEnsemble::sample(&g, n, seed)?)
        }
        other => bail!("unknown initial sampler `{other}` (expected uniform, point or atoms)"),
    }
}

/// i.i.d. uniform points on the box [lo, hi].
pub fn uniform_points(lo: &[f64], hi: &[f64], n: usize, seed: u64) -> Vec<f64> {
    let s = derive_seed(seed, SAMPLER_PURPOSE);
    let mut out = Vec::with_capacity(n * lo.len());
    for i in 0..n {
        let mut r = CounterStream::new(s, i as u64, 0);
        for (l, h) in lo.iter().zip(hi) {
            out.push(l + (h - l) * r.uniform());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
seed = 7
[domain]
kind = "interval"
a = 0.0
b = 1.0
[coefficients]
family = "linear"
sigma = 1.0
[initial]
sampler = "point"
x = [0.5]
particles = 100
[grid]
t_end = 0.1
intervals = 4
dt = 1e-3
"#;

    #[test]
    fn parses_a_minimal_config() {
        let c = ExperimentConfig::parse(BASE).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.build_initial(c.initial().unwrap()).unwrap().len(), 100);
    }

    #[test]
    fn unknown_family_is_named() {
        let e = ExperimentConfig::parse(&BASE.replace("\"linear\"", "\"bogus\"")).unwrap_err();
        assert!(format!("{e}").contains("bogus"), "{e}");
    }

    #[test]
    fn syntax_errors_report_position() {
        let e = ExperimentConfig::parse(&BASE.replace("a = 0.0", "a = = 0.0")).unwrap_err();
        let msg = format!("{e}");
        assert!(msg.contains("line") && msg.contains("column"), "{msg}");
    }

    #[test]
    fn grid_must_be_divisible() {
        assert!(ExperimentConfig::parse(&BASE.replace("dt = 1e-3", "dt = 0.03")).is_err());
    }
}
