use std::io::{BufRead, Write};

use crate::cv::{ParamDomain, ParamPoint, ParametrizedModel};
use crate::error::{Error, Result};
use crate::fem::{AffineOperator, FinParams};
use crate::kl::{KLBasis, MAX_ATTEMPTS};
use crate::rb::{FieldSampler, RBSpace};
use crate::rng::{derive_seed, standard_normal, RandomStream};
use crate::scalar::Real;

pub use super::toy::OBS_TAG;

/// Seed tag of the prior draws.
pub const PRIOR_TAG: u64 = 0x7072_696f;

/// Weights below this are treated as zero when deciding degeneracy.
pub const WEIGHT_FLOOR: f64 = 1e-300;

/// Outputs `(s, o)` of the model for control `(k2, Ē)` and KL coordinates
/// `Z` (before scaling by the field amplitude).
pub trait ForwardMap: Sync {
    fn num_modes(&self) -> usize;

    /// Whether `z` gives an admissible coefficient field.
    fn admissible(&self, _z: &[f64]) -> bool {
        true
    }

    fn outputs(&self, k2: f64, biot_mean: f64, z: &[f64]) -> Result<(f64, f64)>;
}

/// Field amplitude and KL spectrum shared by the PDE forward maps.
#[derive(Debug, Clone, Copy)]
pub struct KlScaling<'a> {
    pub kl: &'a KLBasis,
    pub num_modes: usize,
    pub upsilon: f64,
}

impl KlScaling<'_> {
    fn params(&self, k2: f64, biot_mean: f64, z: &[f64]) -> FinParams {
        FinParams { k1: 1.0, k2, biot_mean, y: self.kl.field_coordinates(z, self.upsilon) }
    }

    fn admissible(&self, z: &[f64]) -> bool {
        self.kl.field(&self.kl.field_coordinates(z, self.upsilon), 1.0).iter().all(|&b| b >= 0.5)
    }
}

pub struct RBForward<'a, T> {
    pub space: &'a RBSpace<T>,
    pub scaling: KlScaling<'a>,
}

impl<T: Real> ForwardMap for RBForward<'_, T> {
    fn num_modes(&self) -> usize {
        self.scaling.num_modes
    }

    fn admissible(&self, z: &[f64]) -> bool {
        self.scaling.admissible(z)
    }

    fn outputs(&self, k2: f64, biot_mean: f64, z: &[f64]) -> Result<(f64, f64)> {
        let sol = self.space.online_solve(&self.scaling.params(k2, biot_mean, z))?;
        Ok((sol.s.to_f64_lossy(), sol.o.to_f64_lossy()))
    }
}

pub struct FullForward<'a, T> {
    pub op: &'a AffineOperator<T>,
    pub scaling: KlScaling<'a>,
}

impl<T: Real> ForwardMap for FullForward<'_, T> {
    fn num_modes(&self) -> usize {
        self.scaling.num_modes
    }

    fn admissible(&self, z: &[f64]) -> bool {
        self.scaling.admissible(z)
    }

    fn outputs(&self, k2: f64, biot_mean: f64, z: &[f64]) -> Result<(f64, f64)> {
        let u = self.op.solve_full(&self.scaling.params(k2, biot_mean, z))?;
        let (s, o) = self.op.outputs(&u);
        Ok((s.to_f64_lossy(), o.to_f64_lossy()))
    }
}

/// `J` forward realizations of `o` at `λ0` under the uniform KL field, for
/// each of `num_sets` sets. Set `s`, observation `j` uses stream `s J + j`.
pub fn synthetic_observations<F: ForwardMap + ?Sized>(
    forward: &F,
    field: &FieldSampler,
    lambda0: [f64; 2],
    j: usize,
    num_sets: usize,
) -> Result<Vec<Vec<f64>>> {
    if j == 0 || num_sets == 0 {
        return Err(Error::InvalidConfiguration(format!("need J >= 1 and at least one set (J = {j}, sets = {num_sets})")));
    }
    let obs_field = FieldSampler { seed: derive_seed(field.seed, OBS_TAG), ..*field };
    (0..num_sets)
        .map(|s| {
            (0..j)
                .map(|k| {
                    let z = obs_field.draw_z((s * j + k) as u64)?;
                    Ok(forward.outputs(lambda0[0], lambda0[1], &z)?.1)
                })
                .collect()
        })
        .collect()
}

pub fn write_observations<W: Write>(out: &mut W, sets: &[Vec<f64>], lambda0: [f64; 2]) -> Result<()> {
    writeln!(out, "set_id,j,value,lambda0_k2,lambda0_Ebar")?;
    for (s, set) in sets.iter().enumerate() {
        for (j, v) in set.iter().enumerate() {
            writeln!(out, "{s},{j},{v:e},{:e},{:e}", lambda0[0], lambda0[1])?;
        }
    }
    Ok(())
}

/// Reads observation sets; rows must be grouped by set and ordered by `j`.
pub fn read_observations<R: BufRead>(input: R) -> Result<(Vec<Vec<f64>>, [f64; 2])> {
    let mut sets: Vec<Vec<f64>> = Vec::new();
    let mut lambda0 = None;
    let mut header = false;
    for (k, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = k + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        if !header {
            header = true;
            continue;
        }
        let f: Vec<&str> = t.split(',').map(str::trim).collect();
        if f.len() != 5 {
            return Err(Error::Parse { line: lineno, message: format!("expected 5 fields, found {}", f.len()) });
        }
        let perr = |e: String| Error::Parse { line: lineno, message: e };
        let s: usize = f[0].parse().map_err(|e| perr(format!("set_id: {e}")))?;
        let j: usize = f[1].parse().map_err(|e| perr(format!("j: {e}")))?;
        let v: f64 = f[2].parse().map_err(|e| perr(format!("value: {e}")))?;
        let l0 = [
            f[3].parse::<f64>().map_err(|e| perr(format!("lambda0_k2: {e}")))?,
            f[4].parse::<f64>().map_err(|e| perr(format!("lambda0_Ebar: {e}")))?,
        ];
        if *lambda0.get_or_insert(l0) != l0 {
            return Err(perr("all observations must share lambda0".into()));
        }
        if s == sets.len() {
            sets.push(Vec::new());
        }
        if s + 1 != sets.len() || j != sets[s].len() {
            return Err(perr(format!("row (set {s}, j {j}) out of order")));
        }
        sets[s].push(v);
    }
    let lambda0 = lambda0.ok_or(Error::Parse { line: 0, message: "no observations".into() })?;
    Ok((sets, lambda0))
}

/// Posterior for KL coordinates given observations of `o`.
///
/// Parameters are `(k2, Ē, ξ, ζ, set)`: a common prior variance `ξ` for
/// every `Z_k`, the likelihood width `ζ`, and an observation-set index.
/// Prior draws `Z_k = √ξ N_k` are redrawn while the field is inadmissible.
pub struct PdePosterior<'a, F: ?Sized> {
    pub forward: &'a F,
    pub observations: Vec<Vec<f64>>,
    pub seed: u64,
}

/// One weighted prior draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedDraw {
    pub weight: f64,
    pub s: f64,
    pub o: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorSummary {
    pub numerator: f64,
    pub denominator: f64,
    pub ratio: f64,
    /// `(Σw)² / Σw²`.
    pub effective_sample_size: f64,
}

impl<'a, F: ForwardMap + ?Sized> PdePosterior<'a, F> {
    pub fn new(forward: &'a F, observations: Vec<Vec<f64>>, seed: u64) -> Result<Self> {
        if observations.is_empty() || observations.iter().any(Vec::is_empty) {
            return Err(Error::InvalidConfiguration("observation sets must be nonempty".into()));
        }
        Ok(Self { forward, observations, seed })
    }

    pub fn domain(&self) -> ParamDomain {
        ParamDomain::new(
            &["k2", "Ebar", "xi", "zeta", "obs_set"],
            vec![0.1, 0.1, f64::MIN_POSITIVE, f64::MIN_POSITIVE, 0.0],
            vec![10.0, 1.0, f64::MAX, f64::MAX, (self.observations.len() - 1) as f64],
        )
    }

    pub fn draw(&self, point: &ParamPoint, m: u64) -> Result<WeightedDraw> {
        self.domain().check(point)?;
        let c = point.coords();
        let (k2, e, xi, zeta) = (c[0], c[1], c[2], c[3]);
        if c[4].fract() != 0.0 {
            return Err(Error::InvalidParameter(format!("observation set index {} is not an integer", c[4])));
        }
        let obs = &self.observations[c[4] as usize];
        let k = self.forward.num_modes() as u64;
        let stream = RandomStream::new(derive_seed(self.seed, PRIOR_TAG), m);
        let sd = xi.sqrt();
        for attempt in 0..MAX_ATTEMPTS {
            let z: Vec<f64> = (0..k).map(|j| sd * standard_normal(&stream.at(attempt * k + j))).collect();
            if !self.forward.admissible(&z) {
                continue;
            }
            let (s, o) = self.forward.outputs(k2, e, &z)?;
            let weight = (-obs.iter().map(|oj| (oj - o) * (oj - o)).sum::<f64>() / zeta).exp();
            return Ok(WeightedDraw { weight, s, o });
        }
        Err(Error::InvalidConfiguration(format!("prior with variance {xi} gave no admissible field in {MAX_ATTEMPTS} draws")))
    }

    /// Self-normalized estimate of `E[s | observations]` over draws `0..m`.
    pub fn expectation(&self, point: &ParamPoint, m: u64) -> Result<PosteriorSummary> {
        if m < 2 {
            return Err(Error::InsufficientSamples { needed: 2, got: m as usize });
        }
        let draws = (0..m).map(|i| self.draw(point, i)).collect::<Result<Vec<_>>>()?;
        let sw: f64 = draws.iter().map(|d| d.weight).sum();
        if draws.iter().all(|d| d.weight < WEIGHT_FLOOR) {
            return Err(Error::DegenerateLikelihood { threshold: WEIGHT_FLOOR });
        }
        let sw2: f64 = draws.iter().map(|d| d.weight * d.weight).sum();
        let sws: f64 = draws.iter().map(|d| d.weight * d.s).sum();
        let n = m as f64;
        Ok(PosteriorSummary {
            numerator: sws / n,
            denominator: sw / n,
            ratio: sws / sw,
            effective_sample_size: sw * sw / sw2,
        })
    }
}

/// Which part of the self-normalized ratio a model returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatioPart {
    /// `w(Z) s(Z)`.
    Numerator,
    /// `w(Z)`.
    Denominator,
}

/// One side of the posterior ratio as a [`ParametrizedModel`]; both sides
/// use the same draws, so their reduced estimates can be combined.
pub struct PosteriorPart<'p, 'a, F: ?Sized> {
    pub posterior: &'p PdePosterior<'a, F>,
    pub part: RatioPart,
}

impl<T: Real, F: ForwardMap + ?Sized> ParametrizedModel<T> for PosteriorPart<'_, '_, F> {
    fn domain(&self) -> ParamDomain {
        self.posterior.domain()
    }

    fn realize(&self, point: &ParamPoint, index: u64) -> Result<T> {
        let d = self.posterior.draw(point, index)?;
        Ok(T::of(match self.part {
            RatioPart::Numerator => d.weight * d.s,
            RatioPart::Denominator => d.weight,
        }))
    }
}
