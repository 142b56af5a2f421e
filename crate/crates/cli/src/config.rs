//! JSON experiment configuration. Every field has a default, so `{}` is a
//! valid config; unknown keys are rejected.

use rbcv::bayes::ObservationLevel;
use rbcv::cv::{linspace, FitMethod, Tolerance};
use rbcv::rb::ErrorMeasure;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Linear,
    Log,
}

/// `n` points from `lo` to `hi` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    #[serde(default = "linear")]
    pub spacing: Spacing,
}

fn linear() -> Spacing {
    Spacing::Linear
}

impl Axis {
    pub const fn new(lo: f64, hi: f64, n: usize) -> Self {
        Self { lo, hi, n, spacing: Spacing::Linear }
    }

    pub fn values(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.lo];
        }
        match self.spacing {
            Spacing::Linear => linspace(self.lo, self.hi, self.n),
            Spacing::Log => linspace(self.lo.ln(), self.hi.ln(), self.n).into_iter().map(f64::exp).collect(),
        }
    }

    fn check(&self, name: &str, min: f64, max: f64) -> Result<(), CliError> {
        let ok = self.n >= 1
            && self.lo.is_finite()
            && self.hi.is_finite()
            && self.lo <= self.hi
            && self.lo >= min
            && self.hi <= max
            && (self.spacing == Spacing::Linear || self.lo > 0.0);
        if ok {
            Ok(())
        } else {
            Err(CliError::Config(format!("{name}: axis {self:?} must have n >= 1 and {min} <= lo <= hi <= {max}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    /// Mesh cells per half unit length.
    pub refinement: usize,
    pub delta: f64,
    pub upsilon: f64,
    pub kl_tol: f64,
    pub kl_quadrature_refinement: usize,
    /// Overrides the truncation rule.
    pub kl_modes: Option<usize>,

    pub rb_tol: f64,
    pub rb_n_max: usize,
    pub rb_error_measure: ErrorMeasure,
    /// Leading KL directions varied in the RB training set (all by default).
    pub rb_varied_directions: Option<usize>,
    pub rb_random_corners: usize,
    pub rb_rows_per_point: usize,
    pub rb_grid_k2: Axis,
    pub rb_grid_ebar: Axis,

    pub grid_k2: Axis,
    pub grid_ebar: Axis,
    pub variance_tol: Tolerance,
    pub i_max: usize,
    pub m_large: u64,
    pub m_small: u64,
    pub m_test: u64,
    pub m_test_final: u64,
    pub reuse_small_as_test: bool,
    pub fit_method: FitMethod,
    /// Track the RB error bound of every online solve.
    pub certify: bool,
    pub n_holdout: usize,

    pub toy: ToyConfig,
    pub bayes: BayesConfig,
    pub breakeven: BreakevenConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 1,
            refinement: 13,
            delta: 0.5,
            upsilon: 0.1,
            kl_tol: 1e-2,
            kl_quadrature_refinement: 1,
            kl_modes: None,
            rb_tol: 1e-2,
            rb_n_max: 40,
            rb_error_measure: ErrorMeasure::Relative,
            rb_varied_directions: None,
            rb_random_corners: 64,
            rb_rows_per_point: 10,
            rb_grid_k2: Axis::new(0.1, 10.0, 10),
            rb_grid_ebar: Axis::new(0.1, 1.0, 10),
            grid_k2: Axis::new(0.1, 10.0, 10),
            grid_ebar: Axis::new(0.1, 1.0, 10),
            variance_tol: Tolerance::Relative(1e-2),
            i_max: 10,
            m_large: 10_000,
            m_small: 10,
            m_test: 10,
            m_test_final: 100,
            reuse_small_as_test: true,
            fit_method: FitMethod::Qr,
            certify: true,
            n_holdout: 100,
            toy: ToyConfig::default(),
            bayes: BayesConfig::default(),
            breakeven: BreakevenConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub theta0: f64,
    pub j: usize,
    pub observation_level: ObservationLevel,
    pub num_sets: usize,
    pub mu: Axis,
    pub sigma: Axis,
    pub lambda: Axis,
    pub variance_tol: Tolerance,
    pub i_max: usize,
    pub m_large: u64,
    pub m_small: u64,
    pub m_test: u64,
    pub m_test_final: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            theta0: 1.0,
            j: 10,
            observation_level: ObservationLevel::Fixed(0.5),
            num_sets: 5,
            mu: Axis::new(0.5, 1.5, 5),
            sigma: Axis::new(0.1, 0.9, 5),
            lambda: Axis::new(0.1, 0.9, 5),
            variance_tol: Tolerance::Relative(1e-10),
            i_max: 10,
            m_large: 10_000,
            m_small: 10,
            m_test: 10,
            m_test_final: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BayesConfig {
    pub lambda0: [f64; 2],
    pub j: usize,
    pub num_sets: usize,
    /// Common prior variance of the KL coordinates.
    pub xi: Axis,
    /// Likelihood widths.
    pub zeta: Vec<f64>,
    pub grid_k2: Axis,
    pub grid_ebar: Axis,
    pub variance_tol: Tolerance,
    pub i_max: usize,
    pub m_large: u64,
    pub m_small: u64,
    pub m_test: u64,
    pub m_test_final: u64,
}

impl Default for BayesConfig {
    fn default() -> Self {
        Self {
            lambda0: [2.0, 0.5],
            j: 3,
            num_sets: 10,
            xi: Axis::new(1e-3, 1e-3, 1),
            zeta: vec![0.25],
            grid_k2: Axis::new(0.1, 10.0, 10),
            grid_ebar: Axis::new(0.1, 1.0, 10),
            variance_tol: Tolerance::Relative(1e-2),
            i_max: 10,
            m_large: 10_000,
            m_small: 10,
            m_test: 10,
            m_test_final: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BreakevenConfig {
    /// Cost of one realization, in units of one elementary operation.
    pub c: f64,
    pub m: f64,
    pub m_test: f64,
    pub m_small: f64,
    pub m_large: f64,
    pub variates: f64,
    pub trial_size: f64,
    pub reuse_small_as_test: bool,
}

impl Default for BreakevenConfig {
    fn default() -> Self {
        Self {
            c: 1e6,
            m: 1e4,
            m_test: 10.0,
            m_small: 10.0,
            m_large: 1e4,
            variates: 3.0,
            trial_size: 100.0,
            reuse_small_as_test: true,
        }
    }
}

fn positive(name: &str, x: f64) -> Result<(), CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be positive and finite, got {x}")))
    }
}

fn count(name: &str, x: u64) -> Result<(), CliError> {
    if x > 0 {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be at least 1")))
    }
}

fn tolerance(name: &str, t: &Tolerance) -> Result<(), CliError> {
    match *t {
        Tolerance::Absolute(v) | Tolerance::Relative(v) => positive(name, v),
    }
}

impl Config {
    /// Parses JSON, reporting the line and column of syntax and schema errors.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Config = serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("config line {}, column {}: {e}", e.line(), e.column())))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        count("refinement", self.refinement as u64)?;
        positive("delta", self.delta)?;
        if !(self.upsilon >= 0.0 && self.upsilon.is_finite()) {
            return Err(CliError::Config(format!("upsilon must be non-negative, got {}", self.upsilon)));
        }
        positive("kl_tol", self.kl_tol)?;
        count("kl_quadrature_refinement", self.kl_quadrature_refinement as u64)?;
        positive("rb_tol", self.rb_tol)?;
        count("rb_n_max", self.rb_n_max as u64)?;
        self.rb_grid_k2.check("rb_grid_k2", 0.1, 10.0)?;
        self.rb_grid_ebar.check("rb_grid_ebar", 0.1, 1.0)?;
        self.grid_k2.check("grid_k2", 0.1, 10.0)?;
        self.grid_ebar.check("grid_ebar", 0.1, 1.0)?;
        tolerance("variance_tol", &self.variance_tol)?;
        count("i_max", self.i_max as u64)?;
        for (n, v) in [("m_large", self.m_large), ("m_small", self.m_small), ("m_test", self.m_test), ("m_test_final", self.m_test_final)] {
            count(n, v)?;
        }
        if self.m_small < 2 || self.m_test < 2 || self.m_test_final < 2 {
            return Err(CliError::Config("m_small, m_test and m_test_final must be at least 2".into()));
        }
        count("n_holdout", self.n_holdout as u64)?;

        let t = &self.toy;
        count("toy.j", t.j as u64)?;
        count("toy.num_sets", t.num_sets as u64)?;
        t.mu.check("toy.mu", f64::MIN, f64::MAX)?;
        t.sigma.check("toy.sigma", f64::MIN_POSITIVE, f64::MAX)?;
        t.lambda.check("toy.lambda", f64::MIN_POSITIVE, f64::MAX)?;
        if let ObservationLevel::Fixed(l) = t.observation_level {
            positive("toy.observation_level", l)?;
        }
        tolerance("toy.variance_tol", &t.variance_tol)?;
        count("toy.i_max", t.i_max as u64)?;
        for (n, v) in [("toy.m_large", t.m_large), ("toy.m_small", t.m_small), ("toy.m_test", t.m_test), ("toy.m_test_final", t.m_test_final)] {
            count(n, v)?;
        }

        let b = &self.bayes;
        if !(b.lambda0[0] >= 0.1 && b.lambda0[0] <= 10.0 && b.lambda0[1] >= 0.1 && b.lambda0[1] <= 1.0) {
            return Err(CliError::Config(format!("bayes.lambda0 {:?} outside [0.1, 10] x [0.1, 1]", b.lambda0)));
        }
        count("bayes.j", b.j as u64)?;
        count("bayes.num_sets", b.num_sets as u64)?;
        b.xi.check("bayes.xi", f64::MIN_POSITIVE, f64::MAX)?;
        if b.zeta.is_empty() {
            return Err(CliError::Config("bayes.zeta must list at least one value".into()));
        }
        for &z in &b.zeta {
            positive("bayes.zeta", z)?;
        }
        b.grid_k2.check("bayes.grid_k2", 0.1, 10.0)?;
        b.grid_ebar.check("bayes.grid_ebar", 0.1, 1.0)?;
        tolerance("bayes.variance_tol", &b.variance_tol)?;
        count("bayes.i_max", b.i_max as u64)?;
        for (n, v) in [("bayes.m_large", b.m_large), ("bayes.m_small", b.m_small), ("bayes.m_test", b.m_test), ("bayes.m_test_final", b.m_test_final)] {
            count(n, v)?;
        }
        Ok(())
    }

    /// Hash of the settings a trained variate basis depends on; holdout
    /// and output-only settings are excluded.
    pub fn training_hash(&self) -> String {
        let mut c = self.clone();
        c.n_holdout = 0;
        c.m_test_final = 0;
        c.toy = ToyConfig::default();
        c.bayes = BayesConfig::default();
        c.breakeven = BreakevenConfig::default();
        c.hash()
    }

    /// SHA-256 of the effective configuration (after defaults and overrides).
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}
