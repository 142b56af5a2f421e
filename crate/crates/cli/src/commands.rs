//! One function per subcommand. Each validates the config, writes its CSV
//! files into the output directory and returns a summary; a missed tolerance
//! is reported as [`CliError::Tolerance`] only after all outputs are written.

use std::fs::File;
use std::io::{BufReader, Write};
use std::time::Instant;

use rayon::prelude::*;
use rbcv::bayes::{
    analytic_mmse, synthetic_observations, write_observations, GaussianToyModel, KlScaling, PdePosterior,
    PosteriorPart, RBForward, RatioPart,
};
use rbcv::cv::export::{estimate_row, estimates_header, write_estimates, write_greedy_trace};
use rbcv::cv::{
    batch_estimate, breakeven_report, cartesian_grid, decay_diagnostics, ratio_estimate, weak_greedy, BreakevenReport, CostInputs, DecayDiagnostics,
    EstimateConfig, GreedyConfig, ParamPoint, Tolerance, VariateBasis,
};
use rbcv::fem::{assemble, generate_fin_mesh, Mesh};
use rbcv::kl::{build_kl, truncate, KLBasis};
use rbcv::rb::{
    read_space, rb_greedy, write_space, FieldSampler, RBGreedyResult, ThermalFinModel, TrainingDesign, XInnerProduct,
    KL_TAG,
};
use rbcv::rng::{derive_seed, RandomStream};
use rbcv::{Basis, Operator, ReducedSpace};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::output::Output;
use crate::{CliError, CliResult};

/// Seed tag of the holdout parameter draws.
pub const HOLDOUT_TAG: u64 = 0x686f_6c64;

const LEVEL: f64 = 0.95;
/// Streams inspected when checking the Biot-field rejection rate.
const REJECTION_WINDOW: u64 = 1000;

fn names(n: &[&str]) -> Vec<String> {
    n.iter().map(|s| s.to_string()).collect()
}

fn fmt(x: f64) -> String {
    format!("{x:e}")
}

fn timed<T>(what: &str, f: impl FnOnce() -> CliResult<T>) -> CliResult<T> {
    let t = Instant::now();
    let r = f();
    eprintln!("{what}: {:.2} s", t.elapsed().as_secs_f64());
    r
}

struct FinSetup {
    mesh: Mesh,
    kl: KLBasis,
    k: usize,
}

impl FinSetup {
    fn new(cfg: &Config) -> CliResult<Self> {
        let mesh = generate_fin_mesh(cfg.refinement)?;
        let kl = build_kl(&mesh, cfg.delta, cfg.kl_quadrature_refinement)?;
        let k = match cfg.kl_modes {
            Some(k) if k > kl.len() => {
                return Err(CliError::Config(format!("kl_modes = {k} exceeds the {} available modes", kl.len())))
            }
            Some(k) => k,
            None => truncate(&kl.eigenvalues, cfg.kl_tol)?,
        };
        kl.check_rejection_rate(k, cfg.upsilon, derive_seed(cfg.seed, KL_TAG), REJECTION_WINDOW)?;
        Ok(Self { mesh, kl, k })
    }

    fn field(&self, cfg: &Config) -> FieldSampler<'_> {
        FieldSampler { kl: &self.kl, num_modes: self.k, upsilon: cfg.upsilon, seed: cfg.seed }
    }

    fn train(&self, cfg: &Config) -> CliResult<RBGreedyResult<f64>> {
        let op: Operator = assemble(&self.mesh, &self.kl.truncated_modes(self.k), 1.0)?;
        let x = XInnerProduct::new(&op)?;
        let design = TrainingDesign {
            k2: cfg.rb_grid_k2.values(),
            biot_mean: cfg.rb_grid_ebar.values(),
            varied_directions: cfg.rb_varied_directions.unwrap_or(self.k).min(self.k),
            random_corners: cfg.rb_random_corners,
            rows_per_point: cfg.rb_rows_per_point,
        };
        let trial = design.build(&self.kl, self.k, cfg.upsilon, cfg.seed)?;
        let rb = timed("rb greedy", || Ok(rb_greedy(&op, &x, &trial, cfg.rb_tol, cfg.rb_n_max, cfg.rb_error_measure)?))?;
        eprintln!("rb: N = {} over {} trial points, tolerance met: {}", rb.space.dim(), trial.len(), rb.tolerance_met);
        Ok(rb)
    }
}

fn estimate_config(m_small: u64, m_test: u64, reuse: bool, cfg: &Config) -> EstimateConfig {
    EstimateConfig { m_small, m_test, reuse_small_as_test: reuse, method: cfg.fit_method, level: LEVEL }
}

/// Final estimates always use fresh test draws.
fn final_config(m_small: u64, m_test_final: u64, cfg: &Config) -> EstimateConfig {
    estimate_config(m_small, m_test_final, false, cfg)
}

fn greedy_config(tolerance: Tolerance, i_max: usize, m_large: u64, estimate: EstimateConfig) -> GreedyConfig {
    GreedyConfig { tolerance, max_variates: i_max, m_large, estimate }
}

fn write_rb(out: &Output, rb: &RBGreedyResult<f64>, trial_names: &[&str]) -> CliResult<()> {
    let mut w = std::io::BufWriter::new(File::create(out.path("rb_space.txt"))?);
    write_space(&mut w, &rb.space, &out.manifest)?;
    w.flush()?;
    out.csv("rb_greedy.csv", |w| {
        writeln!(w, "n,max_error,argmax")?;
        for r in &rb.trace {
            writeln!(w, "{},{},{}", r.n, fmt(r.max_error), r.argmax)?;
        }
        Ok(())
    })?;
    out.csv("rb_snapshots.csv", |w| {
        writeln!(w, "n,{}", trial_names.join(","))?;
        for (n, p) in rb.space.snapshot_params.iter().enumerate() {
            writeln!(w, "{n},{},{}", p.k2, p.biot_mean)?;
        }
        Ok(())
    })
}

fn write_trace(out: &Output, name: &str, basis: &Basis, params: &[String]) -> CliResult<()> {
    out.csv(name, |w| Ok(write_greedy_trace(w, basis, params)?))
}

fn write_diagnostics(out: &Output, name: &str, basis: &Basis, d: &DecayDiagnostics) -> CliResult<()> {
    out.csv(name, |w| {
        writeln!(w, "variates,tolerance_met,monotone,fitted_rate")?;
        let rate = d.fitted_rate.map(fmt).unwrap_or_default();
        writeln!(w, "{},{},{},{rate}", basis.len(), basis.tolerance_met, d.monotone)?;
        Ok(())
    })
}

fn diagnostics(basis: &Basis) -> CliResult<DecayDiagnostics> {
    let sigmas = basis.sigmas();
    if sigmas.len() < 2 {
        // A trace with a single sweep has nothing to fit.
        return Ok(DecayDiagnostics { monotone: true, fitted_rate: None });
    }
    Ok(decay_diagnostics(&sigmas)?)
}

/// Basis file written by `propagate` and read back by `holdout`.
#[derive(Serialize, Deserialize)]
struct BasisFile {
    manifest: String,
    /// Hash of the settings the basis depends on.
    training_sha256: String,
    basis: Basis,
}

const BASIS_FILE: &str = "variate_basis.json";

pub struct RbTrainSummary {
    pub num_modes: usize,
    pub result: RBGreedyResult<f64>,
}

pub fn rb_train(cfg: &Config, out: &Output) -> CliResult<RbTrainSummary> {
    cfg.validate()?;
    let setup = FinSetup::new(cfg)?;
    let rb = setup.train(cfg)?;
    write_rb(out, &rb, &["k2", "Ebar"])?;
    let summary = RbTrainSummary { num_modes: setup.k, result: rb };
    if !summary.result.tolerance_met {
        return Err(CliError::Tolerance(format!("reduced basis stopped at N = {} above tol {}", summary.result.space.dim(), cfg.rb_tol)));
    }
    Ok(summary)
}

pub fn kl_spectrum(cfg: &Config, out: &Output) -> CliResult<usize> {
    cfg.validate()?;
    let setup = FinSetup::new(cfg)?;
    out.csv("kl_spectrum.csv", |w| Ok(setup.kl.write_spectrum(w)?))?;
    out.csv("kl_modes.csv", |w| Ok(setup.kl.write_modes(w, &setup.mesh, setup.k)?))?;
    println!("K = {} of {} modes (delta = {}, tol = {})", setup.k, setup.kl.len(), cfg.delta, cfg.kl_tol);
    Ok(setup.k)
}

pub struct PropagateSummary {
    pub num_modes: usize,
    pub rb_dim: usize,
    pub rb_tolerance_met: bool,
    pub basis: Basis,
    pub diagnostics: DecayDiagnostics,
    /// Largest RB error bound seen while sampling.
    pub max_error_bound: f64,
    pub grid: Vec<ParamPoint>,
    pub plain_variance: Vec<f64>,
    pub reduced_variance: Vec<f64>,
}

pub fn propagate(cfg: &Config, out: &Output) -> CliResult<PropagateSummary> {
    cfg.validate()?;
    let setup = FinSetup::new(cfg)?;
    let rb = setup.train(cfg)?;
    write_rb(out, &rb, &["k2", "Ebar"])?;

    let mut model = ThermalFinModel::new(&rb.space, setup.field(cfg))?;
    model.certify = cfg.certify;
    let grid = cartesian_grid(&[cfg.grid_k2.values(), cfg.grid_ebar.values()]);
    let gc = greedy_config(
        cfg.variance_tol,
        cfg.i_max,
        cfg.m_large,
        estimate_config(cfg.m_small, cfg.m_test, cfg.reuse_small_as_test, cfg),
    );
    let basis = timed("variate greedy", || Ok(weak_greedy(&model, &grid, &gc)?))?;
    let params = names(&["k2", "Ebar"]);
    write_trace(out, "greedy_trace.csv", &basis, &params)?;
    let diag = diagnostics(&basis)?;
    write_diagnostics(out, "diagnostics.csv", &basis, &diag)?;

    let fin = final_config(cfg.m_small, cfg.m_test_final, cfg);
    let (reduced, plain) = timed("final estimates", || {
        Ok((batch_estimate(&model, &basis, &grid, &fin)?, batch_estimate(&model, &Basis::empty(), &grid, &fin)?))
    })?;
    let rows: Vec<_> = grid.iter().cloned().zip(reduced.iter().cloned()).collect();
    out.csv("estimates.csv", |w| Ok(write_estimates(w, &params, &rows)?))?;
    out.csv("variance_map.csv", |w| {
        writeln!(w, "k2,Ebar,plain_mean,plain_variance,cv_mean,cv_variance")?;
        for ((p, a), b) in grid.iter().zip(&plain).zip(&reduced) {
            let c = p.coords();
            writeln!(w, "{},{},{},{},{},{}", c[0], c[1], fmt(a.mean), fmt(a.reduced_variance), fmt(b.mean), fmt(b.reduced_variance))?;
        }
        Ok(())
    })?;
    let file = BasisFile { manifest: out.manifest.clone(), training_sha256: cfg.training_hash(), basis: basis.clone() };
    std::fs::write(out.path(BASIS_FILE), serde_json::to_string_pretty(&file).expect("basis serializes") + "\n")?;

    let max_error_bound = model.max_error_bound();
    eprintln!("variates: {}, max RB error bound seen: {max_error_bound:e}", basis.len());
    let summary = PropagateSummary {
        num_modes: setup.k,
        rb_dim: rb.space.dim(),
        rb_tolerance_met: rb.tolerance_met,
        diagnostics: diag,
        max_error_bound,
        plain_variance: plain.iter().map(|e| e.reduced_variance).collect(),
        reduced_variance: reduced.iter().map(|e| e.reduced_variance).collect(),
        grid,
        basis,
    };
    if !summary.rb_tolerance_met {
        return Err(CliError::Tolerance(format!("reduced basis stopped at N = {} above tol {}", summary.rb_dim, cfg.rb_tol)));
    }
    if !summary.basis.tolerance_met {
        return Err(CliError::Tolerance(format!("variance tolerance not reached with I_max = {}", cfg.i_max)));
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoldoutRow {
    pub variates: usize,
    pub max: f64,
    pub mean: f64,
    pub min: f64,
    /// Smallest per-point ratio of plain to reduced variance.
    pub min_reduction: f64,
}

/// `n` points drawn uniformly from the admissible `(k2, Ē)` box.
pub fn holdout_points(seed: u64, n: usize) -> Vec<ParamPoint> {
    let base = derive_seed(seed, HOLDOUT_TAG);
    (0..n as u64)
        .map(|i| {
            let s = RandomStream::new(base, i);
            ParamPoint::new(vec![0.1 + 9.9 * s.at(0).open01(), 0.1 + 0.9 * s.at(1).open01()])
        })
        .collect()
}

pub fn holdout(cfg: &Config, out: &Output) -> CliResult<Vec<HoldoutRow>> {
    cfg.validate()?;
    let missing = |what: &str, e: std::io::Error| {
        CliError::Config(format!("{what} not found in {} ({e}); run `propagate` first", out.dir.display()))
    };
    let text = std::fs::read_to_string(out.path(BASIS_FILE)).map_err(|e| missing(BASIS_FILE, e))?;
    let file: BasisFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{BASIS_FILE} line {}, column {}: {e}", e.line(), e.column())))?;
    if file.training_sha256 != cfg.training_hash() {
        return Err(CliError::Config(format!("{BASIS_FILE} was trained with a different configuration")));
    }
    let rb_file = File::open(out.path("rb_space.txt")).map_err(|e| missing("rb_space.txt", e))?;
    let space: ReducedSpace = read_space(BufReader::new(rb_file))?;
    let setup = FinSetup::new(cfg)?;
    let mut model = ThermalFinModel::new(&space, setup.field(cfg))?;
    model.certify = cfg.certify;

    let points = holdout_points(cfg.seed, cfg.n_holdout);
    let fin = final_config(cfg.m_small, cfg.m_test_final, cfg);
    let basis = file.basis;
    let variances: Vec<Vec<f64>> = timed("holdout estimates", || {
        (0..=basis.len())
            .map(|i| {
                let est = batch_estimate(&model, &basis.truncated(i), &points, &fin)?;
                Ok(est.into_iter().map(|e| e.reduced_variance).collect())
            })
            .collect()
    })?;
    let rows: Vec<HoldoutRow> = variances
        .iter()
        .enumerate()
        .map(|(i, v)| HoldoutRow {
            variates: i,
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            min_reduction: v.iter().zip(&variances[0]).map(|(r, p)| p / r).fold(f64::INFINITY, f64::min),
        })
        .collect();
    out.csv("holdout_curve.csv", |w| {
        writeln!(w, "variates,max_variance,mean_variance,min_variance,min_reduction_factor")?;
        for r in &rows {
            writeln!(w, "{},{},{},{},{}", r.variates, fmt(r.max), fmt(r.mean), fmt(r.min), fmt(r.min_reduction))?;
        }
        Ok(())
    })?;
    out.csv("holdout_variances.csv", |w| {
        let cols: Vec<String> = (0..variances.len()).map(|i| format!("variance_I{i}")).collect();
        writeln!(w, "k2,Ebar,{}", cols.join(","))?;
        for (j, p) in points.iter().enumerate() {
            let v: Vec<String> = variances.iter().map(|col| fmt(col[j])).collect();
            writeln!(w, "{},{},{}", p.coords()[0], p.coords()[1], v.join(","))?;
        }
        Ok(())
    })?;
    Ok(rows)
}

pub struct BayesToySummary {
    pub basis: Basis,
    pub diagnostics: DecayDiagnostics,
    /// Per grid point: plain variance, reduced variance, estimate, analytic MMSE.
    pub rows: Vec<(ParamPoint, f64, f64, f64, f64)>,
}

pub fn bayes_toy(cfg: &Config, out: &Output) -> CliResult<BayesToySummary> {
    cfg.validate()?;
    let t = &cfg.toy;
    let model = GaussianToyModel::new(t.theta0, t.observation_level, t.num_sets, t.j, cfg.seed)?;
    let sets: Vec<f64> = (0..t.num_sets).map(|s| s as f64).collect();
    let grid = cartesian_grid(&[t.mu.values(), t.sigma.values(), t.lambda.values(), sets]);
    let gc = greedy_config(t.variance_tol, t.i_max, t.m_large, estimate_config(t.m_small, t.m_test, cfg.reuse_small_as_test, cfg));
    let basis: Basis = timed("toy greedy", || Ok(weak_greedy(&model, &grid, &gc)?))?;
    let params = names(&["mu", "sigma", "lambda", "obs_set"]);
    write_trace(out, "toy_greedy_trace.csv", &basis, &params)?;
    let diag = diagnostics(&basis)?;
    write_diagnostics(out, "toy_diagnostics.csv", &basis, &diag)?;

    let fin = final_config(t.m_small, t.m_test_final, cfg);
    let reduced = batch_estimate(&model, &basis, &grid, &fin)?;
    let plain = batch_estimate(&model, &VariateBasis::empty(), &grid, &fin)?;
    let mut rows = Vec::with_capacity(grid.len());
    for ((p, r), pl) in grid.iter().zip(&reduced).zip(&plain) {
        let c = p.coords();
        let obs = model.observations(c[3] as usize, c[2]);
        let (mmse, _) = analytic_mmse(c[0], c[1] * c[1], c[2], &obs)?;
        rows.push((p.clone(), pl.reduced_variance, r.reduced_variance, r.mean, mmse));
    }
    out.csv("toy_estimates.csv", |w| {
        writeln!(w, "{},plain_variance,analytic_mmse", estimates_header(&params))?;
        for ((p, r), row) in grid.iter().zip(&reduced).zip(&rows) {
            writeln!(w, "{},{},{}", estimate_row(p, r), fmt(row.1), fmt(row.4))?;
        }
        Ok(())
    })?;
    let met = basis.tolerance_met;
    let summary = BayesToySummary { basis, diagnostics: diag, rows };
    if !met {
        return Err(CliError::Tolerance(format!("toy variance tolerance not reached with I_max = {}", t.i_max)));
    }
    Ok(summary)
}

pub struct BayesPdeSummary {
    pub numerator: Basis,
    pub denominator: Basis,
    pub observations: Vec<Vec<f64>>,
    pub min_effective_sample_size: f64,
}

pub fn bayes_pde(cfg: &Config, out: &Output) -> CliResult<BayesPdeSummary> {
    cfg.validate()?;
    let b = &cfg.bayes;
    let setup = FinSetup::new(cfg)?;
    let rb = setup.train(cfg)?;
    let forward = RBForward { space: &rb.space, scaling: KlScaling { kl: &setup.kl, num_modes: setup.k, upsilon: cfg.upsilon } };
    let observations = synthetic_observations(&forward, &setup.field(cfg), b.lambda0, b.j, b.num_sets)?;
    out.csv("bayes_observations.csv", |w| Ok(write_observations(w, &observations, b.lambda0)?))?;

    let posterior = PdePosterior::new(&forward, observations.clone(), cfg.seed)?;
    let sets: Vec<f64> = (0..b.num_sets).map(|s| s as f64).collect();
    let grid = cartesian_grid(&[b.grid_k2.values(), b.grid_ebar.values(), b.xi.values(), b.zeta.clone(), sets]);
    let params = names(&["k2", "Ebar", "xi", "zeta", "obs_set"]);
    let gc = greedy_config(b.variance_tol, b.i_max, b.m_large, estimate_config(b.m_small, b.m_test, cfg.reuse_small_as_test, cfg));
    let fin = final_config(b.m_small, b.m_test_final, cfg);

    let mut bases = Vec::new();
    let mut finals = Vec::new();
    for (part, tag) in [(RatioPart::Numerator, "numerator"), (RatioPart::Denominator, "denominator")] {
        let model = PosteriorPart { posterior: &posterior, part };
        let basis: Basis = timed(&format!("{tag} greedy"), || Ok(weak_greedy(&model, &grid, &gc)?))?;
        write_trace(out, &format!("bayes_greedy_{tag}.csv"), &basis, &params)?;
        finals.push(batch_estimate(&model, &basis, &grid, &fin)?);
        bases.push(basis);
    }
    let plain: Vec<_> = grid.par_iter().map(|p| posterior.expectation(p, b.m_test_final)).collect::<rbcv::Result<_>>()?;
    let ratios = finals[0].iter().zip(&finals[1]).map(|(n, d)| ratio_estimate(n, d)).collect::<rbcv::Result<Vec<_>>>()?;
    out.csv("bayes_estimates.csv", |w| {
        writeln!(
            w,
            "{},ratio,halfwidth_95,bias_halfwidth,plain_ratio,effective_sample_size,numerator_variance,denominator_variance,I_numerator,I_denominator",
            params.join(",")
        )?;
        for (i, p) in grid.iter().enumerate() {
            let coords: Vec<String> = p.coords().iter().map(|x| x.to_string()).collect();
            let (r, n, d) = (&ratios[i], &finals[0][i], &finals[1][i]);
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                coords.join(","),
                fmt(r.value),
                fmt(r.halfwidth),
                fmt(r.bias_halfwidth),
                fmt(plain[i].ratio),
                fmt(plain[i].effective_sample_size),
                fmt(n.reduced_variance),
                fmt(d.reduced_variance),
                n.variates_used(),
                d.variates_used(),
            )?;
        }
        Ok(())
    })?;
    let denominator = bases.pop().expect("two bases");
    let numerator = bases.pop().expect("two bases");
    let summary = BayesPdeSummary {
        min_effective_sample_size: plain.iter().map(|s| s.effective_sample_size).fold(f64::INFINITY, f64::min),
        numerator,
        denominator,
        observations,
    };
    if !summary.numerator.tolerance_met || !summary.denominator.tolerance_met {
        return Err(CliError::Tolerance(format!("posterior variance tolerance not reached with I_max = {}", b.i_max)));
    }
    Ok(summary)
}

pub fn breakeven(cfg: &Config, out: &Output) -> CliResult<BreakevenReport> {
    cfg.validate()?;
    let b = &cfg.breakeven;
    let inputs = CostInputs {
        c: b.c,
        m: b.m,
        m_test: b.m_test,
        m_small: b.m_small,
        m_large: b.m_large,
        variates: b.variates,
        trial_size: b.trial_size,
        reuse_small_as_test: b.reuse_small_as_test,
    };
    let r = breakeven_report(&inputs)?;
    out.csv("breakeven.csv", |w| {
        writeln!(w, "c,m,m_test,m_small,m_large,variates,trial_size,naive_cost,online_cost,realtime_worthwhile,greedy_cost,min_queries,per_query_gain,asymptotic_gain")?;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            fmt(b.c),
            fmt(b.m),
            fmt(b.m_test),
            fmt(b.m_small),
            fmt(b.m_large),
            b.variates,
            fmt(b.trial_size),
            fmt(r.naive_cost),
            fmt(r.online_cost),
            r.realtime_worthwhile,
            fmt(r.greedy_cost),
            r.min_queries.map(|q| q.to_string()).unwrap_or_default(),
            fmt(r.per_query_gain),
            fmt(r.asymptotic_gain),
        )?;
        Ok(())
    })?;
    println!("per-query gain {:.3e}, asymptotic gain {:.3e}", r.per_query_gain, r.asymptotic_gain);
    Ok(r)
}
