//! Spectrum-thresholding variance estimator.
//!
//! Applying the pseudo-inverse `R` of `O_u S` and its truncation `R'` to the
//! observations gives two moment equations
//!
//! ```text
//! ||R Y||^2 / T'  ~  sigma^2 + (||R||_HS^2 / T') eta^2
//! ||R'Y||^2 / p   ~  sigma^2 + (||R'||_HS^2 / p) eta^2
//! ```
//!
//! which are solved for `(sigma^2, eta^2)`. The system is well posed when the
//! gap ratio `(||R'||^2/p) / (||R||^2/T')` is bounded away from one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::operators::{filter_rows, gram_matrix, NormSummary, RegressionDataset, DEFAULT_MIN_ROW_NORM};
use crate::simulator::{derive_seed, mean_and_stderr, resample_observations, NoiseSpec};
use crate::spectral::{
    self, eigen_projected, functionals_from, quadratic_forms_projected, truncation_index, EigenMethod,
    SpectralFunctionals,
};

/// Gap ratios within this distance of one make the moment system singular.
pub const FLAT_SPECTRUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StveConfig {
    /// Truncation fraction; `p = ceil(alpha * T')`.
    pub alpha: f64,
    pub min_row_norm: f64,
    /// Warn when `gap_ratio - 1` falls below this value.
    pub gap_warn_threshold: f64,
    /// Replace negative estimates by zero and re-solve for the other one.
    pub clamp_nonnegative: bool,
    pub eigen_method: EigenMethod,
}

impl Default for StveConfig {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            min_row_norm: DEFAULT_MIN_ROW_NORM,
            gap_warn_threshold: 0.05,
            clamp_nonnegative: true,
            eigen_method: EigenMethod::Auto,
        }
    }
}

impl StveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.min_row_norm >= 0.0) {
            return Err(Error::invalid("min_row_norm must be >= 0"));
        }
        if !(self.gap_warn_threshold > 0.0) {
            return Err(Error::invalid("gap_warn_threshold must be > 0"));
        }
        Ok(())
    }

    /// Smallest effective horizon accepted: `max(4, ceil(1 / alpha))`.
    pub fn min_effective_horizon(&self) -> usize {
        ((1.0 / self.alpha).ceil() as usize).max(4)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    /// The gap condition is weak; estimates may be noisy.
    WeakGap { gap_ratio: f64, threshold: f64 },
    ClampedEta2 { raw: f64 },
    ClampedSigma2 { raw: f64 },
    RowsDropped { missing: usize, low_norm: usize },
}

impl std::fmt::Display for Warning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Warning::WeakGap { gap_ratio, threshold } => {
                write!(f, "gap ratio {gap_ratio:.6} is below 1 + {threshold}")
            }
            Warning::ClampedEta2 { raw } => write!(f, "eta2 estimate {raw:.6e} clamped to 0"),
            Warning::ClampedSigma2 { raw } => write!(f, "sigma2 estimate {raw:.6e} clamped to 0"),
            Warning::RowsDropped { missing, low_norm } => {
                write!(f, "dropped {missing} missing and {low_norm} low-norm rows")
            }
        }
    }
}

/// Left-hand sides of the two moment equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    /// `||R Y||^2 / T'`.
    pub full: f64,
    /// `||R' Y||^2 / p`.
    pub truncated: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StveEstimate {
    pub sigma2: f64,
    pub eta2: f64,
    pub sigma2_raw: f64,
    pub eta2_raw: f64,
    pub moments: Moments,
    pub functionals: SpectralFunctionals,
    pub effective_t: usize,
    /// `(u~_min / (n ||u_max||)) * ||R||_HS^2 / T'`; zero when some row sums
    /// to zero.
    pub gap_lower_bound: f64,
    pub warnings: Vec<Warning>,
}

/// Solves the moment system. Returns `(sigma2_raw, eta2_raw)`.
pub fn solve_moments(moments: Moments, f: &SpectralFunctionals) -> Result<(f64, f64)> {
    if f.gap_ratio - 1.0 <= FLAT_SPECTRUM_TOL {
        return Err(Error::SingularSystem(format!(
            "gap ratio {} is numerically 1 (flat inverse spectrum)",
            f.gap_ratio
        )));
    }
    let coef = f.hs_r_sq / f.effective_t as f64;
    let eta2 = (moments.truncated - moments.full) / f.gap();
    let sigma2 = moments.full - coef * eta2;
    Ok((sigma2, eta2))
}

fn clamp(sigma2: f64, eta2: f64, moments: Moments, f: &SpectralFunctionals, warnings: &mut Vec<Warning>) -> (f64, f64) {
    if eta2 < 0.0 {
        warnings.push(Warning::ClampedEta2 { raw: eta2 });
        (moments.full.max(0.0), 0.0)
    } else if sigma2 < 0.0 {
        warnings.push(Warning::ClampedSigma2 { raw: sigma2 });
        let coef = f.hs_r_sq / f.effective_t as f64;
        (0.0, (moments.full / coef).max(0.0))
    } else {
        (sigma2, eta2)
    }
}

/// Estimates `(sigma^2, eta^2)` from one trajectory.
pub fn estimate(dataset: &RegressionDataset, config: &StveConfig) -> Result<StveEstimate> {
    config.validate()?;
    let (reduced, report) = filter_rows(dataset, config.min_row_norm)?;
    let t_eff = reduced.horizon();
    let needed = config.min_effective_horizon();
    if t_eff < needed {
        return Err(Error::InsufficientRows { needed, found: t_eff });
    }
    let gram = gram_matrix(&reduced)?;
    let proj = eigen_projected(&gram, reduced.y(), config.eigen_method)?;
    let p = truncation_index(config.alpha, t_eff);
    let functionals = functionals_from(&proj.gamma_sq, p)?;
    let (r_sq, rp_sq) = quadratic_forms_projected(&proj, p)?;
    let moments = Moments { full: r_sq / t_eff as f64, truncated: rp_sq / p as f64 };
    let (sigma2_raw, eta2_raw) = solve_moments(moments, &functionals)?;

    let mut warnings = Vec::new();
    if report.dropped() > 0 {
        warnings.push(Warning::RowsDropped {
            missing: report.dropped_missing.len(),
            low_norm: report.dropped_low_norm.len(),
        });
    }
    if functionals.gap_ratio < 1.0 + config.gap_warn_threshold {
        warnings.push(Warning::WeakGap {
            gap_ratio: functionals.gap_ratio,
            threshold: config.gap_warn_threshold,
        });
    }
    let (sigma2, eta2) = if config.clamp_nonnegative {
        clamp(sigma2_raw, eta2_raw, moments, &functionals, &mut warnings)
    } else {
        (sigma2_raw, eta2_raw)
    };
    let gap_lower_bound = prop1_bound(&NormSummary::of(&reduced), reduced.dim(), &functionals);

    Ok(StveEstimate {
        sigma2,
        eta2,
        sigma2_raw,
        eta2_raw,
        moments,
        functionals,
        effective_t: t_eff,
        gap_lower_bound,
        warnings,
    })
}

fn prop1_bound(norms: &NormSummary, n: usize, f: &SpectralFunctionals) -> f64 {
    if norms.u_max_norm == 0.0 {
        return 0.0;
    }
    norms.u_tilde_min / (n as f64 * norms.u_max_norm) * f.hs_r_sq / f.effective_t as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapDiagnostic {
    pub gap_ratio: f64,
    /// Structural lower-bound quantity for `||R'||^2/p - ||R||^2/T'`, up to
    /// an unknown absolute constant.
    pub prop1_bound: f64,
    pub satisfied: bool,
}

/// Gap ratio and the structural lower-bound quantity for a filtered dataset.
///
/// The bound is stated for `p = ceil(T'/4)`; `functionals` should be computed
/// at that truncation.
pub fn gap_diagnostic(
    dataset: &RegressionDataset,
    functionals: &SpectralFunctionals,
    gap_warn_threshold: f64,
) -> GapDiagnostic {
    let norms = NormSummary::of(dataset);
    GapDiagnostic {
        gap_ratio: functionals.gap_ratio,
        prop1_bound: prop1_bound(&norms, dataset.dim(), functionals),
        satisfied: functionals.gap_ratio >= 1.0 + gap_warn_threshold,
    }
}

/// Monte-Carlo check of the moment identities on a fixed design.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub replications: usize,
    pub effective_t: usize,
    pub p: usize,
    pub mean_full: f64,
    pub stderr_full: f64,
    /// `sigma^2 + (||R||^2/T') eta^2`.
    pub expected_full: f64,
    pub mean_truncated: f64,
    pub stderr_truncated: f64,
    /// `sigma^2 + (||R'||^2/p) eta^2`.
    pub expected_truncated: f64,
}

impl MomentReport {
    /// Distance of the sample means from the expectations, in standard errors.
    pub fn z_scores(&self) -> (f64, f64) {
        let z = |mean: f64, expected: f64, se: f64| {
            let diff = (mean - expected).abs();
            if diff == 0.0 {
                0.0
            } else {
                diff / se
            }
        };
        (
            z(self.mean_full, self.expected_full, self.stderr_full),
            z(self.mean_truncated, self.expected_truncated, self.stderr_truncated),
        )
    }
}

/// Re-simulates the observations of `dataset` under known noise and compares
/// the averaged moments with their expectations.
pub fn moment_equation_check(
    dataset: &RegressionDataset,
    process: &NoiseSpec,
    observation: &NoiseSpec,
    replications: usize,
    config: &StveConfig,
    seed: u64,
) -> Result<MomentReport> {
    if replications < 100 {
        return Err(Error::invalid("moment check needs at least 100 replications"));
    }
    config.validate()?;
    let (reduced, _) = filter_rows(dataset, config.min_row_norm)?;
    let t_eff = reduced.horizon();
    let spec = spectral::eigendecompose_with(&gram_matrix(&reduced)?, config.eigen_method)?;
    let p = truncation_index(config.alpha, t_eff);
    let f = spectral::functionals(&spec, p)?;

    let draws: Vec<(f64, f64)> = (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, r));
            let sample = resample_observations(&reduced, process, observation, &mut rng)?;
            let (a, b) = spectral::quadratic_forms(&spec, sample.y(), p)?;
            Ok((a / t_eff as f64, b / p as f64))
        })
        .collect::<Result<_>>()?;

    let (mean_full, stderr_full) = mean_and_stderr(&draws.iter().map(|d| d.0).collect::<Vec<_>>());
    let (mean_truncated, stderr_truncated) =
        mean_and_stderr(&draws.iter().map(|d| d.1).collect::<Vec<_>>());
    let (s2, e2) = (process.variance, observation.variance);
    Ok(MomentReport {
        replications,
        effective_t: t_eff,
        p,
        mean_full,
        stderr_full,
        expected_full: s2 + f.hs_r_sq / t_eff as f64 * e2,
        mean_truncated,
        stderr_truncated,
        expected_truncated: s2 + f.hs_rp_sq / p as f64 * e2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{simulate, NoiseFamily, SimulationConfig, UProcess};
    use nalgebra::DMatrix;

    #[test]
    fn zero_observations_give_zero_estimates() {
        let (ds, _) = simulate(&SimulationConfig::gaussian(60, 3, 0.5, 2.0, 2)).unwrap();
        let zero = ds.with_observations(vec![0.0; 60]).unwrap();
        let est = estimate(&zero, &StveConfig::default()).unwrap();
        assert_eq!((est.sigma2, est.eta2), (0.0, 0.0));
        assert_eq!((est.sigma2_raw, est.eta2_raw), (0.0, 0.0));
    }

    #[test]
    fn raw_solution_satisfies_both_equations() {
        let (ds, _) = simulate(&SimulationConfig::gaussian(120, 2, 0.5, 2.0, 9)).unwrap();
        let est = estimate(&ds, &StveConfig::default()).unwrap();
        let f = est.functionals;
        let lhs1 = est.sigma2_raw + f.hs_r_sq / f.effective_t as f64 * est.eta2_raw;
        let lhs2 = est.sigma2_raw + f.hs_rp_sq / f.p as f64 * est.eta2_raw;
        assert!((lhs1 - est.moments.full).abs() <= 1e-10 * est.moments.full.abs());
        assert!((lhs2 - est.moments.truncated).abs() <= 1e-10 * est.moments.truncated.abs());
    }

    #[test]
    fn scale_covariance() {
        let (ds, _) = simulate(&SimulationConfig::gaussian(80, 3, 0.5, 2.0, 4)).unwrap();
        let cfg = StveConfig::default();
        let base = estimate(&ds, &cfg).unwrap();
        let s = 3.5;
        let scaled = ds.with_observations(ds.y().iter().map(|y| s * y).collect()).unwrap();
        let est = estimate(&scaled, &cfg).unwrap();
        assert!((est.sigma2_raw - s * s * base.sigma2_raw).abs() < 1e-10 * est.sigma2_raw.abs());
        assert!((est.eta2_raw - s * s * base.eta2_raw).abs() < 1e-10 * est.eta2_raw.abs());
    }

    #[test]
    fn flat_spectrum_is_singular() {
        let f = SpectralFunctionals { hs_r_sq: 4.0, hs_rp_sq: 1.0, p: 1, effective_t: 4, gap_ratio: 1.0 };
        let m = Moments { full: 1.0, truncated: 1.0 };
        assert!(matches!(solve_moments(m, &f), Err(Error::SingularSystem(_))));
    }

    #[test]
    fn too_short_for_alpha() {
        let (ds, _) = simulate(&SimulationConfig::gaussian(8, 1, 0.5, 2.0, 1)).unwrap();
        let cfg = StveConfig { alpha: 0.1, ..StveConfig::default() };
        assert!(matches!(estimate(&ds, &cfg), Err(Error::InsufficientRows { needed: 10, found: 8 })));
        let cfg = StveConfig { alpha: 1.0, ..StveConfig::default() };
        assert!(estimate(&ds, &cfg).is_err());
    }

    #[test]
    fn clamping_resolves_the_other_unknown() {
        let f = SpectralFunctionals { hs_r_sq: 8.0, hs_rp_sq: 6.0, p: 1, effective_t: 4, gap_ratio: 3.0 };
        let mut w = Vec::new();
        // Negative eta2: sigma2 re-solved from the first equation alone.
        let m = Moments { full: 2.0, truncated: 1.0 };
        let (s, e) = solve_moments(m, &f).unwrap();
        assert!(e < 0.0);
        assert_eq!(clamp(s, e, m, &f, &mut w), (2.0, 0.0));
        // Negative sigma2: eta2 = full / (||R||^2/T').
        let m = Moments { full: 2.0, truncated: 9.0 };
        let (s, e) = solve_moments(m, &f).unwrap();
        assert!(s < 0.0 && e > 0.0);
        assert_eq!(clamp(s, e, m, &f, &mut w), (0.0, 1.0));
        assert_eq!(w.len(), 2);
    }

    #[test]
    fn gap_diagnostic_examples() {
        // All-ones scalar design: u~_min = 1. Here G^{-1} is the path
        // Laplacian with eigenvalues 4 sin^2((2k-1) pi / (2(2T+1))).
        let t = 40;
        let ds = RegressionDataset::fully_observed(DMatrix::from_element(t, 1, 1.0), vec![0.0; t]).unwrap();
        let spec = spectral::eigendecompose(&gram_matrix(&ds).unwrap()).unwrap();
        let p = truncation_index(0.25, t);
        let f = spectral::functionals(&spec, p).unwrap();
        let mut inv: Vec<f64> = (1..=t)
            .map(|k| {
                let a = (2 * k - 1) as f64 * std::f64::consts::PI / (2.0 * (2 * t + 1) as f64);
                4.0 * a.sin().powi(2)
            })
            .collect();
        inv.sort_by(|a, b| b.total_cmp(a));
        let oracle = (inv[..p].iter().sum::<f64>() / p as f64) / (inv.iter().sum::<f64>() / t as f64);
        let d = gap_diagnostic(&ds, &f, 0.05);
        assert!((d.gap_ratio - oracle).abs() < 1e-9, "{} vs {oracle}", d.gap_ratio);
        // Tends to 1 + 2 sqrt(2) / pi ~ 1.9003 as T grows.
        assert!(d.gap_ratio > 1.9);
        assert!(d.prop1_bound > 0.0);
        assert!(d.satisfied);

        // A row summing to zero makes the bound vacuous.
        let mut u = DMatrix::from_element(10, 2, 1.0);
        u[(3, 1)] = -1.0;
        let ds = RegressionDataset::fully_observed(u, vec![0.0; 10]).unwrap();
        let spec = spectral::eigendecompose(&gram_matrix(&ds).unwrap()).unwrap();
        let f = spectral::functionals(&spec, 3).unwrap();
        assert_eq!(gap_diagnostic(&ds, &f, 0.05).prop1_bound, 0.0);

        let flat = SpectralFunctionals { hs_r_sq: 5.0, hs_rp_sq: 2.0, p: 2, effective_t: 5, gap_ratio: 1.0 };
        let d = gap_diagnostic(&ds, &flat, 0.05);
        assert_eq!(d.gap_ratio, 1.0);
        assert!(!d.satisfied);
    }

    #[test]
    fn moment_check_with_zero_observation_noise_is_exact_in_expectation() {
        let (ds, _) = simulate(&SimulationConfig::gaussian(60, 2, 1.0, 0.0, 5)).unwrap();
        let report = moment_equation_check(
            &ds,
            &NoiseSpec::gaussian(1.0),
            &NoiseSpec::gaussian(0.0),
            200,
            &StveConfig::default(),
            17,
        )
        .unwrap();
        assert_eq!(report.expected_full, 1.0);
        let (z1, z2) = report.z_scores();
        assert!(z1 < 4.0 && z2 < 4.0, "z = {z1}, {z2}");
    }

    #[test]
    fn moment_check_without_process_noise() {
        let (ds, _) = simulate(&SimulationConfig::gaussian(60, 2, 0.0, 1.0, 6)).unwrap();
        let cfg = StveConfig::default();
        let report =
            moment_equation_check(&ds, &NoiseSpec::gaussian(0.0), &NoiseSpec::gaussian(1.5), 200, &cfg, 3).unwrap();
        let (reduced, _) = filter_rows(&ds, cfg.min_row_norm).unwrap();
        let spec = spectral::eigendecompose(&gram_matrix(&reduced).unwrap()).unwrap();
        let f = spectral::functionals(&spec, report.p).unwrap();
        assert!((report.expected_full - f.hs_r_sq / 60.0 * 1.5).abs() < 1e-12);
        let (z1, z2) = report.z_scores();
        assert!(z1 < 4.0 && z2 < 4.0, "z = {z1}, {z2}");
        assert!(moment_equation_check(&ds, &NoiseSpec::gaussian(0.0), &NoiseSpec::gaussian(1.0), 50, &cfg, 3).is_err());
    }

    #[test]
    fn scalar_unit_design_concentrates_without_observation_noise() {
        // n = 1, u = 1, sigma^2 = 1, eta^2 = 0, averaged over replications.
        let cfg = SimulationConfig {
            u_process: UProcess::Constant(vec![1.0]),
            ..SimulationConfig::gaussian(200, 1, 1.0, 0.0, 21)
        };
        let mut sigmas = Vec::new();
        let mut etas = Vec::new();
        for r in 0..200 {
            let c = SimulationConfig { seed: derive_seed(21, r), ..cfg.clone() };
            let (ds, _) = simulate(&c).unwrap();
            let est = estimate(&ds, &StveConfig::default()).unwrap();
            sigmas.push(est.sigma2_raw);
            etas.push(est.eta2_raw);
        }
        let (ms, ses) = mean_and_stderr(&sigmas);
        let (me, see) = mean_and_stderr(&etas);
        assert!((ms - 1.0).abs() < 4.0 * ses, "sigma2 mean {ms} se {ses}");
        assert!(me.abs() < 4.0 * see, "eta2 mean {me} se {see}");
        // The family does not matter for the first moment.
        let c = cfg.clone().with_family(NoiseFamily::Rademacher);
        assert!(estimate(&simulate(&c).unwrap().0, &StveConfig::default()).is_ok());
    }
}
