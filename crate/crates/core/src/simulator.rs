//! Trajectories of the random-walk regression model and replication harness.
//!
//! States follow `X_t = X_{t-1} + h_t` from `X_0 = x_init` (zero by default),
//! so with the default start `X_1 = h_1` and `Y = O_u S h + z` holds exactly.
//!
//! Random streams: a run with seed `s` draws observation vectors, process
//! noise and observation noise from three ChaCha8 streams (stream ids 0, 1,
//! 2) keyed by `s`. Replication `r` of a base seed `s` uses the seed
//! [`derive_seed`]`(s, r)`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::quadratic_features;
use crate::error::{Error, Result};
use crate::operators::RegressionDataset;

/// Zero-mean sub-Gaussian noise families.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseFamily {
    #[default]
    Gaussian,
    Rademacher,
    Uniform,
}

impl std::str::FromStr for NoiseFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(NoiseFamily::Gaussian),
            "rademacher" => Ok(NoiseFamily::Rademacher),
            "uniform" => Ok(NoiseFamily::Uniform),
            other => Err(Error::invalid(format!("unknown noise family '{other}'"))),
        }
    }
}

impl std::fmt::Display for NoiseFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NoiseFamily::Gaussian => "gaussian",
            NoiseFamily::Rademacher => "rademacher",
            NoiseFamily::Uniform => "uniform",
        })
    }
}

/// A noise family at a given per-coordinate variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub family: NoiseFamily,
    pub variance: f64,
}

impl NoiseSpec {
    pub fn new(family: NoiseFamily, variance: f64) -> Result<Self> {
        if !(variance >= 0.0) || !variance.is_finite() {
            return Err(Error::invalid(format!("noise variance must be finite and >= 0, got {variance}")));
        }
        Ok(Self { family, variance })
    }

    pub fn gaussian(variance: f64) -> Self {
        Self { family: NoiseFamily::Gaussian, variance }
    }

    /// Constant `kappa` with `P(|X| > t) <= 2 exp(-t^2 / kappa^2)`.
    pub fn kappa(&self) -> f64 {
        let sd = self.variance.sqrt();
        match self.family {
            NoiseFamily::Gaussian => std::f64::consts::SQRT_2 * sd,
            NoiseFamily::Rademacher => sd / std::f64::consts::LN_2.sqrt(),
            NoiseFamily::Uniform => (3.0 * self.variance).sqrt() / std::f64::consts::LN_2.sqrt(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.variance == 0.0 {
            return 0.0;
        }
        let sd = self.variance.sqrt();
        match self.family {
            NoiseFamily::Gaussian => sd * rng.sample::<f64, _>(StandardNormal),
            NoiseFamily::Rademacher => {
                if rng.random::<bool>() {
                    sd
                } else {
                    -sd
                }
            }
            NoiseFamily::Uniform => {
                let half_width = 3f64.sqrt() * sd;
                rng.random_range(-half_width..=half_width)
            }
        }
    }
}

/// How observation vectors `u_t` are produced.
#[derive(Debug, Clone, PartialEq)]
pub enum UProcess {
    /// `u_t ~ N(0, I_n)`, independent across time.
    GaussianIid,
    Constant(Vec<f64>),
    /// `u_t = (1, v_t, v_t^2)` from a scalar series of length `T`.
    QuadraticFeatures(Vec<f64>),
    /// Fixed `T x n` matrix, e.g. read from a file.
    Given(DMatrix<f64>),
}

/// A level shift of the hidden state starting at a given time.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeShift {
    /// First (1-based) time at which the shift applies.
    pub at: usize,
    pub delta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub horizon: usize,
    pub dim: usize,
    pub process_noise: NoiseSpec,
    pub observation_noise: NoiseSpec,
    pub u_process: UProcess,
    pub seed: u64,
    /// 1-based times whose observation is withheld.
    pub missing: Vec<usize>,
    pub initial_state: Option<Vec<f64>>,
    pub regime_shift: Option<RegimeShift>,
}

impl SimulationConfig {
    /// Gaussian inputs and Gaussian noise of both kinds.
    pub fn gaussian(horizon: usize, dim: usize, sigma2: f64, eta2: f64, seed: u64) -> Self {
        Self {
            horizon,
            dim,
            process_noise: NoiseSpec::gaussian(sigma2),
            observation_noise: NoiseSpec::gaussian(eta2),
            u_process: UProcess::GaussianIid,
            seed,
            missing: Vec::new(),
            initial_state: None,
            regime_shift: None,
        }
    }

    pub fn with_family(mut self, family: NoiseFamily) -> Self {
        self.process_noise.family = family;
        self.observation_noise.family = family;
        self
    }

    pub fn sigma2(&self) -> f64 {
        self.process_noise.variance
    }

    pub fn eta2(&self) -> f64 {
        self.observation_noise.variance
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 2 || self.dim == 0 {
            return Err(Error::invalid("simulation needs T >= 2 and n >= 1"));
        }
        NoiseSpec::new(self.process_noise.family, self.process_noise.variance)?;
        NoiseSpec::new(self.observation_noise.family, self.observation_noise.variance)?;
        let check_len = |len: usize, what: &str| {
            if len == self.dim {
                Ok(())
            } else {
                Err(Error::invalid(format!("{what} has length {len}, expected n = {}", self.dim)))
            }
        };
        match &self.u_process {
            UProcess::GaussianIid => {}
            UProcess::Constant(v) => check_len(v.len(), "constant observation vector")?,
            UProcess::QuadraticFeatures(v) => {
                check_len(3, "quadratic features")?;
                if v.len() != self.horizon {
                    return Err(Error::DimensionMismatch { expected: self.horizon, found: v.len() });
                }
            }
            UProcess::Given(m) => {
                if m.nrows() != self.horizon {
                    return Err(Error::DimensionMismatch { expected: self.horizon, found: m.nrows() });
                }
                check_len(m.ncols(), "given observation vectors")?;
            }
        }
        if let Some(x) = &self.initial_state {
            check_len(x.len(), "initial state")?;
        }
        if let Some(shift) = &self.regime_shift {
            check_len(shift.delta.len(), "regime shift")?;
        }
        if let Some(&t) = self.missing.iter().find(|&&t| t == 0 || t > self.horizon) {
            return Err(Error::invalid(format!("missing index {t} outside 1..={}", self.horizon)));
        }
        Ok(())
    }
}

/// Hidden states `X_t`, one row per time. Never consumed by estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenStates(pub DMatrix<f64>);

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Seed of replication `index` under `base` (SplitMix64 finalizer).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn observation_vectors(config: &SimulationConfig) -> Result<DMatrix<f64>> {
    let (t, n) = (config.horizon, config.dim);
    Ok(match &config.u_process {
        UProcess::GaussianIid => {
            let mut rng = stream(config.seed, 0);
            // Row-major draw order: u_1 first.
            let mut u = DMatrix::zeros(t, n);
            for i in 0..t {
                for j in 0..n {
                    u[(i, j)] = rng.sample(StandardNormal);
                }
            }
            u
        }
        UProcess::Constant(v) => DMatrix::from_fn(t, n, |_, j| v[j]),
        UProcess::QuadraticFeatures(v) => quadratic_features(v)?,
        UProcess::Given(m) => m.clone(),
    })
}

/// Draws one trajectory of the model.
pub fn simulate(config: &SimulationConfig) -> Result<(RegressionDataset, HiddenStates)> {
    config.validate()?;
    let (t_max, n) = (config.horizon, config.dim);
    let u = observation_vectors(config)?;
    let mut process = stream(config.seed, 1);
    let mut observation = stream(config.seed, 2);

    let mut state = config.initial_state.clone().unwrap_or_else(|| vec![0.0; n]);
    let mut states = DMatrix::zeros(t_max, n);
    let mut y = vec![0.0; t_max];
    let mut observed = vec![true; t_max];
    for &m in &config.missing {
        observed[m - 1] = false;
    }
    for t in 0..t_max {
        for x in state.iter_mut() {
            *x += config.process_noise.sample(&mut process);
        }
        let mut x_t = state.clone();
        if let Some(shift) = &config.regime_shift {
            if t + 1 >= shift.at {
                x_t.iter_mut().zip(&shift.delta).for_each(|(x, d)| *x += d);
            }
        }
        let z = config.observation_noise.sample(&mut observation);
        let signal: f64 = u.row(t).iter().zip(&x_t).map(|(a, b)| a * b).sum();
        y[t] = if observed[t] { signal + z } else { f64::NAN };
        states.row_mut(t).iter_mut().zip(&x_t).for_each(|(s, x)| *s = *x);
    }
    let dataset = RegressionDataset::new(u, y, observed)?;
    Ok((dataset, HiddenStates(states)))
}

/// Fresh observations `Y = O_u S h + z` on the observed rows of `dataset`
/// (observation vectors, mask and time indices are kept).
pub fn resample_observations<R: Rng + ?Sized>(
    dataset: &RegressionDataset,
    process: &NoiseSpec,
    observation: &NoiseSpec,
    rng: &mut R,
) -> Result<RegressionDataset> {
    let n = dataset.dim();
    let mut state = vec![0.0; n];
    let mut time = 0usize;
    let mut y = vec![f64::NAN; dataset.horizon()];
    for (t, yt) in y.iter_mut().enumerate() {
        while time < dataset.times()[t] {
            state.iter_mut().for_each(|x| *x += process.sample(rng));
            time += 1;
        }
        if dataset.observed()[t] {
            let signal: f64 = dataset.u().row(t).iter().zip(&state).map(|(a, b)| a * b).sum();
            *yt = signal + observation.sample(rng);
        }
    }
    dataset.with_observations(y)
}

/// Aggregate absolute estimation errors over replications.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorSummary {
    pub horizon: usize,
    pub replications: usize,
    /// Replications whose estimator returned an error; excluded from means.
    pub failures: usize,
    pub mean_abs_err_sigma2: f64,
    pub stderr_sigma2: f64,
    pub mean_abs_err_eta2: f64,
    pub stderr_eta2: f64,
}

/// Sample mean and standard error of the mean.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let k = values.len();
    if k == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    if k < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    (mean, (var / k as f64).sqrt())
}

/// Runs `estimator` on `replications` independent trajectories of `config`.
///
/// `estimator` returns `(sigma2_hat, eta2_hat)`.
pub fn replicate<F>(config: &SimulationConfig, replications: usize, estimator: F) -> Result<ErrorSummary>
where
    F: Fn(&RegressionDataset) -> Result<(f64, f64)> + Sync,
{
    if replications < 2 {
        return Err(Error::invalid("replicate needs at least 2 replications"));
    }
    config.validate()?;
    let outcomes: Vec<Option<(f64, f64)>> = (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let mut cfg = config.clone();
            cfg.seed = derive_seed(config.seed, r);
            let (dataset, _hidden) = simulate(&cfg).ok()?;
            let (s, e) = estimator(&dataset).ok()?;
            Some(((s - config.sigma2()).abs(), (e - config.eta2()).abs()))
        })
        .collect();
    let ok: Vec<(f64, f64)> = outcomes.iter().flatten().copied().collect();
    let (ms, ss) = mean_and_stderr(&ok.iter().map(|e| e.0).collect::<Vec<_>>());
    let (me, se) = mean_and_stderr(&ok.iter().map(|e| e.1).collect::<Vec<_>>());
    Ok(ErrorSummary {
        horizon: config.horizon,
        replications,
        failures: replications - ok.len(),
        mean_abs_err_sigma2: ms,
        stderr_sigma2: ss,
        mean_abs_err_eta2: me,
        stderr_eta2: se,
    })
}

/// Least-squares slope of `log(err)` on `log(T)`; `None` when any error is
/// not strictly positive and finite or fewer than two points are given.
pub fn loglog_slope(horizons: &[usize], errors: &[f64]) -> Option<f64> {
    if horizons.len() != errors.len() || horizons.len() < 2 {
        return None;
    }
    if errors.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return None;
    }
    let xs: Vec<f64> = horizons.iter().map(|&t| (t as f64).ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_gives_zero_observations() {
        let cfg = SimulationConfig::gaussian(50, 3, 0.0, 0.0, 1);
        let (ds, hidden) = simulate(&cfg).unwrap();
        assert!(ds.y().iter().all(|&y| y == 0.0));
        assert!(hidden.0.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn no_process_noise_keeps_state_constant() {
        let mut cfg = SimulationConfig::gaussian(40, 2, 0.0, 1.0, 3);
        cfg.initial_state = Some(vec![1.5, -2.0]);
        let (ds, hidden) = simulate(&cfg).unwrap();
        for t in 0..40 {
            assert_eq!(hidden.0[(t, 0)], 1.5);
            assert_eq!(hidden.0[(t, 1)], -2.0);
        }
        assert!(ds.y().iter().any(|&y| y != 0.0));
    }

    #[test]
    fn observation_noise_variance_matches() {
        let cfg = SimulationConfig::gaussian(100_000, 2, 0.3, 2.0, 11);
        let (ds, hidden) = simulate(&cfg).unwrap();
        let resid: Vec<f64> = (0..ds.horizon())
            .map(|t| ds.y()[t] - ds.u().row(t).dot(&hidden.0.row(t)))
            .collect();
        let sq: Vec<f64> = resid.iter().map(|r| r * r).collect();
        let (m, se) = mean_and_stderr(&sq);
        assert!((m - 2.0).abs() < 3.0 * se, "mean {m} se {se}");
    }

    #[test]
    fn families_have_requested_moments() {
        let mut rng = stream(5, 0);
        for family in [NoiseFamily::Gaussian, NoiseFamily::Rademacher, NoiseFamily::Uniform] {
            let spec = NoiseSpec::new(family, 2.5).unwrap();
            let draws: Vec<f64> = (0..200_000).map(|_| spec.sample(&mut rng)).collect();
            let (mean, se_mean) = mean_and_stderr(&draws);
            let sq: Vec<f64> = draws.iter().map(|x| x * x).collect();
            let (var, se_var) = mean_and_stderr(&sq);
            assert!(mean.abs() <= 4.0 * se_mean, "{family}: mean {mean}");
            // Rademacher squares are constant, so the standard error is zero.
            assert!((var - 2.5).abs() <= 4.0 * se_var + 1e-12, "{family}: var {var}");
            match family {
                NoiseFamily::Rademacher => {
                    assert!(draws.iter().all(|x| (x.abs() - 2.5f64.sqrt()).abs() < 1e-15))
                }
                NoiseFamily::Uniform => {
                    let b = (7.5f64).sqrt();
                    assert!(draws.iter().all(|x| x.abs() <= b));
                    assert!(draws.iter().any(|x| x.abs() > 0.99 * b));
                }
                NoiseFamily::Gaussian => {}
            }
        }
    }

    #[test]
    fn kappa_is_a_valid_tail_constant() {
        for family in [NoiseFamily::Gaussian, NoiseFamily::Rademacher, NoiseFamily::Uniform] {
            let spec = NoiseSpec::new(family, 1.0).unwrap();
            let k = spec.kappa();
            assert!(k > 0.0);
            let mut rng = stream(9, 1);
            let draws: Vec<f64> = (0..50_000).map(|_| spec.sample(&mut rng)).collect();
            for t in [0.5, 1.0, 1.5, 2.0] {
                let tail = draws.iter().filter(|x| x.abs() > t).count() as f64 / 50_000.0;
                assert!(tail <= 2.0 * (-t * t / (k * k)).exp() + 0.01, "{family} t={t}");
            }
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let cfg = SimulationConfig::gaussian(30, 4, 0.5, 2.0, 42).with_family(NoiseFamily::Uniform);
        assert_eq!(simulate(&cfg).unwrap(), simulate(&cfg).unwrap());
        let mut other = cfg.clone();
        other.seed = 43;
        assert_ne!(simulate(&cfg).unwrap().0, simulate(&other).unwrap().0);
    }

    #[test]
    fn missing_rows_are_masked() {
        let mut cfg = SimulationConfig::gaussian(20, 1, 1.0, 1.0, 0);
        cfg.missing = vec![3, 4];
        let (ds, _) = simulate(&cfg).unwrap();
        assert_eq!(ds.effective_horizon(), 18);
        assert!(!ds.observed()[2] && !ds.observed()[3]);
        cfg.missing = vec![21];
        assert!(simulate(&cfg).is_err());
    }

    #[test]
    fn truth_stub_has_zero_error() {
        let cfg = SimulationConfig::gaussian(20, 2, 0.5, 2.0, 1);
        let summary = replicate(&cfg, 5, |_| Ok((0.5, 2.0))).unwrap();
        assert_eq!(summary.mean_abs_err_sigma2, 0.0);
        assert_eq!(summary.mean_abs_err_eta2, 0.0);
        assert_eq!(summary.failures, 0);
        assert!(replicate(&cfg, 1, |_| Ok((0.5, 2.0))).is_err());
    }

    #[test]
    fn stderr_shrinks_with_more_replications() {
        let cfg = SimulationConfig::gaussian(10, 1, 0.5, 2.0, 8);
        let est = |ds: &RegressionDataset| {
            let y = ds.y();
            Ok((y[0] * y[0], y[1].abs()))
        };
        let small = replicate(&cfg, 1000, est).unwrap();
        let large = replicate(&cfg, 2000, est).unwrap();
        let ratio = small.stderr_eta2 / large.stderr_eta2;
        assert!((ratio - 2f64.sqrt()).abs() < 0.15, "ratio {ratio}");
    }

    #[test]
    fn slope_of_power_law() {
        let ts = [100, 200, 400, 800];
        let errs: Vec<f64> = ts.iter().map(|&t| 3.0 / (t as f64).sqrt()).collect();
        assert!((loglog_slope(&ts, &errs).unwrap() + 0.5).abs() < 1e-12);
        assert!(loglog_slope(&ts, &[0.0, 0.0, 0.0, 0.0]).is_none());
    }

    #[test]
    fn resampled_observations_follow_time_indices() {
        let u = DMatrix::from_element(3, 1, 1.0);
        let ds = RegressionDataset::with_times(u, vec![0.0; 3], vec![true; 3], vec![1, 5, 6]).unwrap();
        let mut rng = stream(1, 0);
        let out = resample_observations(&ds, &NoiseSpec::gaussian(0.0), &NoiseSpec::gaussian(0.0), &mut rng)
            .unwrap();
        assert_eq!(out.y(), &[0.0, 0.0, 0.0]);
        assert_eq!(out.times(), ds.times());
    }
}
