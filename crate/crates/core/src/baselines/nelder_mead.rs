//! Nelder-Mead downhill simplex minimizer.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub max_iterations: usize,
    /// Stop once every vertex lies within this distance of the best one.
    pub diameter_tol: f64,
    /// Edge length of the initial simplex.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { max_iterations: 500, diameter_tol: 1e-8, initial_step: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Best objective value after each iteration.
    pub history: Vec<f64>,
}

fn centroid(points: &[Vec<f64>], skip: usize) -> Vec<f64> {
    let dim = points[0].len();
    let mut c = vec![0.0; dim];
    for (i, p) in points.iter().enumerate() {
        if i != skip {
            c.iter_mut().zip(p).for_each(|(a, b)| *a += b);
        }
    }
    let k = (points.len() - 1) as f64;
    c.iter_mut().for_each(|a| *a /= k);
    c
}

fn along(from: &[f64], to: &[f64], t: f64) -> Vec<f64> {
    from.iter().zip(to).map(|(a, b)| a + t * (b - a)).collect()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Minimizes `f` from `x0`. Non-finite objective values count as `+inf`.
pub fn minimize(f: impl Fn(&[f64]) -> f64, x0: &[f64], options: &NelderMeadOptions) -> NelderMeadResult {
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let dim = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..dim {
        let mut p = x0.to_vec();
        p[i] += options.initial_step;
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| eval(p)).collect();
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    while iterations < options.max_iterations {
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let diameter = simplex[1..].iter().map(|p| distance(p, &simplex[0])).fold(0.0, f64::max);
        if diameter < options.diameter_tol {
            converged = true;
            break;
        }
        iterations += 1;

        let worst = dim;
        let c = centroid(&simplex, worst);
        let reflected = along(&c, &simplex[worst], -1.0);
        let fr = eval(&reflected);
        if fr < values[0] {
            let expanded = along(&c, &simplex[worst], -2.0);
            let fe = eval(&expanded);
            if fe < fr {
                simplex[worst] = expanded;
                values[worst] = fe;
            } else {
                simplex[worst] = reflected;
                values[worst] = fr;
            }
        } else if fr < values[dim - 1] {
            simplex[worst] = reflected;
            values[worst] = fr;
        } else {
            let (target, ft) = if fr < values[worst] { (reflected, fr) } else { (simplex[worst].clone(), values[worst]) };
            let contracted = along(&c, &target, 0.5);
            let fc = eval(&contracted);
            if fc < ft {
                simplex[worst] = contracted;
                values[worst] = fc;
            } else {
                let best = simplex[0].clone();
                for i in 1..=dim {
                    simplex[i] = along(&best, &simplex[i], 0.5);
                    values[i] = eval(&simplex[i]);
                }
            }
        }
        history.push(values.iter().copied().fold(f64::INFINITY, f64::min));
    }

    let best = (0..=dim).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    NelderMeadResult { x: simplex[best].clone(), fx: values[best], iterations, converged, history }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 10.0 * (x[1] + 2.0).powi(2);
        let r = minimize(f, &[5.0, 5.0], &NelderMeadOptions::default());
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] + 2.0).abs() < 1e-6);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn rosenbrock_within_budget() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let opts = NelderMeadOptions { max_iterations: 5000, ..Default::default() };
        let r = minimize(f, &[-1.2, 1.0], &opts);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn nan_is_treated_as_infinite() {
        let f = |x: &[f64]| if x[0] < 0.0 { f64::NAN } else { (x[0] - 0.5).powi(2) };
        let r = minimize(f, &[0.1], &NelderMeadOptions::default());
        assert!((r.x[0] - 0.5).abs() < 1e-6);
    }
}
