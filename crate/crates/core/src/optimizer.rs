//! Nelder-Mead simplex minimizer with deterministic multi-start.

use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    pub max_iterations: usize,
    pub x_tolerance: f64,
    pub f_tolerance: f64,
    /// Per-dimension offset of the initial simplex vertices. A single value
    /// is broadcast to every dimension.
    pub initial_simplex_scale: Vec<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            max_iterations: 2000,
            x_tolerance: 1e-10,
            f_tolerance: 1e-14,
            initial_simplex_scale: vec![0.05],
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.reflection > 0.0
            && self.expansion > 1.0
            && self.contraction > 0.0
            && self.contraction < 1.0
            && self.shrink > 0.0
            && self.shrink < 1.0
            && self.x_tolerance > 0.0
            && self.f_tolerance > 0.0
            && !self.initial_simplex_scale.is_empty()
            && self.initial_simplex_scale.iter().all(|s| s.is_finite() && *s != 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid optimizer configuration: {self:?}")))
        }
    }

    fn step(&self, dim: usize) -> f64 {
        match self.initial_simplex_scale.as_slice() {
            [s] => *s,
            steps => steps[dim],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub x_min: Vec<f64>,
    pub f_min: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Minimize `objective` from `start`.
pub fn nelder_mead<F>(objective: F, start: &[f64], config: &OptimizerConfig) -> Result<OptimizationResult>
where
    F: Fn(&[f64]) -> f64,
{
    nelder_mead_observed(objective, start, config, |_, _, _| {})
}

/// As [`nelder_mead`], calling `observe(iteration, best_x, best_f)` once per
/// iteration before the convergence test.
pub fn nelder_mead_observed<F, O>(
    objective: F,
    start: &[f64],
    config: &OptimizerConfig,
    mut observe: O,
) -> Result<OptimizationResult>
where
    F: Fn(&[f64]) -> f64,
    O: FnMut(usize, &[f64], f64),
{
    config.validate()?;
    let n = start.len();
    if n == 0 {
        return Err(Error::InvalidInput("empty start vector".into()));
    }
    if config.initial_simplex_scale.len() != 1 && config.initial_simplex_scale.len() != n {
        return Err(Error::Config(format!(
            "initial simplex scale has {} entries for {n} dimensions",
            config.initial_simplex_scale.len()
        )));
    }

    let mut evaluations = 0usize;
    let mut eval = |x: &[f64]| -> Result<f64> {
        evaluations += 1;
        let f = objective(x);
        if f.is_finite() {
            Ok(f)
        } else {
            Err(Error::NonFiniteObjective)
        }
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(start.to_vec());
    for d in 0..n {
        let mut v = start.to_vec();
        v[d] += config.step(d);
        simplex.push(v);
    }
    let mut values = simplex.iter().map(|v| eval(v)).collect::<Result<Vec<_>>>()?;

    let mut order: Vec<usize> = (0..=n).collect();
    let mut iterations = 0;
    let mut converged = false;
    let mut centroid = vec![0.0; n];
    let mut trial = vec![0.0; n];

    loop {
        // Stable sort keeps ties in vertex order, so runs are reproducible.
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n - 1];
        observe(iterations, &simplex[best], values[best]);

        let f_spread = order.iter().map(|&i| (values[i] - values[best]).abs()).fold(0.0, f64::max);
        let diameter = order
            .iter()
            .flat_map(|&i| simplex[i].iter().zip(&simplex[best]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if diameter <= config.x_tolerance && f_spread <= config.f_tolerance {
            converged = true;
            break;
        }
        if iterations >= config.max_iterations {
            break;
        }
        iterations += 1;

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for &i in &order[..n] {
            for (c, x) in centroid.iter_mut().zip(&simplex[i]) {
                *c += x;
            }
        }
        centroid.iter_mut().for_each(|c| *c /= n as f64);

        let along = |t: &mut Vec<f64>, coef: f64, from: &[f64]| {
            for ((ti, ci), fi) in t.iter_mut().zip(&centroid).zip(from) {
                *ti = ci + coef * (ci - fi);
            }
        };

        along(&mut trial, config.reflection, &simplex[worst]);
        let f_reflect = eval(&trial)?;
        let reflected = trial.clone();

        if f_reflect < values[best] {
            along(&mut trial, config.reflection * config.expansion, &simplex[worst]);
            let f_expand = eval(&trial)?;
            if f_expand < f_reflect {
                simplex[worst].copy_from_slice(&trial);
                values[worst] = f_expand;
            } else {
                simplex[worst] = reflected;
                values[worst] = f_reflect;
            }
            continue;
        }
        if f_reflect < values[second_worst] {
            simplex[worst] = reflected;
            values[worst] = f_reflect;
            continue;
        }

        let contracted = if f_reflect < values[worst] {
            along(&mut trial, config.reflection * config.contraction, &simplex[worst]);
            let f_c = eval(&trial)?;
            (f_c <= f_reflect).then_some(f_c)
        } else {
            along(&mut trial, -config.contraction, &simplex[worst]);
            let f_c = eval(&trial)?;
            (f_c < values[worst]).then_some(f_c)
        };
        if let Some(f_c) = contracted {
            simplex[worst].copy_from_slice(&trial);
            values[worst] = f_c;
            continue;
        }

        let anchor = simplex[best].clone();
        for &i in &order[1..] {
            for (x, a) in simplex[i].iter_mut().zip(&anchor) {
                *x = a + config.shrink * (*x - a);
            }
            values[i] = eval(&simplex[i])?;
        }
    }

    let best = order[0];
    Ok(OptimizationResult {
        x_min: simplex[best].clone(),
        f_min: values[best],
        iterations,
        evaluations,
        converged,
    })
}

/// Run [`nelder_mead`] from every start and keep the lowest minimum. Ties
/// go to the lowest start index. Fails only if every start fails.
pub fn multi_start<F>(objective: F, starts: &[Vec<f64>], config: &OptimizerConfig) -> Result<OptimizationResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if starts.is_empty() {
        return Err(Error::InvalidInput("multi-start needs at least one start".into()));
    }
    let results: Vec<Result<OptimizationResult>> = starts
        .par_iter()
        .map(|s| nelder_mead(&objective, s, config))
        .collect();

    let mut best: Option<OptimizationResult> = None;
    let mut first_err = None;
    for r in results {
        match r {
            Ok(r) => {
                if best.as_ref().is_none_or(|b| r.f_min < b.f_min) {
                    best = Some(r);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    match (best, first_err) {
        (Some(b), _) => Ok(b),
        (None, Some(e)) => Err(e),
        (None, None) => unreachable!(),
    }
}
