use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{gather, factor_error, Factor, FactorGraph, GraphError, Key, Values};
use crate::factors::{effective_jacobian_step, numeric_jacobian, FactorError, Variable};
use crate::scalar::{lit, to_f64, Real};

const LANDMARK_DIM: usize = 9;

/// What a factor contributes when its geometry is degenerate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegeneratePolicy {
    /// Zero residual and zero Jacobian for that linearization.
    Skip,
    /// Abort the solve.
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub initial_lambda: f64,
    pub lambda_factor: f64,
    pub max_lambda: f64,
    pub relative_tolerance: f64,
    pub absolute_tolerance: f64,
    /// Central-difference step, floored at the square root of machine epsilon.
    pub jacobian_step: f64,
    pub degenerate_policy: DegeneratePolicy,
    /// Use the landmark Schur complement rather than a dense solve.
    pub schur: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            initial_lambda: 1e-3,
            lambda_factor: 10.0,
            max_lambda: 1e10,
            relative_tolerance: 1e-6,
            absolute_tolerance: 1e-12,
            jacobian_step: 1e-6,
            degenerate_policy: DegeneratePolicy::Skip,
            schur: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    RelativeTolerance,
    AbsoluteTolerance,
    MaxIterations,
    DampingSaturated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub initial_error: f64,
    pub final_error: f64,
    pub termination: Termination,
    /// Error after every accepted step, starting with the initial error.
    pub error_history: Vec<f64>,
    /// Factors skipped as degenerate at the final linearization.
    pub degenerate_factors: usize,
}

/// Gauss-Newton normal equations `H δ = -g` at a linearization point.
/// Landmark blocks come first, then poses.
#[derive(Debug, Clone)]
pub struct LinearSystem<T: Real> {
    pub hessian: DMatrix<T>,
    pub gradient: DVector<T>,
    pub error: T,
    pub landmark_count: usize,
    pub ordering: Vec<Key>,
    pub degenerate: usize,
}

fn ordering<T: Real>(values: &Values<T>) -> (Vec<Key>, BTreeMap<Key, usize>, usize) {
    let mut keys: Vec<Key> = values.iter().map(|(k, _)| *k).filter(|k| matches!(k, Key::Landmark(_))).collect();
    let landmarks = keys.len();
    keys.extend(values.iter().map(|(k, _)| *k).filter(|k| matches!(k, Key::Pose(_))));
    let mut offsets = BTreeMap::new();
    let mut off = 0;
    for k in &keys {
        offsets.insert(*k, off);
        off += values.get(*k).map(Variable::dim).unwrap_or(0);
    }
    (keys, offsets, landmarks)
}

type Linearized<T> = Option<(DVector<T>, DMatrix<T>)>;

fn linearize_factor<T: Real>(
    f: &dyn Factor<T>,
    values: &Values<T>,
    step: T,
    policy: DegeneratePolicy,
) -> Result<Linearized<T>, GraphError> {
    let vars = gather(values, &f.keys())?;
    let eval = |v: &[Variable<T>]| f.evaluate(v);
    let result = eval(&vars).and_then(|r| numeric_jacobian(eval, &vars, step).map(|j| (r, j)));
    match result {
        Ok((r, mut j)) => {
            f.noise().whiten_jacobian(&mut j);
            Ok(Some((f.noise().whiten(&r), j)))
        }
        Err(FactorError::Geometry(e)) => match policy {
            DegeneratePolicy::Skip => Ok(None),
            DegeneratePolicy::Fail => Err(FactorError::Geometry(e).into()),
        },
        Err(e) => Err(e.into()),
    }
}

/// Builds the whitened normal equations at `values`.
pub fn linearize<T: Real>(
    graph: &FactorGraph<T>,
    values: &Values<T>,
    config: &SolverConfig,
) -> Result<LinearSystem<T>, GraphError> {
    let (keys, offsets, landmark_count) = ordering(values);
    let n: usize = keys.iter().map(|k| values.get(*k).map(Variable::dim).unwrap_or(0)).sum();
    let step: T = effective_jacobian_step(config.jacobian_step);
    let factors = graph.factors();
    let parts: Vec<Result<Linearized<T>, GraphError>> = factors
        .par_iter()
        .map(|f| linearize_factor(*f, values, step, config.degenerate_policy))
        .collect();

    let mut h = DMatrix::<T>::zeros(n, n);
    let mut g = DVector::<T>::zeros(n);
    let mut error = T::zero();
    let mut degenerate = 0;
    for (f, part) in factors.iter().zip(parts) {
        let Some((r, j)) = part? else {
            degenerate += 1;
            continue;
        };
        error += r.norm_squared();
        let fkeys = f.keys();
        let mut cols = Vec::with_capacity(fkeys.len());
        let mut c = 0;
        for k in &fkeys {
            let d = values.get(*k).map(Variable::dim).unwrap_or(0);
            cols.push((offsets[k], c, d));
            c += d;
        }
        for &(oa, ca, da) in &cols {
            let ja = j.columns(ca, da);
            let mut gseg = g.rows_mut(oa, da);
            gseg += ja.transpose() * &r;
            for &(ob, cb, db) in &cols {
                let jb = j.columns(cb, db);
                let mut block = h.view_mut((oa, ob), (da, db));
                block += ja.transpose() * jb;
            }
        }
    }
    Ok(LinearSystem { hessian: h, gradient: g, error, landmark_count, ordering: keys, degenerate })
}

fn damped<T: Real>(system: &LinearSystem<T>, lambda: T) -> DMatrix<T> {
    let mut a = system.hessian.clone();
    let floor: T = lit(1e-6);
    for i in 0..a.nrows() {
        let d = a[(i, i)];
        a[(i, i)] = d + lambda * if d > floor { d } else { floor };
    }
    a
}

/// Solves the damped normal equations. With `schur`, the 9×9 landmark
/// blocks are eliminated first and only the reduced pose system is
/// factorized. Returns `None` when a factorization fails.
pub fn solve_damped<T: Real>(system: &LinearSystem<T>, lambda: T, schur: bool) -> Option<DVector<T>> {
    let a = damped(system, lambda);
    let rhs = -&system.gradient;
    if !schur {
        return a.cholesky().map(|c| c.solve(&rhs));
    }
    let nl = system.landmark_count * LANDMARK_DIM;
    let np = a.nrows() - nl;
    let b = a.view((0, nl), (nl, np));
    let mut s = a.view((nl, nl), (np, np)).into_owned();
    let mut reduced = rhs.rows(nl, np).into_owned();
    let mut inverses = Vec::with_capacity(system.landmark_count);
    for j in 0..system.landmark_count {
        let o = j * LANDMARK_DIM;
        let block: SMatrix<T, 9, 9> = a.fixed_view::<9, 9>(o, o).into_owned();
        let inv = block.cholesky()?.inverse();
        let bj = b.rows(o, LANDMARK_DIM);
        let w = bj.transpose() * inv;
        s -= &w * bj;
        reduced -= &w * rhs.rows(o, LANDMARK_DIM);
        inverses.push(inv);
    }
    let dp = s.cholesky()?.solve(&reduced);
    let mut delta = DVector::<T>::zeros(a.nrows());
    for (j, inv) in inverses.iter().enumerate() {
        let o = j * LANDMARK_DIM;
        let r = rhs.rows(o, LANDMARK_DIM) - b.rows(o, LANDMARK_DIM) * &dp;
        delta.rows_mut(o, LANDMARK_DIM).copy_from(&(inv * r));
    }
    delta.rows_mut(nl, np).copy_from(&dp);
    Some(delta)
}

fn apply<T: Real>(values: &Values<T>, system: &LinearSystem<T>, delta: &DVector<T>) -> Values<T> {
    let mut out = Values::new();
    let mut off = 0;
    for k in &system.ordering {
        let var = values.get(*k).expect("ordering built from values");
        let d = var.dim();
        out.insert(*k, var.retract(delta.rows(off, d).as_slice()));
        off += d;
    }
    out
}

/// Error and number of degenerate factors at `values`.
fn evaluate<T: Real>(graph: &FactorGraph<T>, values: &Values<T>) -> Result<(T, usize), GraphError> {
    let factors = graph.factors();
    let errs: Vec<Result<Option<T>, GraphError>> = factors.par_iter().map(|f| factor_error(*f, values)).collect();
    let mut sum = T::zero();
    let mut degenerate = 0;
    for e in errs {
        match e? {
            Some(v) => sum += v,
            None => degenerate += 1,
        }
    }
    Ok((sum, degenerate))
}

/// Levenberg-Marquardt minimization of the graph error starting at `initial`.
///
/// A step is accepted only if it does not increase the error and does not
/// make additional factors degenerate, so the error sequence is monotone.
pub fn optimize<T: Real>(
    graph: &FactorGraph<T>,
    initial: &Values<T>,
    config: &SolverConfig,
) -> Result<(Values<T>, SolveStats), GraphError> {
    if !(config.lambda_factor > 1.0 && config.initial_lambda > 0.0 && config.max_lambda >= config.initial_lambda) {
        return Err(GraphError::InvalidConfig("invalid damping schedule".into()));
    }
    if config.degenerate_policy == DegeneratePolicy::Fail {
        let (_, d) = evaluate(graph, initial)?;
        if d > 0 {
            return Err(GraphError::DegenerateFactors(d));
        }
    }
    let mut values = initial.clone();
    let mut system = linearize(graph, &values, config)?;
    let (mut error, mut degenerate) = evaluate(graph, &values)?;
    let initial_error = to_f64(error);
    let mut history = vec![initial_error];
    let mut lambda = config.initial_lambda;
    let factor = config.lambda_factor;
    let mut iterations = 0;
    let mut termination = Termination::MaxIterations;

    while iterations < config.max_iterations {
        if to_f64(error) <= config.absolute_tolerance {
            termination = Termination::AbsoluteTolerance;
            break;
        }
        iterations += 1;
        let mut accepted = false;
        let mut solved_once = false;
        while lambda <= config.max_lambda {
            let Some(delta) = solve_damped(&system, lit(lambda), config.schur) else {
                lambda *= factor;
                continue;
            };
            if !delta.iter().all(|d| d.is_finite()) {
                lambda *= factor;
                continue;
            }
            solved_once = true;
            let candidate = apply(&values, &system, &delta);
            let (new_error, new_degenerate) = evaluate(graph, &candidate)?;
            if new_error.is_finite() && new_error <= error && new_degenerate <= degenerate {
                let rel = if error > T::zero() { to_f64((error - new_error) / error) } else { 0.0 };
                values = candidate;
                error = new_error;
                degenerate = new_degenerate;
                history.push(to_f64(error));
                lambda = (lambda / factor).max(1e-12);
                accepted = true;
                if rel < config.relative_tolerance {
                    termination = Termination::RelativeTolerance;
                }
                break;
            }
            lambda *= factor;
        }
        if !accepted {
            if !solved_once {
                return Err(GraphError::SingularSystem);
            }
            termination = Termination::DampingSaturated;
            break;
        }
        log::trace!("lm iteration {iterations}: error {:.6e} lambda {lambda:.1e}", to_f64(error));
        if termination == Termination::RelativeTolerance {
            break;
        }
        system = linearize(graph, &values, config)?;
    }
    let stats = SolveStats {
        iterations,
        initial_error,
        final_error: to_f64(error),
        termination,
        error_history: history,
        degenerate_factors: degenerate,
    };
    Ok((values, stats))
}
