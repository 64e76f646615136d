//! Projected L-BFGS for simple bounds.
//!
//! Each iteration builds a quasi-Newton direction from the free variables
//! (those not pinned at an active bound), backtracks along the projected
//! path until the Armijo condition holds and stores the curvature pair when
//! it is sufficiently positive.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::RetrievalConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub xtol_rel: f64,
    pub max_iterations: usize,
    pub lower: f64,
    pub upper: Option<f64>,
    /// Armijo sufficient-decrease constant.
    pub c1: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            xtol_rel: 1e-6,
            max_iterations: 500,
            lower: 0.0,
            upper: None,
            c1: 1e-4,
            max_backtracks: 60,
        }
    }
}

impl LbfgsOptions {
    pub fn from_config(config: &RetrievalConfig) -> Self {
        Self {
            memory: config.lbfgs_memory,
            xtol_rel: config.xtol_rel,
            max_iterations: config.max_iterations,
            lower: config.lower_bound,
            upper: config.upper_bound,
            ..Self::default()
        }
    }

    fn project(&self, v: f64) -> f64 {
        let v = v.max(self.lower);
        match self.upper {
            Some(u) => v.min(u),
            None => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Largest relative parameter change fell below `xtol_rel`.
    ParameterTolerance,
    MaxIterations,
    /// Projected gradient vanished.
    Stationary,
    /// No step along steepest descent satisfied the Armijo condition.
    LineSearchStalled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub objective: f64,
}

/// Objective history of one minimization. Entry 0 is the starting point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub iterations: Vec<TraceEntry>,
    pub termination: Option<Termination>,
    pub evaluations: usize,
    /// Retrieval settings echoed by the caller, if any.
    #[serde(default)]
    pub config: Option<RetrievalConfig>,
}

impl Trace {
    fn new() -> Self {
        Self {
            iterations: Vec::new(),
            termination: None,
            evaluations: 0,
            config: None,
        }
    }

    pub fn initial_objective(&self) -> Option<f64> {
        self.iterations.first().map(|e| e.objective)
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.iterations.last().map(|e| e.objective)
    }

    /// `iteration,objective` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,objective\n");
        for e in &self.iterations {
            out.push_str(&format!("{},{:e}\n", e.iteration, e.objective));
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// `-H g` by the two-loop recursion, `H` scaled by the newest pair.
fn two_loop(history: &VecDeque<Pair>, grad: &[f64]) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for p in history.iter().rev() {
        let a = p.rho * dot(&p.s, &q);
        q.iter_mut().zip(&p.y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some(last) = history.back() {
        let scale = dot(&last.s, &last.y) / dot(&last.y, &last.y);
        q.iter_mut().for_each(|v| *v *= scale);
    }
    for (p, a) in history.iter().zip(alphas.iter().rev()) {
        let b = p.rho * dot(&p.y, &q);
        q.iter_mut().zip(&p.s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

fn failure(message: String, trace: Trace) -> Error {
    Error::OptimizationFailure {
        message,
        trace: Box::new(trace),
    }
}

/// Minimize `f` over the box `[lower, upper]` starting from `x0`.
///
/// `eval(x, grad)` returns the objective and writes the gradient.
pub fn lbfgs_minimize<F>(x0: &[f64], mut eval: F, options: &LbfgsOptions) -> Result<(Vec<f64>, Trace)>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut trace = Trace::new();
    let mut x: Vec<f64> = x0.iter().map(|&v| options.project(v)).collect();
    let mut g = vec![0.0; n];
    let mut f = eval(&x, &mut g);
    trace.evaluations += 1;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(failure("non-finite objective or gradient at the starting point".into(), trace));
    }
    trace.iterations.push(TraceEntry {
        iteration: 0,
        objective: f,
    });

    let mut history: VecDeque<Pair> = VecDeque::with_capacity(options.memory);
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];

    for iteration in 1..=options.max_iterations {
        let free: Vec<bool> = x
            .iter()
            .zip(&g)
            .map(|(&xi, &gi)| {
                let at_lower = xi <= options.lower && gi > 0.0;
                let at_upper = options.upper.is_some_and(|u| xi >= u && gi < 0.0);
                !(at_lower || at_upper)
            })
            .collect();
        let gf: Vec<f64> = g.iter().zip(&free).map(|(&gi, &fr)| if fr { gi } else { 0.0 }).collect();
        if gf.iter().all(|&v| v == 0.0) {
            trace.termination = Some(Termination::Stationary);
            return Ok((x, trace));
        }

        let mut accepted = None;
        // one quasi-Newton attempt, then a steepest-descent retry from a cleared memory
        for attempt in 0..2 {
            let mut d = if history.is_empty() {
                gf.iter().map(|v| -v).collect()
            } else {
                two_loop(&history, &gf)
            };
            d.iter_mut().zip(&free).for_each(|(di, &fr)| {
                if !fr {
                    *di = 0.0
                }
            });
            if dot(&d, &gf) >= 0.0 {
                history.clear();
                d = gf.iter().map(|v| -v).collect();
            }
            let mut t = if history.is_empty() { (1.0 / norm(&gf)).min(1.0) } else { 1.0 };
            for _ in 0..options.max_backtracks {
                for i in 0..n {
                    x_new[i] = options.project(x[i] + t * d[i]);
                }
                let decrease: f64 = (0..n).map(|i| g[i] * (x_new[i] - x[i])).sum();
                let f_new = eval(&x_new, &mut g_new);
                trace.evaluations += 1;
                if f_new.is_finite() && f_new <= f + options.c1 * decrease {
                    accepted = Some(f_new);
                    break;
                }
                t *= 0.5;
            }
            if accepted.is_some() || attempt == 1 || history.is_empty() {
                break;
            }
            history.clear();
        }

        let Some(f_new) = accepted else {
            trace.termination = Some(Termination::LineSearchStalled);
            return Ok((x, trace));
        };
        if g_new.iter().any(|v| !v.is_finite()) {
            trace.iterations.push(TraceEntry {
                iteration,
                objective: f_new,
            });
            return Err(failure(format!("non-finite gradient at iteration {iteration}"), trace));
        }

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * norm(&s) * norm(&y) {
            if history.len() == options.memory {
                history.pop_front();
            }
            history.push_back(Pair {
                s: s.clone(),
                y,
                rho: 1.0 / sy,
            });
        }
        let change = s
            .iter()
            .zip(&x_new)
            .map(|(si, xi)| si.abs() / xi.abs().max(1.0))
            .fold(0.0, f64::max);

        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        f = f_new;
        trace.iterations.push(TraceEntry { iteration, objective: f });

        if change < options.xtol_rel {
            trace.termination = Some(Termination::ParameterTolerance);
            return Ok((x, trace));
        }
    }
    trace.termination = Some(Termination::MaxIterations);
    Ok((x, trace))
}
