//! Preconditioned limited-memory BFGS with backtracking line search.

use std::collections::VecDeque;


#[derive(Clone, Copy, Debug)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iters: usize,
    /// Stop once `norm(grad) <= grad_tol`.
    pub grad_tol: f64,
    pub armijo: f64,
    /// Rescale the initial inverse Hessian by `s·y / y·P⁻¹y` each iteration.
    pub scale_initial: bool,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 8,
            max_iters: 10_000,
            grad_tol: 1e-9,
            armijo: 1e-4,
            scale_initial: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    pub grad_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Relative size below which a change of the objective is indistinguishable
/// from rounding.
const ROUNDOFF: f64 = 1e-13;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    crate::numeric::dot(a, b)
}

/// Minimizes `f` from `x0`.
///
/// `f(x, g)` returns the value and writes the gradient. `precond`
/// approximates the Hessian; `norm` measures gradients for the stopping test.
pub fn minimize<F, N, P>(x0: Vec<f64>, mut f: F, precond: &P, norm: N, opts: &LbfgsOptions) -> LbfgsOutcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
    N: Fn(&[f64]) -> f64,
    P: Preconditioner + ?Sized,
{
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut evaluations = 1;
    let mut gnorm = norm(&g);

    let mut pairs: VecDeque<Pair> = VecDeque::with_capacity(opts.memory);
    let mut spare: Vec<Pair> = Vec::new();
    let mut dir = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut alpha_buf = vec![0.0; opts.memory];
    let mut iterations = 0;

    while gnorm > opts.grad_tol && iterations < opts.max_iters {
        iterations += 1;
        two_loop(&g, &pairs, precond, opts.scale_initial, &mut alpha_buf, &mut scratch, &mut dir);
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            spare.extend(pairs.drain(..));
            dir.copy_from_slice(&g);
            precond.apply_inverse(&mut dir);
            dir.iter_mut().for_each(|d| *d = -*d);
            slope = dot(&g, &dir);
        }

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            for i in 0..n {
                x_new[i] = x[i] + step * dir[i];
            }
            let f_new = f(&x_new, &mut g_new);
            evaluations += 1;
            let sufficient = f_new <= fx + opts.armijo * step * slope;
            // Near the minimizer the decrease drops below rounding: accept
            // any step that does not measurably raise f and shrinks the gradient.
            let flat = (f_new - fx).abs() <= ROUNDOFF * fx.abs().max(1e-300);
            let ng = if sufficient || flat { norm(&g_new) } else { f64::INFINITY };
            if f_new.is_finite() && (sufficient || (flat && ng < gnorm)) {
                let mut pair = spare.pop().unwrap_or_else(|| Pair {
                    s: vec![0.0; n],
                    y: vec![0.0; n],
                    rho: 0.0,
                });
                let (mut sy, mut ss, mut yy) = (0.0, 0.0, 0.0);
                for i in 0..n {
                    let si = x_new[i] - x[i];
                    let yi = g_new[i] - g[i];
                    pair.s[i] = si;
                    pair.y[i] = yi;
                    sy += si * yi;
                    ss += si * si;
                    yy += yi * yi;
                }
                if sy > 1e-300 && sy > 1e-12 * ss.sqrt() * yy.sqrt() {
                    if pairs.len() == opts.memory {
                        spare.extend(pairs.pop_front());
                    }
                    pair.rho = 1.0 / sy;
                    pairs.push_back(pair);
                } else {
                    spare.push(pair);
                }
                std::mem::swap(&mut x, &mut x_new);
                std::mem::swap(&mut g, &mut g_new);
                fx = f_new;
                gnorm = ng;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            if pairs.is_empty() {
                break;
            }
            // Retry once along the preconditioned gradient.
            spare.extend(pairs.drain(..));
        }
    }

    LbfgsOutcome {
        converged: gnorm <= opts.grad_tol,
        x,
        value: fx,
        grad: g,
        grad_norm: gnorm,
        iterations,
        evaluations,
    }
}

/// Approximate inverse Hessian applied in place.
pub trait Preconditioner {
    fn apply_inverse(&self, v: &mut [f64]);
}

/// Diagonal approximation of the Hessian.
pub struct Diagonal<'a>(pub &'a [f64]);

impl Preconditioner for Diagonal<'_> {
    fn apply_inverse(&self, v: &mut [f64]) {
        v.iter_mut().zip(self.0).for_each(|(x, d)| *x /= d);
    }
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// `dir = −H g` with `H` the L-BFGS inverse Hessian built on `P⁻¹`.
fn two_loop<P: Preconditioner + ?Sized>(
    g: &[f64],
    pairs: &VecDeque<Pair>,
    precond: &P,
    scale: bool,
    alpha: &mut [f64],
    scratch: &mut [f64],
    dir: &mut [f64],
) {
    dir.copy_from_slice(g);
    for (j, p) in pairs.iter().enumerate().rev() {
        let a = p.rho * dot(&p.s, dir);
        alpha[j] = a;
        dir.iter_mut().zip(&p.y).for_each(|(d, yi)| *d -= a * yi);
    }
    let gamma = match pairs.back() {
        Some(p) if scale => {
            scratch.copy_from_slice(&p.y);
            precond.apply_inverse(scratch);
            1.0 / (p.rho * dot(&p.y, scratch))
        }
        _ => 1.0,
    };
    precond.apply_inverse(dir);
    if gamma != 1.0 {
        dir.iter_mut().for_each(|d| *d *= gamma);
    }
    for (j, p) in pairs.iter().enumerate() {
        let b = p.rho * dot(&p.y, dir);
        let a = alpha[j];
        dir.iter_mut().zip(&p.s).for_each(|(d, si)| *d += (a - b) * si);
    }
    dir.iter_mut().for_each(|d| *d = -*d);
}
