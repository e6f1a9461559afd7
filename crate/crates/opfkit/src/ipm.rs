//! Primal-dual interior point method for sparse nonlinear programs
//!
//!   min f(x)   s.t.  g(x) = 0,  h(x) <= 0
//!
//! following the classic reduced-KKT scheme: slacks z > 0 and
//! multipliers mu > 0 on the inequalities are eliminated from the Newton
//! system, leaving `[[Lxx + Jh' Z^-1 M Jh, Jg'], [Jg, 0]]`, which is
//! factorized with a sparse LU per iteration.

use crate::sparse::{Coo, Csr};

/// Problem callbacks. Jacobians are row-per-constraint.
pub trait Nlp {
    fn n_var(&self) -> usize;
    /// Objective value and gradient.
    fn objective(&self, x: &[f64]) -> (f64, Vec<f64>);
    /// Equality and inequality constraint values.
    fn constraints(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>);
    /// Equality and inequality Jacobians at `x`.
    fn jacobians(&self, x: &[f64]) -> (Coo<f64>, Coo<f64>);
    /// Hessian of the Lagrangian `f + lam' g + mu' h`.
    fn hessian(&self, x: &[f64], lam: &[f64], mu: &[f64]) -> Coo<f64>;
}

#[derive(Debug, Clone)]
pub struct IpmOptions {
    /// Feasibility tolerance on the scaled constraint violation.
    pub feastol: f64,
    /// Gradient (optimality) tolerance.
    pub gradtol: f64,
    /// Complementarity tolerance.
    pub comptol: f64,
    /// Relative cost-change tolerance.
    pub costtol: f64,
    pub max_iter: usize,
    /// Fraction-to-boundary parameter, slightly below 1.
    pub xi: f64,
    /// Centering parameter for the barrier update.
    pub sigma: f64,
    /// Initial slack / multiplier value.
    pub z0: f64,
    /// Step lengths below this abort the solve.
    pub alpha_min: f64,
}

impl Default for IpmOptions {
    fn default() -> Self {
        IpmOptions {
            feastol: 5e-6,
            gradtol: 1e-4,
            comptol: 1e-6,
            costtol: 1e-8,
            max_iter: 150,
            xi: 0.99995,
            sigma: 0.1,
            z0: 1.0,
            alpha_min: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IpmSolution {
    pub x: Vec<f64>,
    pub f: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Set when the returned point is a fallback (best feasible iterate
    /// seen) rather than a converged KKT point.
    pub degraded: bool,
    pub lam: Vec<f64>,
    pub mu: Vec<f64>,
    pub message: String,
    /// Scaled constraint violation at the returned point.
    pub feascond: f64,
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Iterate {
    f: f64,
    df: Vec<f64>,
    g: Vec<f64>,
    h: Vec<f64>,
    jg: Csr<f64>,
    jh: Csr<f64>,
}

fn eval_all(nlp: &dyn Nlp, x: &[f64]) -> Iterate {
    let (f, df) = nlp.objective(x);
    let (g, h) = nlp.constraints(x);
    let (jg, jh) = nlp.jacobians(x);
    Iterate {
        f,
        df,
        g,
        h,
        jg: jg.to_csr(),
        jh: jh.to_csr(),
    }
}

/// `J' v` for a row-per-constraint Jacobian.
fn jt_mul(j: &Csr<f64>, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; j.ncols()];
    for (r, c, val) in j.iter() {
        out[c] += val * v[r];
    }
    out
}

/// Solve the NLP starting from `x0`.
pub fn solve(nlp: &dyn Nlp, x0: &[f64], opt: &IpmOptions) -> IpmSolution {
    let nx = nlp.n_var();
    assert_eq!(x0.len(), nx);
    let mut x = x0.to_vec();
    let mut it = eval_all(nlp, &x);
    let neq = it.g.len();
    let niq = it.h.len();

    let mut gamma = 1.0;
    let mut lam = vec![0.0; neq];
    let mut z: Vec<f64> = it
        .h
        .iter()
        .map(|&hk| if hk < -opt.z0 { -hk } else { opt.z0 })
        .collect();
    let mut mu: Vec<f64> = z
        .iter()
        .map(|&zk| {
            if gamma / zk > opt.z0 {
                gamma / zk
            } else {
                opt.z0
            }
        })
        .collect();

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut track_best = |f: f64, x: &[f64], g: &[f64], h: &[f64], tol: f64| {
        let viol = norm_inf(g).max(h.iter().fold(0.0_f64, |m, &v| m.max(v)));
        if viol <= tol && best.as_ref().map_or(true, |(bf, _)| f < *bf) {
            best = Some((f, x.to_vec()));
        }
    };
    track_best(it.f, &x, &it.g, &it.h, opt.feastol);

    let conds = |it: &Iterate, x: &[f64], z: &[f64], lam: &[f64], mu: &[f64], f0: f64| {
        let lx: Vec<f64> = it
            .df
            .iter()
            .zip(jt_mul(&it.jg, lam))
            .zip(jt_mul(&it.jh, mu))
            .map(|((d, a), b)| d + a + b)
            .collect();
        let maxh = it.h.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let num = if it.h.is_empty() {
            norm_inf(&it.g)
        } else {
            norm_inf(&it.g).max(maxh)
        };
        let feascond = num / (1.0 + norm_inf(x).max(norm_inf(z)));
        let gradcond = norm_inf(&lx) / (1.0 + norm_inf(lam).max(norm_inf(mu)));
        let compcond = dot(z, mu) / (1.0 + norm_inf(x));
        let costcond = (it.f - f0).abs() / (1.0 + f0.abs());
        (lx, feascond, gradcond, compcond, costcond)
    };

    let mut f0 = it.f;
    let (mut lx, mut feascond, gradcond, compcond, costcond) =
        conds(&it, &x, &z, &lam, &mu, f0);
    let mut converged = feascond < opt.feastol
        && gradcond < opt.gradtol
        && compcond < opt.comptol
        && costcond < opt.costtol;
    let mut message = String::new();
    let mut failed = false;
    let mut iterations = 0;

    while !converged && !failed && iterations < opt.max_iter {
        iterations += 1;

        let lxx = nlp.hessian(&x, &lam, &mu);
        // Reduced system: M = Lxx + Jh' Z^-1 diag(mu) Jh,
        // N = Lx + Jh' Z^-1 (diag(mu) h + gamma e).
        let kdim = nx + neq;
        let mut kkt = Coo::new(kdim, kdim);
        for &(i, j, v) in lxx.entries() {
            kkt.push(i, j, v);
        }
        for r in 0..niq {
            let w = mu[r] / z[r];
            let row: Vec<(usize, f64)> = it.jh.row(r).collect();
            for &(c1, v1) in &row {
                for &(c2, v2) in &row {
                    kkt.push(c1, c2, w * v1 * v2);
                }
            }
        }
        for (r, c, v) in it.jg.iter() {
            kkt.push(c, nx + r, v);
            kkt.push(nx + r, c, v);
        }

        let mut n_vec = lx.clone();
        let zinv_term: Vec<f64> = (0..niq)
            .map(|r| (mu[r] * it.h[r] + gamma) / z[r])
            .collect();
        let jh_term = jt_mul(&it.jh, &zinv_term);
        for i in 0..nx {
            n_vec[i] += jh_term[i];
        }

        let rhs: Vec<f64> = n_vec
            .iter()
            .map(|v| -v)
            .chain(it.g.iter().map(|v| -v))
            .collect();
        let step = match solve_sparse(&kkt, &rhs) {
            Ok(s) => s,
            Err(e) => {
                message = format!("KKT solve failed at iteration {iterations}: {e}");
                break;
            }
        };
        if step.iter().any(|v| !v.is_finite()) {
            message = format!("non-finite step at iteration {iterations}");
            break;
        }
        let dx = &step[..nx];
        let dlam = &step[nx..];

        let jh_dx = it.jh.matvec(dx);
        let dz: Vec<f64> = (0..niq).map(|r| -it.h[r] - z[r] - jh_dx[r]).collect();
        let dmu: Vec<f64> = (0..niq)
            .map(|r| -mu[r] + (gamma - mu[r] * dz[r]) / z[r])
            .collect();

        let alphap = step_length(&z, &dz, opt.xi);
        let alphad = step_length(&mu, &dmu, opt.xi);
        for i in 0..nx {
            x[i] += alphap * dx[i];
        }
        for r in 0..niq {
            z[r] += alphap * dz[r];
            mu[r] += alphad * dmu[r];
        }
        for r in 0..neq {
            lam[r] += alphad * dlam[r];
        }
        if niq > 0 {
            gamma = opt.sigma * dot(&z, &mu) / niq as f64;
        }

        it = eval_all(nlp, &x);
        track_best(it.f, &x, &it.g, &it.h, opt.feastol);
        let (lx2, fc, gc, cc, costc) = conds(&it, &x, &z, &lam, &mu, f0);
        lx = lx2;
        feascond = fc;
        if fc < opt.feastol && gc < opt.gradtol && cc < opt.comptol && costc < opt.costtol {
            converged = true;
            message = format!("converged in {iterations} iterations");
        } else if x.iter().any(|v| !v.is_finite())
            || alphap < opt.alpha_min
            || alphad < opt.alpha_min
            || gamma < f64::EPSILON
            || gamma > 1.0 / f64::EPSILON
        {
            failed = true;
            message = format!(
                "numerical failure at iteration {iterations} (alphap {alphap:.2e}, alphad {alphad:.2e}, gamma {gamma:.2e})"
            );
        } else {
            f0 = it.f;
        }
    }
    if !converged && message.is_empty() {
        message = format!("iteration limit {} reached", opt.max_iter);
    }

    if converged {
        IpmSolution {
            x,
            f: it.f,
            converged: true,
            iterations,
            degraded: false,
            lam,
            mu,
            message,
            feascond,
        }
    } else if let Some((bf, bx)) = best {
        // Fall back to the best feasible iterate seen.
        IpmSolution {
            x: bx,
            f: bf,
            converged: false,
            iterations,
            degraded: true,
            lam,
            mu,
            message: format!("{message}; returning best feasible iterate"),
            feascond,
        }
    } else {
        IpmSolution {
            x,
            f: it.f,
            converged: false,
            iterations,
            degraded: true,
            lam,
            mu,
            message,
            feascond,
        }
    }
}

fn step_length(v: &[f64], dv: &[f64], xi: f64) -> f64 {
    let mut alpha = 1.0_f64;
    for (vi, di) in v.iter().zip(dv) {
        if *di < 0.0 {
            alpha = alpha.min(xi * (vi / -di));
        }
    }
    alpha
}

fn solve_sparse(a: &Coo<f64>, rhs: &[f64]) -> Result<Vec<f64>, String> {
    let csr = a.to_csr();
    let m = csr.to_faer().map_err(|e| e.to_string())?;
    let lu = m.sp_lu().map_err(|e| format!("{e:?}"))?;
    let b = faer::Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
    let sol = faer::linalg::solvers::Solve::solve(&lu, &b);
    Ok((0..rhs.len()).map(|i| sol[(i, 0)]).collect())
}
