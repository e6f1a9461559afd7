//! Local AC optimal power flow via the interior point solver.
//!
//! Cartesian voltage formulation: x = [Re v; Im v; pg; qg]. Power
//! balance and current limits are quadratic with constant Hessians (the
//! same Hermitian injection forms the QCQP uses); apparent-power limits
//! add one quartic row per rated branch end. The slack bus angle is
//! pinned to zero; everything else, including all generator outputs, is
//! free within bounds.

use num_complex::Complex64;

use crate::ipm::{self, IpmOptions, Nlp};
use crate::network::{build_admittance, Network};
use crate::powerflow::{evaluate_feasible_point, FlowMode, PfSolution};
use crate::qcqp::{embed, hermitian_split};
use crate::sparse::{Coo, Csr};

fn to_real(m: &Csr<num_complex::Complex<f64>>) -> Csr<f64> {
    let mut out = Coo::new(m.nrows(), m.ncols());
    for (i, j, v) in m.iter() {
        out.push(i, j, v.re);
    }
    out.to_csr()
}

enum FlowRow {
    /// `x' F x <= lim2` (squared current magnitude).
    Current { mat: Csr<f64>, lim2: f64 },
    /// `(x' Mp x)^2 + (x' Mq x)^2 <= rate2` (squared apparent power).
    Apparent { mp: Csr<f64>, mq: Csr<f64>, rate2: f64 },
}

struct AcopfNlp<'a> {
    net: &'a Network<f64>,
    n: usize,
    ng: usize,
    /// Real symmetric 2n x 2n forms: v' P_k v = Re S_k, v' Q_k v = Im S_k.
    p_inj: Vec<Csr<f64>>,
    q_inj: Vec<Csr<f64>>,
    gens_by_bus: Vec<Vec<usize>>,
    /// Finite generator bounds as rows `sign * x[idx] - rhs <= 0`.
    gen_bounds: Vec<(usize, f64, f64)>,
    flows: Vec<FlowRow>,
}

impl<'a> AcopfNlp<'a> {
    fn new(net: &'a Network<f64>, flow_mode: FlowMode) -> Self {
        let n = net.n_bus();
        let ng = net.gens.len();
        let adm = build_admittance(net);

        let mut p_inj = Vec::with_capacity(n);
        let mut q_inj = Vec::with_capacity(n);
        for k in 0..n {
            let (p, q) = hermitian_split(adm.ybus.row(k), n, k);
            p_inj.push(to_real(&embed(&p.to_csr(), n)));
            q_inj.push(to_real(&embed(&q.to_csr(), n)));
        }

        let mut gens_by_bus = vec![Vec::new(); n];
        for (g, gen) in net.gens.iter().enumerate() {
            gens_by_bus[gen.bus].push(g);
        }

        let mut gen_bounds = Vec::new();
        for (g, gen) in net.gens.iter().enumerate() {
            let ip = 2 * n + g;
            let iq = 2 * n + ng + g;
            for (idx, lo, hi) in [(ip, gen.pmin, gen.pmax), (iq, gen.qmin, gen.qmax)] {
                if hi.is_finite() {
                    gen_bounds.push((idx, 1.0, hi));
                }
                if lo.is_finite() {
                    gen_bounds.push((idx, -1.0, -lo));
                }
            }
        }

        let mut flows = Vec::new();
        if flow_mode != FlowMode::None {
            for (br, blk) in net.branches.iter().zip(&adm.branch) {
                if br.rate <= 0.0 {
                    continue;
                }
                for (a, ya, b, yb) in [
                    (br.from, blk.yff, br.to, blk.yft),
                    (br.to, blk.ytf, br.from, blk.ytt),
                ] {
                    match flow_mode {
                        FlowMode::I => {
                            let mut m = Coo::new(n, n);
                            m.push(a, a, ya.conj() * ya);
                            m.push(a, b, ya.conj() * yb);
                            m.push(b, a, yb.conj() * ya);
                            m.push(b, b, yb.conj() * yb);
                            flows.push(FlowRow::Current {
                                mat: to_real(&embed(&m.to_csr(), n)),
                                lim2: br.rate * br.rate,
                            });
                        }
                        FlowMode::S => {
                            // S at end `a` is conj(I) * v_a with
                            // I = ya v_a + yb v_b.
                            let row = [(a, ya), (b, yb)];
                            let (p, q) = hermitian_split(row.into_iter(), n, a);
                            flows.push(FlowRow::Apparent {
                                mp: to_real(&embed(&p.to_csr(), n)),
                                mq: to_real(&embed(&q.to_csr(), n)),
                                rate2: br.rate * br.rate,
                            });
                        }
                        FlowMode::None => unreachable!(),
                    }
                }
            }
        }

        AcopfNlp {
            net,
            n,
            ng,
            p_inj,
            q_inj,
            gens_by_bus,
            gen_bounds,
            flows,
        }
    }

    fn quad(m: &Csr<f64>, xv: &[f64]) -> f64 {
        m.matvec(xv).iter().zip(xv).map(|(y, x)| y * x).sum()
    }
}

impl Nlp for AcopfNlp<'_> {
    fn n_var(&self) -> usize {
        2 * self.n + 2 * self.ng
    }

    fn objective(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.n_var()];
        let mut f = 0.0;
        for (g, gen) in self.net.gens.iter().enumerate() {
            f += gen.cost * x[2 * self.n + g];
            grad[2 * self.n + g] = gen.cost;
        }
        (f, grad)
    }

    fn constraints(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let xv = &x[..2 * n];
        let mut g = Vec::with_capacity(2 * n + 1);
        for k in 0..n {
            let pg: f64 = self.gens_by_bus[k]
                .iter()
                .map(|&gi| x[2 * n + gi])
                .sum();
            g.push(Self::quad(&self.p_inj[k], xv) - pg + self.net.buses[k].pd);
        }
        for k in 0..n {
            let qg: f64 = self.gens_by_bus[k]
                .iter()
                .map(|&gi| x[2 * n + self.ng + gi])
                .sum();
            g.push(Self::quad(&self.q_inj[k], xv) - qg + self.net.buses[k].qd);
        }
        g.push(x[n + self.net.slack]);

        let mut h = Vec::new();
        for (k, b) in self.net.buses.iter().enumerate() {
            let vm2 = xv[k] * xv[k] + xv[n + k] * xv[n + k];
            h.push(vm2 - b.vmax * b.vmax);
        }
        for (k, b) in self.net.buses.iter().enumerate() {
            let vm2 = xv[k] * xv[k] + xv[n + k] * xv[n + k];
            h.push(b.vmin * b.vmin - vm2);
        }
        for &(idx, sign, rhs) in &self.gen_bounds {
            h.push(sign * x[idx] - rhs);
        }
        for row in &self.flows {
            match row {
                FlowRow::Current { mat, lim2 } => h.push(Self::quad(mat, xv) - lim2),
                FlowRow::Apparent { mp, mq, rate2 } => {
                    let p = Self::quad(mp, xv);
                    let q = Self::quad(mq, xv);
                    h.push(p * p + q * q - rate2);
                }
            }
        }
        (g, h)
    }

    fn jacobians(&self, x: &[f64]) -> (Coo<f64>, Coo<f64>) {
        let n = self.n;
        let nx = self.n_var();
        let xv = &x[..2 * n];
        let neq = 2 * n + 1;
        let mut jg = Coo::new(neq, nx);
        for k in 0..n {
            for (c, y) in self.p_inj[k].matvec(xv).iter().enumerate() {
                if *y != 0.0 {
                    jg.push(k, c, 2.0 * y);
                }
            }
            for &gi in &self.gens_by_bus[k] {
                jg.push(k, 2 * n + gi, -1.0);
            }
            for (c, y) in self.q_inj[k].matvec(xv).iter().enumerate() {
                if *y != 0.0 {
                    jg.push(n + k, c, 2.0 * y);
                }
            }
            for &gi in &self.gens_by_bus[k] {
                jg.push(n + k, 2 * n + self.ng + gi, -1.0);
            }
        }
        jg.push(2 * n, n + self.net.slack, 1.0);

        let niq = 2 * n + self.gen_bounds.len() + self.flows.len();
        let mut jh = Coo::new(niq, nx);
        for k in 0..n {
            // vmax row k, vmin row n + k.
            jh.push(k, k, 2.0 * xv[k]);
            jh.push(k, n + k, 2.0 * xv[n + k]);
            jh.push(n + k, k, -2.0 * xv[k]);
            jh.push(n + k, n + k, -2.0 * xv[n + k]);
        }
        let mut r = 2 * n;
        for &(idx, sign, _) in &self.gen_bounds {
            jh.push(r, idx, sign);
            r += 1;
        }
        for row in &self.flows {
            match row {
                FlowRow::Current { mat, .. } => {
                    for (c, y) in mat.matvec(xv).iter().enumerate() {
                        if *y != 0.0 {
                            jh.push(r, c, 2.0 * y);
                        }
                    }
                }
                FlowRow::Apparent { mp, mq, .. } => {
                    let yp = mp.matvec(xv);
                    let yq = mq.matvec(xv);
                    let p = yp.iter().zip(xv).map(|(y, x)| y * x).sum::<f64>();
                    let q = yq.iter().zip(xv).map(|(y, x)| y * x).sum::<f64>();
                    for c in 0..2 * n {
                        let v = 4.0 * (p * yp[c] + q * yq[c]);
                        if v != 0.0 {
                            jh.push(r, c, v);
                        }
                    }
                }
            }
            r += 1;
        }
        (jg, jh)
    }

    fn hessian(&self, x: &[f64], lam: &[f64], mu: &[f64]) -> Coo<f64> {
        let n = self.n;
        let nx = self.n_var();
        let xv = &x[..2 * n];
        let mut hess = Coo::new(nx, nx);
        for k in 0..n {
            let lp = lam[k];
            if lp != 0.0 {
                for (i, j, v) in self.p_inj[k].iter() {
                    hess.push(i, j, 2.0 * lp * v);
                }
            }
            let lq = lam[n + k];
            if lq != 0.0 {
                for (i, j, v) in self.q_inj[k].iter() {
                    hess.push(i, j, 2.0 * lq * v);
                }
            }
        }
        for k in 0..n {
            // vmax minus vmin multipliers on the diagonal e/f entries.
            let w = 2.0 * (mu[k] - mu[n + k]);
            if w != 0.0 {
                hess.push(k, k, w);
                hess.push(n + k, n + k, w);
            }
        }
        let mut r = 2 * n + self.gen_bounds.len();
        for row in &self.flows {
            let m = mu[r];
            r += 1;
            if m == 0.0 {
                continue;
            }
            match row {
                FlowRow::Current { mat, .. } => {
                    for (i, j, v) in mat.iter() {
                        hess.push(i, j, 2.0 * m * v);
                    }
                }
                FlowRow::Apparent { mp, mq, .. } => {
                    let yp = mp.matvec(xv);
                    let yq = mq.matvec(xv);
                    let p = yp.iter().zip(xv).map(|(y, x)| y * x).sum::<f64>();
                    let q = yq.iter().zip(xv).map(|(y, x)| y * x).sum::<f64>();
                    for (i, j, v) in mp.iter() {
                        hess.push(i, j, 4.0 * m * p * v);
                    }
                    for (i, j, v) in mq.iter() {
                        hess.push(i, j, 4.0 * m * q * v);
                    }
                    let support: Vec<usize> =
                        (0..2 * n).filter(|&c| yp[c] != 0.0 || yq[c] != 0.0).collect();
                    for &i in &support {
                        for &j in &support {
                            hess.push(i, j, 8.0 * m * (yp[i] * yp[j] + yq[i] * yq[j]));
                        }
                    }
                }
            }
        }
        hess
    }
}

/// Improve a converged power flow point by locally minimizing total
/// active generation subject to the full AC-OPF constraint set.
///
/// On solver failure the best feasible iterate is returned with
/// `degraded` set; if the start was feasible and the solver could not
/// improve on it, the start itself is returned.
pub fn local_acopf(
    net: &Network<f64>,
    start: &PfSolution,
    flow_mode: FlowMode,
    opts: &IpmOptions,
) -> PfSolution {
    let n = net.n_bus();
    let ng = net.gens.len();
    let nlp = AcopfNlp::new(net, flow_mode);

    // Rotate the start so the slack angle is exactly zero.
    let rot = Complex64::from_polar(1.0, -start.v[net.slack].arg());
    let mut x0 = vec![0.0; 2 * n + 2 * ng];
    for (k, v) in start.v.iter().enumerate() {
        let vr = v * rot;
        x0[k] = vr.re;
        x0[n + k] = vr.im;
    }
    for g in 0..ng {
        x0[2 * n + g] = start.pg[g];
        x0[2 * n + ng + g] = start.qg[g];
    }

    let sol = ipm::solve(&nlp, &x0, opts);

    let v: Vec<Complex64> = (0..n)
        .map(|k| Complex64::new(sol.x[k], sol.x[n + k]))
        .collect();
    let pg: Vec<f64> = (0..ng).map(|g| sol.x[2 * n + g]).collect();
    let qg: Vec<f64> = (0..ng).map(|g| sol.x[2 * n + ng + g]).collect();
    let objective = net.base_mva * pg.iter().sum::<f64>();

    let result = PfSolution {
        v,
        pg,
        qg,
        converged: sol.converged,
        iterations: sol.iterations,
        max_mismatch: sol.feascond,
        objective,
        diagnostic: (!sol.converged).then(|| sol.message.clone()),
        degraded: sol.degraded,
    };

    // Never hand back something worse than a feasible start.
    let start_feasible = start.converged
        && evaluate_feasible_point(net, start, flow_mode).is_feasible(opts.feastol);
    if start_feasible && result.objective > start.objective + 1e-9 * start.objective.abs() {
        let mut fallback = start.clone();
        fallback.degraded = true;
        fallback.diagnostic = Some(format!(
            "optimizer returned {:.6} MW, worse than the start; keeping the start point ({})",
            result.objective, sol.message
        ));
        return fallback;
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matpower::{parse_case, TWO_BUS};
    use crate::network::build_network;
    use crate::powerflow::{solve_powerflow, Start};

    fn two_bus_net() -> Network<f64> {
        build_network(&parse_case::<f64>(TWO_BUS).unwrap()).unwrap()
    }

    #[test]
    fn improves_on_powerflow_start() {
        let net = two_bus_net();
        let start = solve_powerflow(&net, Start::Flat, 1e-10, 30);
        assert!(start.converged);
        let sol = local_acopf(&net, &start, FlowMode::None, &IpmOptions::default());
        assert!(sol.converged, "{:?}", sol.diagnostic);
        assert!(sol.objective <= start.objective + 1e-6);
        // Minimum generation still covers the 100 MW load plus losses.
        assert!(sol.objective >= 100.0);
        let rep = evaluate_feasible_point(&net, &sol, FlowMode::None);
        assert!(rep.is_feasible(1e-5), "{:?}", rep.entries);
    }

    #[test]
    fn matches_grid_search_oracle() {
        // The only freedom in the 2-bus losses minimization is the slack
        // voltage magnitude; scan it and power-flow each setting.
        let net = two_bus_net();
        let mut best = f64::INFINITY;
        for i in 0..=400 {
            let vm = 0.9 + 0.2 * i as f64 / 400.0;
            let mut n2 = net.clone();
            n2.gens[0].vg = vm;
            let sol = solve_powerflow(&n2, Start::Flat, 1e-12, 30);
            if sol.converged && evaluate_feasible_point(&n2, &sol, FlowMode::None).is_feasible(1e-9)
            {
                best = best.min(sol.objective);
            }
        }
        let start = solve_powerflow(&net, Start::Flat, 1e-12, 30);
        let sol = local_acopf(&net, &start, FlowMode::None, &IpmOptions::default());
        assert!(sol.converged);
        assert!(
            (sol.objective - best).abs() / best < 1e-4,
            "opf {} vs grid oracle {}",
            sol.objective,
            best
        );
    }

    #[test]
    fn flow_mode_ordering() {
        let mut net = two_bus_net();
        // Feasible but nearly binding: |S| at the from end is about
        // 1.09 pu at the power flow solution (reactive flow included).
        net.branches[0].rate = 1.15;
        let start = solve_powerflow(&net, Start::Flat, 1e-10, 30);
        let opts = IpmOptions::default();
        let none = local_acopf(&net, &start, FlowMode::None, &opts);
        let cur = local_acopf(&net, &start, FlowMode::I, &opts);
        let app = local_acopf(&net, &start, FlowMode::S, &opts);
        assert!(none.converged, "none: {:?}", none.diagnostic);
        assert!(cur.converged, "I: {:?}", cur.diagnostic);
        assert!(app.converged, "S: {:?}", app.diagnostic);
        let eps = 1e-4 * none.objective;
        assert!(none.objective <= cur.objective + eps);
        assert!(none.objective <= app.objective + eps);
    }

    #[test]
    fn feasible_start_is_never_made_worse() {
        let net = two_bus_net();
        let start = solve_powerflow(&net, Start::Flat, 1e-10, 30);
        // Absurdly strict iteration budget forces a fallback.
        let opts = IpmOptions {
            max_iter: 1,
            ..IpmOptions::default()
        };
        let sol = local_acopf(&net, &start, FlowMode::None, &opts);
        assert!(sol.objective <= start.objective + 1e-9);
    }
}
