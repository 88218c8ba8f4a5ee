//! Small dense semidefinite programs.
//!
//! Solves
//!
//! ```text
//! minimize    Tr(W0 G)
//! subject to  Tr(A_i G) =  b_i
//!             Tr(C_j G) <= d_j
//!             G >= 0
//! ```
//!
//! with an infeasible-start primal-dual path-following method using the HKM
//! search direction and Mehrotra predictor-corrector steps. Inequalities get a
//! nonnegative slack each; the slacks form a diagonal block next to `G`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::NumericsError;

const FRACTION_TO_BOUNDARY: f64 = 0.99;
const SYMMETRY_TOL: f64 = 1e-12;

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITER: usize = 200;

/// Symmetric matrix stored as its nonzero entries, both triangles included.
#[derive(Debug, Clone)]
struct SparseSym {
    entries: Vec<(usize, usize, f64)>,
}

impl SparseSym {
    fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut entries = Vec::new();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                let v = m[(i, j)];
                if v != 0.0 {
                    entries.push((i, j, v));
                }
            }
        }
        Self { entries }
    }

    fn dot(&self, x: &DMatrix<f64>) -> f64 {
        self.entries.iter().map(|&(i, j, v)| v * x[(i, j)]).sum()
    }

    fn add_scaled_to(&self, out: &mut DMatrix<f64>, scale: f64) {
        for &(i, j, v) in &self.entries {
            out[(i, j)] += scale * v;
        }
    }
}

#[derive(Debug, Clone)]
pub struct SdpProblem {
    dim: usize,
    objective: DMatrix<f64>,
    equalities: Vec<(DMatrix<f64>, f64)>,
    inequalities: Vec<(DMatrix<f64>, f64)>,
}

fn symmetrized(which: String, m: DMatrix<f64>, dim: usize) -> Result<DMatrix<f64>, NumericsError> {
    if m.nrows() != dim || m.ncols() != dim {
        return Err(NumericsError::DimensionMismatch {
            expected: dim * dim,
            found: m.nrows() * m.ncols(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(NumericsError::NonFinite);
    }
    let scale = m.amax();
    let asym = (&m - m.transpose()).amax();
    if scale > 0.0 && asym > SYMMETRY_TOL * scale {
        return Err(NumericsError::Asymmetric {
            which,
            asymmetry: asym / scale,
        });
    }
    Ok((&m + m.transpose()) * 0.5)
}

impl SdpProblem {
    /// Validates dimensions and symmetry, then stores `(A + A^T) / 2` for every matrix.
    pub fn new(
        objective: DMatrix<f64>,
        equalities: Vec<(DMatrix<f64>, f64)>,
        inequalities: Vec<(DMatrix<f64>, f64)>,
    ) -> Result<Self, NumericsError> {
        let dim = objective.nrows();
        let objective = symmetrized("objective".into(), objective, dim)?;
        let equalities = equalities
            .into_iter()
            .enumerate()
            .map(|(i, (a, b))| Ok((symmetrized(format!("equality {i}"), a, dim)?, b)))
            .collect::<Result<Vec<_>, NumericsError>>()?;
        let inequalities = inequalities
            .into_iter()
            .enumerate()
            .map(|(i, (c, d))| Ok((symmetrized(format!("inequality {i}"), c, dim)?, d)))
            .collect::<Result<Vec<_>, NumericsError>>()?;
        Ok(Self {
            dim,
            objective,
            equalities,
            inequalities,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn objective(&self) -> &DMatrix<f64> {
        &self.objective
    }

    pub fn equalities(&self) -> &[(DMatrix<f64>, f64)] {
        &self.equalities
    }

    pub fn inequalities(&self) -> &[(DMatrix<f64>, f64)] {
        &self.inequalities
    }

    /// Largest violation of the trace constraints at `g` (inequalities count only when exceeded).
    pub fn max_violation(&self, g: &DMatrix<f64>) -> f64 {
        let eq = self
            .equalities
            .iter()
            .map(|(a, b)| (a.dot(g) - b).abs())
            .fold(0.0, f64::max);
        let ineq = self
            .inequalities
            .iter()
            .map(|(c, d)| (c.dot(g) - d).max(0.0))
            .fold(0.0, f64::max);
        eq.max(ineq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

/// Per-iteration diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct SdpIterate {
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub mu: f64,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub g: DMatrix<f64>,
    /// Multipliers: equalities first, then inequalities (nonpositive at optimum).
    pub y: DVector<f64>,
    pub objective_value: f64,
    pub dual_objective: f64,
    pub status: SdpStatus,
    pub duality_gap: f64,
    pub max_constraint_violation: f64,
    pub iterations: usize,
    pub history: Vec<SdpIterate>,
}

struct Constraint {
    mat: SparseSym,
    slack: Option<usize>,
    rhs: f64,
}

struct Iterate {
    x: DMatrix<f64>,
    xs: DVector<f64>,
    y: DVector<f64>,
    z: DMatrix<f64>,
    zs: DVector<f64>,
}

struct Direction {
    dx: DMatrix<f64>,
    dxs: DVector<f64>,
    dy: DVector<f64>,
    dz: DMatrix<f64>,
    dzs: DVector<f64>,
}

fn sym(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn frob_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.dot(b)
}

/// Largest `alpha` with `x + alpha dx` positive semidefinite (`f64::INFINITY` if unbounded).
fn max_step_psd(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> f64 {
    let Some(chol) = x.clone().cholesky() else {
        return 0.0;
    };
    let l = chol.l();
    let Some(linv) = l.clone().try_inverse() else {
        return 0.0;
    };
    let w = sym(&linv * dx * linv.transpose());
    let lmin = SymmetricEigen::new(w).eigenvalues.min();
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

fn max_step_orthant(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    x.iter()
        .zip(dx.iter())
        .filter(|(_, &d)| d < 0.0)
        .map(|(&v, &d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

fn step_length(max_step: f64) -> f64 {
    (FRACTION_TO_BOUNDARY * max_step).min(1.0)
}

struct Solver<'a> {
    problem: &'a SdpProblem,
    cons: Vec<Constraint>,
    n: usize,
    p: usize,
}

impl<'a> Solver<'a> {
    fn new(problem: &'a SdpProblem) -> Self {
        let mut cons = Vec::new();
        for (a, b) in &problem.equalities {
            cons.push(Constraint {
                mat: SparseSym::from_dense(a),
                slack: None,
                rhs: *b,
            });
        }
        for (j, (c, d)) in problem.inequalities.iter().enumerate() {
            cons.push(Constraint {
                mat: SparseSym::from_dense(c),
                slack: Some(j),
                rhs: *d,
            });
        }
        Self {
            problem,
            cons,
            n: problem.dim,
            p: problem.inequalities.len(),
        }
    }

    fn apply(&self, x: &DMatrix<f64>, xs: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.cons.len(),
            self.cons
                .iter()
                .map(|c| c.mat.dot(x) + c.slack.map_or(0.0, |j| xs[j])),
        )
    }

    /// `sum_i y_i A_i` for the matrix block and the slack block.
    fn adjoint(&self, y: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
        let mut m = DMatrix::zeros(self.n, self.n);
        let mut s = DVector::zeros(self.p);
        for (c, &yi) in self.cons.iter().zip(y.iter()) {
            c.mat.add_scaled_to(&mut m, yi);
            if let Some(j) = c.slack {
                s[j] += yi;
            }
        }
        (m, s)
    }

    fn rhs(&self) -> DVector<f64> {
        DVector::from_iterator(self.cons.len(), self.cons.iter().map(|c| c.rhs))
    }

    /// Schur complement `M_ij = Tr(A_i X A_j Z^-1) + slack terms`.
    fn schur(&self, it: &Iterate, zinv: &DMatrix<f64>) -> DMatrix<f64> {
        let m = self.cons.len();
        let n = self.n;
        let mut schur = DMatrix::zeros(m, m);
        for (j, cj) in self.cons.iter().enumerate() {
            // T = X A_j Z^-1, accumulated from the sparse entries of A_j.
            let mut t = DMatrix::<f64>::zeros(n, n);
            for &(c, d, beta) in &cj.mat.entries {
                for r in 0..n {
                    let f = beta * it.x[(r, c)];
                    if f != 0.0 {
                        for col in 0..n {
                            t[(r, col)] += f * zinv[(d, col)];
                        }
                    }
                }
            }
            for (i, ci) in self.cons.iter().enumerate() {
                let mut v: f64 = ci.mat.entries.iter().map(|&(a, b, alpha)| alpha * t[(b, a)]).sum();
                if let (Some(si), Some(sj)) = (ci.slack, cj.slack) {
                    if si == sj {
                        v += it.xs[si] / it.zs[si];
                    }
                }
                schur[(i, j)] = v;
            }
        }
        sym(schur)
    }

    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        it: &Iterate,
        zinv: &DMatrix<f64>,
        factor: &SchurFactor,
        rp: &DVector<f64>,
        rd: &DMatrix<f64>,
        rds: &DVector<f64>,
        rc: &DMatrix<f64>,
        rcs: &DVector<f64>,
    ) -> Direction {
        // Psi = Rc Z^-1 - X - X Rd Z^-1
        let psi = rc * zinv - &it.x - &it.x * rd * zinv;
        let psis = DVector::from_fn(self.p, |j, _| {
            rcs[j] / it.zs[j] - it.xs[j] - it.xs[j] * rds[j] / it.zs[j]
        });
        let rhs = DVector::from_iterator(
            self.cons.len(),
            self.cons.iter().enumerate().map(|(i, c)| {
                rp[i] - c.mat.dot(&psi) - c.slack.map_or(0.0, |j| psis[j])
            }),
        );
        let dy = factor.solve(&rhs);
        let (aty, atys) = self.adjoint(&dy);
        let dz = rd - aty;
        let dzs = rds - atys;
        let dx = sym(rc * zinv - &it.x - &it.x * &dz * zinv);
        let dxs = DVector::from_fn(self.p, |j, _| {
            rcs[j] / it.zs[j] - it.xs[j] - it.xs[j] * dzs[j] / it.zs[j]
        });
        Direction {
            dx,
            dxs,
            dy,
            dz,
            dzs,
        }
    }

    fn step_lengths(&self, it: &Iterate, d: &Direction) -> (f64, f64) {
        let ap = max_step_psd(&it.x, &d.dx).min(max_step_orthant(&it.xs, &d.dxs));
        let ad = max_step_psd(&it.z, &d.dz).min(max_step_orthant(&it.zs, &d.dzs));
        (step_length(ap), step_length(ad))
    }

    fn solve(&self, tol: f64, max_iter: usize) -> SdpSolution {
        let n = self.n;
        let p = self.p;
        let b = self.rhs();
        let c = &self.problem.objective;
        let rho = 1.0
            + self
                .problem
                .equalities
                .iter()
                .map(|(_, b)| b.abs())
                .fold(0.0, f64::max)
            + self
                .problem
                .inequalities
                .iter()
                .map(|(_, d)| d.abs())
                .fold(0.0, f64::max);
        let rho_d = 1.0 + c.amax();
        let mut it = Iterate {
            x: DMatrix::identity(n, n) * rho,
            xs: DVector::from_element(p, rho),
            y: DVector::zeros(self.cons.len()),
            z: DMatrix::identity(n, n) * rho_d,
            zs: DVector::from_element(p, rho_d),
        };
        let order = (n + p) as f64;
        let mut history = Vec::new();
        let mut status = SdpStatus::MaxIter;
        let mut iterations = 0;

        for iter in 0..=max_iter {
            iterations = iter;
            let rp = &b - self.apply(&it.x, &it.xs);
            let (aty, atys) = self.adjoint(&it.y);
            let rd = c - aty - &it.z;
            let rds = -atys - &it.zs;
            let pobj = frob_dot(c, &it.x);
            let dobj = b.dot(&it.y);
            let pinf = rp.amax();
            let dinf = rd.amax().max(rds.amax());
            let compl = frob_dot(&it.x, &it.z) + it.xs.dot(&it.zs);
            let mu = compl / order;
            history.push(SdpIterate {
                primal_objective: pobj,
                dual_objective: dobj,
                primal_infeasibility: pinf,
                dual_infeasibility: dinf,
                mu,
            });
            log::trace!(
                "sdp iter {iter}: pobj {pobj:.9e} dobj {dobj:.9e} pinf {pinf:.2e} dinf {dinf:.2e} mu {mu:.2e}"
            );
            if pinf <= tol && dinf <= tol && compl <= tol && (pobj - dobj).abs() <= tol {
                status = SdpStatus::Optimal;
                break;
            }
            if dobj > 1.0 / tol && pinf > tol {
                status = SdpStatus::Infeasible;
                break;
            }
            if iter == max_iter {
                break;
            }

            let Some(zchol) = it.z.clone().cholesky() else {
                log::debug!("sdp: dual iterate lost definiteness at iteration {iter}");
                break;
            };
            let zinv = sym(zchol.inverse());
            let Some(factor) = SchurFactor::new(self.schur(&it, &zinv)) else {
                log::debug!("sdp: singular Schur complement at iteration {iter}");
                break;
            };

            let zero_n = DMatrix::zeros(n, n);
            let zero_p = DVector::zeros(p);
            let aff = self.direction(&it, &zinv, &factor, &rp, &rd, &rds, &zero_n, &zero_p);
            let (ap, ad) = self.step_lengths(&it, &aff);
            let mu_aff = (frob_dot(&(&it.x + &aff.dx * ap), &(&it.z + &aff.dz * ad))
                + (&it.xs + &aff.dxs * ap).dot(&(&it.zs + &aff.dzs * ad)))
                / order;
            let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

            let rc = DMatrix::identity(n, n) * (sigma * mu) - &aff.dx * &aff.dz;
            let rcs = DVector::from_fn(p, |j, _| sigma * mu - aff.dxs[j] * aff.dzs[j]);
            let dir = self.direction(&it, &zinv, &factor, &rp, &rd, &rds, &rc, &rcs);
            let (ap, ad) = self.step_lengths(&it, &dir);

            it.x = sym(&it.x + &dir.dx * ap);
            it.xs += &dir.dxs * ap;
            it.y += &dir.dy * ad;
            it.z = sym(&it.z + &dir.dz * ad);
            it.zs += &dir.dzs * ad;
        }

        let last = history.last().copied().expect("at least one iterate");
        SdpSolution {
            max_constraint_violation: self.problem.max_violation(&it.x),
            objective_value: last.primal_objective,
            dual_objective: last.dual_objective,
            duality_gap: (last.primal_objective - last.dual_objective).abs(),
            g: it.x,
            y: it.y,
            status,
            iterations,
            history,
        }
    }
}

enum SchurFactor {
    Cholesky(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl SchurFactor {
    fn new(m: DMatrix<f64>) -> Option<Self> {
        if let Some(ch) = m.clone().cholesky() {
            return Some(Self::Cholesky(ch));
        }
        let lu = m.lu();
        if lu.is_invertible() {
            Some(Self::Lu(lu))
        } else {
            None
        }
    }

    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Cholesky(ch) => ch.solve(rhs),
            Self::Lu(lu) => lu.solve(rhs).unwrap_or_else(|| DVector::zeros(rhs.len())),
        }
    }
}

/// Runs the interior-point method. Never fails: the status carries the outcome.
pub fn solve_sdp(problem: &SdpProblem, tol: f64, max_iter: usize) -> SdpSolution {
    Solver::new(problem).solve(tol, max_iter)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace_one(n: usize) -> (DMatrix<f64>, f64) {
        (DMatrix::identity(n, n), 1.0)
    }

    #[test]
    fn diagonal_eigenvalue_problem() {
        let c = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        let prob = SdpProblem::new(c, vec![trace_one(2)], vec![]).unwrap();
        let sol = solve_sdp(&prob, DEFAULT_TOL, DEFAULT_MAX_ITER);
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.objective_value - 1.0).abs() < 1e-6);
        assert!((sol.g[(0, 0)] - 1.0).abs() < 1e-6);
        assert!(sol.g[(1, 1)].abs() < 1e-6);
        assert!(sol.duality_gap <= 1e-7);
    }

    #[test]
    fn off_diagonal_minimum_eigenvalue() {
        let c = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let prob = SdpProblem::new(c, vec![trace_one(2)], vec![]).unwrap();
        let sol = solve_sdp(&prob, DEFAULT_TOL, DEFAULT_MAX_ITER);
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.objective_value + 1.0).abs() < 1e-6);
        assert!(sol.max_constraint_violation <= DEFAULT_TOL);
    }

    #[test]
    fn inequality_constraints_are_honoured() {
        // min -G11 s.t. G11 <= 0.25, Tr(G) = 1.
        let c = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 0.0]));
        let cap = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
        let prob = SdpProblem::new(c, vec![trace_one(2)], vec![(cap, 0.25)]).unwrap();
        let sol = solve_sdp(&prob, DEFAULT_TOL, DEFAULT_MAX_ITER);
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.objective_value + 0.25).abs() < 1e-6);
        assert!(sol.y[1] <= 1e-9);
    }

    #[test]
    fn conflicting_constraints_are_infeasible() {
        // Tr(G) = 1 and Tr(G) <= -1 cannot both hold.
        let c = DMatrix::identity(2, 2);
        let prob = SdpProblem::new(
            c,
            vec![trace_one(2)],
            vec![(DMatrix::identity(2, 2), -1.0)],
        )
        .unwrap();
        let sol = solve_sdp(&prob, DEFAULT_TOL, DEFAULT_MAX_ITER);
        assert_eq!(sol.status, SdpStatus::Infeasible);
    }

    #[test]
    fn asymmetric_input_is_rejected() {
        let c = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.5, 0.0]);
        assert!(matches!(
            SdpProblem::new(c, vec![], vec![]),
            Err(NumericsError::Asymmetric { .. })
        ));
    }

    #[test]
    fn tiny_asymmetry_is_symmetrized() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0 + 1e-14, 1.0]);
        let prob = SdpProblem::new(c, vec![], vec![]).unwrap();
        assert_eq!(prob.objective()[(0, 1)], prob.objective()[(1, 0)]);
    }

    #[test]
    fn iteration_cap_reports_max_iter() {
        let c = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0]));
        let prob = SdpProblem::new(c, vec![trace_one(3)], vec![]).unwrap();
        let sol = solve_sdp(&prob, 1e-12, 2);
        assert_eq!(sol.status, SdpStatus::MaxIter);
        assert_eq!(sol.iterations, 2);
    }
}
