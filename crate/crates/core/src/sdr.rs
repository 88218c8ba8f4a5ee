//! Offloading decisions from a semidefinite relaxation of the lifted QCQP.
//!
//! The decision vector `s = [c, R, p_com, p_t, t]` is lifted to
//! `G = [s; 1][s; 1]^T`; dropping the rank constraint gives an SDP whose last
//! row, thresholded, yields the binary decisions.

use log::{debug, info};
use nalgebra::{DMatrix, DVector};

use crate::numerics::{solve_sdp, SdpProblem, SdpSolution, SdpStatus, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::scenario::Scenario;
use crate::system_model::{cost_constants, rate_cap, OffloadDecision};

/// Index map of the `4K + 1` entries of `s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SVectorLayout {
    pub k: usize,
}

impl SVectorLayout {
    pub fn new(k: usize) -> Self {
        Self { k }
    }

    pub fn len(&self) -> usize {
        4 * self.k + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn c(&self, k: usize) -> usize {
        k
    }

    pub fn rate(&self, k: usize) -> usize {
        self.k + k
    }

    pub fn p_com(&self, k: usize) -> usize {
        2 * self.k + k
    }

    pub fn p_t(&self, k: usize) -> usize {
        3 * self.k + k
    }

    pub fn t(&self) -> usize {
        4 * self.k
    }

    /// Index of the homogenizing 1 in the lifted matrix.
    pub fn one(&self) -> usize {
        4 * self.k + 1
    }

    pub fn lifted_dim(&self) -> usize {
        4 * self.k + 2
    }
}

/// Unit system of the SDP data. Bits are measured in `rate` units times one
/// second, so `B / R` keeps its meaning in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Units {
    pub rate: f64,
    pub power: f64,
    pub objective: f64,
}

impl Units {
    pub const SI: Units = Units {
        rate: 1.0,
        power: 1.0,
        objective: 1.0,
    };

    /// Units making every block of the decision problem O(1).
    pub fn for_scenario(scenario: &Scenario, caps: &[f64]) -> Self {
        let positive_max = |it: &mut dyn Iterator<Item = f64>| {
            let m = it.fold(0.0f64, f64::max);
            if m > 0.0 && m.is_finite() {
                m
            } else {
                1.0
            }
        };
        let delta = cost_constants(scenario).delta;
        Units {
            rate: positive_max(&mut caps.iter().copied()),
            power: positive_max(&mut scenario.devices.iter().map(|d| d.p_max)),
            objective: positive_max(&mut delta.iter().map(|d| d.abs())),
        }
    }
}

/// Quadratic program in `s`, expressed in `units`.
#[derive(Debug, Clone)]
pub struct QcqpInstance {
    pub layout: SVectorLayout,
    pub units: Units,
    pub m1: DMatrix<f64>,
    pub m2: Vec<DMatrix<f64>>,
    pub m3: Vec<DMatrix<f64>>,
    pub m4: Vec<DMatrix<f64>>,
    pub c0: DVector<f64>,
    pub delta: Vec<f64>,
    pub lambda_e: Vec<f64>,
    pub lambda_t: Vec<f64>,
    pub bits: Vec<f64>,
    pub t_loc: Vec<f64>,
    pub t_c: Vec<f64>,
    pub tau_max: Vec<f64>,
    pub p_max: Vec<f64>,
    pub rate_caps: Vec<f64>,
    /// All-local cost in SI units.
    pub eta: f64,
}

fn set_sym(m: &mut DMatrix<f64>, i: usize, j: usize, v: f64) {
    m[(i, j)] = v;
    m[(j, i)] = v;
}

/// `s^T M s`.
fn quad(m: &DMatrix<f64>, s: &DVector<f64>) -> f64 {
    s.dot(&(m * s))
}

impl QcqpInstance {
    /// `s^T M1 s + 2 c0^T s`.
    pub fn objective(&self, s: &DVector<f64>) -> f64 {
        quad(&self.m1, s) + 2.0 * self.c0.dot(s)
    }

    /// The decision-part objective evaluated term by term.
    pub fn direct_objective(&self, s: &DVector<f64>) -> f64 {
        let l = self.layout;
        (0..l.k)
            .map(|k| {
                let c = s[l.c(k)];
                self.delta[k] * c + self.lambda_e[k] * c * s[l.p_com(k)] + self.lambda_t[k] * c * s[l.t()]
            })
            .sum()
    }

    pub fn rate_coupling(&self, k: usize, s: &DVector<f64>) -> f64 {
        quad(&self.m2[k], s)
    }

    pub fn time_coupling(&self, k: usize, s: &DVector<f64>) -> f64 {
        quad(&self.m3[k], s)
    }

    pub fn decision_time(&self, k: usize, s: &DVector<f64>) -> f64 {
        quad(&self.m4[k], s)
    }

    /// Converts an objective value in instance units back to SI cost.
    pub fn to_si_objective(&self, value: f64) -> f64 {
        value * self.units.objective
    }

    /// `s` for an actual configuration: decisions, SI rates and transmit powers.
    ///
    /// `p_com = B p_t / R` and `t = max_k c_k B_k / R_k`; local devices get
    /// zero rate and power variables.
    pub fn s_from_config(&self, offload: &[bool], rates: &[f64], p_t: &[f64]) -> DVector<f64> {
        let l = self.layout;
        let mut s = DVector::zeros(l.len());
        let mut t: f64 = 0.0;
        for k in 0..l.k {
            if !offload[k] {
                continue;
            }
            let r = rates[k] / self.units.rate;
            let p = p_t[k] / self.units.power;
            s[l.c(k)] = 1.0;
            s[l.rate(k)] = r;
            s[l.p_t(k)] = p;
            s[l.p_com(k)] = self.bits[k] * p / r;
            t = t.max(self.bits[k] / r);
        }
        s[l.t()] = t;
        s
    }
}

/// Builds the QCQP in SI units.
pub fn build_qcqp(scenario: &Scenario, rate_caps: &[f64]) -> QcqpInstance {
    build_qcqp_in(scenario, rate_caps, Units::SI)
}

/// Builds the QCQP with every quantity expressed in `units`.
pub fn build_qcqp_in(scenario: &Scenario, rate_caps: &[f64], units: Units) -> QcqpInstance {
    let kk = scenario.num_devices();
    let layout = SVectorLayout::new(kk);
    let n = layout.len();
    let consts = cost_constants(scenario);
    let energy_unit = units.power;
    let bits_unit = units.rate;

    let delta: Vec<f64> = consts.delta.iter().map(|d| d / units.objective).collect();
    let lambda_e: Vec<f64> = scenario
        .devices
        .iter()
        .map(|d| d.lambda_e * energy_unit / units.objective)
        .collect();
    let lambda_t: Vec<f64> = scenario.devices.iter().map(|d| d.lambda_t / units.objective).collect();

    let mut m1 = DMatrix::zeros(n, n);
    let mut c0 = DVector::zeros(n);
    let mut m2 = Vec::with_capacity(kk);
    let mut m3 = Vec::with_capacity(kk);
    let mut m4 = Vec::with_capacity(kk);
    for k in 0..kk {
        set_sym(&mut m1, layout.c(k), layout.p_com(k), 0.5 * lambda_e[k]);
        set_sym(&mut m1, layout.c(k), layout.t(), 0.5 * lambda_t[k]);
        c0[layout.c(k)] = 0.5 * delta[k];

        let mut a = DMatrix::zeros(n, n);
        set_sym(&mut a, layout.rate(k), layout.p_com(k), -0.5);
        m2.push(a);
        let mut b = DMatrix::zeros(n, n);
        set_sym(&mut b, layout.rate(k), layout.t(), -0.5);
        m3.push(b);
        let mut c = DMatrix::zeros(n, n);
        set_sym(&mut c, layout.c(k), layout.t(), 0.5);
        m4.push(c);
    }

    QcqpInstance {
        layout,
        units,
        m1,
        m2,
        m3,
        m4,
        c0,
        delta,
        lambda_e,
        lambda_t,
        bits: scenario.devices.iter().map(|d| d.task_bits / bits_unit).collect(),
        t_loc: consts.t_loc,
        t_c: consts.t_c,
        tau_max: scenario.devices.iter().map(|d| d.tau_max).collect(),
        p_max: scenario.devices.iter().map(|d| d.p_max / units.power).collect(),
        rate_caps: rate_caps.iter().map(|r| r / units.rate).collect(),
        eta: consts.eta,
    }
}

/// Constraint matrices of the relaxation, kept by role for inspection.
#[derive(Debug, Clone)]
pub struct LiftedSdp {
    pub layout: SVectorLayout,
    pub w0: DMatrix<f64>,
    /// `Tr(W1 G) = 0`: binary decisions.
    pub w1: Vec<DMatrix<f64>>,
    /// `Tr(W2 G) <= 0`: transmit energy below `p_com`.
    pub w2: Vec<DMatrix<f64>>,
    /// `Tr(W3 G) <= 0`: upload time below `t`.
    pub w3: Vec<DMatrix<f64>>,
    /// `Tr(W4 G) <= tau - T_loc`: deadline.
    pub w4: Vec<(DMatrix<f64>, f64)>,
    /// `Tr(W5 G) <= P_max`: transmit power.
    pub w5: Vec<(DMatrix<f64>, f64)>,
    /// `R_k <= cap_k`.
    pub rate_caps: Vec<(DMatrix<f64>, f64)>,
    /// Bound-factor products `x_i^2 <= u_i x_i` and sign conditions on products.
    pub valid_cuts: Vec<(DMatrix<f64>, f64)>,
    pub problem: SdpProblem,
}

/// `[[top, border], [border^T, 0]]` as an `n + 1` square matrix.
fn bordered(top: &DMatrix<f64>, border: &DVector<f64>) -> DMatrix<f64> {
    let n = top.nrows();
    let mut w = DMatrix::zeros(n + 1, n + 1);
    w.view_mut((0, 0), (n, n)).copy_from(top);
    for i in 0..n {
        w[(i, n)] = border[i];
        w[(n, i)] = border[i];
    }
    w
}

fn unit_border(n: usize, idx: usize, coeff: f64) -> DVector<f64> {
    let mut v = DVector::zeros(n);
    v[idx] = 0.5 * coeff;
    v
}

pub fn lift_to_sdp(qcqp: &QcqpInstance) -> LiftedSdp {
    let l = qcqp.layout;
    let n = l.len();
    let dim = l.lifted_dim();
    let one = l.one();
    let zero_top = DMatrix::zeros(n, n);

    let w0 = bordered(&qcqp.m1, &qcqp.c0);
    let mut w1 = Vec::with_capacity(l.k);
    let mut w2 = Vec::with_capacity(l.k);
    let mut w3 = Vec::with_capacity(l.k);
    let mut w4 = Vec::with_capacity(l.k);
    let mut w5 = Vec::with_capacity(l.k);
    let mut caps = Vec::with_capacity(l.k);
    for k in 0..l.k {
        let mut diag = DMatrix::zeros(n, n);
        diag[(l.c(k), l.c(k))] = 1.0;
        w1.push(bordered(&diag, &unit_border(n, l.c(k), -1.0)));
        w2.push(bordered(&qcqp.m2[k], &unit_border(n, l.p_t(k), qcqp.bits[k])));
        w3.push(bordered(&qcqp.m3[k], &unit_border(n, l.c(k), qcqp.bits[k])));
        // Offloading devices also wait for the edge computation.
        w4.push((
            bordered(&qcqp.m4[k], &unit_border(n, l.c(k), qcqp.t_c[k] - qcqp.t_loc[k])),
            qcqp.tau_max[k] - qcqp.t_loc[k],
        ));
        w5.push((bordered(&zero_top, &unit_border(n, l.p_t(k), 1.0)), qcqp.p_max[k]));
        caps.push((bordered(&zero_top, &unit_border(n, l.rate(k), 1.0)), qcqp.rate_caps[k]));
    }

    // Every feasible configuration has 0 <= x_i <= u_i on these entries, hence
    // x_i^2 <= u_i x_i, and the objective products c p_com, c t are nonnegative.
    let t_bound = qcqp.tau_max.iter().copied().fold(0.0, f64::max);
    let mut bounds = Vec::with_capacity(3 * l.k + 1);
    for k in 0..l.k {
        bounds.push((l.rate(k), qcqp.rate_caps[k]));
        bounds.push((l.p_com(k), qcqp.p_max[k] * qcqp.tau_max[k]));
        bounds.push((l.p_t(k), qcqp.p_max[k]));
    }
    bounds.push((l.t(), t_bound));
    let mut cuts = Vec::with_capacity(bounds.len() + 2 * l.k);
    for (idx, u) in bounds {
        let mut m = DMatrix::zeros(dim, dim);
        m[(idx, idx)] = 1.0;
        set_sym(&mut m, idx, one, -0.5 * u);
        cuts.push((m, 0.0));
    }
    for k in 0..l.k {
        for other in [l.p_com(k), l.t()] {
            let mut m = DMatrix::zeros(dim, dim);
            set_sym(&mut m, l.c(k), other, -0.5);
            cuts.push((m, 0.0));
        }
    }

    let mut equalities: Vec<(DMatrix<f64>, f64)> = w1.iter().map(|w| (w.clone(), 0.0)).collect();
    let mut corner = DMatrix::zeros(dim, dim);
    corner[(one, one)] = 1.0;
    equalities.push((corner, 1.0));
    let mut inequalities: Vec<(DMatrix<f64>, f64)> = Vec::new();
    inequalities.extend(w2.iter().map(|w| (w.clone(), 0.0)));
    inequalities.extend(w3.iter().map(|w| (w.clone(), 0.0)));
    inequalities.extend(w4.iter().cloned());
    inequalities.extend(w5.iter().cloned());
    inequalities.extend(caps.iter().cloned());
    inequalities.extend(cuts.iter().cloned());
    let problem = SdpProblem::new(w0.clone(), equalities, inequalities)
        .expect("lifted matrices are symmetric and finite by construction");

    LiftedSdp {
        layout: l,
        w0,
        w1,
        w2,
        w3,
        w4,
        w5,
        rate_caps: caps,
        valid_cuts: cuts,
        problem,
    }
}

/// Thresholds the last row of `G`: `c_k = 1` iff `clamp(G[last, k]) > gamma`.
pub fn extract_decisions(solution: &SdpSolution, gamma: f64) -> OffloadDecision {
    let dim = solution.g.nrows();
    let k = (dim - 2) / 4;
    let last = dim - 1;
    let scores: Vec<f64> = (0..k).map(|i| solution.g[(last, i)].clamp(0.0, 1.0)).collect();
    let offload = scores.iter().map(|&d| d > gamma).collect();
    OffloadDecision { offload, scores }
}

/// Outcome of the decision stage, with solver diagnostics.
#[derive(Debug, Clone)]
pub struct DecisionReport {
    pub decision: OffloadDecision,
    pub status: SdpStatus,
    /// Relaxation optimum of the decision part, SI cost units.
    pub relaxed_objective: f64,
    pub sdp_iterations: usize,
    /// The solver failed and the rounding started from all-local.
    pub fallback: bool,
    /// Devices switched to offloading because local execution misses the deadline.
    pub forced: Vec<usize>,
}

/// Solves the relaxation for `scenario` in well-conditioned units.
pub fn solve_relaxation(scenario: &Scenario) -> (QcqpInstance, SdpSolution) {
    let cfg = &scenario.config;
    let caps: Vec<f64> = scenario
        .channels
        .h
        .iter()
        .zip(&scenario.devices)
        .map(|(h, d)| rate_cap(h, d.p_max, cfg.streams, cfg.bandwidth, scenario.channels.noise_power))
        .collect();
    let units = Units::for_scenario(scenario, &caps);
    let qcqp = build_qcqp_in(scenario, &caps, units);
    let lifted = lift_to_sdp(&qcqp);
    let sol = solve_sdp(&lifted.problem, DEFAULT_TOL, DEFAULT_MAX_ITER);
    (qcqp, sol)
}

/// Decision stage of the joint scheme: relax, solve, round, then force
/// offloading for devices that cannot meet their deadline locally.
pub fn dm_mmco_decide(scenario: &Scenario) -> DecisionReport {
    let k = scenario.num_devices();
    let (qcqp, sol) = solve_relaxation(scenario);
    let usable = match sol.status {
        SdpStatus::Optimal => true,
        SdpStatus::MaxIter => sol.duality_gap.abs() <= 1e-3 && sol.max_constraint_violation <= 1e-3,
        SdpStatus::Infeasible => false,
    };
    let (mut decision, fallback) = if usable {
        (extract_decisions(&sol, scenario.config.gamma), false)
    } else {
        info!(
            "relaxation not usable ({:?}, gap {:e}, violation {:e}); starting from all-local",
            sol.status, sol.duality_gap, sol.max_constraint_violation
        );
        (OffloadDecision::all_local(k), true)
    };
    let mut forced = Vec::new();
    for i in 0..k {
        if !decision.offload[i] && qcqp.t_loc[i] > qcqp.tau_max[i] {
            decision.offload[i] = true;
            forced.push(i);
        }
    }
    debug!(
        "relaxation {:?} in {} iterations, scores {:?}, forced {:?}",
        sol.status, sol.iterations, decision.scores, forced
    );
    DecisionReport {
        decision,
        status: sol.status,
        relaxed_objective: qcqp.to_si_objective(sol.objective_value),
        sdp_iterations: sol.iterations,
        fallback,
        forced,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_scenario, DeviceRng, ScenarioConfig};

    fn scenario(k: usize, seed: u64) -> Scenario {
        generate_scenario(&ScenarioConfig {
            num_devices: k,
            seed,
            lambda_t: 0.25,
            ..Default::default()
        })
        .unwrap()
    }

    fn caps(s: &Scenario) -> Vec<f64> {
        s.channels
            .h
            .iter()
            .map(|h| rate_cap(h, s.config.p_max, s.config.streams, s.config.bandwidth, s.channels.noise_power))
            .collect()
    }

    fn random_s(len: usize, rng: &mut DeviceRng) -> DVector<f64> {
        DVector::from_fn(len, |_, _| 4.0 * rng.uniform() - 2.0)
    }

    fn lifted_trace(w: &DMatrix<f64>, s: &DVector<f64>) -> f64 {
        let n = s.len();
        let mut x = DVector::zeros(n + 1);
        x.rows_mut(0, n).copy_from(s);
        x[n] = 1.0;
        let g = &x * x.transpose();
        (w.component_mul(&g)).sum()
    }

    #[test]
    fn layout_blocks_are_disjoint_and_exhaustive() {
        let l = SVectorLayout::new(3);
        let mut seen = vec![0; l.len()];
        for k in 0..3 {
            for idx in [l.c(k), l.rate(k), l.p_com(k), l.p_t(k)] {
                seen[idx] += 1;
            }
        }
        seen[l.t()] += 1;
        assert!(seen.iter().all(|&c| c == 1));
        assert_eq!(l.lifted_dim(), 14);
    }

    #[test]
    fn objective_at_zero_decisions_is_zero() {
        let s = scenario(3, 1);
        let q = build_qcqp(&s, &caps(&s));
        let mut rng = DeviceRng::new(3, 0);
        let mut v = random_s(q.layout.len(), &mut rng);
        for k in 0..3 {
            v[q.layout.c(k)] = 0.0;
            v[q.layout.p_com(k)] = 0.0;
        }
        v[q.layout.t()] = 0.0;
        assert_eq!(q.objective(&v), 0.0);
    }

    #[test]
    fn quadratic_identities_hold() {
        let s = scenario(3, 2);
        let q = build_qcqp_in(&s, &caps(&s), Units::for_scenario(&s, &caps(&s)));
        let l = q.layout;
        let mut rng = DeviceRng::new(5, 0);
        for _ in 0..100 {
            let v = random_s(l.len(), &mut rng);
            let tol = 1e-12;
            assert!((q.objective(&v) - q.direct_objective(&v)).abs() < tol);
            for k in 0..3 {
                assert!((q.rate_coupling(k, &v) + v[l.rate(k)] * v[l.p_com(k)]).abs() < tol);
                assert!((q.time_coupling(k, &v) + v[l.rate(k)] * v[l.t()]).abs() < tol);
                assert!((q.decision_time(k, &v) - v[l.c(k)] * v[l.t()]).abs() < tol);
            }
        }
    }

    #[test]
    fn lifted_traces_reproduce_qcqp_terms() {
        let s = scenario(3, 3);
        let c = caps(&s);
        let q = build_qcqp_in(&s, &c, Units::for_scenario(&s, &c));
        let lifted = lift_to_sdp(&q);
        let l = q.layout;
        let mut rng = DeviceRng::new(9, 0);
        for _ in 0..100 {
            let v = random_s(l.len(), &mut rng);
            let close = |a: f64, b: f64| assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
            close(lifted_trace(&lifted.w0, &v), q.objective(&v));
            for k in 0..3 {
                let ck = v[l.c(k)];
                close(lifted_trace(&lifted.w1[k], &v), ck * ck - ck);
                close(
                    lifted_trace(&lifted.w2[k], &v),
                    q.rate_coupling(k, &v) + q.bits[k] * v[l.p_t(k)],
                );
                close(lifted_trace(&lifted.w3[k], &v), q.time_coupling(k, &v) + q.bits[k] * ck);
                close(
                    lifted_trace(&lifted.w4[k].0, &v),
                    q.decision_time(k, &v) + (q.t_c[k] - q.t_loc[k]) * ck,
                );
                close(lifted_trace(&lifted.w5[k].0, &v), v[l.p_t(k)]);
                close(lifted_trace(&lifted.rate_caps[k].0, &v), v[l.rate(k)]);
            }
        }
    }

    #[test]
    fn zero_vector_lifts_to_unit_corner() {
        let s = scenario(2, 4);
        let q = build_qcqp(&s, &caps(&s));
        let lifted = lift_to_sdp(&q);
        let z = DVector::zeros(q.layout.len());
        assert_eq!(lifted_trace(&lifted.w0, &z), 0.0);
        let corner = &lifted.problem.equalities().last().unwrap().0;
        assert_eq!(lifted_trace(corner, &z), 1.0);
    }

    #[test]
    fn binary_decisions_make_w1_tight() {
        let s = scenario(3, 5);
        let q = build_qcqp(&s, &caps(&s));
        let lifted = lift_to_sdp(&q);
        let mut rng = DeviceRng::new(1, 0);
        let mut v = random_s(q.layout.len(), &mut rng);
        v[0] = 1.0;
        v[1] = 0.0;
        v[2] = 1.0;
        for k in 0..3 {
            assert_eq!(lifted_trace(&lifted.w1[k], &v), 0.0);
        }
    }

    fn solution_with_scores(scores: &[f64]) -> SdpSolution {
        let k = scores.len();
        let dim = 4 * k + 2;
        let mut g = DMatrix::zeros(dim, dim);
        for (i, &d) in scores.iter().enumerate() {
            g[(dim - 1, i)] = d;
            g[(i, dim - 1)] = d;
        }
        SdpSolution {
            g,
            y: DVector::zeros(0),
            objective_value: 0.0,
            dual_objective: 0.0,
            status: SdpStatus::Optimal,
            duality_gap: 0.0,
            max_constraint_violation: 0.0,
            iterations: 0,
            history: Vec::new(),
        }
    }

    #[test]
    fn threshold_rounding() {
        let d = extract_decisions(&solution_with_scores(&[0.9, 0.1]), 0.8);
        assert_eq!(d.offload, vec![true, false]);
        let d = extract_decisions(&solution_with_scores(&[0.8]), 0.8);
        assert_eq!(d.offload, vec![false]);
        let d = extract_decisions(&solution_with_scores(&[0.0, 1e-9, 1.3, -0.2]), 0.0);
        assert_eq!(d.offload, vec![false, true, true, false]);
        assert_eq!(d.scores, vec![0.0, 1e-9, 1.0, 0.0]);
    }

    #[test]
    fn relaxation_solves_to_optimality() {
        for k in 1..=4 {
            let s = scenario(k, 10 + k as u64);
            let (_, sol) = solve_relaxation(&s);
            assert_eq!(sol.status, SdpStatus::Optimal, "K={k}");
        }
    }

    #[test]
    fn single_device_with_costly_local_execution_offloads() {
        let mut s = scenario(1, 7);
        s.devices[0].tau_max = 100.0;
        let r = dm_mmco_decide(&s);
        assert_eq!(r.decision.offload, vec![true]);
        assert!(r.forced.is_empty());
        assert!(r.decision.scores[0] > 0.99);
    }

    #[test]
    fn cheap_local_device_stays_local() {
        let mut s = scenario(2, 8);
        for d in &mut s.devices {
            d.tau_max = 100.0;
            d.lambda_t = 0.0;
        }
        // Near-free local execution makes offloading strictly worse.
        s.config.kappa = 1e-40;
        s.devices[0].f_loc = 5e9;
        let r = dm_mmco_decide(&s);
        assert!(!r.decision.offload[0]);
    }

    #[test]
    fn late_local_devices_are_forced_to_offload() {
        let s = scenario(3, 9);
        let r = dm_mmco_decide(&s);
        let consts = cost_constants(&s);
        for k in 0..3 {
            if consts.t_loc[k] > s.devices[k].tau_max {
                assert!(r.decision.offload[k]);
            }
        }
    }
}
