//! Transmit subproblem: with `V`, `z` and `w` fixed the surrogate is convex
//! in `Q`. It is minimized by projected gradient over the power balls, with
//! the upload-deadline rows enforced through a logarithmic barrier.

use log::trace;

use super::state::{FpContext, FpState};
use super::FpOptions;
use crate::error::BeamformingError;
use crate::numerics::{fro_norm_sqr, CMat, C64};

const LN2: f64 = std::f64::consts::LN_2;
/// Smoothing of `||Q_k||_F` at the origin, in normalized power units.
const NORM_SMOOTHING: f64 = 1e-12;
const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;
/// Length of the value window for the nonmonotone acceptance test.
const NONMONOTONE_WINDOW: usize = 10;
/// Phase one aims for surrogate rates this much above the requirement.
const PHASE_ONE_MARGIN: f64 = 1.01;

/// Point of the transmit subproblem: normalized precoders `x_k = Q_k / sqrt(P_ref)`
/// and the common upload time `q` in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct QPoint {
    pub x: Vec<CMat>,
    pub q: f64,
}

/// Gradient in the same layout as [`QPoint`]; complex entries hold
/// `2 df/d(conj x)`, so `Re<g, dx>` is the first-order change.
#[derive(Debug, Clone)]
pub struct QGradient {
    pub x: Vec<CMat>,
    pub q: f64,
}

fn dot(g: &QGradient, dx: &[CMat], dq: f64) -> f64 {
    g.x.iter().zip(dx).map(|(a, b)| a.dotc(b).re).sum::<f64>() + g.q * dq
}

/// The transmit subproblem frozen at one `(V, z, w)`.
#[derive(Debug, Clone)]
pub struct QSubproblem {
    u: usize,
    d: usize,
    p_ref: f64,
    /// `b[i] = sqrt(P_ref) H_i^H [V_1 .. V_U]`, `N x U d`: column `k d + l`
    /// dotted with `x_i[:, j]` is the gain of stream `(i, j)` at receiver `(k, l)`.
    b: Vec<CMat>,
    /// `sigma^2 ||v_kl||^2`.
    noise: Vec<Vec<f64>>,
    z: Vec<Vec<C64>>,
    rate_coef: Vec<f64>,
    norm_coef: Vec<f64>,
    time_coef: f64,
    /// `B_k / B_W`: required surrogate rate (per Hz) times the upload time.
    need: Vec<f64>,
    radius: Vec<f64>,
    q_max: f64,
    q_free: bool,
    intra: bool,
    scale: f64,
    /// Barrier weight.
    pub mu: f64,
}

impl QSubproblem {
    pub fn new(state: &FpState, ctx: &FpContext) -> Self {
        let u = ctx.len();
        let d = ctx.streams();
        let p_ref = (0..u).map(|p| ctx.device(p).p_max).fold(0.0, f64::max);
        let amp = C64::new(p_ref.sqrt(), 0.0);
        let m = ctx.h(0).nrows();
        let receivers = CMat::from_fn(m, u * d, |r, c| state.beams.v[c / d][(r, c % d)] * amp);
        let b = (0..u).map(|i| ctx.h(i).ad_mul(&receivers)).collect();
        let noise = (0..u)
            .map(|k| {
                (0..d)
                    .map(|l| ctx.noise_power() * state.beams.v[k].column(l).norm_squared())
                    .collect()
            })
            .collect();
        let bw = ctx.bandwidth();
        let mut sub = Self {
            u,
            d,
            p_ref,
            b,
            noise,
            z: state.z.clone(),
            rate_coef: state.w.iter().map(|w| w * w * bw).collect(),
            norm_coef: (0..u)
                .map(|p| {
                    let dev = ctx.device(p);
                    2.0 * state.w[p] * (dev.lambda_e * dev.task_bits * p_ref).sqrt()
                })
                .collect(),
            time_coef: ctx.lambda_t_sum(),
            need: (0..u).map(|p| ctx.device(p).task_bits / bw).collect(),
            radius: (0..u).map(|p| (ctx.device(p).p_max / p_ref).sqrt()).collect(),
            q_max: ctx.q_max,
            q_free: ctx.lambda_t_sum() > 0.0,
            intra: ctx.include_intra(),
            scale: 1.0,
            mu: 0.0,
        };
        // Normalize so the surrogate is O(1) at the warm start.
        let start = sub.point(state);
        if let Some(f) = sub.surrogate(&start) {
            if f.is_finite() && f.abs() > 1e-300 {
                sub.scale = f.abs();
            }
        }
        sub
    }

    /// The warm start in subproblem coordinates.
    pub fn point(&self, state: &FpState) -> QPoint {
        let inv = C64::new(1.0 / self.p_ref.sqrt(), 0.0);
        QPoint {
            x: state.beams.q.iter().map(|q| q * inv).collect(),
            q: if state.q.is_finite() { state.q } else { self.q_max },
        }
    }

    pub fn precoders(&self, p: &QPoint) -> Vec<CMat> {
        let amp = C64::new(self.p_ref.sqrt(), 0.0);
        p.x.iter().map(|x| x * amp).collect()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    fn interferes(&self, k: usize, l: usize, i: usize, j: usize) -> bool {
        i != k || (self.intra && j != l)
    }

    /// `Y[i] = b[i]^H x_i`, `U d x d`; row `k d + l` holds what receiver
    /// `(k, l)` sees of device `i`'s streams.
    fn products(&self, x: &[CMat]) -> Vec<CMat> {
        (0..self.u).map(|i| self.b[i].ad_mul(&x[i])).collect()
    }

    fn brackets_from(&self, y: &[CMat]) -> Vec<Vec<f64>> {
        (0..self.u)
            .map(|k| {
                (0..self.d)
                    .map(|l| {
                        let z = self.z[k][l];
                        let row = k * self.d + l;
                        let mut interference = self.noise[k][l];
                        for (i, yi) in y.iter().enumerate() {
                            for j in 0..self.d {
                                if self.interferes(k, l, i, j) {
                                    interference += yi[(row, j)].norm_sqr();
                                }
                            }
                        }
                        1.0 + 2.0 * (z.conj() * y[k][(row, l)]).re - z.norm_sqr() * interference
                    })
                    .collect()
            })
            .collect()
    }

    pub fn brackets(&self, x: &[CMat]) -> Vec<Vec<f64>> {
        self.brackets_from(&self.products(x))
    }

    /// Surrogate rates in units of the bandwidth; `None` outside the log domain.
    pub fn surrogate_rates(&self, x: &[CMat]) -> Option<Vec<f64>> {
        rates_of(&self.brackets(x))
    }

    /// Scaled surrogate objective without the barrier.
    pub fn surrogate(&self, p: &QPoint) -> Option<f64> {
        let r = self.surrogate_rates(&p.x)?;
        Some(self.surrogate_with(p, &r))
    }

    fn surrogate_with(&self, p: &QPoint, rates: &[f64]) -> f64 {
        let mut f = self.time_coef * p.q;
        for k in 0..self.u {
            f += self.norm_coef[k] * (fro_norm_sqr(&p.x[k]) + NORM_SMOOTHING).sqrt() - self.rate_coef[k] * rates[k];
        }
        f / self.scale
    }

    /// Deadline slacks `r_k - need_k / q`.
    fn slacks(&self, rates: &[f64], q: f64) -> Vec<f64> {
        rates.iter().zip(&self.need).map(|(r, n)| r - n / q).collect()
    }

    pub fn strictly_feasible(&self, p: &QPoint) -> bool {
        match self.surrogate_rates(&p.x) {
            Some(r) => p.q > 0.0 && p.q <= self.q_max && self.slacks(&r, p.q).iter().all(|&s| s > 0.0),
            None => false,
        }
    }

    /// Barrier objective; `None` outside its domain.
    pub fn value(&self, p: &QPoint) -> Option<f64> {
        let r = self.surrogate_rates(&p.x)?;
        let mut f = self.surrogate_with(p, &r);
        if self.mu > 0.0 {
            for s in self.slacks(&r, p.q) {
                if !(s > 0.0) {
                    return None;
                }
                f -= self.mu * s.ln();
            }
        }
        Some(f)
    }

    /// `sum_k coef[k][l] * grad b_kl`, the chain rule through every bracket.
    fn bracket_gradient(&self, y: &[CMat], coef: &[Vec<f64>]) -> Vec<CMat> {
        (0..self.u)
            .map(|i| {
                let mut c = CMat::zeros(self.u * self.d, self.d);
                for k in 0..self.u {
                    for l in 0..self.d {
                        let ckl = coef[k][l];
                        if ckl == 0.0 {
                            continue;
                        }
                        let z = self.z[k][l];
                        let row = k * self.d + l;
                        for j in 0..self.d {
                            if self.interferes(k, l, i, j) {
                                c[(row, j)] -= y[i][(row, j)] * (2.0 * z.norm_sqr() * ckl);
                            }
                        }
                        if i == k {
                            c[(row, l)] += z * (2.0 * ckl);
                        }
                    }
                }
                &self.b[i] * c
            })
            .collect()
    }

    /// Gradient of [`QSubproblem::value`].
    pub fn gradient(&self, p: &QPoint) -> QGradient {
        let y = self.products(&p.x);
        let b = self.brackets_from(&y);
        let rates = rates_of(&b).unwrap_or_else(|| vec![f64::NAN; self.u]);
        let slacks = self.slacks(&rates, p.q);
        let coef: Vec<Vec<f64>> = (0..self.u)
            .map(|k| {
                let barrier = if self.mu > 0.0 { self.mu / slacks[k] } else { 0.0 };
                let outer = -(self.rate_coef[k] / self.scale + barrier);
                b[k].iter().map(|bkl| outer / (bkl * LN2)).collect()
            })
            .collect();
        let mut gx = self.bracket_gradient(&y, &coef);
        for k in 0..self.u {
            let norm = (fro_norm_sqr(&p.x[k]) + NORM_SMOOTHING).sqrt();
            gx[k] += &p.x[k] * C64::new(self.norm_coef[k] / (self.scale * norm), 0.0);
        }
        let mut gq = 0.0;
        if self.q_free {
            gq = self.time_coef / self.scale;
            if self.mu > 0.0 {
                for k in 0..self.u {
                    gq -= self.mu * self.need[k] / (p.q * p.q * slacks[k]);
                }
            }
        }
        QGradient { x: gx, q: gq }
    }

    /// Squared shortfall of the surrogate rates below `margin` times the requirement at `q_max`.
    fn penalty(&self, x: &[CMat]) -> Option<f64> {
        let r = self.surrogate_rates(x)?;
        Some(
            (0..self.u)
                .map(|k| {
                    let short = PHASE_ONE_MARGIN - r[k] * self.q_max / self.need[k];
                    if short > 0.0 {
                        short * short
                    } else {
                        0.0
                    }
                })
                .sum(),
        )
    }

    fn penalty_gradient(&self, x: &[CMat]) -> Vec<CMat> {
        let y = self.products(x);
        let b = self.brackets_from(&y);
        let r = rates_of(&b).unwrap_or_else(|| vec![f64::NAN; self.u]);
        let coef: Vec<Vec<f64>> = (0..self.u)
            .map(|k| {
                let scale = self.q_max / self.need[k];
                let short = PHASE_ONE_MARGIN - r[k] * scale;
                let outer = if short > 0.0 { -2.0 * short * scale } else { 0.0 };
                b[k].iter().map(|bkl| outer / (bkl * LN2)).collect()
            })
            .collect();
        self.bracket_gradient(&y, &coef)
    }

    fn project(&self, x: &mut [CMat], q: &mut f64) {
        for (xk, &rad) in x.iter_mut().zip(&self.radius) {
            let norm = fro_norm_sqr(xk).sqrt();
            if norm > rad {
                *xk *= C64::new(rad / norm, 0.0);
            }
        }
        if self.q_free {
            *q = q.clamp(1e-12 * self.q_max, self.q_max);
        }
    }

    fn step(&self, p: &QPoint, g: &QGradient, alpha: f64) -> QPoint {
        let mut x: Vec<CMat> = p
            .x
            .iter()
            .zip(&g.x)
            .map(|(xk, gk)| xk - gk * C64::new(alpha, 0.0))
            .collect();
        let mut q = if self.q_free { p.q - alpha * g.q } else { p.q };
        self.project(&mut x, &mut q);
        QPoint { x, q }
    }

    /// Norm of `p - P(p - g)`.
    pub fn stationarity(&self, p: &QPoint, g: &QGradient) -> f64 {
        let s = self.step(p, g, 1.0);
        let dx: f64 = p.x.iter().zip(&s.x).map(|(a, b)| fro_norm_sqr(&(a - b))).sum();
        (dx + (p.q - s.q).powi(2)).sqrt()
    }

    /// Projected gradient with Barzilai-Borwein trial steps and a nonmonotone
    /// Armijo test against the largest of the last few values. Returns the
    /// best point visited.
    fn descend(
        &self,
        start: QPoint,
        value: &dyn Fn(&QPoint) -> Option<f64>,
        gradient: &dyn Fn(&QPoint) -> QGradient,
        tol: f64,
        max_iter: usize,
        stop_at_zero: bool,
    ) -> Descent {
        let mut p = start;
        let mut f = value(&p).unwrap_or(f64::INFINITY);
        let mut best = (p.clone(), f);
        let mut recent = std::collections::VecDeque::from([f]);
        let mut prev: Option<(QPoint, QGradient)> = None;
        let mut alpha = 1.0;
        let mut residual = f64::INFINITY;
        let mut iterations = 0;
        while iterations < max_iter {
            if stop_at_zero && best.1 <= 0.0 {
                break;
            }
            let g = gradient(&p);
            residual = self.stationarity(&p, &g);
            if !(residual > tol) {
                break;
            }
            if let Some((pp, pg)) = &prev {
                let sx: Vec<CMat> = p.x.iter().zip(&pp.x).map(|(a, b)| a - b).collect();
                let yx: Vec<CMat> = g.x.iter().zip(&pg.x).map(|(a, b)| a - b).collect();
                let sq = p.q - pp.q;
                let yq = g.q - pg.q;
                let ss: f64 = sx.iter().map(fro_norm_sqr).sum::<f64>() + sq * sq;
                let sy: f64 = sx.iter().zip(&yx).map(|(a, b)| a.dotc(b).re).sum::<f64>() + sq * yq;
                alpha = if sy > 0.0 { ss / sy } else { alpha * 2.0 };
            } else {
                let gn: f64 = g.x.iter().map(fro_norm_sqr).sum::<f64>() + g.q * g.q;
                alpha = 1.0 / gn.sqrt().max(1e-300);
            }
            alpha = alpha.clamp(1e-16, 1e12);
            let reference = recent.iter().copied().fold(f, f64::max);
            let mut accepted = None;
            for _ in 0..MAX_HALVINGS {
                let cand = self.step(&p, &g, alpha);
                let dx: Vec<CMat> = cand.x.iter().zip(&p.x).map(|(a, b)| a - b).collect();
                let decrease = dot(&g, &dx, cand.q - p.q);
                if let Some(fc) = value(&cand) {
                    if fc <= reference + ARMIJO * decrease && decrease <= 0.0 {
                        accepted = Some((cand, fc));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            iterations += 1;
            match accepted {
                Some((cand, fc)) => {
                    prev = Some((p, g));
                    p = cand;
                    f = fc;
                    if recent.len() == NONMONOTONE_WINDOW {
                        recent.pop_front();
                    }
                    recent.push_back(f);
                    if f < best.1 {
                        best = (p.clone(), f);
                    }
                }
                None => break,
            }
        }
        // The stationarity residual belongs to the last iterate; when the best
        // point is an earlier one it is recomputed there.
        if best.1 < f {
            residual = self.stationarity(&best.0, &gradient(&best.0));
        }
        Descent {
            point: best.0,
            value: best.1,
            residual,
            iterations,
        }
    }

    /// Drives the surrogate rates above the deadline requirement at `q_max`.
    fn phase_one(&self, start: QPoint, opts: &FpOptions) -> (QPoint, f64) {
        let mut start = start;
        start.q = self.q_max;
        let value = |p: &QPoint| self.penalty(&p.x);
        let gradient = |p: &QPoint| QGradient {
            x: self.penalty_gradient(&p.x),
            q: 0.0,
        };
        let out = self.descend(start, &value, &gradient, opts.tol_inner, opts.max_inner, true);
        (out.point, out.value)
    }

    /// One phase-one pass from the current state: returns precoders and the
    /// remaining penalty (zero once every deadline row holds with margin).
    pub(crate) fn restore(&self, state: &FpState, opts: &FpOptions) -> (Vec<CMat>, f64) {
        let (p, penalty) = self.phase_one(self.point(state), opts);
        (self.precoders(&p), penalty)
    }

    /// Shortfall devices (by position) whose surrogate rate misses the requirement at `q_max`.
    fn short_positions(&self, x: &[CMat]) -> Vec<usize> {
        match self.surrogate_rates(x) {
            Some(r) => (0..self.u).filter(|&k| r[k] * self.q_max <= self.need[k]).collect(),
            None => (0..self.u).collect(),
        }
    }

    /// Strictly feasible starting upload time for a point meeting the requirement at `q_max`.
    fn interior_q(&self, x: &[CMat]) -> f64 {
        if !self.q_free {
            return self.q_max;
        }
        let r = self.surrogate_rates(x).unwrap_or_default();
        let lo = r
            .iter()
            .zip(&self.need)
            .map(|(r, n)| n / r)
            .fold(0.0, f64::max);
        0.5 * (lo + self.q_max)
    }
}

fn rates_of(b: &[Vec<f64>]) -> Option<Vec<f64>> {
    b.iter()
        .map(|bk| {
            if bk.iter().all(|&v| v > 0.0) {
                Some(bk.iter().map(|v| v.log2()).sum())
            } else {
                None
            }
        })
        .collect()
}

struct Descent {
    point: QPoint,
    value: f64,
    residual: f64,
    iterations: usize,
}

/// Result of one transmit update.
#[derive(Debug, Clone)]
pub struct QStep {
    pub q: Vec<CMat>,
    /// Upload time of the returned point, seconds.
    pub upload_time: f64,
    /// Unscaled surrogate at the warm start and at the returned point.
    pub surrogate_start: f64,
    pub surrogate_end: f64,
    pub inner_iterations: usize,
    pub residual: f64,
    /// The warm start violated the deadline rows and phase one restored them.
    pub restored: bool,
}

/// Minimizes the transmit surrogate at fixed `V`, `z`, `w`.
///
/// Returns `InnerInfeasible` when no point of the power balls meets the
/// surrogate deadline rows.
pub fn update_q_matrices(state: &FpState, ctx: &FpContext, opts: &FpOptions) -> Result<QStep, BeamformingError> {
    if !(ctx.q_max > 0.0) {
        return Err(BeamformingError::InnerInfeasible {
            devices: ctx.hopeless_devices(),
        });
    }
    let mut sub = QSubproblem::new(state, ctx);
    let warm = sub.point(state);
    let surrogate_start = sub.surrogate(&warm).map_or(f64::INFINITY, |f| f * sub.scale);
    let mut start = warm.clone();
    let mut restored = false;
    start.q = sub.interior_q(&start.x);
    if !sub.strictly_feasible(&start) {
        let (p, penalty) = sub.phase_one(warm.clone(), opts);
        if penalty > 0.0 {
            let devices = sub.short_positions(&p.x).into_iter().map(|k| ctx.devices[k]).collect();
            return Err(BeamformingError::InnerInfeasible { devices });
        }
        start = p;
        start.q = sub.interior_q(&start.x);
        restored = true;
    }

    let mut p = start;
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    for round in 0..opts.barrier_rounds {
        sub.mu = opts.barrier_start * opts.barrier_shrink.powi(round as i32);
        let value = |p: &QPoint| sub.value(p);
        let gradient = |p: &QPoint| sub.gradient(p);
        let out = sub.descend(p, &value, &gradient, opts.tol_inner, opts.max_inner, false);
        trace!(
            "barrier round {round}: mu {:e}, value {:e}, residual {:e}, {} steps",
            sub.mu,
            out.value,
            out.residual,
            out.iterations
        );
        p = out.point;
        iterations += out.iterations;
        residual = out.residual;
    }
    let mut surrogate_end = sub.surrogate(&p).map_or(f64::INFINITY, |f| f * sub.scale);
    if !restored && surrogate_end > surrogate_start {
        p = warm;
        p.q = sub.interior_q(&p.x);
        surrogate_end = surrogate_start;
    }
    Ok(QStep {
        q: sub.precoders(&p),
        upload_time: p.q,
        surrogate_start,
        surrogate_end,
        inner_iterations: iterations,
        residual,
        restored,
    })
}
