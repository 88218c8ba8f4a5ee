use crate::error::{BeamformingError, ModelError};
use crate::numerics::{solve_hpd_system, top_singular, CMat, CVec, C64};
use crate::scenario::{MobileDevice, Scenario};
use crate::system_model::{interference_power, rates, Beamformers};

/// The offloading set of one cell together with the deadline budget it leaves
/// for uploads.
#[derive(Debug, Clone)]
pub struct FpContext<'a> {
    pub scenario: &'a Scenario,
    pub devices: Vec<usize>,
    /// Largest common upload time meeting every deadline, `min_k (tau_k - T_c,k)`.
    pub q_max: f64,
}

impl<'a> FpContext<'a> {
    pub fn new(scenario: &'a Scenario, offload_set: &[usize]) -> Result<Self, BeamformingError> {
        if offload_set.is_empty() {
            return Err(BeamformingError::EmptyOffloadSet);
        }
        let q_max = offload_set
            .iter()
            .map(|&k| scenario.devices[k].tau_max - scenario.edge_time(k))
            .fold(f64::INFINITY, f64::min);
        Ok(Self {
            scenario,
            devices: offload_set.to_vec(),
            q_max,
        })
    }

    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    pub fn h(&self, pos: usize) -> &CMat {
        &self.scenario.channels.h[self.devices[pos]]
    }

    pub fn device(&self, pos: usize) -> &MobileDevice {
        &self.scenario.devices[self.devices[pos]]
    }

    pub fn streams(&self) -> usize {
        self.scenario.config.streams
    }

    pub fn bandwidth(&self) -> f64 {
        self.scenario.config.bandwidth
    }

    pub fn noise_power(&self) -> f64 {
        self.scenario.channels.noise_power
    }

    pub fn include_intra(&self) -> bool {
        self.scenario.config.intra_stream_interference
    }

    pub fn lambda_t_sum(&self) -> f64 {
        (0..self.len()).map(|p| self.device(p).lambda_t).sum()
    }

    /// Offloaders whose edge computation alone already misses the deadline.
    pub fn hopeless_devices(&self) -> Vec<usize> {
        self.devices
            .iter()
            .copied()
            .filter(|&k| self.scenario.devices[k].tau_max - self.scenario.edge_time(k) <= 0.0)
            .collect()
    }

    pub fn rates(&self, beams: &Beamformers) -> Result<Vec<f64>, ModelError> {
        rates(beams, &self.scenario.channels, self.bandwidth(), self.include_intra())
    }
}

/// Iterate of the alternating loop.
#[derive(Debug, Clone, PartialEq)]
pub struct FpState {
    pub iteration: usize,
    pub beams: Beamformers,
    /// `z[pos][l]`.
    pub z: Vec<Vec<C64>>,
    pub w: Vec<f64>,
    /// Common upload time, seconds.
    pub q: f64,
    pub history: Vec<f64>,
}

impl FpState {
    /// Sets `z`, `w` and `q` to their closed-form values at the current beamformers.
    pub fn refresh_auxiliaries(&mut self, ctx: &FpContext) -> Result<(), ModelError> {
        update_z(self, ctx)?;
        update_w(self, ctx)?;
        let r = ctx.rates(&self.beams)?;
        self.q = max_upload_time(ctx, &r);
        Ok(())
    }
}

pub(crate) fn max_upload_time(ctx: &FpContext, rates: &[f64]) -> f64 {
    (0..ctx.len())
        .map(|p| ctx.device(p).task_bits / rates[p])
        .fold(0.0, f64::max)
}

/// Equal-power transmission on the strongest singular directions of each
/// channel, received on the matching left singular vectors.
pub fn init_beamformers(ctx: &FpContext) -> FpState {
    let d = ctx.streams();
    let mut q = Vec::with_capacity(ctx.len());
    let mut v = Vec::with_capacity(ctx.len());
    for pos in 0..ctx.len() {
        let top = top_singular(ctx.h(pos), d);
        let amp = (ctx.device(pos).p_max / d as f64).sqrt();
        q.push(&top.right * C64::new(amp, 0.0));
        v.push(top.left);
    }
    let beams = Beamformers {
        devices: ctx.devices.clone(),
        q,
        v,
    };
    let q_time = ctx
        .rates(&beams)
        .map(|r| max_upload_time(ctx, &r))
        .unwrap_or(f64::INFINITY);
    FpState {
        iteration: 0,
        z: vec![vec![C64::new(0.0, 0.0); d]; ctx.len()],
        w: vec![0.0; ctx.len()],
        q: q_time,
        beams,
        history: Vec::new(),
    }
}

/// `z = v^H H q / I` per stream.
pub fn update_z(state: &mut FpState, ctx: &FpContext) -> Result<(), ModelError> {
    let hq = state.beams.effective_channels(&ctx.scenario.channels);
    for pos in 0..ctx.len() {
        for l in 0..ctx.streams() {
            let v: CVec = state.beams.v[pos].column(l).into_owned();
            if v.norm_squared() == 0.0 {
                return Err(ModelError::ZeroReceiveVector {
                    device: ctx.devices[pos],
                    stream: l,
                });
            }
            let i = interference_power(pos, l, &v, &hq, ctx.noise_power(), ctx.include_intra());
            state.z[pos][l] = v.dotc(&hq[pos].column(l)) / i;
        }
    }
    Ok(())
}

/// `w_k = sqrt(lambda_e B_k ||Q_k||^2) / R_k`.
pub fn update_w(state: &mut FpState, ctx: &FpContext) -> Result<(), ModelError> {
    let r = ctx.rates(&state.beams)?;
    for pos in 0..ctx.len() {
        if !(r[pos] > 0.0) {
            return Err(ModelError::ZeroRate {
                device: ctx.devices[pos],
            });
        }
        let dev = ctx.device(pos);
        state.w[pos] = (dev.lambda_e * dev.task_bits * state.beams.power(pos)).sqrt() / r[pos];
    }
    Ok(())
}

/// Per-stream maximizer of the quadratic-transform bracket,
/// `v = A^{-1} H q / z` with `A` the interference-plus-noise covariance.
/// Streams with `z = 0` keep their receiver.
pub fn update_v(state: &mut FpState, ctx: &FpContext) -> Result<(), BeamformingError> {
    let hq = state.beams.effective_channels(&ctx.scenario.channels);
    let m = ctx.scenario.config.bs_antennas;
    let d = ctx.streams();
    for pos in 0..ctx.len() {
        let mut base = CMat::identity(m, m) * C64::new(ctx.noise_power(), 0.0);
        for (i, hqi) in hq.iter().enumerate() {
            if i != pos {
                base += hqi * hqi.adjoint();
            }
        }
        for l in 0..d {
            let z = state.z[pos][l];
            if z == C64::new(0.0, 0.0) {
                continue;
            }
            let mut a = base.clone();
            if ctx.include_intra() {
                for j in (0..d).filter(|&j| j != l) {
                    a += hq[pos].column(j) * hq[pos].column(j).adjoint();
                }
            }
            let target: CVec = hq[pos].column(l).into_owned();
            let v = solve_hpd_system(&a, &target)? / z;
            state.beams.v[pos].set_column(l, &v);
        }
    }
    Ok(())
}

/// `1 + 2 Re{z* v^H H q} - |z|^2 I` for every stream, `[pos][l]`.
pub fn stream_brackets(state: &FpState, ctx: &FpContext) -> Vec<Vec<f64>> {
    let hq = state.beams.effective_channels(&ctx.scenario.channels);
    (0..ctx.len())
        .map(|pos| {
            (0..ctx.streams())
                .map(|l| {
                    let v: CVec = state.beams.v[pos].column(l).into_owned();
                    let z = state.z[pos][l];
                    let signal = v.dotc(&hq[pos].column(l));
                    let i = interference_power(pos, l, &v, &hq, ctx.noise_power(), ctx.include_intra());
                    1.0 + 2.0 * (z.conj() * signal).re - z.norm_sqr() * i
                })
                .collect()
        })
        .collect()
}

/// The twice-transformed surrogate objective at the current state.
pub fn evaluate_fqm(state: &FpState, ctx: &FpContext) -> Result<f64, BeamformingError> {
    let brackets = stream_brackets(state, ctx);
    let mut total = 0.0;
    for pos in 0..ctx.len() {
        let dev = ctx.device(pos);
        let w = state.w[pos];
        let mut xi = 0.0;
        for (l, &b) in brackets[pos].iter().enumerate() {
            if !(b > 0.0) {
                return Err(BeamformingError::DomainViolation {
                    device: ctx.devices[pos],
                    stream: l,
                    value: b,
                });
            }
            xi += w * w * ctx.bandwidth() * b.log2();
        }
        total += 2.0 * w * (dev.lambda_e * dev.task_bits * state.beams.power(pos)).sqrt() + dev.lambda_t * state.q
            - xi;
    }
    Ok(total)
}

/// Transmission part of the cost: `sum_k lambda_e B_k p_k / R_k + sum_k lambda_t max_i B_i / R_i`.
pub fn transmit_cost(ctx: &FpContext, beams: &Beamformers) -> Result<f64, ModelError> {
    let r = ctx.rates(beams)?;
    let mut total = 0.0;
    for pos in 0..ctx.len() {
        if !(r[pos] > 0.0) {
            return Err(ModelError::ZeroRate {
                device: ctx.devices[pos],
            });
        }
        let dev = ctx.device(pos);
        total += dev.lambda_e * dev.task_bits * beams.power(pos) / r[pos];
    }
    Ok(total + ctx.lambda_t_sum() * max_upload_time(ctx, &r))
}
