//! Rates, energies, delays and the weighted cost of a cell configuration.

use crate::error::ModelError;
use crate::numerics::{fro_norm_sqr, top_singular, CMat, CVec};
use crate::scenario::{ChannelSet, MobileDevice, Scenario};

/// Binary offloading decision plus the relaxed scores it was rounded from.
#[derive(Debug, Clone, PartialEq)]
pub struct OffloadDecision {
    pub offload: Vec<bool>,
    pub scores: Vec<f64>,
}

impl OffloadDecision {
    pub fn all_local(k: usize) -> Self {
        Self {
            offload: vec![false; k],
            scores: vec![0.0; k],
        }
    }

    pub fn from_bits(offload: Vec<bool>) -> Self {
        let scores = offload.iter().map(|&c| if c { 1.0 } else { 0.0 }).collect();
        Self { offload, scores }
    }

    /// Indices of offloading devices, ascending.
    pub fn offload_set(&self) -> Vec<usize> {
        self.offload
            .iter()
            .enumerate()
            .filter_map(|(k, &c)| c.then_some(k))
            .collect()
    }

    pub fn num_offloaders(&self) -> usize {
        self.offload.iter().filter(|&&c| c).count()
    }
}

/// Transmit (`N x d`) and receive (`M x d`) beamformers of the offloading devices.
///
/// `q[i]` and `v[i]` belong to device `devices[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Beamformers {
    pub devices: Vec<usize>,
    pub q: Vec<CMat>,
    pub v: Vec<CMat>,
}

impl Beamformers {
    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    pub fn streams(&self) -> usize {
        self.q.first().map_or(0, |q| q.ncols())
    }

    pub fn position(&self, device: usize) -> Option<usize> {
        self.devices.iter().position(|&d| d == device)
    }

    /// Transmit power `||Q_k||_F^2` of the device at position `pos`.
    pub fn power(&self, pos: usize) -> f64 {
        fro_norm_sqr(&self.q[pos])
    }

    /// `H_i Q_i` for every offloader, the effective per-stream channels.
    pub fn effective_channels(&self, channels: &ChannelSet) -> Vec<CMat> {
        self.devices
            .iter()
            .zip(&self.q)
            .map(|(&k, q)| &channels.h[k] * q)
            .collect()
    }
}

/// Interference-plus-noise power seen by receive vector `v` of stream `(pos, l)`.
pub(crate) fn interference_power(
    pos: usize,
    l: usize,
    v: &CVec,
    hq: &[CMat],
    noise_power: f64,
    include_intra: bool,
) -> f64 {
    let mut total = noise_power * v.norm_squared();
    for (i, hqi) in hq.iter().enumerate() {
        for j in 0..hqi.ncols() {
            if i == pos && (!include_intra || j == l) {
                continue;
            }
            total += v.dotc(&hqi.column(j)).norm_sqr();
        }
    }
    total
}

/// SINR of stream `l` of the device at position `pos` in `beams`.
pub fn stream_sinr(
    pos: usize,
    l: usize,
    beams: &Beamformers,
    channels: &ChannelSet,
    include_intra: bool,
) -> Result<f64, ModelError> {
    let hq = beams.effective_channels(channels);
    stream_sinr_with(pos, l, beams, &hq, channels.noise_power, include_intra)
}

fn stream_sinr_with(
    pos: usize,
    l: usize,
    beams: &Beamformers,
    hq: &[CMat],
    noise_power: f64,
    include_intra: bool,
) -> Result<f64, ModelError> {
    let v: CVec = beams.v[pos].column(l).into_owned();
    if v.norm_squared() == 0.0 {
        return Err(ModelError::ZeroReceiveVector {
            device: beams.devices[pos],
            stream: l,
        });
    }
    let signal = v.dotc(&hq[pos].column(l)).norm_sqr();
    let denom = interference_power(pos, l, &v, hq, noise_power, include_intra);
    Ok(signal / denom)
}

/// `R_k = sum_l B_W log2(1 + SINR_l)` for the device at position `pos`.
pub fn rate(
    pos: usize,
    beams: &Beamformers,
    channels: &ChannelSet,
    bandwidth: f64,
    include_intra: bool,
) -> Result<f64, ModelError> {
    let hq = beams.effective_channels(channels);
    rate_with(pos, beams, &hq, channels.noise_power, bandwidth, include_intra)
}

fn rate_with(
    pos: usize,
    beams: &Beamformers,
    hq: &[CMat],
    noise_power: f64,
    bandwidth: f64,
    include_intra: bool,
) -> Result<f64, ModelError> {
    let mut r = 0.0;
    for l in 0..beams.q[pos].ncols() {
        let sinr = stream_sinr_with(pos, l, beams, hq, noise_power, include_intra)?;
        r += bandwidth * (1.0 + sinr).log2();
    }
    Ok(r)
}

/// Rates of all offloaders, aligned with `beams.devices`.
pub fn rates(
    beams: &Beamformers,
    channels: &ChannelSet,
    bandwidth: f64,
    include_intra: bool,
) -> Result<Vec<f64>, ModelError> {
    let hq = beams.effective_channels(channels);
    (0..beams.len())
        .map(|pos| rate_with(pos, beams, &hq, channels.noise_power, bandwidth, include_intra))
        .collect()
}

/// Interference-free rate with equal power `P_max / d` on the top-`d` singular
/// directions of `H_k`. Used to cap rate variables, not as a strict bound.
pub fn rate_upper_bound(h: &CMat, p_max: f64, streams: usize, bandwidth: f64, noise_power: f64) -> f64 {
    let top = top_singular(h, streams);
    top.values
        .iter()
        .map(|s| bandwidth * (1.0 + p_max / streams as f64 * s * s / noise_power).log2())
        .sum()
}

/// Largest rate any `d`-stream design with power `p_max` can reach when
/// streams of the same device do not interfere: all streams on the strongest
/// singular direction with equal power. Valid for either interference model.
pub fn rate_cap(h: &CMat, p_max: f64, streams: usize, bandwidth: f64, noise_power: f64) -> f64 {
    let top = top_singular(h, 1).values[0];
    let d = streams as f64;
    d * bandwidth * (1.0 + p_max / d * top * top / noise_power).log2()
}

/// `(E_loc, T_loc)` of computing the task on the device.
pub fn local_cost(dev: &MobileDevice, alpha: f64, kappa: f64) -> (f64, f64) {
    let cycles = alpha * dev.task_bits;
    (kappa * cycles * dev.f_loc * dev.f_loc, cycles / dev.f_loc)
}

/// `(E_off, T_off)` of offloading device `k` given every offloader's rate.
///
/// `rates[i]` belongs to `offloaders[i]`; transmission delay is the largest
/// `B_i / R_i` over the offloaders because edge processing starts once all
/// uploads have arrived.
pub fn offload_cost(
    k: usize,
    tx_power: f64,
    offloaders: &[usize],
    rates: &[f64],
    scenario: &Scenario,
) -> Result<(f64, f64), ModelError> {
    let pos = offloaders
        .iter()
        .position(|&d| d == k)
        .ok_or(ModelError::NotOffloading { device: k })?;
    let mut wait: f64 = 0.0;
    for (&i, &r) in offloaders.iter().zip(rates) {
        if !(r > 0.0) {
            return Err(ModelError::ZeroRate { device: i });
        }
        wait = wait.max(scenario.devices[i].task_bits / r);
    }
    let dev = &scenario.devices[k];
    let tx_time = dev.task_bits / rates[pos];
    let t_c = scenario.edge_time(k);
    Ok((tx_time * tx_power + dev.p_idle * t_c, wait + t_c))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Local,
    Offload,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceCost {
    pub mode: Mode,
    pub energy: f64,
    pub delay: f64,
}

/// Per-device costs and the aggregates of the weighted objective.
#[derive(Debug, Clone, PartialEq)]
pub struct CostBreakdown {
    pub devices: Vec<DeviceCost>,
    /// `sum_k (lambda_e E_k + lambda_t T_k)`.
    pub total: f64,
    /// Offload-minus-local cost gap per device, excluding transmission.
    pub delta: Vec<f64>,
    /// Cost of running everything locally.
    pub eta: f64,
    /// Transmission-independent part of the cost for this decision.
    pub zeta: f64,
    /// Devices whose delay exceeds their deadline.
    pub delay_violations: Vec<usize>,
}

impl CostBreakdown {
    pub fn total_energy(&self) -> f64 {
        self.devices.iter().map(|d| d.energy).sum()
    }

    pub fn max_delay(&self) -> f64 {
        self.devices.iter().map(|d| d.delay).fold(0.0, f64::max)
    }

    pub fn mean_delay(&self) -> f64 {
        if self.devices.is_empty() {
            return 0.0;
        }
        self.devices.iter().map(|d| d.delay).sum::<f64>() / self.devices.len() as f64
    }

    pub fn num_offloaders(&self) -> usize {
        self.devices.iter().filter(|d| d.mode == Mode::Offload).count()
    }

    pub fn is_feasible(&self) -> bool {
        self.delay_violations.is_empty()
    }
}

/// Uplink of one offloading device as seen by the cost model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UplinkUse {
    /// Own transmission time `B_k / R_k`.
    pub tx_time: f64,
    pub tx_power: f64,
    /// Time until the edge server starts computing.
    pub wait: f64,
}

/// Cost constants that do not depend on the decision.
#[derive(Debug, Clone, PartialEq)]
pub struct CostConstants {
    pub e_loc: Vec<f64>,
    pub t_loc: Vec<f64>,
    pub e_c: Vec<f64>,
    pub t_c: Vec<f64>,
    pub delta: Vec<f64>,
    pub eta: f64,
}

pub fn cost_constants(scenario: &Scenario) -> CostConstants {
    let cfg = &scenario.config;
    let k = scenario.num_devices();
    let mut c = CostConstants {
        e_loc: Vec::with_capacity(k),
        t_loc: Vec::with_capacity(k),
        e_c: Vec::with_capacity(k),
        t_c: Vec::with_capacity(k),
        delta: Vec::with_capacity(k),
        eta: 0.0,
    };
    for (idx, dev) in scenario.devices.iter().enumerate() {
        let (e_loc, t_loc) = local_cost(dev, cfg.alpha, cfg.kappa);
        let t_c = scenario.edge_time(idx);
        let e_c = dev.p_idle * t_c;
        let local = dev.lambda_e * e_loc + dev.lambda_t * t_loc;
        c.delta.push(dev.lambda_e * e_c + dev.lambda_t * t_c - local);
        c.eta += local;
        c.e_loc.push(e_loc);
        c.t_loc.push(t_loc);
        c.e_c.push(e_c);
        c.t_c.push(t_c);
    }
    c
}

/// The single accounting path: every scheme reports costs through here.
///
/// `uplinks[k]` is `Some` exactly for offloading devices.
pub fn assemble_costs(scenario: &Scenario, uplinks: &[Option<UplinkUse>]) -> CostBreakdown {
    let consts = cost_constants(scenario);
    let mut devices = Vec::with_capacity(uplinks.len());
    let mut total = 0.0;
    let mut zeta = 0.0;
    let mut delay_violations = Vec::new();
    for (k, (dev, up)) in scenario.devices.iter().zip(uplinks).enumerate() {
        let cost = match up {
            None => {
                zeta += dev.lambda_e * consts.e_loc[k] + dev.lambda_t * consts.t_loc[k];
                DeviceCost {
                    mode: Mode::Local,
                    energy: consts.e_loc[k],
                    delay: consts.t_loc[k],
                }
            }
            Some(u) => {
                zeta += dev.lambda_e * consts.e_c[k] + dev.lambda_t * consts.t_c[k];
                DeviceCost {
                    mode: Mode::Offload,
                    energy: u.tx_time * u.tx_power + consts.e_c[k],
                    delay: u.wait + consts.t_c[k],
                }
            }
        };
        total += dev.lambda_e * cost.energy + dev.lambda_t * cost.delay;
        if cost.delay > dev.tau_max + 1e-9 {
            delay_violations.push(k);
        }
        devices.push(cost);
    }
    CostBreakdown {
        devices,
        total,
        delta: consts.delta,
        eta: consts.eta,
        zeta,
        delay_violations,
    }
}

/// Costs of `decision` with beamformers `beams` (which must cover exactly the offloaders).
pub fn total_cost(
    scenario: &Scenario,
    decision: &OffloadDecision,
    beams: &Beamformers,
) -> Result<CostBreakdown, ModelError> {
    let offloaders = decision.offload_set();
    for &k in &offloaders {
        if beams.position(k).is_none() {
            return Err(ModelError::NotOffloading { device: k });
        }
    }
    let cfg = &scenario.config;
    let r = rates(beams, &scenario.channels, cfg.bandwidth, cfg.intra_stream_interference)?;
    let mut wait: f64 = 0.0;
    for (&k, &rk) in beams.devices.iter().zip(&r) {
        if decision.offload[k] {
            if !(rk > 0.0) {
                return Err(ModelError::ZeroRate { device: k });
            }
            wait = wait.max(scenario.devices[k].task_bits / rk);
        }
    }
    let uplinks: Vec<Option<UplinkUse>> = (0..scenario.num_devices())
        .map(|k| {
            if !decision.offload[k] {
                return None;
            }
            let pos = beams.position(k).expect("checked above");
            Some(UplinkUse {
                tx_time: scenario.devices[k].task_bits / r[pos],
                tx_power: beams.power(pos),
                wait,
            })
        })
        .collect();
    Ok(assemble_costs(scenario, &uplinks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::C64;
    use crate::scenario::{generate_scenario, ScenarioConfig};

    fn scalar_setup(h: f64, q: f64, v: f64, sigma2: f64) -> (Beamformers, ChannelSet) {
        let beams = Beamformers {
            devices: vec![0],
            q: vec![CMat::from_element(1, 1, C64::new(q, 0.0))],
            v: vec![CMat::from_element(1, 1, C64::new(v, 0.0))],
        };
        let ch = ChannelSet {
            h: vec![CMat::from_element(1, 1, C64::new(h, 0.0))],
            noise_power: sigma2,
        };
        (beams, ch)
    }

    #[test]
    fn scalar_sinr_and_rate() {
        let (beams, ch) = scalar_setup(1.0, 1.0, 1.0, 1.0);
        assert_eq!(stream_sinr(0, 0, &beams, &ch, false).unwrap(), 1.0);
        assert_eq!(rate(0, &beams, &ch, 1e7, false).unwrap(), 1e7);
        let (beams, ch) = scalar_setup(1.0, 0.0, 1.0, 1.0);
        assert_eq!(stream_sinr(0, 0, &beams, &ch, false).unwrap(), 0.0);
        assert_eq!(rate(0, &beams, &ch, 1e7, false).unwrap(), 0.0);
    }

    #[test]
    fn zero_receive_vector_is_an_error() {
        let (beams, ch) = scalar_setup(1.0, 1.0, 0.0, 1.0);
        assert_eq!(
            stream_sinr(0, 0, &beams, &ch, false),
            Err(ModelError::ZeroReceiveVector {
                device: 0,
                stream: 0
            })
        );
    }

    fn random_beams(s: &Scenario, seed: u64) -> Beamformers {
        let mut rng = crate::scenario::DeviceRng::new(seed, 0);
        let (m, n, d) = (s.config.bs_antennas, s.config.md_antennas, s.config.streams);
        let devices: Vec<usize> = (0..s.num_devices()).collect();
        let q = devices
            .iter()
            .map(|_| CMat::from_fn(n, d, |_, _| rng.complex_gaussian() * 0.1))
            .collect();
        let v = devices
            .iter()
            .map(|_| CMat::from_fn(m, d, |_, _| rng.complex_gaussian()))
            .collect();
        Beamformers { devices, q, v }
    }

    /// Direct evaluation of the received-signal decomposition, term by term.
    fn sinr_by_loops(s: &Scenario, b: &Beamformers, pos: usize, l: usize) -> f64 {
        let (m, n) = (s.config.bs_antennas, s.config.md_antennas);
        let proj = |dev: usize, qcol: &CMat, j: usize, vcol: &CMat, vl: usize| -> C64 {
            let h = &s.channels.h[dev];
            let mut acc = C64::new(0.0, 0.0);
            for r in 0..m {
                let mut hq = C64::new(0.0, 0.0);
                for c in 0..n {
                    hq += h[(r, c)] * qcol[(c, j)];
                }
                acc += vcol[(r, vl)].conj() * hq;
            }
            acc
        };
        let k = b.devices[pos];
        let signal = proj(k, &b.q[pos], l, &b.v[pos], l).norm_sqr();
        let mut interf = 0.0;
        for (i, &di) in b.devices.iter().enumerate() {
            if i == pos {
                continue;
            }
            for j in 0..b.q[i].ncols() {
                interf += proj(di, &b.q[i], j, &b.v[pos], l).norm_sqr();
            }
        }
        let vnorm: f64 = (0..m).map(|r| b.v[pos][(r, l)].norm_sqr()).sum();
        signal / (interf + s.channels.noise_power * vnorm)
    }

    #[test]
    fn sinr_matches_direct_loop_evaluation() {
        let cfg = ScenarioConfig {
            num_devices: 2,
            bs_antennas: 4,
            md_antennas: 2,
            streams: 2,
            seed: 5,
            ..Default::default()
        };
        let s = generate_scenario(&cfg).unwrap();
        let b = random_beams(&s, 17);
        for pos in 0..2 {
            for l in 0..2 {
                let got = stream_sinr(pos, l, &b, &s.channels, false).unwrap();
                let want = sinr_by_loops(&s, &b, pos, l);
                assert!((got / want - 1.0).abs() < 1e-12, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn rate_is_invariant_to_receive_scaling() {
        let s = generate_scenario(&ScenarioConfig::default()).unwrap();
        let b = random_beams(&s, 3);
        let base = rates(&b, &s.channels, 1e7, false).unwrap();
        let mut scaled = b.clone();
        for v in &mut scaled.v {
            for mut col in v.column_iter_mut() {
                col *= C64::new(-2.5, 0.7);
            }
        }
        let after = rates(&scaled, &s.channels, 1e7, false).unwrap();
        for (a, b) in base.iter().zip(&after) {
            assert!((a / b - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rate_drops_when_interferer_power_grows() {
        let s = generate_scenario(&ScenarioConfig::default()).unwrap();
        let b = random_beams(&s, 8);
        let base = rates(&b, &s.channels, 1e7, false).unwrap();
        let mut louder = b.clone();
        louder.q[1] *= C64::new(1.5, 0.0);
        let after = rates(&louder, &s.channels, 1e7, false).unwrap();
        for pos in [0, 2, 3] {
            assert!(after[pos] <= base[pos]);
        }
    }

    #[test]
    fn zero_transmit_gives_zero_rate() {
        let s = generate_scenario(&ScenarioConfig::default()).unwrap();
        let mut b = random_beams(&s, 4);
        for q in &mut b.q {
            q.fill(C64::new(0.0, 0.0));
        }
        for r in rates(&b, &s.channels, 1e7, false).unwrap() {
            assert_eq!(r, 0.0);
        }
    }

    #[test]
    fn local_cost_formulas() {
        let dev = MobileDevice {
            index: 0,
            task_bits: 1e6,
            tau_max: 3.0,
            f_loc: 0.5e9,
            f_c: 1e9,
            p_idle: 0.005,
            p_max: 0.1,
            distance: 50.0,
            lambda_e: 1.0,
            lambda_t: 0.0,
        };
        let (e, t) = local_cost(&dev, 237.5, 1e-25);
        assert!((e - 5.9375).abs() < 1e-12);
        assert!((t - 0.475).abs() < 1e-15);
        assert_eq!(local_cost(&dev, 237.5, 0.0).0, 0.0);
        let fast = MobileDevice {
            f_loc: 1e9,
            ..dev.clone()
        };
        let (e2, t2) = local_cost(&fast, 237.5, 1e-25);
        assert!((e2 / e - 4.0).abs() < 1e-12);
        assert!((t2 / t - 0.5).abs() < 1e-12);
    }

    fn one_device_scenario(bits: f64) -> Scenario {
        let cfg = ScenarioConfig {
            num_devices: 1,
            bs_antennas: 1,
            md_antennas: 1,
            streams: 1,
            ..Default::default()
        };
        let mut s = generate_scenario(&cfg).unwrap();
        s.devices[0].task_bits = bits;
        s.devices[0].f_c = 1e9;
        s.devices[0].p_idle = 0.005;
        s
    }

    #[test]
    fn offload_cost_single_device() {
        // alpha * 1e6 bits = 2.375e8 cycles.
        let s = one_device_scenario(1e6);
        let (e, t) = offload_cost(0, 0.1, &[0], &[1e6 / 1.0], &s).unwrap();
        assert!((t - (1.0 + 0.2375)).abs() < 1e-12);
        assert!((e - (0.1 + 0.0011875)).abs() < 1e-12);
    }

    #[test]
    fn offload_delay_uses_slowest_upload() {
        let mut s = generate_scenario(&ScenarioConfig {
            num_devices: 2,
            ..Default::default()
        })
        .unwrap();
        s.devices[0].task_bits = 1e6;
        s.devices[1].task_bits = 4e6;
        let rates = [1e6, 1e6];
        let (_, t0) = offload_cost(0, 0.1, &[0, 1], &rates, &s).unwrap();
        let (_, t1) = offload_cost(1, 0.1, &[0, 1], &rates, &s).unwrap();
        assert!((t0 - s.edge_time(0) - 4.0).abs() < 1e-12);
        assert!((t1 - s.edge_time(1) - 4.0).abs() < 1e-12);
        assert_eq!(
            offload_cost(0, 0.1, &[0, 1], &[1e6, 0.0], &s),
            Err(ModelError::ZeroRate { device: 1 })
        );
    }

    #[test]
    fn all_local_cost_equals_eta() {
        let s = generate_scenario(&ScenarioConfig {
            num_devices: 5,
            lambda_t: 0.3,
            ..Default::default()
        })
        .unwrap();
        let empty = Beamformers {
            devices: vec![],
            q: vec![],
            v: vec![],
        };
        let c = total_cost(&s, &OffloadDecision::all_local(5), &empty).unwrap();
        assert_eq!(c.total - c.eta, 0.0);
        assert_eq!(c.zeta, c.eta);
    }

    #[test]
    fn energy_only_weights_sum_energies() {
        let s = generate_scenario(&ScenarioConfig::default()).unwrap();
        let b = random_beams(&s, 21);
        let d = OffloadDecision::from_bits(vec![true; 4]);
        let c = total_cost(&s, &d, &b).unwrap();
        assert!((c.total - c.total_energy()).abs() < 1e-12 * c.total.abs());
    }

    /// Independent evaluation of the per-device energy/delay mixing.
    #[test]
    fn total_cost_matches_direct_formulas() {
        let s = generate_scenario(&ScenarioConfig {
            num_devices: 3,
            lambda_t: 0.5,
            seed: 9,
            ..Default::default()
        })
        .unwrap();
        let mut b = random_beams(&s, 6);
        b.devices = vec![0, 2];
        b.q.truncate(2);
        b.v.truncate(2);
        let d = OffloadDecision::from_bits(vec![true, false, true]);
        let c = total_cost(&s, &d, &b).unwrap();

        let r: Vec<f64> = (0..2)
            .map(|pos| {
                (0..2)
                    .map(|l| 1e7 * (1.0 + sinr_by_loops(&s, &b, pos, l)).log2())
                    .sum()
            })
            .collect();
        let t_tran = (s.devices[0].task_bits / r[0]).max(s.devices[2].task_bits / r[1]);
        let mut want = 0.0;
        for k in 0..3 {
            let dev = &s.devices[k];
            let cyc = s.config.alpha * dev.task_bits;
            let (e, t) = if d.offload[k] {
                let pos = if k == 0 { 0 } else { 1 };
                let p = fro_norm_sqr(&b.q[pos]);
                (
                    dev.task_bits / r[pos] * p + dev.p_idle * cyc / dev.f_c,
                    t_tran + cyc / dev.f_c,
                )
            } else {
                (s.config.kappa * cyc * dev.f_loc * dev.f_loc, cyc / dev.f_loc)
            };
            assert!((c.devices[k].energy / e - 1.0).abs() < 1e-12);
            assert!((c.devices[k].delay / t - 1.0).abs() < 1e-12);
            want += dev.lambda_e * e + dev.lambda_t * t;
        }
        assert!((c.total / want - 1.0).abs() < 1e-12);
    }

    #[test]
    fn upper_bound_reference_cases() {
        let h = CMat::from_element(1, 1, C64::new(1.0, 0.0));
        // SNR = P_max |h|^2 / sigma^2 = 1.
        assert!((rate_upper_bound(&h, 2.0, 1, 1e7, 2.0) - 1e7).abs() < 1e-6);
        let zero = CMat::zeros(4, 2);
        assert_eq!(rate_upper_bound(&zero, 0.1, 2, 1e7, 1e-14), 0.0);
    }

    #[test]
    fn upper_bound_dominates_random_single_user_designs() {
        let s = generate_scenario(&ScenarioConfig {
            num_devices: 3,
            seed: 12,
            ..Default::default()
        })
        .unwrap();
        let cfg = &s.config;
        let mut rng = crate::scenario::DeviceRng::new(77, 0);
        for k in 0..3 {
            let bound = rate_upper_bound(&s.channels.h[k], cfg.p_max, cfg.streams, cfg.bandwidth, s.channels.noise_power);
            for _ in 0..1000 {
                let mut q = CMat::from_fn(cfg.md_antennas, cfg.streams, |_, _| rng.complex_gaussian());
                let scale = (cfg.p_max * rng.uniform() / fro_norm_sqr(&q)).sqrt();
                q *= C64::new(scale, 0.0);
                // MMSE receiver per stream, own other stream treated as interference.
                let hq = &s.channels.h[k] * &q;
                let m = cfg.bs_antennas;
                let mut v = CMat::zeros(m, cfg.streams);
                for l in 0..cfg.streams {
                    let mut a = CMat::identity(m, m) * C64::new(s.channels.noise_power, 0.0);
                    for j in 0..cfg.streams {
                        if j != l {
                            a += hq.column(j) * hq.column(j).adjoint();
                        }
                    }
                    let col = crate::numerics::solve_hpd_system(&a, &hq.column(l).into_owned()).unwrap();
                    v.set_column(l, &col);
                }
                let b = Beamformers {
                    devices: vec![k],
                    q: vec![q],
                    v: vec![v],
                };
                let r = rate(0, &b, &s.channels, cfg.bandwidth, true).unwrap();
                assert!(r <= bound * (1.0 + 1e-12), "{r} > {bound}");
            }
        }
    }

    #[test]
    fn cap_dominates_upper_bound_and_aligned_designs() {
        let s = generate_scenario(&ScenarioConfig {
            num_devices: 2,
            seed: 4,
            ..Default::default()
        })
        .unwrap();
        let cfg = &s.config;
        let sigma2 = s.channels.noise_power;
        for k in 0..2 {
            let h = &s.channels.h[k];
            let cap = rate_cap(h, cfg.p_max, 2, cfg.bandwidth, sigma2);
            assert!(cap >= rate_upper_bound(h, cfg.p_max, 2, cfg.bandwidth, sigma2));
            // Both streams on the top direction reach the cap exactly.
            let top = top_singular(h, 1);
            let dir = top.right.column(0).into_owned() * C64::new((cfg.p_max / 2.0).sqrt(), 0.0);
            let q = CMat::from_columns(&[dir.clone(), dir]);
            let hq = h * &q;
            let b = Beamformers {
                devices: vec![k],
                q: vec![q],
                v: vec![hq],
            };
            let r = rate(0, &b, &s.channels, cfg.bandwidth, false).unwrap();
            assert!((r / cap - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mixing_matches_mode() {
        let s = generate_scenario(&ScenarioConfig::default()).unwrap();
        let b = random_beams(&s, 2);
        let mut part = b.clone();
        part.devices = vec![1, 3];
        part.q = vec![b.q[1].clone(), b.q[3].clone()];
        part.v = vec![b.v[1].clone(), b.v[3].clone()];
        let d = OffloadDecision::from_bits(vec![false, true, false, true]);
        let c = total_cost(&s, &d, &part).unwrap();
        let consts = cost_constants(&s);
        for k in [0, 2] {
            assert_eq!(c.devices[k].mode, Mode::Local);
            assert_eq!(c.devices[k].energy, consts.e_loc[k]);
            assert_eq!(c.devices[k].delay, consts.t_loc[k]);
        }
        for k in [1, 3] {
            assert_eq!(c.devices[k].mode, Mode::Offload);
        }
    }
}
