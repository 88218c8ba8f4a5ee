//! Seeded generation of cell instances: device and task parameters, pathloss
//! and Rayleigh-faded MIMO channels.
//!
//! Randomness comes from ChaCha20 (a counter-based generator). Device `k`
//! draws from stream `k + 1` of the generator keyed by `seed`, in this order:
//! distance, angle, task size, local CPU frequency, edge CPU frequency, then
//! the `M x N` channel entries in column-major order. Uniform variates are the
//! top 53 bits of a 64-bit output; each complex Gaussian entry uses one
//! Box-Muller pair. A different device count therefore never perturbs the
//! draws of the devices that remain.

use std::fmt::Write as _;
use std::str::FromStr;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::ScenarioError;
use crate::numerics::{CMat, C64};

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    fn sample(&self, u: f64) -> f64 {
        self.lo + (self.hi - self.lo) * u
    }
}

/// Cell parameters. Units are SI except `noise_density` (dBm/Hz).
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub num_devices: usize,
    pub bs_antennas: usize,
    pub md_antennas: usize,
    pub streams: usize,
    pub bandwidth: f64,
    pub noise_density: f64,
    pub cell_radius: f64,
    pub min_distance: f64,
    pub task_bits_range: Range,
    pub tau_max: f64,
    pub p_max: f64,
    pub p_idle: f64,
    pub f_loc_range: Range,
    pub f_c_range: Range,
    pub kappa: f64,
    pub alpha: f64,
    pub lambda_e: f64,
    pub lambda_t: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub numiter: usize,
    pub seed: u64,
    pub intra_stream_interference: bool,
}

/// 1 MB = 8e6 bits.
pub const BITS_PER_MB: f64 = 8e6;

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            num_devices: 4,
            bs_antennas: 16,
            md_antennas: 2,
            streams: 2,
            bandwidth: 10e6,
            noise_density: -175.0,
            cell_radius: 200.0,
            min_distance: 10.0,
            task_bits_range: Range::new(0.8 * BITS_PER_MB, 1.2 * BITS_PER_MB),
            tau_max: 3.0,
            p_max: 0.1,
            p_idle: 0.005,
            f_loc_range: Range::new(0.2e9, 0.5e9),
            f_c_range: Range::new(0.8e9, 1.0e9),
            kappa: 1e-25,
            alpha: 237.5,
            lambda_e: 1.0,
            lambda_t: 0.0,
            gamma: 0.8,
            epsilon: 1e-3,
            numiter: 100,
            seed: 1,
            intra_stream_interference: false,
        }
    }
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::InvalidConfig(msg.into())
}

impl ScenarioConfig {
    /// Checks the structural invariants of the configuration.
    ///
    /// `K d <= M` is not enforced: the device-count sweeps go beyond it and the
    /// beamformer copes with more streams than receive antennas.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.num_devices == 0 {
            return Err(invalid("num_devices must be at least 1"));
        }
        if self.bs_antennas == 0 || self.md_antennas == 0 || self.streams == 0 {
            return Err(invalid("antenna and stream counts must be positive"));
        }
        if self.streams > self.md_antennas {
            return Err(invalid(format!(
                "streams ({}) exceed md_antennas ({})",
                self.streams, self.md_antennas
            )));
        }
        if !(self.bandwidth > 0.0) {
            return Err(invalid("bandwidth must be positive"));
        }
        if !self.noise_density.is_finite() {
            return Err(invalid("noise_density must be finite"));
        }
        if !(self.min_distance > 0.0) || !(self.cell_radius >= self.min_distance) {
            return Err(invalid("need 0 < min_distance <= cell_radius"));
        }
        for (name, r) in [
            ("task_bits_range", self.task_bits_range),
            ("f_loc_range", self.f_loc_range),
            ("f_c_range", self.f_c_range),
        ] {
            if !(r.lo > 0.0) || !(r.hi >= r.lo) || !r.hi.is_finite() {
                return Err(invalid(format!("{name} must satisfy 0 < lo <= hi")));
            }
        }
        for (name, v) in [
            ("tau_max", self.tau_max),
            ("p_max", self.p_max),
            ("p_idle", self.p_idle),
            ("alpha", self.alpha),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(format!("{name} must be positive")));
            }
        }
        for (name, v) in [
            ("kappa", self.kappa),
            ("lambda_e", self.lambda_e),
            ("lambda_t", self.lambda_t),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(invalid(format!("{name} must be nonnegative")));
            }
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(invalid("gamma must lie in [0, 1]"));
        }
        if !(self.epsilon > 0.0) {
            return Err(invalid("epsilon must be positive"));
        }
        if self.numiter == 0 {
            return Err(invalid("numiter must be at least 1"));
        }
        Ok(())
    }

    /// Noise power over the full band: `10^((N0 - 30) / 10) * B_W` watts.
    pub fn noise_power(&self) -> f64 {
        10f64.powf((self.noise_density - 30.0) / 10.0) * self.bandwidth
    }

    /// Parses the flat `key = value` format. `#` starts a comment; unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ScenarioError::Parse {
                line: line_no,
                message: format!("expected key=value, got `{line}`"),
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|message| ScenarioError::Parse {
                    line: line_no,
                    message,
                })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T, String> {
            v.parse()
                .map_err(|_| format!("cannot parse `{v}` for `{key}`"))
        }
        fn range(key: &str, v: &str) -> Result<Range, String> {
            let (lo, hi) = v
                .split_once(',')
                .ok_or_else(|| format!("`{key}` expects `lo,hi`"))?;
            Ok(Range::new(num(key, lo.trim())?, num(key, hi.trim())?))
        }
        match key {
            "num_devices" => self.num_devices = num(key, value)?,
            "bs_antennas" => self.bs_antennas = num(key, value)?,
            "md_antennas" => self.md_antennas = num(key, value)?,
            "streams" => self.streams = num(key, value)?,
            "bandwidth" => self.bandwidth = num(key, value)?,
            "noise_density" => self.noise_density = num(key, value)?,
            "cell_radius" => self.cell_radius = num(key, value)?,
            "min_distance" => self.min_distance = num(key, value)?,
            "task_bits_range" => self.task_bits_range = range(key, value)?,
            "tau_max" => self.tau_max = num(key, value)?,
            "p_max" => self.p_max = num(key, value)?,
            "p_idle" => self.p_idle = num(key, value)?,
            "f_loc_range" => self.f_loc_range = range(key, value)?,
            "f_c_range" => self.f_c_range = range(key, value)?,
            "kappa" => self.kappa = num(key, value)?,
            "alpha" => self.alpha = num(key, value)?,
            "lambda_e" => self.lambda_e = num(key, value)?,
            "lambda_t" => self.lambda_t = num(key, value)?,
            "gamma" => self.gamma = num(key, value)?,
            "epsilon" => self.epsilon = num(key, value)?,
            "numiter" => self.numiter = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "intra_stream_interference" => {
                self.intra_stream_interference = match value {
                    "true" | "1" | "on" => true,
                    "false" | "0" | "off" => false,
                    _ => return Err(format!("`{key}` expects true/false")),
                }
            }
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Serializes to the same flat format `parse` reads.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let r = |r: Range| format!("{:e},{:e}", r.lo, r.hi);
        let _ = writeln!(s, "num_devices = {}", self.num_devices);
        let _ = writeln!(s, "bs_antennas = {}", self.bs_antennas);
        let _ = writeln!(s, "md_antennas = {}", self.md_antennas);
        let _ = writeln!(s, "streams = {}", self.streams);
        let _ = writeln!(s, "bandwidth = {:e}", self.bandwidth);
        let _ = writeln!(s, "noise_density = {}", self.noise_density);
        let _ = writeln!(s, "cell_radius = {}", self.cell_radius);
        let _ = writeln!(s, "min_distance = {}", self.min_distance);
        let _ = writeln!(s, "task_bits_range = {}", r(self.task_bits_range));
        let _ = writeln!(s, "tau_max = {}", self.tau_max);
        let _ = writeln!(s, "p_max = {}", self.p_max);
        let _ = writeln!(s, "p_idle = {}", self.p_idle);
        let _ = writeln!(s, "f_loc_range = {}", r(self.f_loc_range));
        let _ = writeln!(s, "f_c_range = {}", r(self.f_c_range));
        let _ = writeln!(s, "kappa = {:e}", self.kappa);
        let _ = writeln!(s, "alpha = {}", self.alpha);
        let _ = writeln!(s, "lambda_e = {}", self.lambda_e);
        let _ = writeln!(s, "lambda_t = {}", self.lambda_t);
        let _ = writeln!(s, "gamma = {}", self.gamma);
        let _ = writeln!(s, "epsilon = {:e}", self.epsilon);
        let _ = writeln!(s, "numiter = {}", self.numiter);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(
            s,
            "intra_stream_interference = {}",
            self.intra_stream_interference
        );
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobileDevice {
    pub index: usize,
    pub task_bits: f64,
    pub tau_max: f64,
    pub f_loc: f64,
    pub f_c: f64,
    pub p_idle: f64,
    pub p_max: f64,
    pub distance: f64,
    pub lambda_e: f64,
    pub lambda_t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// `H_k`, one `M x N` matrix per device.
    pub h: Vec<CMat>,
    pub noise_power: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub devices: Vec<MobileDevice>,
    pub channels: ChannelSet,
}

impl Scenario {
    pub fn num_devices(&self) -> usize {
        self.devices.len()
    }

    /// CPU cycles of device `k`'s task, `alpha * B_k`.
    pub fn cycles(&self, k: usize) -> f64 {
        self.config.alpha * self.devices[k].task_bits
    }

    /// Edge execution time `T_c,k = C_k / f_c,k`.
    pub fn edge_time(&self, k: usize) -> f64 {
        self.cycles(k) / self.devices[k].f_c
    }

    /// Same cell with every device reduced to its first transmit antenna and one stream.
    pub fn single_antenna(&self) -> Scenario {
        let mut config = self.config.clone();
        config.md_antennas = 1;
        config.streams = 1;
        let h = self
            .channels
            .h
            .iter()
            .map(|hk| hk.columns(0, 1).into_owned())
            .collect();
        Scenario {
            config,
            devices: self.devices.clone(),
            channels: ChannelSet {
                h,
                noise_power: self.channels.noise_power,
            },
        }
    }
}

/// 3GPP macro-cell pathloss, `128.1 + 37.6 log10(d / 1 km)` dB.
pub fn pathloss_db(distance: f64) -> f64 {
    128.1 + 37.6 * (distance / 1000.0).log10()
}

/// Linear power gain of the pathloss at `distance` metres.
pub fn pathloss_linear(distance: f64, min_distance: f64) -> Result<f64, ScenarioError> {
    if !(distance >= min_distance) {
        return Err(ScenarioError::DistanceTooSmall {
            distance,
            min_distance,
        });
    }
    Ok(10f64.powf(-pathloss_db(distance) / 10.0))
}

/// Uniform and Gaussian draws on top of one ChaCha20 stream.
pub struct DeviceRng {
    inner: ChaCha20Rng,
}

impl DeviceRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Circularly-symmetric complex Gaussian with unit variance (Box-Muller).
    pub fn complex_gaussian(&mut self) -> C64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt() * std::f64::consts::FRAC_1_SQRT_2;
        let theta = 2.0 * std::f64::consts::PI * u2;
        C64::new(r * theta.cos(), r * theta.sin())
    }
}

/// Draws one cell instance. Identical configs give bit-identical scenarios.
pub fn generate_scenario(config: &ScenarioConfig) -> Result<Scenario, ScenarioError> {
    config.validate()?;
    let (m, n) = (config.bs_antennas, config.md_antennas);
    let mut devices = Vec::with_capacity(config.num_devices);
    let mut h = Vec::with_capacity(config.num_devices);
    for k in 0..config.num_devices {
        let mut rng = DeviceRng::new(config.seed, k as u64 + 1);
        let distance = Range::new(config.min_distance, config.cell_radius).sample(rng.uniform());
        let _angle = 2.0 * std::f64::consts::PI * rng.uniform();
        let task_bits = config.task_bits_range.sample(rng.uniform());
        let f_loc = config.f_loc_range.sample(rng.uniform());
        let f_c = config.f_c_range.sample(rng.uniform());
        let gain = pathloss_linear(distance, config.min_distance)?.sqrt();
        let mut hk = CMat::zeros(m, n);
        for col in 0..n {
            for row in 0..m {
                hk[(row, col)] = rng.complex_gaussian() * gain;
            }
        }
        devices.push(MobileDevice {
            index: k,
            task_bits,
            tau_max: config.tau_max,
            f_loc,
            f_c,
            p_idle: config.p_idle,
            p_max: config.p_max,
            distance,
            lambda_e: config.lambda_e,
            lambda_t: config.lambda_t,
        });
        h.push(hk);
    }
    Ok(Scenario {
        config: config.clone(),
        devices,
        channels: ChannelSet {
            h,
            noise_power: config.noise_power(),
        },
    })
}
