//! Mixed-integer instances and the two generator families.
//!
//! An instance keeps its binaries first and its continuous variables second.
//! Cloud-RAN beamformers are stored as interleaved real/imaginary pairs:
//! user `k`, RRH `l`, antenna `n` lives at continuous offset
//! `2 * ((k * L + l) * N + n)` (real part) and the next slot (imaginary part).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Absolute feasibility tolerance used by [`evaluate_assignment`].
pub const TOL_FEAS: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

impl Sense {
    /// True when `a` is strictly better than `b` in this sense.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Sense::Minimize => a < b,
            Sense::Maximize => a > b,
        }
    }

    /// +1 for minimization, -1 for maximization.
    pub fn sign(self) -> f64 {
        match self {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    CloudRan,
    ToyMilp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Le,
    Ge,
    Eq,
}

/// `f(a, w) = Σ c_b a_b + Σ c_c w_c + Σ q_c w_c²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub binary_linear: Vec<f64>,
    pub continuous_linear: Vec<f64>,
    pub continuous_quadratic: Vec<f64>,
}

/// Sparse term list over (variable index, coefficient).
pub type Terms = Vec<(usize, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ConstraintSpec {
    /// `Σ binary + Σ continuous  op  rhs`.
    Linear {
        binary: Terms,
        continuous: Terms,
        op: CmpOp,
        rhs: f64,
    },
    /// Per-user SINR requirement in second-order-cone form,
    /// `‖(h^H w_1, …, h^H w_K, σ)‖ ≤ √(1 + 1/γ) |h^H w_target|`.
    ///
    /// `beam_offsets[j]` is the continuous offset of user `j`'s beamformer;
    /// each beamformer has `channel_re.len()` complex entries.
    SinrCone {
        channel_re: Vec<f64>,
        channel_im: Vec<f64>,
        beam_offsets: Vec<usize>,
        target: usize,
        noise_std: f64,
        gamma: f64,
    },
    /// `Σ_{i ∈ group} w_i² ≤ cap · a_binary`.
    PowerCap { group: Vec<usize>, binary: usize, cap: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub id: String,
    pub seed: u64,
    pub family: Family,
    /// Scalar context carried into instance-level features.
    pub context: InstanceContext,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InstanceContext {
    pub rrhs: usize,
    pub users: usize,
    pub sinr_db: f64,
    pub mean_fronthaul_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinlpInstance {
    pub sense: Sense,
    pub num_binary: usize,
    pub num_continuous: usize,
    pub objective: ObjectiveSpec,
    pub constraints: Vec<ConstraintSpec>,
    pub meta: InstanceMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub binaries: Vec<u8>,
    pub continuous: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: usize,
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    pub feasible: bool,
    pub violations: Vec<Violation>,
}

impl MinlpInstance {
    pub fn id(&self) -> &str {
        &self.meta.id
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidInstance(msg));
        if self.num_binary == 0 {
            return bad("at least one binary variable is required".into());
        }
        if self.meta.family == Family::CloudRan && self.sense != Sense::Minimize {
            return bad("Cloud-RAN instances minimize network power".into());
        }
        let obj = &self.objective;
        if obj.binary_linear.len() != self.num_binary
            || obj.continuous_linear.len() != self.num_continuous
            || obj.continuous_quadratic.len() != self.num_continuous
        {
            return bad("objective coefficient lengths do not match variable counts".into());
        }
        if obj.continuous_quadratic.iter().any(|&q| q < 0.0) {
            return bad("quadratic objective coefficients must be nonnegative".into());
        }
        let nb = self.num_binary;
        let nc = self.num_continuous;
        for (ci, c) in self.constraints.iter().enumerate() {
            let ok = match c {
                ConstraintSpec::Linear { binary, continuous, .. } => {
                    binary.iter().all(|&(i, _)| i < nb) && continuous.iter().all(|&(i, _)| i < nc)
                }
                ConstraintSpec::SinrCone {
                    channel_re,
                    channel_im,
                    beam_offsets,
                    target,
                    noise_std,
                    gamma,
                } => {
                    let m = channel_re.len();
                    channel_im.len() == m
                        && *target < beam_offsets.len()
                        && beam_offsets.iter().all(|&o| o + 2 * m <= nc)
                        && *noise_std > 0.0
                        && *gamma > 0.0
                }
                ConstraintSpec::PowerCap { group, binary, cap } => {
                    *binary < nb && group.iter().all(|&i| i < nc) && *cap >= 0.0
                }
            };
            if !ok {
                return bad(format!(
                    "constraint {ci} references an out-of-range variable or has invalid data"
                ));
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, binaries: &[f64], continuous: &[f64]) -> f64 {
        let obj = &self.objective;
        let mut v = 0.0;
        for (c, a) in obj.binary_linear.iter().zip(binaries) {
            v += c * a;
        }
        for ((c, q), w) in obj
            .continuous_linear
            .iter()
            .zip(&obj.continuous_quadratic)
            .zip(continuous)
        {
            v += c * w + q * w * w;
        }
        v
    }
}

/// Constraint residual at a point with relaxed (real) binaries; positive means violated.
pub fn constraint_violation(c: &ConstraintSpec, binaries: &[f64], continuous: &[f64]) -> f64 {
    match c {
        ConstraintSpec::Linear {
            binary,
            continuous: cont,
            op,
            rhs,
        } => {
            let lhs: f64 = binary.iter().map(|&(i, a)| a * binaries[i]).sum::<f64>()
                + cont.iter().map(|&(i, a)| a * continuous[i]).sum::<f64>();
            match op {
                CmpOp::Le => lhs - rhs,
                CmpOp::Ge => rhs - lhs,
                CmpOp::Eq => (lhs - rhs).abs(),
            }
        }
        ConstraintSpec::SinrCone {
            channel_re,
            channel_im,
            beam_offsets,
            target,
            noise_std,
            gamma,
        } => {
            // Evaluated with the channel scaled by 1/σ so the noise entry is 1.
            let mut sq = 1.0;
            let mut desired = 0.0;
            for (j, &off) in beam_offsets.iter().enumerate() {
                let (re, im) = inner_conj(channel_re, channel_im, &continuous[off..off + 2 * channel_re.len()]);
                let (re, im) = (re / noise_std, im / noise_std);
                let mag2 = re * re + im * im;
                sq += mag2;
                if j == *target {
                    desired = mag2.sqrt();
                }
            }
            sq.sqrt() - (1.0 + 1.0 / gamma).sqrt() * desired
        }
        ConstraintSpec::PowerCap { group, binary, cap } => {
            let p: f64 = group.iter().map(|&i| continuous[i] * continuous[i]).sum();
            p - cap * binaries[*binary]
        }
    }
}

/// `h^H w` for a channel and an interleaved beamformer slice.
pub fn inner_conj(h_re: &[f64], h_im: &[f64], w: &[f64]) -> (f64, f64) {
    let mut re = 0.0;
    let mut im = 0.0;
    for i in 0..h_re.len() {
        let (wr, wi) = (w[2 * i], w[2 * i + 1]);
        // conj(h) * w
        re += h_re[i] * wr + h_im[i] * wi;
        im += h_re[i] * wi - h_im[i] * wr;
    }
    (re, im)
}

pub fn evaluate_assignment(instance: &MinlpInstance, x: &Assignment) -> Result<Evaluation, ModelError> {
    if x.binaries.len() != instance.num_binary {
        return Err(ModelError::Dimension {
            what: "binaries",
            expected: instance.num_binary,
            got: x.binaries.len(),
        });
    }
    if x.continuous.len() != instance.num_continuous {
        return Err(ModelError::Dimension {
            what: "continuous",
            expected: instance.num_continuous,
            got: x.continuous.len(),
        });
    }
    if let Some(&b) = x.binaries.iter().find(|&&b| b > 1) {
        return Err(ModelError::InvalidInstance(format!("binary value {b} is not 0 or 1")));
    }
    let bins: Vec<f64> = x.binaries.iter().map(|&b| f64::from(b)).collect();
    let objective = instance.objective_value(&bins, &x.continuous);
    let violations: Vec<Violation> = instance
        .constraints
        .iter()
        .enumerate()
        .filter_map(|(i, c)| {
            let amount = constraint_violation(c, &bins, &x.continuous);
            (amount > TOL_FEAS).then_some(Violation { constraint: i, amount })
        })
        .collect();
    Ok(Evaluation {
        objective,
        feasible: violations.is_empty(),
        violations,
    })
}

/// Cloud-RAN network description; all quantities in SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudRanScenario {
    pub rrhs: usize,
    pub users: usize,
    pub antennas: usize,
    pub region_halfwidth: f64,
    pub rrh_positions: Vec<[f64; 2]>,
    pub user_positions: Vec<[f64; 2]>,
    /// Row-major `users × (rrhs · antennas)`.
    pub channel_re: Vec<f64>,
    pub channel_im: Vec<f64>,
    pub noise_power: f64,
    pub sinr_db: f64,
    pub sinr_target: f64,
    pub fronthaul_powers: Vec<f64>,
    pub per_rrh_power_cap: f64,
    pub amp_efficiency: f64,
}

/// Generator settings. `noise_power`, `per_rrh_power_cap` and
/// `amp_efficiency` default to -104 dBm (10 MHz thermal noise), 1 W and 0.25.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudRanConfig {
    pub rrhs: usize,
    pub users: usize,
    pub antennas: usize,
    pub sinr_db: f64,
    pub fronthaul_powers: Vec<f64>,
    pub region_halfwidth: f64,
    pub noise_power: f64,
    pub per_rrh_power_cap: f64,
    pub amp_efficiency: f64,
}

pub const DEFAULT_NOISE_POWER: f64 = 3.981_071_705_534_969e-14;
pub const DEFAULT_POWER_CAP: f64 = 1.0;
pub const DEFAULT_AMP_EFFICIENCY: f64 = 0.25;
const MIN_DISTANCE_M: f64 = 10.0;

/// `P^c_l = 5 + l` for `l = 1..=rrhs`.
pub fn linear_fronthaul_powers(rrhs: usize) -> Vec<f64> {
    (1..=rrhs).map(|l| 5.0 + l as f64).collect()
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Large-scale gain of the 128.1 + 37.6 log10(d / 1 km) dB pathloss.
pub fn pathloss_amplitude(distance_m: f64) -> f64 {
    let d_km = distance_m.max(MIN_DISTANCE_M) / 1000.0;
    let pl_db = 128.1 + 37.6 * d_km.log10();
    10f64.powf(-pl_db / 20.0)
}

impl CloudRanConfig {
    pub fn new(rrhs: usize, users: usize, antennas: usize, sinr_db: f64) -> Self {
        CloudRanConfig {
            rrhs,
            users,
            antennas,
            sinr_db,
            fronthaul_powers: linear_fronthaul_powers(rrhs),
            region_halfwidth: 1000.0,
            noise_power: DEFAULT_NOISE_POWER,
            per_rrh_power_cap: DEFAULT_POWER_CAP,
            amp_efficiency: DEFAULT_AMP_EFFICIENCY,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidScenario(m.to_string()));
        if self.rrhs == 0 || self.users == 0 || self.antennas == 0 {
            return bad("rrhs, users and antennas must be at least 1");
        }
        if self.fronthaul_powers.len() != self.rrhs {
            return bad("one fronthaul power per RRH is required");
        }
        if self.fronthaul_powers.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return bad("fronthaul powers must be positive");
        }
        if !(self.noise_power > 0.0) {
            return bad("noise power must be positive");
        }
        if !self.sinr_db.is_finite() {
            return bad("target SINR must be finite");
        }
        if !(self.per_rrh_power_cap > 0.0) {
            return bad("per-RRH power cap must be positive");
        }
        if !(self.amp_efficiency > 0.0 && self.amp_efficiency <= 1.0) {
            return bad("amplifier efficiency must lie in (0, 1]");
        }
        if !(self.region_halfwidth > 0.0) {
            return bad("region half-width must be positive");
        }
        Ok(())
    }

    pub fn generate(&self, seed: u64) -> Result<(CloudRanScenario, MinlpInstance), ModelError> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hw = self.region_halfwidth;
        let draw_pos = |rng: &mut ChaCha8Rng| [rng.random_range(-hw..=hw), rng.random_range(-hw..=hw)];
        let rrh_positions: Vec<[f64; 2]> = (0..self.rrhs).map(|_| draw_pos(&mut rng)).collect();
        let user_positions: Vec<[f64; 2]> = (0..self.users).map(|_| draw_pos(&mut rng)).collect();
        let m = self.rrhs * self.antennas;
        let mut channel_re = Vec::with_capacity(self.users * m);
        let mut channel_im = Vec::with_capacity(self.users * m);
        let scale = std::f64::consts::FRAC_1_SQRT_2;
        for u in &user_positions {
            for r in &rrh_positions {
                let amp = pathloss_amplitude(((u[0] - r[0]).powi(2) + (u[1] - r[1]).powi(2)).sqrt());
                for _ in 0..self.antennas {
                    let gr: f64 = rng.sample(StandardNormal);
                    let gi: f64 = rng.sample(StandardNormal);
                    channel_re.push(amp * scale * gr);
                    channel_im.push(amp * scale * gi);
                }
            }
        }
        let scenario = CloudRanScenario {
            rrhs: self.rrhs,
            users: self.users,
            antennas: self.antennas,
            region_halfwidth: hw,
            rrh_positions,
            user_positions,
            channel_re,
            channel_im,
            noise_power: self.noise_power,
            sinr_db: self.sinr_db,
            sinr_target: db_to_linear(self.sinr_db),
            fronthaul_powers: self.fronthaul_powers.clone(),
            per_rrh_power_cap: self.per_rrh_power_cap,
            amp_efficiency: self.amp_efficiency,
        };
        let instance = scenario.to_instance(seed)?;
        Ok((scenario, instance))
    }
}

pub fn gen_cloudran_instance(
    seed: u64,
    rrhs: usize,
    users: usize,
    antennas: usize,
    sinr_db: f64,
    fronthaul_powers: &[f64],
    region_halfwidth: f64,
) -> Result<(CloudRanScenario, MinlpInstance), ModelError> {
    let mut cfg = CloudRanConfig::new(rrhs, users, antennas, sinr_db);
    cfg.fronthaul_powers = fronthaul_powers.to_vec();
    cfg.region_halfwidth = region_halfwidth;
    cfg.generate(seed)
}

impl CloudRanScenario {
    pub fn beam_offset(&self, user: usize) -> usize {
        2 * user * self.rrhs * self.antennas
    }

    /// Continuous indices of every beamformer entry transmitted by `rrh`.
    pub fn rrh_group(&self, rrh: usize) -> Vec<usize> {
        let n = self.antennas;
        let mut g = Vec::with_capacity(2 * n * self.users);
        for k in 0..self.users {
            let base = self.beam_offset(k) + 2 * rrh * n;
            g.extend(base..base + 2 * n);
        }
        g
    }

    /// Encodes: minimize Σ s_l P^c_l + (1/η) Σ_l ‖w_l‖² subject to the SINR
    /// cones and ‖w_l‖² ≤ s_l · cap.
    pub fn to_instance(&self, seed: u64) -> Result<MinlpInstance, ModelError> {
        let l_count = self.rrhs;
        let m = self.rrhs * self.antennas;
        let num_continuous = 2 * m * self.users;
        let quad = 1.0 / self.amp_efficiency;
        let objective = ObjectiveSpec {
            binary_linear: self.fronthaul_powers.clone(),
            continuous_linear: vec![0.0; num_continuous],
            continuous_quadratic: vec![quad; num_continuous],
        };
        let beam_offsets: Vec<usize> = (0..self.users).map(|k| self.beam_offset(k)).collect();
        let noise_std = self.noise_power.sqrt();
        let mut constraints = Vec::with_capacity(self.users + l_count);
        for k in 0..self.users {
            constraints.push(ConstraintSpec::SinrCone {
                channel_re: self.channel_re[k * m..(k + 1) * m].to_vec(),
                channel_im: self.channel_im[k * m..(k + 1) * m].to_vec(),
                beam_offsets: beam_offsets.clone(),
                target: k,
                noise_std,
                gamma: self.sinr_target,
            });
        }
        for l in 0..l_count {
            constraints.push(ConstraintSpec::PowerCap {
                group: self.rrh_group(l),
                binary: l,
                cap: self.per_rrh_power_cap,
            });
        }
        let mean_fronthaul = self.fronthaul_powers.iter().sum::<f64>() / l_count as f64;
        let mut instance = MinlpInstance {
            sense: Sense::Minimize,
            num_binary: l_count,
            num_continuous,
            objective,
            constraints,
            meta: InstanceMeta {
                id: String::new(),
                seed,
                family: Family::CloudRan,
                context: InstanceContext {
                    rrhs: self.rrhs,
                    users: self.users,
                    sinr_db: self.sinr_db,
                    mean_fronthaul_power: mean_fronthaul,
                },
            },
        };
        instance.meta.id = content_id(
            &format!("cran-L{}K{}N{}-s{}", self.rrhs, self.users, self.antennas, seed),
            &instance,
        );
        instance.validate()?;
        Ok(instance)
    }
}

/// Stable id: a readable prefix plus a digest of the instance content.
fn content_id(prefix: &str, instance: &MinlpInstance) -> String {
    let body = serde_json::to_vec(&(
        &instance.sense,
        instance.num_binary,
        instance.num_continuous,
        &instance.objective,
        &instance.constraints,
    ))
    .expect("instance content serializes");
    let digest = Sha256::digest(&body);
    let hex: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
    format!("{prefix}-{hex}")
}

/// Settings for the random toy MILP family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyMilpConfig {
    pub n_int: usize,
    pub n_cons: usize,
    pub n_continuous: usize,
    /// Integer upper bounds are drawn from `1..=max_upper`.
    pub max_upper: u32,
    pub sense: Sense,
}

impl ToyMilpConfig {
    pub fn new(n_int: usize, n_cons: usize) -> Self {
        ToyMilpConfig {
            n_int,
            n_cons,
            n_continuous: 1,
            max_upper: 3,
            sense: Sense::Minimize,
        }
    }

    /// Random bounded MILP. Integers `x_i ∈ {0..U_i}` are encoded with
    /// `⌈log2(U_i + 1)⌉` binaries (`x_i = Σ 2^b a_{i,b}`), plus `x_i ≤ U_i`
    /// when `U_i + 1` is not a power of two. Minimize instances use
    /// nonnegative costs and covering rows; Maximize instances use
    /// nonnegative profits and packing rows. Both are feasible at a corner of
    /// the box and bounded by it.
    pub fn generate(&self, seed: u64) -> Result<MinlpInstance, ModelError> {
        if self.n_int == 0 || self.n_int > 20 {
            return Err(ModelError::InvalidInstance("n_int must lie in 1..=20".into()));
        }
        if self.max_upper == 0 {
            return Err(ModelError::InvalidInstance("max_upper must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x746f_795f_6d69_6c70);
        const CONT_UPPER: f64 = 3.0;
        let uppers: Vec<u32> = (0..self.n_int).map(|_| rng.random_range(1..=self.max_upper)).collect();
        let bits: Vec<usize> = uppers.iter().map(|&u| bits_for(u)).collect();
        let num_binary: usize = bits.iter().sum();
        let mut first_bit = Vec::with_capacity(self.n_int);
        let mut acc = 0;
        for &b in &bits {
            first_bit.push(acc);
            acc += b;
        }
        let nc = self.n_continuous;
        let (int_cost, cont_cost): (Vec<f64>, Vec<f64>) = match self.sense {
            Sense::Minimize => (
                (0..self.n_int).map(|_| round2(rng.random_range(1.0..10.0))).collect(),
                (0..nc).map(|_| round2(rng.random_range(5.0..15.0))).collect(),
            ),
            Sense::Maximize => (
                (0..self.n_int).map(|_| round2(rng.random_range(1.0..10.0))).collect(),
                (0..nc).map(|_| round2(rng.random_range(0.5..4.0))).collect(),
            ),
        };
        let mut binary_linear = vec![0.0; num_binary];
        for i in 0..self.n_int {
            for b in 0..bits[i] {
                binary_linear[first_bit[i] + b] = int_cost[i] * f64::from(1u32 << b);
            }
        }
        let mut constraints = Vec::new();
        for i in 0..self.n_int {
            if (uppers[i] + 1).is_power_of_two() {
                continue;
            }
            constraints.push(ConstraintSpec::Linear {
                binary: (0..bits[i]).map(|b| (first_bit[i] + b, f64::from(1u32 << b))).collect(),
                continuous: vec![],
                op: CmpOp::Le,
                rhs: f64::from(uppers[i]),
            });
        }
        for _ in 0..self.n_cons {
            let a: Vec<f64> = (0..self.n_int).map(|_| round2(rng.random_range(0.0..5.0))).collect();
            let c: Vec<f64> = (0..nc).map(|_| round2(rng.random_range(0.0..2.0))).collect();
            let max_lhs: f64 = a.iter().zip(&uppers).map(|(a, &u)| a * f64::from(u)).sum::<f64>()
                + c.iter().map(|c| c * CONT_UPPER).sum::<f64>();
            let frac = rng.random_range(0.25..0.65);
            let rhs = round2(frac * max_lhs);
            let mut binary = Vec::new();
            for i in 0..self.n_int {
                if a[i] != 0.0 {
                    for b in 0..bits[i] {
                        binary.push((first_bit[i] + b, a[i] * f64::from(1u32 << b)));
                    }
                }
            }
            let continuous: Terms = c
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(j, &v)| (j, v))
                .collect();
            let op = match self.sense {
                Sense::Minimize => CmpOp::Ge,
                Sense::Maximize => CmpOp::Le,
            };
            constraints.push(ConstraintSpec::Linear {
                binary,
                continuous,
                op,
                rhs,
            });
        }
        for j in 0..nc {
            constraints.push(ConstraintSpec::Linear {
                binary: vec![],
                continuous: vec![(j, 1.0)],
                op: CmpOp::Le,
                rhs: CONT_UPPER,
            });
            constraints.push(ConstraintSpec::Linear {
                binary: vec![],
                continuous: vec![(j, 1.0)],
                op: CmpOp::Ge,
                rhs: 0.0,
            });
        }
        let mut instance = MinlpInstance {
            sense: self.sense,
            num_binary,
            num_continuous: nc,
            objective: ObjectiveSpec {
                binary_linear,
                continuous_linear: cont_cost,
                continuous_quadratic: vec![0.0; nc],
            },
            constraints,
            meta: InstanceMeta {
                id: String::new(),
                seed,
                family: Family::ToyMilp,
                context: InstanceContext::default(),
            },
        };
        instance.meta.id = content_id(&format!("toy-i{}c{}-s{}", self.n_int, self.n_cons, seed), &instance);
        instance.validate()?;
        Ok(instance)
    }
}

pub fn gen_toy_milp(seed: u64, n_int: usize, n_cons: usize) -> Result<MinlpInstance, ModelError> {
    ToyMilpConfig::new(n_int, n_cons).generate(seed)
}

fn bits_for(upper: u32) -> usize {
    (32 - upper.leading_zeros()) as usize
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cran() -> (CloudRanScenario, MinlpInstance) {
        gen_cloudran_instance(3, 3, 2, 2, 4.0, &linear_fronthaul_powers(3), 1000.0).unwrap()
    }

    #[test]
    fn fronthaul_schedule_matches_linear_rule() {
        assert_eq!(
            linear_fronthaul_powers(10),
            vec![6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0, 13.0, 14.0, 15.0]
        );
    }

    #[test]
    fn four_db_target() {
        let (s, _) = gen_cloudran_instance(1, 2, 1, 1, 4.0, &[6.0, 7.0], 1000.0).unwrap();
        assert!((s.sinr_target - 2.511_886_431_509_58).abs() < 1e-12);
    }

    #[test]
    fn generator_is_deterministic() {
        let a = small_cran();
        let b = small_cran();
        assert_eq!(serde_json::to_vec(&a.1).unwrap(), serde_json::to_vec(&b.1).unwrap());
        assert_eq!(a.0, b.0);
        let t1 = gen_toy_milp(9, 4, 3).unwrap();
        let t2 = gen_toy_milp(9, 4, 3).unwrap();
        assert_eq!(serde_json::to_vec(&t1).unwrap(), serde_json::to_vec(&t2).unwrap());
        assert_ne!(gen_toy_milp(10, 4, 3).unwrap().meta.id, t1.meta.id);
    }

    #[test]
    fn rejects_bad_fronthaul() {
        let err = gen_cloudran_instance(1, 2, 1, 1, 4.0, &[6.0, 0.0], 1000.0).unwrap_err();
        assert!(matches!(err, ModelError::InvalidScenario(_)));
        let err = gen_cloudran_instance(1, 2, 1, 1, 4.0, &[6.0, -1.0], 1000.0).unwrap_err();
        assert!(matches!(err, ModelError::InvalidScenario(_)));
        let err = gen_cloudran_instance(1, 2, 1, 1, 4.0, &[6.0], 1000.0).unwrap_err();
        assert!(matches!(err, ModelError::InvalidScenario(_)));
    }

    #[test]
    fn positions_inside_region_and_channels_finite() {
        let (s, inst) = small_cran();
        for p in s.rrh_positions.iter().chain(&s.user_positions) {
            assert!(p[0].abs() <= 1000.0 && p[1].abs() <= 1000.0);
        }
        assert!(s.channel_re.iter().chain(&s.channel_im).all(|v| v.is_finite()));
        assert_eq!(inst.sense, Sense::Minimize);
        assert_eq!(inst.num_binary, 3);
        assert_eq!(inst.num_continuous, 2 * 3 * 2 * 2);
    }

    fn single_link(users: usize) -> MinlpInstance {
        let scenario = CloudRanScenario {
            rrhs: 1,
            users,
            antennas: 1,
            region_halfwidth: 1000.0,
            rrh_positions: vec![[0.0, 0.0]],
            user_positions: vec![[0.0, 0.0]; users],
            channel_re: vec![1.0; users],
            channel_im: vec![0.0; users],
            noise_power: 1.0,
            sinr_db: 0.0,
            sinr_target: 1.0,
            fronthaul_powers: vec![6.0],
            per_rrh_power_cap: 4.0,
            amp_efficiency: 1.0,
        };
        scenario.to_instance(0).unwrap()
    }

    #[test]
    fn empty_demand_is_free_and_feasible() {
        let inst = single_link(0);
        let e = evaluate_assignment(
            &inst,
            &Assignment {
                binaries: vec![0],
                continuous: vec![],
            },
        )
        .unwrap();
        assert_eq!(e.objective, 0.0);
        assert!(e.feasible);
    }

    #[test]
    fn objective_arithmetic() {
        // s = (1), P = 6, η = 1, ‖w‖² = 2 → 8
        let inst = single_link(1);
        let w = vec![1.0, 1.0];
        let e = evaluate_assignment(
            &inst,
            &Assignment {
                binaries: vec![1],
                continuous: w,
            },
        )
        .unwrap();
        assert!((e.objective - 8.0).abs() < 1e-12);
        assert!(e.feasible);
    }

    #[test]
    fn sinr_violation_is_reported() {
        // Single user, h = 1, σ = 1, γ = 1: SINR = |w|², so |w| = 0.5 violates.
        let inst = single_link(1);
        let e = evaluate_assignment(
            &inst,
            &Assignment {
                binaries: vec![1],
                continuous: vec![0.5, 0.0],
            },
        )
        .unwrap();
        assert!(!e.feasible);
        assert_eq!(e.violations.len(), 1);
        assert_eq!(e.violations[0].constraint, 0);
        // Exactly at the target is feasible, and the phase does not matter.
        let ok = evaluate_assignment(
            &inst,
            &Assignment {
                binaries: vec![1],
                continuous: vec![0.0, 1.0],
            },
        )
        .unwrap();
        assert!(ok.feasible);
    }

    #[test]
    fn power_cap_blocks_disabled_rrh() {
        let (s, inst) = small_cran();
        for l in 0..s.rrhs {
            let mut w = vec![0.0; inst.num_continuous];
            w[s.rrh_group(l)[0]] = 0.01;
            let mut bins = vec![1u8; s.rrhs];
            bins[l] = 0;
            let e = evaluate_assignment(
                &inst,
                &Assignment {
                    binaries: bins,
                    continuous: w,
                },
            )
            .unwrap();
            assert!(e
                .violations
                .iter()
                .any(|v| v.constraint == s.users + l && v.amount > 0.0));
        }
    }

    #[test]
    fn dimension_mismatch() {
        let inst = gen_toy_milp(1, 2, 1).unwrap();
        let err = evaluate_assignment(
            &inst,
            &Assignment {
                binaries: vec![0],
                continuous: vec![],
            },
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::Dimension { .. }));
    }

    #[test]
    fn toy_encoding_respects_bounds() {
        for seed in 0..20 {
            let inst = ToyMilpConfig {
                max_upper: 6,
                ..ToyMilpConfig::new(5, 2)
            }
            .generate(seed)
            .unwrap();
            assert!(inst.num_binary >= 5 && inst.num_binary <= 15);
        }
        assert!(gen_toy_milp(0, 0, 1).is_err());
        assert!(gen_toy_milp(0, 21, 1).is_err());
    }

    #[test]
    fn unconstrained_nonnegative_minimum_is_zero() {
        let inst = gen_toy_milp(5, 3, 0).unwrap();
        let zero = Assignment {
            binaries: vec![0; inst.num_binary],
            continuous: vec![0.0; inst.num_continuous],
        };
        let e = evaluate_assignment(&inst, &zero).unwrap();
        assert!(e.feasible);
        assert_eq!(e.objective, 0.0);
        assert!(inst.objective.binary_linear.iter().all(|&c| c >= 0.0));
    }
}
