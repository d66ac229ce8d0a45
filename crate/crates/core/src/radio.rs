//! Beamformed downlink radio model.
//!
//! Channels are built in beam space: every BS uses an orthonormal DFT-style
//! codebook with one weight vector per Table-II azimuth, and the channel
//! vector toward a UE is the sum of codebook vectors weighted by the
//! Gaussian main-lobe pattern, path loss, shadowing and a per-frame
//! perturbation. Projecting the channel on any codeword therefore returns
//! exactly that beam's received gain, which keeps the codebook argmax and
//! the RSRP ranking the same thing.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{heading_angle, BsSite, Direction, Grid, UeState};
use crate::seeding::{self, TAG_FADING, TAG_SHADOW};

pub const BEAMS_PER_BS: usize = 8;
pub const TABLE_II_AZIMUTHS_DEG: [f64; BEAMS_PER_BS] =
    [44.0, 56.0, 69.0, 82.0, 96.0, 109.0, 122.0, 134.0];
const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Network-unique beam identifier: `(local_beam << log2|B|) + bs_id`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct GlobalBeamId(pub u32);

impl std::fmt::Display for GlobalBeamId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BeamIdCodec {
    num_bs: usize,
    shift: u32,
}

impl BeamIdCodec {
    pub fn new(num_bs: usize) -> Result<Self> {
        if num_bs == 0 || !num_bs.is_power_of_two() {
            return Err(Error::Config(format!(
                "BS count {num_bs} is not a power of two; use BeamIdCodec::padded"
            )));
        }
        Ok(Self { num_bs, shift: num_bs.trailing_zeros() })
    }

    /// Codec for `num_bs` sites with the BS field widened to the next power of two.
    pub fn padded(num_bs: usize) -> Result<Self> {
        if num_bs == 0 {
            return Err(Error::Config("BS count must be positive".into()));
        }
        let width = num_bs.next_power_of_two();
        Ok(Self { num_bs, shift: width.trailing_zeros() })
    }

    pub fn num_bs(&self) -> usize {
        self.num_bs
    }

    pub fn shift(&self) -> u32 {
        self.shift
    }

    pub fn encode(&self, bs_id: usize, local_beam: usize) -> Result<GlobalBeamId> {
        if bs_id >= self.num_bs || local_beam >= BEAMS_PER_BS {
            return Err(Error::InvalidInput(format!(
                "beam ({bs_id}, {local_beam}) outside {} BSs x {BEAMS_PER_BS} beams",
                self.num_bs
            )));
        }
        Ok(GlobalBeamId(((local_beam as u32) << self.shift) + bs_id as u32))
    }

    pub fn decode(&self, id: GlobalBeamId) -> Result<(usize, usize)> {
        let bs = (id.0 & ((1u32 << self.shift) - 1)) as usize;
        let local = (id.0 >> self.shift) as usize;
        if bs >= self.num_bs || local >= BEAMS_PER_BS {
            return Err(Error::InvalidInput(format!("beam id {} does not decode", id.0)));
        }
        Ok((bs, local))
    }

    pub fn bs_of(&self, id: GlobalBeamId) -> usize {
        (id.0 & ((1u32 << self.shift) - 1)) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioConfig {
    pub carrier_ghz: f64,
    pub bandwidth_mhz: f64,
    pub bs_tx_power_dbm: f64,
    pub num_antennas: usize,
    pub beam_azimuths_deg: Vec<f64>,
    pub beamwidth_deg: f64,
    pub pattern_floor_db: f64,
    pub los_exponent: f64,
    pub nlos_exponent: f64,
    pub shadow_sigma_los_db: f64,
    pub shadow_sigma_nlos_db: f64,
    pub shadow_decorrelation_m: f64,
    pub fast_fading_sigma_db: f64,
    pub noise_figure_db: f64,
    pub ue_height_m: f64,
    pub rlf_threshold_dbm: f64,
    pub rlf_consecutive_frames: u32,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            carrier_ghz: 4.0,
            bandwidth_mhz: 20.0,
            bs_tx_power_dbm: 44.0,
            num_antennas: 8,
            beam_azimuths_deg: TABLE_II_AZIMUTHS_DEG.to_vec(),
            beamwidth_deg: 13.0,
            pattern_floor_db: 25.0,
            los_exponent: 2.1,
            nlos_exponent: 3.2,
            shadow_sigma_los_db: 4.0,
            shadow_sigma_nlos_db: 8.0,
            shadow_decorrelation_m: 10.0,
            fast_fading_sigma_db: 1.0,
            noise_figure_db: 7.0,
            ue_height_m: 1.5,
            rlf_threshold_dbm: -110.0,
            rlf_consecutive_frames: 3,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_ghz", self.carrier_ghz),
            ("bandwidth_mhz", self.bandwidth_mhz),
            ("beamwidth_deg", self.beamwidth_deg),
            ("pattern_floor_db", self.pattern_floor_db),
            ("los_exponent", self.los_exponent),
            ("nlos_exponent", self.nlos_exponent),
            ("shadow_decorrelation_m", self.shadow_decorrelation_m),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Config(format!("radio.{name} must be positive")));
            }
        }
        if self.beam_azimuths_deg.len() != BEAMS_PER_BS {
            return Err(Error::Config(format!("exactly {BEAMS_PER_BS} beam azimuths required")));
        }
        if self.num_antennas < BEAMS_PER_BS {
            return Err(Error::Config(format!(
                "need at least {BEAMS_PER_BS} antennas for an orthonormal codebook"
            )));
        }
        if self.shadow_sigma_los_db < 0.0 || self.shadow_sigma_nlos_db < 0.0 || self.fast_fading_sigma_db < 0.0 {
            return Err(Error::Config("standard deviations must be non-negative".into()));
        }
        if self.rlf_consecutive_frames == 0 {
            return Err(Error::Config("rlf_consecutive_frames must be positive".into()));
        }
        Ok(())
    }

    pub fn beamwidth_rad(&self) -> f64 {
        self.beamwidth_deg.to_radians()
    }

    /// Free-space loss at the 1 m reference distance.
    pub fn reference_loss_db(&self) -> f64 {
        20.0 * (4.0 * PI * self.carrier_ghz * 1e9 / SPEED_OF_LIGHT).log10()
    }

    pub fn per_beam_power_dbm(&self) -> f64 {
        self.bs_tx_power_dbm - 10.0 * (BEAMS_PER_BS as f64).log10()
    }

    pub fn noise_dbm(&self) -> f64 {
        -174.0 + 10.0 * (self.bandwidth_mhz * 1e6).log10() + self.noise_figure_db
    }

    pub fn max_gain_db(&self) -> f64 {
        10.0 * (self.num_antennas as f64).log10()
    }

    /// Gaussian main lobe in dB, floored `pattern_floor_db` below the peak.
    pub fn pattern_gain_db(&self, offset_deg: f64) -> f64 {
        let d = (offset_deg + 180.0).rem_euclid(360.0) - 180.0;
        self.max_gain_db() - (12.0 * (d / self.beamwidth_deg).powi(2)).min(self.pattern_floor_db)
    }

    pub fn path_loss_db(&self, distance_m: f64, los: bool) -> f64 {
        let n = if los { self.los_exponent } else { self.nlos_exponent };
        self.reference_loss_db() + 10.0 * n * distance_m.max(1.0).log10()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Beam {
    pub local_index: usize,
    pub azimuth_deg: f64,
    pub weights: Vec<Complex64>,
    pub beamwidth_rad: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamCodebook {
    pub bs_id: usize,
    pub num_antennas: usize,
    pub beams: Vec<Beam>,
}

impl BeamCodebook {
    /// DFT columns `0..8` of an `M`-point DFT, tagged with the configured azimuths.
    pub fn dft(bs_id: usize, cfg: &RadioConfig) -> Result<Self> {
        cfg.validate()?;
        let m = cfg.num_antennas;
        let norm = 1.0 / (m as f64).sqrt();
        let beams = cfg
            .beam_azimuths_deg
            .iter()
            .enumerate()
            .map(|(b, &az)| Beam {
                local_index: b,
                azimuth_deg: az,
                weights: (0..m)
                    .map(|k| Complex64::from_polar(norm, 2.0 * PI * (k * b) as f64 / m as f64))
                    .collect(),
                beamwidth_rad: cfg.beamwidth_rad(),
            })
            .collect();
        Ok(Self { bs_id, num_antennas: m, beams })
    }

    /// Arbitrary codebook; weight vectors must share one length and be unit-norm.
    pub fn from_weights(bs_id: usize, weights: Vec<Vec<Complex64>>, beamwidth_rad: f64) -> Result<Self> {
        let m = weights.first().map(Vec::len).unwrap_or(0);
        if m == 0 {
            return Err(Error::InvalidInput("codebook must not be empty".into()));
        }
        if !(beamwidth_rad > 0.0) {
            return Err(Error::InvalidInput("beamwidth must be positive".into()));
        }
        let mut beams = Vec::with_capacity(weights.len());
        for (b, w) in weights.into_iter().enumerate() {
            let norm: f64 = w.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            if w.len() != m || (norm - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!("codeword {b} is not a unit {m}-vector")));
            }
            beams.push(Beam { local_index: b, azimuth_deg: f64::NAN, weights: w, beamwidth_rad });
        }
        Ok(Self { bs_id, num_antennas: m, beams })
    }

    /// Unit-amplitude beam-space channel direction toward `azimuth_deg`.
    pub fn steering_vector(&self, cfg: &RadioConfig, azimuth_deg: f64) -> Vec<Complex64> {
        let mut h = vec![Complex64::new(0.0, 0.0); self.num_antennas];
        for beam in &self.beams {
            let amp = 10f64.powf(cfg.pattern_gain_db(azimuth_deg - beam.azimuth_deg) / 20.0);
            for (hk, wk) in h.iter_mut().zip(&beam.weights) {
                *hk += wk * amp;
            }
        }
        h
    }
}

/// `|h^H f|^2`.
pub fn beam_gain(h: &[Complex64], f: &[Complex64]) -> f64 {
    h.iter().zip(f).map(|(a, b)| a.conj() * b).sum::<Complex64>().norm_sqr()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h: Vec<Complex64>,
    pub los: bool,
    pub shadow_db: f64,
    pub fading_db: f64,
    pub pathloss_db: f64,
    pub distance_m: f64,
    pub azimuth_deg: f64,
}

/// Channel with externally supplied shadowing (standard-normal draw) and
/// per-frame link perturbation in dB.
pub fn channel_with(
    ue: &UeState,
    site: &BsSite,
    grid: &Grid,
    codebook: &BeamCodebook,
    cfg: &RadioConfig,
    shadow_z: f64,
    fading_db: f64,
) -> Result<ChannelRealization> {
    let (dx, dy) = grid.displacement(site.position, ue.position);
    if dx == 0.0 && dy == 0.0 {
        return Err(Error::Geometry(format!("UE {} sits on BS {}", ue.crnti, site.bs_id)));
    }
    build_channel(ue, site, grid, codebook, cfg, shadow_z, fading_db)
}

// A UE directly below the mast has no azimuth; the antenna height still
// keeps the 3D distance positive, so the boresight of its heading is used.
fn build_channel(
    ue: &UeState,
    site: &BsSite,
    grid: &Grid,
    codebook: &BeamCodebook,
    cfg: &RadioConfig,
    shadow_z: f64,
    fading_db: f64,
) -> Result<ChannelRealization> {
    let (mut dx, mut dy) = grid.displacement(site.position, ue.position);
    if dx == 0.0 && dy == 0.0 {
        (dx, dy) = ue.direction.unit();
        dx *= 1e-9;
        dy *= 1e-9;
    }
    let ground = dx.hypot(dy);
    let distance_m = ground.hypot(site.antenna_height_m - cfg.ue_height_m);
    let los = grid.shares_street_axis(ue.position, site.position);
    let sigma = if los { cfg.shadow_sigma_los_db } else { cfg.shadow_sigma_nlos_db };
    let shadow_db = shadow_z * sigma;
    let pathloss_db = cfg.path_loss_db(distance_m, los);
    let azimuth_deg = dy.atan2(dx).to_degrees();
    let amp = 10f64.powf((fading_db - pathloss_db - shadow_db) / 20.0);
    let h = codebook
        .steering_vector(cfg, azimuth_deg)
        .into_iter()
        .map(|c| c * amp)
        .collect();
    Ok(ChannelRealization { h, los, shadow_db, fading_db, pathloss_db, distance_m, azimuth_deg })
}

/// Draws a fresh shadowing and link perturbation from `rng`.
pub fn channel<R: Rng + ?Sized>(
    ue: &UeState,
    site: &BsSite,
    grid: &Grid,
    codebook: &BeamCodebook,
    cfg: &RadioConfig,
    rng: &mut R,
) -> Result<ChannelRealization> {
    let z: f64 = rng.sample(StandardNormal);
    let fading = cfg.fast_fading_sigma_db * rng.sample::<f64, _>(StandardNormal);
    channel_with(ue, site, grid, codebook, cfg, z, fading)
}

/// Gains within this relative margin of each other are treated as equal,
/// so exact pattern ties are not decided by rounding noise.
pub const TIE_TOLERANCE: f64 = 1e-9;
const DB_TIE_TOLERANCE: f64 = 1e-8;

/// Codebook argmax of `|h^H f|^2`; the lowest index wins ties.
pub fn best_local_beam(h: &[Complex64], codebook: &BeamCodebook) -> Result<(usize, f64)> {
    if codebook.beams.is_empty() {
        return Err(Error::InvalidInput("empty codebook".into()));
    }
    if h.len() != codebook.num_antennas {
        return Err(Error::Shape(format!(
            "channel has {} entries, codebook expects {}",
            h.len(),
            codebook.num_antennas
        )));
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (b, beam) in codebook.beams.iter().enumerate() {
        let g = beam_gain(h, &beam.weights);
        if g > best.1 * (1.0 + TIE_TOLERANCE) || best.1 == f64::NEG_INFINITY {
            best = (b, g);
        }
    }
    Ok(best)
}

pub fn best_beam(
    ch: &ChannelRealization,
    codebook: &BeamCodebook,
    codec: &BeamIdCodec,
) -> Result<(GlobalBeamId, f64)> {
    let (local, gain) = best_local_beam(&ch.h, codebook)?;
    Ok((codec.encode(codebook.bs_id, local)?, gain))
}

/// `serving / (sum(interferers) + noise)`, all in linear units.
pub fn sinr(serving: f64, interferers: &[f64], noise_var: f64) -> Result<f64> {
    if !(noise_var > 0.0) {
        return Err(Error::Config(format!("noise variance must be positive, got {noise_var}")));
    }
    if serving < 0.0 || interferers.iter().any(|&p| p < 0.0) {
        return Err(Error::InvalidInput("powers must be non-negative".into()));
    }
    Ok(serving / (interferers.iter().sum::<f64>() + noise_var))
}

/// Beam coherence time `D / (v sin α) · Θ / 2`, capped at `cap_s`.
pub fn coherence_time(distance_m: f64, speed_mps: f64, alpha_rad: f64, beamwidth_rad: f64, cap_s: f64) -> Result<f64> {
    if !(speed_mps > 0.0) {
        return Err(Error::InvalidInput(format!("speed must be positive, got {speed_mps}")));
    }
    if !(beamwidth_rad > 0.0) {
        return Err(Error::InvalidInput("beamwidth must be positive".into()));
    }
    if distance_m <= 0.0 {
        return Ok(0.0);
    }
    let s = alpha_rad.sin().abs();
    if s < 1e-12 {
        return Ok(cap_s);
    }
    Ok((distance_m / (speed_mps * s) * beamwidth_rad / 2.0).min(cap_s))
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// One time-indexed record of the dataset features for one UE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementRow {
    pub frame: u32,
    pub crnti: u32,
    pub current_beam: GlobalBeamId,
    pub previous_beam: GlobalBeamId,
    pub beam_rsrp_dbm: f64,
    pub beam_sinr_db: f64,
    pub ue_direction: Direction,
    pub ue_speed_mps: f64,
    pub ue_x_m: f64,
    pub ue_y_m: f64,
    pub rlf: bool,
}

pub const DATASET_COLUMNS: [&str; 11] = [
    "frame",
    "crnti",
    "current_beam",
    "previous_beam",
    "beam_rsrp_dbm",
    "beam_sinr_db",
    "ue_direction",
    "ue_speed_mps",
    "ue_x_m",
    "ue_y_m",
    "rlf",
];

/// Received power of every beam in the network at one UE and frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioSnapshot {
    /// Indexed by beam slot `bs_id * 8 + local_index`.
    pub rsrp_dbm: Vec<f64>,
    pub total_mw: f64,
    pub noise_mw: f64,
    pub best_slot: usize,
}

impl RadioSnapshot {
    pub fn sinr_db(&self, slot: usize) -> f64 {
        let p = dbm_to_mw(self.rsrp_dbm[slot]);
        10.0 * (p / (self.total_mw - p + self.noise_mw)).log10()
    }
}

/// Everything needed to evaluate the radio state of any UE at any frame
/// deterministically from the master seed.
#[derive(Debug, Clone)]
pub struct RadioEnvironment {
    pub grid: Grid,
    pub codebooks: Vec<BeamCodebook>,
    pub codec: BeamIdCodec,
    pub cfg: RadioConfig,
    pub seed: u64,
}

impl RadioEnvironment {
    pub fn new(grid: Grid, cfg: RadioConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let codec = BeamIdCodec::padded(grid.num_bs())?;
        let codebooks = grid
            .sites
            .iter()
            .map(|s| BeamCodebook::dft(s.bs_id, &cfg))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { grid, codebooks, codec, cfg, seed })
    }

    pub fn num_slots(&self) -> usize {
        self.grid.num_bs() * BEAMS_PER_BS
    }

    pub fn beam_of_slot(&self, slot: usize) -> GlobalBeamId {
        // Slots are in range by construction.
        self.codec.encode(slot / BEAMS_PER_BS, slot % BEAMS_PER_BS).expect("slot in range")
    }

    pub fn slot_of(&self, beam: GlobalBeamId) -> Result<usize> {
        let (bs, local) = self.codec.decode(beam)?;
        Ok(bs * BEAMS_PER_BS + local)
    }

    fn shadow_z(&self, crnti: u32, bs: usize, odometer_m: f64) -> f64 {
        let segment = (odometer_m / self.cfg.shadow_decorrelation_m).floor() as u64;
        let mut rng = seeding::stream(&[self.seed, TAG_SHADOW, crnti as u64, bs as u64, segment]);
        rng.sample(StandardNormal)
    }

    /// Per-BS channels for one UE at one frame. Shadowing is frozen per
    /// decorrelation segment of travel; the link perturbation is fresh
    /// every frame.
    pub fn channels(&self, ue: &UeState, frame: u32) -> Result<Vec<ChannelRealization>> {
        let mut fading = seeding::stream(&[self.seed, TAG_FADING, ue.crnti as u64, frame as u64]);
        self.grid
            .sites
            .iter()
            .zip(&self.codebooks)
            .map(|(site, cb)| {
                let f = self.cfg.fast_fading_sigma_db * fading.sample::<f64, _>(StandardNormal);
                let z = self.shadow_z(ue.crnti, site.bs_id, ue.odometer_m);
                build_channel(ue, site, &self.grid, cb, &self.cfg, z, f)
            })
            .collect()
    }

    pub fn snapshot(&self, ue: &UeState, frame: u32) -> Result<RadioSnapshot> {
        let p_beam = self.cfg.per_beam_power_dbm();
        let mut rsrp_dbm = Vec::with_capacity(self.num_slots());
        for (ch, cb) in self.channels(ue, frame)?.iter().zip(&self.codebooks) {
            for beam in &cb.beams {
                rsrp_dbm.push(p_beam + mw_to_dbm(beam_gain(&ch.h, &beam.weights)));
            }
        }
        let mut best_slot = 0;
        for (s, &p) in rsrp_dbm.iter().enumerate() {
            if p > rsrp_dbm[best_slot] + DB_TIE_TOLERANCE {
                best_slot = s;
            }
        }
        let total_mw = rsrp_dbm.iter().map(|&p| dbm_to_mw(p)).sum();
        Ok(RadioSnapshot { rsrp_dbm, total_mw, noise_mw: dbm_to_mw(self.cfg.noise_dbm()), best_slot })
    }

    /// Table-I row for a UE whose reported best beam is taken as current.
    pub fn measure(
        &self,
        ue: &UeState,
        frame: u32,
        previous: Option<GlobalBeamId>,
        rlf: bool,
    ) -> Result<(MeasurementRow, RadioSnapshot)> {
        let snap = self.snapshot(ue, frame)?;
        let current = self.beam_of_slot(snap.best_slot);
        let row = MeasurementRow {
            frame,
            crnti: ue.crnti,
            current_beam: current,
            previous_beam: previous.unwrap_or(current),
            beam_rsrp_dbm: snap.rsrp_dbm[snap.best_slot],
            beam_sinr_db: snap.sinr_db(snap.best_slot),
            ue_direction: ue.direction,
            ue_speed_mps: ue.speed_mps,
            ue_x_m: ue.position.x,
            ue_y_m: ue.position.y,
            rlf,
        };
        Ok((row, snap))
    }

    /// Beam coherence time of `ue` toward the BS hosting `beam`.
    pub fn coherence_sample(&self, ue: &UeState, beam: GlobalBeamId, cap_s: f64) -> Result<f64> {
        let site = &self.grid.sites[self.codec.bs_of(beam)];
        let d = self.grid.distance(ue.position, site.position);
        if d == 0.0 {
            return coherence_time(0.0, ue.speed_mps, 0.0, self.cfg.beamwidth_rad(), cap_s);
        }
        let alpha = heading_angle(ue, site, &self.grid)?;
        coherence_time(d, ue.speed_mps, alpha, self.cfg.beamwidth_rad(), cap_s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, GridConfig, Point};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ue(x: f64, y: f64, dir: Direction) -> UeState {
        UeState {
            crnti: 1,
            position: Point::new(x, y),
            direction: dir,
            speed_mps: 27.778,
            dist_since_speed_event_m: 0.0,
            odometer_m: 0.0,
            serving_beam: None,
            previous_beam: None,
            llm_paused: false,
        }
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn codec_examples() {
        let codec = BeamIdCodec::new(32).unwrap();
        assert_eq!(codec.encode(3, 2).unwrap(), GlobalBeamId(67));
        assert_eq!(codec.decode(GlobalBeamId(67)).unwrap(), (3, 2));
        assert_eq!(codec.encode(0, 0).unwrap(), GlobalBeamId(0));
        assert!(matches!(BeamIdCodec::new(6), Err(Error::Config(_))));
        let padded = BeamIdCodec::padded(6).unwrap();
        assert_eq!(padded.shift(), 3);
        assert_eq!(padded.decode(padded.encode(5, 7).unwrap()).unwrap(), (5, 7));
        assert!(codec.encode(32, 0).is_err());
        assert!(codec.encode(0, 8).is_err());
    }

    #[test]
    fn codec_is_exhaustively_bijective() {
        let codec = BeamIdCodec::new(32).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for bs in 0..32 {
            for local in 0..8 {
                let id = codec.encode(bs, local).unwrap();
                assert!(id.0 < 256);
                assert_eq!(codec.decode(id).unwrap(), (bs, local));
                seen.insert(id);
            }
        }
        assert_eq!(seen.len(), 256);
    }

    #[test]
    fn codebook_is_orthonormal() {
        let cb = BeamCodebook::dft(0, &RadioConfig::default()).unwrap();
        assert_eq!(cb.beams.len(), 8);
        for a in &cb.beams {
            for b in &cb.beams {
                let ip = beam_gain(&a.weights, &b.weights);
                let expect = if a.local_index == b.local_index { 1.0 } else { 0.0 };
                assert!((ip - expect).abs() < 1e-12);
            }
        }
        let az: Vec<f64> = cb.beams.iter().map(|b| b.azimuth_deg).collect();
        assert_eq!(az, TABLE_II_AZIMUTHS_DEG.to_vec());
    }

    #[test]
    fn best_beam_orthogonal_pick() {
        let cb = BeamCodebook::from_weights(0, vec![vec![c(1.0), c(0.0)], vec![c(0.0), c(1.0)]], 0.2).unwrap();
        let (b, g) = best_local_beam(&[c(1.0), c(0.0)], &cb).unwrap();
        assert_eq!((b, g), (0, 1.0));
        // Equal gains: lowest index.
        let s = 0.5f64.sqrt();
        assert_eq!(best_local_beam(&[c(s), c(s)], &cb).unwrap().0, 0);
    }

    #[test]
    fn steering_at_96_degrees_picks_96_degree_beam() {
        let cfg = RadioConfig::default();
        let cb = BeamCodebook::dft(0, &cfg).unwrap();
        let h = cb.steering_vector(&cfg, 96.0);
        let brute = cb
            .beams
            .iter()
            .map(|b| beam_gain(&h, &b.weights))
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, g)| if g > acc.1 { (i, g) } else { acc });
        let (b, g) = best_local_beam(&h, &cb).unwrap();
        assert_eq!((b, g), brute);
        assert_eq!(cb.beams[b].azimuth_deg, 96.0);

        let scaled: Vec<_> = h.iter().map(|x| x * 10.0).collect();
        let (b2, g2) = best_local_beam(&scaled, &cb).unwrap();
        assert_eq!(b2, b);
        assert!((g2 / g - 100.0).abs() < 1e-9);
    }

    #[test]
    fn projection_returns_pattern_gain() {
        let cfg = RadioConfig::default();
        let cb = BeamCodebook::dft(0, &cfg).unwrap();
        let h = cb.steering_vector(&cfg, 70.0);
        for beam in &cb.beams {
            let g_db = 10.0 * beam_gain(&h, &beam.weights).log10();
            assert!((g_db - cfg.pattern_gain_db(70.0 - beam.azimuth_deg)).abs() < 1e-9);
        }
        assert_eq!(cfg.pattern_gain_db(180.0), cfg.max_gain_db() - 25.0);
    }

    #[test]
    fn path_loss_anchors() {
        let cfg = RadioConfig::default();
        assert!((cfg.path_loss_db(1.0, true) - cfg.reference_loss_db()).abs() < 1e-12);
        assert!(cfg.path_loss_db(50.0, false) > cfg.path_loss_db(50.0, true));
        // 4 GHz free-space loss at 1 m.
        assert!((cfg.reference_loss_db() - 44.4890).abs() < 1e-3);
    }

    #[test]
    fn channel_zero_distance_is_singular() {
        let g = build_grid(GridConfig { blocks_x: 2, blocks_y: 2, ..Default::default() }).unwrap();
        let cfg = RadioConfig::default();
        let cb = BeamCodebook::dft(0, &cfg).unwrap();
        let err = channel(&ue(0.0, 0.0, Direction::E), &g.sites[0], &g, &cb, &cfg, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(err, Err(Error::Geometry(_))));
    }

    #[test]
    fn shadow_variance_matches_config() {
        let g = build_grid(GridConfig { blocks_x: 2, blocks_y: 2, ..Default::default() }).unwrap();
        let cfg = RadioConfig::default();
        let cb = BeamCodebook::dft(0, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for (pos, sigma) in [((50.0, 0.0), 4.0), ((50.0, 100.0), 8.0)] {
            let u = ue(pos.0, pos.1, Direction::E);
            let draws: Vec<f64> = (0..10_000)
                .map(|_| channel(&u, &g.sites[0], &g, &cb, &cfg, &mut rng).unwrap().shadow_db)
                .collect();
            let mean = draws.iter().sum::<f64>() / draws.len() as f64;
            let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
            assert!((var / (sigma * sigma) - 1.0).abs() < 0.05, "variance {var} vs {}", sigma * sigma);
        }
    }

    #[test]
    fn sinr_examples() {
        assert_eq!(sinr(1.0, &[], 1.0).unwrap(), 1.0);
        assert!((sinr(1.0, &[0.1, 0.1], 0.05).unwrap() - 4.0).abs() < 1e-12);
        assert!((10.0 * 4f64.log10() - 6.0206).abs() < 1e-4);
        assert!(matches!(sinr(1.0, &[], 0.0), Err(Error::Config(_))));
    }

    #[test]
    fn coherence_examples() {
        let t = coherence_time(100.0, 27.778, PI / 2.0, 13f64.to_radians(), 50.0).unwrap();
        assert!((t - 0.40840).abs() < 1e-4, "{t}");
        assert_eq!(coherence_time(0.0, 27.778, PI / 2.0, 0.2, 50.0).unwrap(), 0.0);
        assert_eq!(coherence_time(100.0, 27.778, 0.0, 0.2, 50.0).unwrap(), 50.0);
        assert!(matches!(coherence_time(1.0, 0.0, 1.0, 0.2, 50.0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn snapshot_sinr_matches_bruteforce() {
        let g = build_grid(GridConfig { blocks_x: 2, blocks_y: 2, ..Default::default() }).unwrap();
        let env = RadioEnvironment::new(g, RadioConfig::default(), 9).unwrap();
        let u = ue(37.5, 0.0, Direction::E);
        let snap = env.snapshot(&u, 12).unwrap();
        let noise = dbm_to_mw(env.cfg.noise_dbm());
        for s in 0..env.num_slots() {
            let others: Vec<f64> = (0..env.num_slots()).filter(|&o| o != s).map(|o| dbm_to_mw(snap.rsrp_dbm[o])).collect();
            let brute = 10.0 * sinr(dbm_to_mw(snap.rsrp_dbm[s]), &others, noise).unwrap().log10();
            assert!((snap.sinr_db(s) - brute).abs() < 1e-9);
        }
    }

    #[test]
    fn measure_uses_codebook_argmax() {
        let g = build_grid(GridConfig { blocks_x: 2, blocks_y: 2, ..Default::default() }).unwrap();
        let env = RadioEnvironment::new(g, RadioConfig::default(), 1).unwrap();
        let u = ue(120.0, 0.0, Direction::W);
        let (row, snap) = env.measure(&u, 0, None, false).unwrap();
        let chans = env.channels(&u, 0).unwrap();
        let (bs, _) = env.codec.decode(row.current_beam).unwrap();
        let (id, _) = best_beam(&chans[bs], &env.codebooks[bs], &env.codec).unwrap();
        assert_eq!(id, row.current_beam);
        assert_eq!(row.previous_beam, row.current_beam);
        assert_eq!(row.beam_rsrp_dbm, snap.rsrp_dbm[snap.best_slot]);
    }

    #[test]
    fn frozen_randomness_gives_identical_rsrp() {
        let g = build_grid(GridConfig { blocks_x: 2, blocks_y: 2, ..Default::default() }).unwrap();
        let cfg = RadioConfig { fast_fading_sigma_db: 0.0, ..Default::default() };
        let env = RadioEnvironment::new(g, cfg, 3).unwrap();
        let u = ue(60.0, 100.0, Direction::E);
        let a = env.measure(&u, 10, None, false).unwrap().0;
        let b = env.measure(&u, 11, None, false).unwrap().0;
        assert_eq!(a.beam_rsrp_dbm, b.beam_rsrp_dbm);
    }
}
