//! Seeded simulation of every UE trajectory and its per-frame beam report.

use crate::error::{Error, Result};
use crate::grid::{build_grid, spawn_ues, step_mobility, GridConfig, MobilityConfig, UeState};
use crate::radio::{GlobalBeamId, MeasurementRow, RadioConfig, RadioEnvironment, RadioSnapshot};
use crate::seeding::{self, TAG_MOBILITY, TAG_SPAWN};

#[derive(Debug, Clone)]
pub struct World {
    pub env: RadioEnvironment,
    pub mobility: MobilityConfig,
    pub frame_duration_s: f64,
    /// `states[frame][ue]`.
    pub states: Vec<Vec<UeState>>,
    /// `rows[frame][ue]`, with the UE-reported best beam as current beam.
    pub rows: Vec<Vec<MeasurementRow>>,
}

impl World {
    pub fn simulate(
        grid: GridConfig,
        mobility: MobilityConfig,
        radio: RadioConfig,
        num_ues: usize,
        frames: usize,
        frame_duration_s: f64,
        seed: u64,
    ) -> Result<Self> {
        if frames == 0 {
            return Err(Error::Config("at least one frame is required".into()));
        }
        if !(frame_duration_s > 0.0) {
            return Err(Error::Config("frame duration must be positive".into()));
        }
        mobility.validate()?;
        let grid = build_grid(grid)?;
        let env = RadioEnvironment::new(grid, radio, seed)?;
        let first = spawn_ues(&env.grid, num_ues, &mobility, &mut seeding::stream(&[seed, TAG_SPAWN]))?;
        let mut rngs: Vec<_> = first
            .iter()
            .map(|ue| seeding::stream(&[seed, TAG_MOBILITY, ue.crnti as u64]))
            .collect();
        let mut states = Vec::with_capacity(frames);
        states.push(first);
        for n in 1..frames {
            let next = states[n - 1]
                .iter()
                .zip(rngs.iter_mut())
                .map(|(ue, rng)| step_mobility(ue, frame_duration_s, &env.grid, &mobility, rng))
                .collect::<Result<Vec<_>>>()?;
            states.push(next);
        }

        let threshold = env.cfg.rlf_threshold_dbm;
        let need = env.cfg.rlf_consecutive_frames;
        let mut low_run = vec![0u32; num_ues];
        let mut rows: Vec<Vec<MeasurementRow>> = Vec::with_capacity(frames);
        for (n, frame_states) in states.iter_mut().enumerate() {
            let mut frame_rows = Vec::with_capacity(num_ues);
            for (i, ue) in frame_states.iter_mut().enumerate() {
                let previous = rows.last().map(|r| r[i].current_beam);
                let (mut row, _) = env.measure(ue, n as u32, previous, false)?;
                low_run[i] = if row.beam_rsrp_dbm < threshold { low_run[i] + 1 } else { 0 };
                row.rlf = low_run[i] >= need;
                ue.previous_beam = previous;
                ue.serving_beam = Some(row.current_beam);
                frame_rows.push(row);
            }
            rows.push(frame_rows);
        }
        Ok(Self { env, mobility, frame_duration_s, states, rows })
    }

    pub fn frames(&self) -> usize {
        self.rows.len()
    }

    pub fn num_ues(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// Power-optimal beam of `ue` at `frame`.
    pub fn optimal(&self, frame: usize, ue: usize) -> GlobalBeamId {
        self.rows[frame][ue].current_beam
    }

    pub fn snapshot(&self, frame: usize, ue: usize) -> Result<RadioSnapshot> {
        self.env.snapshot(&self.states[frame][ue], frame as u32)
    }

    pub fn ue_rows(&self, ue: usize) -> Vec<MeasurementRow> {
        self.rows.iter().map(|r| r[ue]).collect()
    }

    /// All rows in `(frame, crnti)` order.
    pub fn all_rows(&self) -> Vec<MeasurementRow> {
        self.rows.iter().flatten().copied().collect()
    }

    /// Beam coherence time of every UE-frame toward its optimal beam's BS.
    pub fn coherence_samples(&self) -> Result<Vec<f64>> {
        let cap = self.frames() as f64 * self.frame_duration_s;
        let mut out = Vec::with_capacity(self.frames() * self.num_ues());
        for (states, rows) in self.states.iter().zip(&self.rows) {
            for (ue, row) in states.iter().zip(rows) {
                out.push(self.env.coherence_sample(ue, row.current_beam, cap)?);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk(seed: u64) -> World {
        let grid = GridConfig { blocks_x: 2, blocks_y: 2, ..Default::default() };
        World::simulate(grid, MobilityConfig::default(), RadioConfig::default(), 4, 60, 0.01, seed).unwrap()
    }

    #[test]
    fn rows_chain_previous_beams() {
        let w = desk(1);
        assert_eq!(w.frames(), 60);
        for ue in 0..4 {
            let rows = w.ue_rows(ue);
            assert_eq!(rows[0].previous_beam, rows[0].current_beam);
            for pair in rows.windows(2) {
                assert_eq!(pair[1].previous_beam, pair[0].current_beam);
                assert_eq!(pair[1].crnti, pair[0].crnti);
            }
        }
    }

    #[test]
    fn simulation_is_seeded() {
        assert_eq!(desk(5).rows, desk(5).rows);
        assert_ne!(desk(5).rows, desk(6).rows);
    }

    #[test]
    fn snapshot_recomputes_reported_beam() {
        let w = desk(2);
        let snap = w.snapshot(17, 3).unwrap();
        assert_eq!(w.env.beam_of_slot(snap.best_slot), w.optimal(17, 3));
    }
}
