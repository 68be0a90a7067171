//! End-to-end simulated runs and paired-seed ablation studies.

use rayon::prelude::*;
use serde::Serialize;

use super::world::{simulate_world, SimOutput, WorldSpec};
use crate::config::PipelineFlags;
use crate::metrics::ate_rmse;
use crate::pipeline::{run_viwo, RunOutput, Setup};
use crate::RunError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViwoReport {
    pub pipeline: String,
    pub seed: u64,
    pub frames: usize,
    /// Position RMSE after rigid alignment (m).
    pub ate: f64,
    /// Position RMSE without alignment (m).
    pub ate_unaligned: f64,
    pub points_accepted: usize,
    pub points_gated: usize,
    pub lines_accepted: usize,
    pub lines_gated: usize,
    pub mcc_rejected: usize,
    pub wheel_updates: usize,
}

pub fn report(sim: &SimOutput, run: &RunOutput, flags: &PipelineFlags, seed: u64) -> ViwoReport {
    let est: Vec<_> = run.trajectory.iter().map(|p| (p.t, p.p)).collect();
    let gt: Vec<_> = sim.truth.frames.iter().map(|s| (s.t, s.p)).collect();
    ViwoReport {
        pipeline: flags.label(),
        seed,
        frames: run.trajectory.len(),
        ate: ate_rmse(&est, &gt, true).unwrap_or(f64::NAN),
        ate_unaligned: ate_rmse(&est, &gt, false).unwrap_or(f64::NAN),
        points_accepted: run.stats.points.accepted,
        points_gated: run.stats.points.gated,
        lines_accepted: run.stats.lines.accepted,
        lines_gated: run.stats.lines.gated,
        mcc_rejected: run.stats.mcc_rejected,
        wheel_updates: run.stats.wheel_updates,
    }
}

/// Simulates `spec` and runs the pipeline on it.
pub fn run_sim_viwo(spec: &WorldSpec, flags: PipelineFlags) -> Result<(SimOutput, RunOutput, ViwoReport), RunError> {
    let sim = simulate_world(spec)?;
    let setup = Setup::from_calibration(&sim.calibration)?;
    let run = run_viwo(&sim.log, &setup, flags)?;
    let rep = report(&sim, &run, &flags, spec.seed);
    Ok((sim, run, rep))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedResult {
    pub seed: u64,
    pub ate_candidate: f64,
    pub ate_baseline: f64,
    pub candidate_wins: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedSummary {
    pub candidate: String,
    pub baseline: String,
    pub seeds: usize,
    pub wins: usize,
    pub win_rate: f64,
    pub mean_ate_candidate: f64,
    pub mean_ate_baseline: f64,
}

/// Runs both pipelines on the same simulated world for every seed.
pub fn paired_study(
    spec: &WorldSpec,
    seeds: &[u64],
    candidate: PipelineFlags,
    baseline: PipelineFlags,
) -> Result<(Vec<PairedResult>, PairedSummary), RunError> {
    let results = seeds
        .par_iter()
        .map(|&seed| -> Result<PairedResult, RunError> {
            let spec = WorldSpec { seed, ..spec.clone() };
            let sim = simulate_world(&spec)?;
            let setup = Setup::from_calibration(&sim.calibration)?;
            let a = report(&sim, &run_viwo(&sim.log, &setup, candidate)?, &candidate, seed).ate;
            let b = report(&sim, &run_viwo(&sim.log, &setup, baseline)?, &baseline, seed).ate;
            Ok(PairedResult {
                seed,
                ate_candidate: a,
                ate_baseline: b,
                candidate_wins: a < b,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let n = results.len().max(1) as f64;
    let wins = results.iter().filter(|r| r.candidate_wins).count();
    let summary = PairedSummary {
        candidate: candidate.label(),
        baseline: baseline.label(),
        seeds: results.len(),
        wins,
        win_rate: wins as f64 / n,
        mean_ate_candidate: results.iter().map(|r| r.ate_candidate).sum::<f64>() / n,
        mean_ate_baseline: results.iter().map(|r| r.ate_baseline).sum::<f64>() / n,
    };
    Ok((results, summary))
}
