//! Benchmark sweeps over client count, vector length, dropout and preset.

use crate::stats::percentile;
use crate::CliError;
use dpagg_core::codec::check_capacity;
use dpagg_core::lwe::{LweParams, LwePreset};
use dpagg_core::protocol::{
    measure_transcript, run_masking_aggregation, AdversarySpec, CommunicationReport, DropoutRound,
    ProtocolConfig, SecurityMode,
};
use dpagg_core::sampler::{derive_seed, Prg, Seed};
use rand::Rng;

pub const DESK_MAX_CLIENTS: usize = 256;
pub const DESK_MAX_DIM: usize = 32_768;
pub const FULL_MAX_CLIENTS: usize = 1000;
pub const FULL_MAX_DIM: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchPlan {
    pub clients: Vec<usize>,
    pub dims: Vec<usize>,
    pub dropouts: Vec<f64>,
    pub dropout_round: DropoutRound,
    pub presets: Vec<LwePreset>,
    pub modes: Vec<SecurityMode>,
    pub reps: usize,
    pub paper_scale: bool,
}

/// One cell of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub k: usize,
    pub m: usize,
    pub dropout: f64,
    pub preset: LwePreset,
    pub mode: SecurityMode,
}

impl Cell {
    pub fn adversary(&self, round: DropoutRound) -> AdversarySpec {
        if self.dropout > 0.0 {
            AdversarySpec::dropouts(self.dropout, round)
        } else {
            AdversarySpec::honest()
        }
    }

    pub fn protocol(&self, round: DropoutRound) -> Result<ProtocolConfig, CliError> {
        Ok(ProtocolConfig::for_clients(
            self.k,
            LweParams::preset(self.preset, self.m),
            self.mode,
            &self.adversary(round),
        )?)
    }
}

impl BenchPlan {
    /// Desk-scale grid used when nothing is configured.
    pub fn desk() -> Self {
        BenchPlan {
            clients: vec![8, 32, 128],
            dims: vec![1024, 16384],
            dropouts: vec![0.0],
            dropout_round: DropoutRound::BeforeShare,
            presets: vec![LwePreset::A],
            modes: vec![SecurityMode::SemiHonest],
            reps: 3,
            paper_scale: false,
        }
    }

    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &preset in &self.presets {
            for &mode in &self.modes {
                for &dropout in &self.dropouts {
                    for &k in &self.clients {
                        for &m in &self.dims {
                            out.push(Cell {
                                k,
                                m,
                                dropout,
                                preset,
                                mode,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    /// Every violation is listed, one per line.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut problems = Vec::new();
        if self.reps < 3 {
            problems.push(format!("reps = {} (need at least 3)", self.reps));
        }
        if self.cells().is_empty() {
            problems.push("empty sweep".to_string());
        }
        let (max_k, max_m) = if self.paper_scale {
            (FULL_MAX_CLIENTS, FULL_MAX_DIM)
        } else {
            (DESK_MAX_CLIENTS, DESK_MAX_DIM)
        };
        for &k in &self.clients {
            if !(2..=max_k).contains(&k) {
                problems.push(format!(
                    "k = {k} outside [2, {max_k}]{}",
                    if self.paper_scale {
                        ""
                    } else {
                        " (see paper_scale)"
                    }
                ));
            }
        }
        for &m in &self.dims {
            if !(1..=max_m).contains(&m) {
                problems.push(format!(
                    "m = {m} outside [1, {max_m}]{}",
                    if self.paper_scale {
                        ""
                    } else {
                        " (see paper_scale)"
                    }
                ));
            }
        }
        for &f in &self.dropouts {
            if !(0.0..1.0).contains(&f) {
                problems.push(format!("dropout = {f} outside [0, 1)"));
            }
        }
        for &preset in &self.presets {
            for &k in &self.clients {
                if check_capacity(k, preset.q()).is_err() {
                    problems.push(format!(
                        "row k = {k}, preset {preset}: k·2^16 + margin exceeds q = {}",
                        preset.q()
                    ));
                }
            }
        }
        if problems.is_empty() {
            for cell in self.cells() {
                if let Err(e) = cell.protocol(self.dropout_round) {
                    problems.push(format!(
                        "row k = {}, m = {}, dropout = {}, preset {}, {}: {e}",
                        cell.k, cell.m, cell.dropout, cell.preset, cell.mode
                    ));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(format!(
                "infeasible bench plan:\n  {}",
                problems.join("\n  ")
            )))
        }
    }
}

/// Uniform 16-bit inputs, the range encoded gradients occupy.
pub fn cell_inputs(k: usize, m: usize, seed: &Seed) -> Vec<Vec<u64>> {
    let mut rng = Prg::new(derive_seed(seed, "bench-inputs", 0), 0);
    (0..k)
        .map(|_| (0..m).map(|_| rng.gen_range(0..1u64 << 16)).collect())
        .collect()
}

pub fn cell_seed(master: &Seed, cell: &Cell, rep: usize) -> Seed {
    let label = format!(
        "bench/{}/{}/{}/{}/{}",
        cell.k, cell.m, cell.dropout, cell.preset, cell.mode
    );
    derive_seed(master, &label, rep as u64)
}

pub fn run_cell(
    cell: &Cell,
    round: DropoutRound,
    master: &Seed,
    rep: usize,
) -> Result<CommunicationReport, CliError> {
    let proto = cell.protocol(round)?;
    let seed = cell_seed(master, cell, rep);
    let inputs = cell_inputs(cell.k, cell.m, &seed);
    let outcome = run_masking_aggregation(&inputs, &proto, &cell.adversary(round), &seed)?;
    Ok(measure_transcript(&outcome))
}

#[derive(Debug, Clone)]
pub struct BenchRow {
    pub report: CommunicationReport,
    pub preset: LwePreset,
    pub mode: SecurityMode,
    pub rep: usize,
    pub client_ms_p50: f64,
    pub client_ms_p90: f64,
    pub server_ms_p50: f64,
    pub server_ms_p90: f64,
}

pub const EXTRA_COLUMNS: [&str; 9] = [
    "preset",
    "mode",
    "rep",
    "server_reconstruct_ms",
    "setup_ms",
    "client_ms_p50",
    "client_ms_p90",
    "server_ms_p50",
    "server_ms_p90",
];

pub fn header() -> Vec<&'static str> {
    CommunicationReport::CSV_HEADER
        .iter()
        .chain(&EXTRA_COLUMNS)
        .copied()
        .collect()
}

impl BenchRow {
    pub fn record(&self) -> Vec<String> {
        let mut r = self.report.csv_record();
        r.extend([
            self.preset.to_string(),
            self.mode.to_string(),
            self.rep.to_string(),
            format!("{:.3}", self.report.server_reconstruct_ms),
            format!("{:.3}", self.report.setup_ms),
            format!("{:.3}", self.client_ms_p50),
            format!("{:.3}", self.client_ms_p90),
            format!("{:.3}", self.server_ms_p50),
            format!("{:.3}", self.server_ms_p90),
        ]);
        r
    }
}

/// Runs every cell `reps` times; rows of a cell share its timing percentiles.
pub fn run_plan(
    plan: &BenchPlan,
    master: &Seed,
    mut progress: impl FnMut(&Cell, usize),
) -> Result<Vec<BenchRow>, CliError> {
    plan.validate()?;
    let mut rows = Vec::new();
    for cell in plan.cells() {
        let mut reports = Vec::with_capacity(plan.reps);
        for rep in 0..plan.reps {
            progress(&cell, rep);
            reports.push(run_cell(&cell, plan.dropout_round, master, rep)?);
        }
        let client: Vec<f64> = reports.iter().map(|r| r.client_ms).collect();
        let server: Vec<f64> = reports.iter().map(|r| r.server_ms).collect();
        let (c50, c90, s50, s90) = (
            percentile(&client, 50.0),
            percentile(&client, 90.0),
            percentile(&server, 50.0),
            percentile(&server, 90.0),
        );
        rows.extend(
            reports
                .into_iter()
                .enumerate()
                .map(|(rep, report)| BenchRow {
                    report,
                    preset: cell.preset,
                    mode: cell.mode,
                    rep,
                    client_ms_p50: c50,
                    client_ms_p90: c90,
                    server_ms_p50: s50,
                    server_ms_p90: s90,
                }),
        );
    }
    Ok(rows)
}
