use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::{Perception, RunConfig};
use super::eval::{evaluate, EvalReport, GreedyPolicy};
use super::run::run_train;
use super::HarnessError;
use crate::env::ControlMode;
use crate::neuralnet::Checkpoint;
use crate::trainer::{train, IterationMetrics, TrainMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Full,
    Reactive,
    Blind,
    Sequential,
}

pub const VARIANTS: [Variant; 4] = [Variant::Full, Variant::Reactive, Variant::Blind, Variant::Sequential];

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Reactive => "reactive",
            Variant::Blind => "blind",
            Variant::Sequential => "sequential",
        }
    }

    /// `base` with the mode flags of this variant: PMTG, LiDAR and
    /// multi-task training, with one axis switched off.
    pub fn apply(self, base: &RunConfig) -> RunConfig {
        let mut cfg = base.clone();
        cfg.mode.control = ControlMode::Pmtg;
        cfg.mode.perception = Perception::Lidar;
        cfg.mode.training = TrainMode::Multitask;
        match self {
            Variant::Full => {}
            Variant::Reactive => cfg.mode.control = ControlMode::Reactive,
            Variant::Blind => cfg.mode.perception = Perception::Blind,
            Variant::Sequential => cfg.mode.training = TrainMode::Sequential,
        }
        cfg
    }
}

/// Mean tcr of each variant on each eval cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub cells: Vec<String>,
    pub held_out: Vec<bool>,
    pub variants: Vec<Variant>,
    /// `tcr[v][c]`.
    pub tcr: Vec<Vec<f64>>,
    pub reports: Vec<EvalReport>,
}

impl AblationTable {
    pub fn from_reports(variants: Vec<Variant>, reports: Vec<EvalReport>) -> Self {
        let first = &reports[0];
        Self {
            cells: first.cells.iter().map(|c| c.name.clone()).collect(),
            held_out: first.cells.iter().map(|c| c.held_out).collect(),
            tcr: reports.iter().map(|r| r.cells.iter().map(|c| c.mean_tcr).collect()).collect(),
            variants,
            reports,
        }
    }

    fn row(&self, v: Variant) -> Option<usize> {
        self.variants.iter().position(|x| *x == v)
    }

    pub fn get(&self, v: Variant, cell: &str) -> Option<f64> {
        let c = self.cells.iter().position(|n| n == cell)?;
        Some(self.tcr[self.row(v)?][c])
    }

    pub fn held_out_mean(&self, v: Variant) -> Option<f64> {
        Some(self.reports[self.row(v)?].held_out_mean())
    }

    /// `(full - variant) / variant * 100`, per cell.
    pub fn relative(&self, v: Variant) -> Option<Vec<f64>> {
        let full = &self.tcr[self.row(Variant::Full)?];
        let row = &self.tcr[self.row(v)?];
        Some(full.iter().zip(row).map(|(f, x)| relative_pct(*f, *x)).collect())
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{:<12}", "variant");
        for (name, held) in self.cells.iter().zip(&self.held_out) {
            let _ = write!(s, " {:>22}", format!("{name}{}", if *held { "*" } else { "" }));
        }
        let _ = writeln!(s, " {:>22}", "held-out mean");
        let full_mean = self.held_out_mean(Variant::Full);
        for (v, row) in self.variants.iter().zip(&self.tcr) {
            let _ = write!(s, "{:<12}", v.name());
            let rel = self.relative(*v);
            for (c, x) in row.iter().enumerate() {
                let pct = rel.as_ref().map(|r| r[c]);
                let _ = write!(s, " {:>22}", cell(*x, pct));
            }
            let m = self.held_out_mean(*v).unwrap_or(f64::NAN);
            let _ = writeln!(s, " {:>22}", cell(m, full_mean.map(|f| relative_pct(f, m))));
        }
        let _ = writeln!(s, "relative column: (full - variant) / variant x 100%");
        s
    }

    /// `variant,cell,tcr,relative_pct` rows.
    pub fn write_csv(&self, out: impl Write) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["variant", "cell", "tcr", "relative_pct"])?;
        for (v, row) in self.variants.iter().zip(&self.tcr) {
            let rel = self.relative(*v);
            for (c, x) in row.iter().enumerate() {
                let pct = rel.as_ref().map_or(f64::NAN, |r| r[c]);
                w.write_record([v.name().to_string(), self.cells[c].clone(), x.to_string(), pct.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn relative_pct(full: f64, variant: f64) -> f64 {
    (full - variant) / variant * 100.0
}

fn cell(x: f64, pct: Option<f64>) -> String {
    match pct {
        Some(p) if p.is_finite() => format!("{x:.3} ({p:+.0}%)"),
        Some(_) => format!("{x:.3} (n/a)"),
        None => format!("{x:.3}"),
    }
}

/// Trains every variant of `base` with the same seed and budget, then
/// evaluates each greedily on the shared eval suite. With `out_dir`, each
/// run is written to `out_dir/<variant>/`.
pub fn ablate(
    base: &RunConfig,
    variants: &[Variant],
    episodes: usize,
    eval_seed: u64,
    out_dir: Option<&Path>,
    mut on_iteration: impl FnMut(Variant, &IterationMetrics),
) -> Result<AblationTable, HarnessError> {
    if variants.is_empty() {
        return Err(HarnessError::Config("no ablation variants selected".into()));
    }
    let mut reports = Vec::with_capacity(variants.len());
    for &v in variants {
        let cfg = v.apply(base);
        cfg.validate()?;
        let ckpt: Checkpoint = match out_dir {
            Some(dir) => run_train(&cfg, &dir.join(v.name()), None, |m| on_iteration(v, m))?.checkpoint,
            None => {
                train(cfg.train_config(), cfg.distribution()?, cfg.seed, |_, m| {
                    on_iteration(v, m);
                    Ok(())
                })?
                .0
            }
        };
        let net = ckpt.net()?;
        let env = Arc::new(cfg.env_config());
        let policy = GreedyPolicy { net: &net, params: &ckpt.params };
        reports.push(evaluate(&policy, &cfg.eval, &env, episodes, eval_seed)?);
    }
    Ok(AblationTable::from_reports(variants.to_vec(), reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{EvalEntry, TaskEntry};
    use crate::neuralnet::PolicyArch;
    use crate::sensors::LidarConfig;
    use crate::terrain::TerrainType;
    use crate::trainer::PpoConfig;

    fn tiny() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.ppo = PpoConfig { workers: 2, horizon: 8, total_steps: 0, minibatch_size: 8, epochs: 1, ..PpoConfig::default() };
        cfg.episode.max_steps = 10;
        cfg.episode.grid_rows = 24;
        cfg.episode.grid_cols = 24;
        cfg.episode.settle_steps = 20;
        cfg.episode.goal_distance = [2.0, 3.0];
        cfg.lidar = LidarConfig { channels: 2, azimuth_bins: 4, ..LidarConfig::default() };
        cfg.network = PolicyArch { lidar_encoder: vec![4], proprio_encoder: vec![8, 4], trunk: vec![16], value: vec![8] };
        cfg.tasks = vec![TaskEntry::new(TerrainType::Flat, &[]), TaskEntry::new(TerrainType::Stairs, &[("h", [0.02, 0.03]), ("l", [0.6, 1.0])])];
        cfg.eval = vec![
            EvalEntry::new("flat", TerrainType::Flat, false, &[]),
            EvalEntry::new("obstacles", TerrainType::Obstacles, true, &[("n", [5.0, 10.0]), ("h", [0.05, 0.1])]),
            EvalEntry::new("hills", TerrainType::Hills, true, &[("k", [2.0, 3.0]), ("amplitude", [0.1, 0.2]), ("radius", [1.0, 2.0])]),
        ];
        cfg
    }

    #[test]
    fn variants_flip_one_axis() {
        let base = RunConfig::default();
        let modes: Vec<_> = VARIANTS.iter().map(|v| v.apply(&base).mode).collect();
        for (k, m) in modes.iter().enumerate() {
            let diffs = [
                m.control != ControlMode::Pmtg,
                m.perception != Perception::Lidar,
                m.training != TrainMode::Multitask,
            ];
            assert_eq!(diffs.iter().filter(|d| **d).count(), usize::from(k > 0));
        }
    }

    #[test]
    fn table_shape_and_relative_formula() {
        let table = ablate(&tiny(), &VARIANTS, 2, 4, None, |_, _| {}).unwrap();
        assert_eq!(table.tcr.len(), 4);
        assert!(table.tcr.iter().all(|row| row.len() == 3));
        for v in VARIANTS {
            let rel = table.relative(v).unwrap();
            for (c, name) in table.cells.iter().enumerate() {
                let (f, x) = (table.get(Variant::Full, name).unwrap(), table.get(v, name).unwrap());
                let expect = (f - x) / x * 100.0;
                assert!(rel[c] == expect || (rel[c].is_nan() && expect.is_nan()));
            }
        }
        let text = table.render();
        assert_eq!(text.lines().count(), 6);
        assert!(text.contains("hills*"));
    }

    #[test]
    fn zero_budget_rows_share_the_full_row_where_modes_agree() {
        // With no training, sequential and full are the same network; blind
        // and reactive differ only through their architectures.
        let table = ablate(&tiny(), &VARIANTS, 2, 4, None, |_, _| {}).unwrap();
        assert_eq!(table.tcr[0], table.tcr[3]);
        assert!(table.relative(Variant::Sequential).unwrap().iter().all(|r| *r == 0.0 || r.is_nan()));
        for row in &table.tcr {
            for x in row {
                assert!(x.abs() < 0.2, "{x}");
            }
        }
    }
}
