use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::line_search::{ArmijoParams, WolfeParams};
use super::{adam_step, bfgs_step, lbfgs_step, AdamState, BfgsState, LbfgsState, LineSearch, Objective, Sample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Bfgs,
    Lbfgs,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Bfgs => "bfgs",
            OptimizerKind::Lbfgs => "lbfgs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LineSearchKind {
    #[default]
    Armijo,
    Wolfe,
}

fn default_lr() -> f64 {
    1e-3
}

fn default_memory() -> usize {
    10
}

/// One stage of training. Quasi-Newton epochs are outer iterations, not
/// function evaluations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    pub optimizer: OptimizerKind,
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default)]
    pub line_search: LineSearchKind,
    #[serde(default = "default_memory")]
    pub memory: usize,
    /// Overrides the Wolfe curvature constant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
    /// Stop the phase early once ‖g‖ falls below this.
    #[serde(default)]
    pub gtol: f64,
}

impl Phase {
    pub fn adam(epochs: usize, lr: f64) -> Self {
        Self {
            optimizer: OptimizerKind::Adam,
            epochs,
            lr,
            line_search: LineSearchKind::Armijo,
            memory: default_memory(),
            c2: None,
            gtol: 0.0,
        }
    }

    pub fn bfgs(epochs: usize, line_search: LineSearchKind) -> Self {
        Self {
            optimizer: OptimizerKind::Bfgs,
            line_search,
            ..Self::adam(epochs, default_lr())
        }
    }

    pub fn lbfgs(epochs: usize, line_search: LineSearchKind) -> Self {
        Self {
            optimizer: OptimizerKind::Lbfgs,
            line_search,
            ..Self::adam(epochs, default_lr())
        }
    }

    pub fn with_gtol(mut self, gtol: f64) -> Self {
        self.gtol = gtol;
        self
    }

    pub fn search(&self) -> LineSearch {
        match self.line_search {
            LineSearchKind::Armijo => LineSearch::Armijo(ArmijoParams::default()),
            LineSearchKind::Wolfe => {
                let mut p = WolfeParams::default();
                if let Some(c2) = self.c2 {
                    p.c2 = c2;
                }
                LineSearch::Wolfe(p)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if self.optimizer == OptimizerKind::Adam && !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("lr", format!("must be positive, got {}", self.lr)));
        }
        if self.memory == 0 {
            return Err(Error::config("memory", "must be at least 1"));
        }
        if let Some(c2) = self.c2 {
            if !(c2 > 1e-4 && c2 < 1.0) {
                return Err(Error::config("c2", format!("must lie in (c1, 1), got {c2}")));
            }
        }
        Ok(())
    }
}

/// Ordered phases run on the same θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schedule {
    pub phases: Vec<Phase>,
}

impl Schedule {
    pub fn new(phases: Vec<Phase>) -> Result<Self> {
        let s = Self { phases };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.phases.is_empty() {
            return Err(Error::config("schedule", "needs at least one phase"));
        }
        self.phases.iter().try_for_each(Phase::validate)
    }

    pub fn total_epochs(&self) -> usize {
        self.phases.iter().map(|p| p.epochs).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iter: usize,
    /// `init` for the starting point, otherwise the optimizer name.
    pub phase: String,
    /// ADAM learning rate, or the accepted line-search step.
    pub alpha: f64,
    pub loss: f64,
    pub terms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Outcome {
    Completed,
    Aborted { phase: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub digest: String,
    pub seed: u64,
    pub term_names: Vec<String>,
    pub initial: HistoryRow,
    /// One row per completed epoch.
    pub history: Vec<HistoryRow>,
    pub theta: Vec<f64>,
    pub wall_clock: f64,
    pub metrics: BTreeMap<String, f64>,
    pub outcome: Outcome,
}

impl RunRecord {
    pub fn final_loss(&self) -> f64 {
        self.history.last().unwrap_or(&self.initial).loss
    }

    pub fn completed(&self) -> bool {
        self.outcome == Outcome::Completed
    }

    /// Equality on everything except the wall-clock time.
    pub fn same_result(&self, other: &RunRecord) -> bool {
        let mut a = self.clone();
        a.wall_clock = other.wall_clock;
        a == *other
    }

    pub fn history_csv(&self) -> String {
        let mut s = String::from("iter,phase,alpha,L_total");
        for n in &self.term_names {
            s.push(',');
            s.push_str(n);
        }
        s.push('\n');
        for r in std::iter::once(&self.initial).chain(&self.history) {
            let _ = write!(s, "{},{},{},{}", r.iter, r.phase, r.alpha, r.loss);
            for t in &r.terms {
                let _ = write!(s, ",{t}");
            }
            s.push('\n');
        }
        s
    }

    pub fn write_history_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.history_csv())?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::parse("run record", e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse("run record", e.to_string()))
    }
}

/// Parses a loss-history CSV into term names and rows (the first row is the
/// initial point).
pub fn parse_history_csv(text: &str) -> Result<(Vec<String>, Vec<HistoryRow>)> {
    let err = |m: String| Error::parse("loss history", m);
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().ok_or_else(|| err("empty file".into()))?.split(',').collect();
    if header.len() < 4 || header[..4] != ["iter", "phase", "alpha", "L_total"] {
        return Err(err(format!("unexpected header {header:?}")));
    }
    let names: Vec<String> = header[4..].iter().map(|s| s.to_string()).collect();
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != header.len() {
            return Err(err(format!("row {k} has {} fields, expected {}", f.len(), header.len())));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|e| err(format!("row {k}: `{s}`: {e}")));
        rows.push(HistoryRow {
            iter: f[0].trim().parse().map_err(|e| err(format!("row {k}: {e}")))?,
            phase: f[1].to_string(),
            alpha: num(f[2])?,
            loss: num(f[3])?,
            terms: f[4..].iter().map(|s| num(s)).collect::<Result<_>>()?,
        });
    }
    Ok((names, rows))
}

pub fn read_history_csv(path: &Path) -> Result<(Vec<String>, Vec<HistoryRow>)> {
    parse_history_csv(&std::fs::read_to_string(path)?)
}

enum State {
    Adam(AdamState),
    Bfgs(BfgsState),
    Lbfgs(LbfgsState),
}

/// Runs every phase in order on one θ. A phase that fails stops the run;
/// the partial record is returned with an `Aborted` outcome. The seed is
/// only recorded: the optimizers themselves are deterministic.
pub fn run_schedule(
    objective: &dyn Objective,
    theta0: Vec<f64>,
    schedule: &Schedule,
    seed: u64,
    digest: &str,
    callback: &mut dyn FnMut(&HistoryRow),
) -> Result<RunRecord> {
    schedule.validate()?;
    if theta0.len() != objective.dim() {
        return Err(Error::contract(format!(
            "θ has {} entries, objective expects {}",
            theta0.len(),
            objective.dim()
        )));
    }
    let start = Instant::now();
    let mut theta = theta0;
    let mut cur = objective.value_grad(&theta)?;
    let initial = HistoryRow {
        iter: 0,
        phase: "init".into(),
        alpha: 0.0,
        loss: cur.loss,
        terms: cur.terms.clone(),
    };
    callback(&initial);
    let mut history = Vec::with_capacity(schedule.total_epochs());
    let mut outcome = Outcome::Completed;

    'phases: for (pi, phase) in schedule.phases.iter().enumerate() {
        let ls = phase.search();
        let mut state = match phase.optimizer {
            OptimizerKind::Adam => State::Adam(AdamState::new(theta.len(), phase.lr)),
            OptimizerKind::Bfgs => match BfgsState::new(theta.len()) {
                Ok(s) => State::Bfgs(s),
                Err(e) => {
                    outcome = Outcome::Aborted {
                        phase: pi,
                        message: e.to_string(),
                    };
                    break 'phases;
                }
            },
            OptimizerKind::Lbfgs => State::Lbfgs(LbfgsState::new(phase.memory)),
        };
        for _ in 0..phase.epochs {
            if phase.gtol > 0.0 && cur.grad_norm() < phase.gtol {
                break;
            }
            let step: Result<Option<(f64, Sample)>> = match &mut state {
                State::Adam(s) => adam_step(s, &mut theta, &cur.grad)
                    .and_then(|_| objective.value_grad(&theta))
                    .map(|next| Some((phase.lr, next))),
                State::Bfgs(s) => {
                    let mut c = cur.clone();
                    bfgs_step(s, &mut theta, &mut c, objective, &ls).map(|i| (!i.stationary).then_some((i.alpha, c)))
                }
                State::Lbfgs(s) => {
                    let mut c = cur.clone();
                    lbfgs_step(s, &mut theta, &mut c, objective, &ls).map(|i| (!i.stationary).then_some((i.alpha, c)))
                }
            };
            match step {
                Ok(Some((alpha, next))) => {
                    cur = next;
                    let row = HistoryRow {
                        iter: history.len() + 1,
                        phase: phase.optimizer.name().into(),
                        alpha,
                        loss: cur.loss,
                        terms: cur.terms.clone(),
                    };
                    callback(&row);
                    history.push(row);
                }
                Ok(None) => break,
                Err(e) => {
                    outcome = Outcome::Aborted {
                        phase: pi,
                        message: e.to_string(),
                    };
                    break 'phases;
                }
            }
        }
    }

    Ok(RunRecord {
        digest: digest.to_string(),
        seed,
        term_names: objective.term_names(),
        initial,
        history,
        theta,
        wall_clock: start.elapsed().as_secs_f64(),
        metrics: BTreeMap::new(),
        outcome,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::benchmarks::{log_spectrum, quadratic, rosenbrock};
    use crate::optim::FnObjective;

    fn quiet() -> impl FnMut(&HistoryRow) {
        |_| {}
    }

    #[test]
    fn zero_epoch_adam_leaves_theta() {
        let f = rosenbrock(2);
        let s = Schedule::new(vec![Phase::adam(0, 1e-3)]).unwrap();
        let r = run_schedule(&f, vec![-1.2, 1.0], &s, 0, "d", &mut quiet()).unwrap();
        assert_eq!(r.theta, vec![-1.2, 1.0]);
        assert!(r.history.is_empty());
        assert!((r.initial.loss - 24.2).abs() < 1e-12);
        assert!(r.completed());
    }

    #[test]
    fn empty_schedule_is_rejected() {
        assert!(Schedule::new(vec![]).is_err());
    }

    #[test]
    fn phases_share_theta_and_history_counts_epochs() {
        let f = rosenbrock(4);
        let s = Schedule::new(vec![Phase::adam(30, 1e-3), Phase::lbfgs(20, LineSearchKind::Wolfe)]).unwrap();
        let r = run_schedule(&f, vec![-1.2, 1.0, -1.2, 1.0], &s, 0, "d", &mut quiet()).unwrap();
        assert_eq!(r.history.len(), 50);
        assert_eq!(r.history[29].phase, "adam");
        assert_eq!(r.history[30].phase, "lbfgs");
        assert_eq!(r.history.iter().map(|h| h.iter).collect::<Vec<_>>(), (1..=50).collect::<Vec<_>>());
        assert!(r.final_loss() < r.history[29].loss);
    }

    #[test]
    fn armijo_history_is_non_increasing_with_sufficient_decrease() {
        let f = rosenbrock(10);
        let s = Schedule::new(vec![Phase::bfgs(200, LineSearchKind::Armijo)]).unwrap();
        let mut x0 = vec![-1.2; 10];
        x0.iter_mut().skip(1).step_by(2).for_each(|v| *v = 1.0);
        let r = run_schedule(&f, x0, &s, 0, "d", &mut quiet()).unwrap();
        let mut prev = r.initial.loss;
        for h in &r.history {
            assert!(h.loss <= prev, "iteration {}: {} > {}", h.iter, h.loss, prev);
            prev = h.loss;
        }
    }

    #[test]
    fn deterministic_records() {
        let f = quadratic(&log_spectrum(12, 1e3), 5);
        let s = Schedule::new(vec![Phase::adam(50, 1e-2), Phase::bfgs(30, LineSearchKind::Wolfe)]).unwrap();
        let a = run_schedule(&f, vec![0.0; 12], &s, 7, "abc", &mut quiet()).unwrap();
        let b = run_schedule(&f, vec![0.0; 12], &s, 7, "abc", &mut quiet()).unwrap();
        assert!(a.same_result(&b));
    }

    #[test]
    fn non_finite_objective_aborts_with_partial_record() {
        let f = FnObjective::new(1, |x: &[f64]| {
            if x[0] < -0.5 {
                (f64::NAN, vec![f64::NAN])
            } else {
                (x[0], vec![1.0])
            }
        });
        let s = Schedule::new(vec![Phase::adam(1000, 0.1), Phase::bfgs(5, LineSearchKind::Armijo)]).unwrap();
        let r = run_schedule(&f, vec![0.0], &s, 0, "d", &mut quiet()).unwrap();
        assert!(matches!(r.outcome, Outcome::Aborted { phase: 0, .. }));
        assert!(!r.history.is_empty() && r.history.len() < 1000);
    }

    #[test]
    fn history_csv_and_json_round_trip() {
        let f = rosenbrock(2);
        let s = Schedule::new(vec![Phase::adam(5, 1e-3), Phase::bfgs(5, LineSearchKind::Wolfe)]).unwrap();
        let mut r = run_schedule(&f, vec![-1.2, 1.0], &s, 3, "d", &mut quiet()).unwrap();
        r.term_names = vec!["a".into()];
        for h in std::iter::once(&mut r.initial).chain(r.history.iter_mut()) {
            h.terms = vec![h.loss * 0.5];
        }
        let (names, rows) = parse_history_csv(&r.history_csv()).unwrap();
        assert_eq!(names, r.term_names);
        assert_eq!(rows[0], r.initial);
        assert_eq!(rows[1..], r.history[..]);
        assert_eq!(RunRecord::from_json(&r.to_json().unwrap()).unwrap(), r);
    }

    #[test]
    fn phase_toml_is_strict() {
        let ok: Phase = toml::from_str("optimizer = \"lbfgs\"\nepochs = 7\nline_search = \"wolfe\"").unwrap();
        assert_eq!(ok.memory, 10);
        assert_eq!(ok.lr, 1e-3);
        assert!(toml::from_str::<Phase>("optimizer = \"adam\"\nepochs = 1\nmomentum = 2").is_err());
    }
}
