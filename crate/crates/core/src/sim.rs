//! Deterministic closed-loop rollouts: nominal controller, optional
//! adaptation, safety filter, model step.

use std::io::Write;

use serde::Serialize;

use crate::adapt::Adapter;
use crate::cascade::BarrierCascade;
use crate::dynamics::{ModelKind, SystemModel};
use crate::error::{Error, Result};
use crate::filter::{best_effort_control, safe_control};
use crate::scalar::{sq_dist, Scalar};

pub trait NominalController<T> {
    fn control(&self, x: &[T]) -> Vec<T>;

    /// Goal position used for the distance-to-goal progress metric.
    fn goal(&self) -> Option<&[T]> {
        None
    }
}

/// Same input at every state.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantInput<T>(pub Vec<T>);

impl<T: Scalar> NominalController<T> for ConstantInput<T> {
    fn control(&self, _x: &[T]) -> Vec<T> {
        self.0.clone()
    }
}

/// Proportional go-to-goal law for the unicycle: `v = k_v * distance`,
/// `omega = k_omega * heading error`, both clipped to the input bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct GoToGoal<T> {
    pub goal: [T; 2],
    pub k_v: T,
    pub k_omega: T,
    pub v_max: T,
    pub omega_max: T,
}

impl<T: Scalar> NominalController<T> for GoToGoal<T> {
    fn control(&self, x: &[T]) -> Vec<T> {
        let dx = self.goal[0] - x[0];
        let dy = self.goal[1] - x[1];
        let dist = (dx * dx + dy * dy).sqrt();
        let pi = T::lit(std::f64::consts::PI);
        let two_pi = pi + pi;
        let mut err = dy.atan2(dx) - x[2];
        // wrap into [-pi, pi)
        err = err - two_pi * ((err + pi) / two_pi).floor();
        vec![
            (self.k_v * dist).max(T::zero()).min(self.v_max),
            (self.k_omega * err)
                .max(-self.omega_max)
                .min(self.omega_max),
        ]
    }

    fn goal(&self) -> Option<&[T]> {
        Some(&self.goal)
    }
}

/// Adapts a closure into a controller.
pub struct FnController<F>(pub F);

impl<T, F: Fn(&[T]) -> Vec<T>> NominalController<T> for FnController<F> {
    fn control(&self, x: &[T]) -> Vec<T> {
        (self.0)(x)
    }
}

/// What the filter enforces during a rollout.
#[derive(Debug, Clone, Copy)]
pub enum Shield<'a, T> {
    Fixed(&'a BarrierCascade<T>),
    Adaptive(&'a Adapter<T>),
}

/// Reaction to a state where no grid input satisfies `psi >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfeasiblePolicy {
    /// End the rollout with [`Terminal::InfeasibleAtState`].
    #[default]
    Stop,
    /// Apply the grid input maximizing `psi` and keep going; the step is
    /// flagged infeasible in the log.
    BestEffort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RolloutOptions {
    /// Bisection refinement of scalar inputs.
    pub refine: bool,
    pub on_infeasible: InfeasiblePolicy,
}

impl Default for RolloutOptions {
    fn default() -> Self {
        Self {
            refine: true,
            on_infeasible: InfeasiblePolicy::Stop,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Scalar"))]
pub struct StepRecord<T> {
    pub t: usize,
    pub x: Vec<T>,
    pub u_nom: Vec<T>,
    pub u_safe: Vec<T>,
    /// `b_0 .. b_r` of the active candidate at `x`.
    pub b: Vec<T>,
    pub psi: T,
    pub alpha_id: String,
    pub modified: bool,
    pub feasible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Terminal {
    Completed,
    InfeasibleAtState { t: usize },
    NoAdmissibleCandidate { t: usize },
}

impl Terminal {
    pub fn is_completed(&self) -> bool {
        matches!(self, Terminal::Completed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Progress<T> {
    /// Final value of one state coordinate.
    Coordinate(usize),
    /// Final Euclidean distance of the leading coordinates to a goal.
    DistanceTo(Vec<T>),
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog<T> {
    pub steps: Vec<StepRecord<T>>,
    pub terminal: Terminal,
    /// State after the last recorded step (or `x0` if nothing was recorded).
    pub final_state: Vec<T>,
    pub final_h: T,
    pub switches: usize,
    pub progress: Progress<T>,
}

impl<T: Scalar> TrajectoryLog<T> {
    /// Largest `b` vector length across records.
    pub fn levels(&self) -> usize {
        self.steps.iter().map(|s| s.b.len()).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Scalar"))]
pub struct Metrics<T> {
    pub min_h: T,
    pub violation: bool,
    pub mean_deviation: T,
    pub progress: Option<T>,
    pub switches: usize,
    pub infeasible_steps: usize,
}

fn default_progress<T: Scalar>(model: &SystemModel<T>, goal: Option<&[T]>) -> Progress<T> {
    match (model.kind(), goal) {
        (ModelKind::DoubleIntegrator { .. }, _) => Progress::Coordinate(0),
        (_, Some(g)) => Progress::DistanceTo(g.to_vec()),
        _ => Progress::None,
    }
}

/// Runs the loop `select -> filter -> step` for up to `horizon` steps.
///
/// Filter or adaptation failures end the rollout and are reported in
/// [`TrajectoryLog::terminal`]; a start outside the safe set ends it at
/// `t = 0` without recording a step.
pub fn rollout<T: Scalar>(
    model: &SystemModel<T>,
    shield: Shield<'_, T>,
    controller: &dyn NominalController<T>,
    x0: &[T],
    horizon: usize,
    options: RolloutOptions,
) -> Result<TrajectoryLog<T>> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    model.check_state(x0)?;
    let progress = default_progress(model, controller.goal());
    let mut x = x0.to_vec();
    let mut steps = Vec::with_capacity(horizon);
    let mut switches = 0;
    let finish = |steps, terminal, x: Vec<T>, switches| {
        Ok(TrajectoryLog {
            steps,
            terminal,
            final_h: model.barrier(&x),
            final_state: x,
            switches,
            progress: progress.clone(),
        })
    };

    let outside_at_start = match shield {
        Shield::Fixed(_) => Terminal::InfeasibleAtState { t: 0 },
        Shield::Adaptive(_) => Terminal::NoAdmissibleCandidate { t: 0 },
    };
    if model.barrier(&x) < T::zero() {
        return finish(steps, outside_at_start, x, switches);
    }

    let mut adapt_state = match shield {
        Shield::Adaptive(ad) => match ad.initial_state(&x, &controller.control(&x)) {
            Ok(s) => Some(s),
            Err(Error::NoAdmissibleCandidate) => {
                return finish(steps, outside_at_start, x, switches)
            }
            Err(e) => return Err(e),
        },
        Shield::Fixed(_) => None,
    };

    for t in 0..horizon {
        let u_nom = controller.control(&x);
        let cascade = match (shield, adapt_state.take()) {
            (Shield::Fixed(c), _) => c,
            (Shield::Adaptive(ad), Some(st)) => match ad.select(st, &x, &u_nom) {
                Ok((i, st)) => {
                    switches = st.switch_count;
                    adapt_state = Some(st);
                    ad.cascade(i)
                }
                Err(Error::NoAdmissibleCandidate) => {
                    return finish(steps, Terminal::NoAdmissibleCandidate { t }, x, switches)
                }
                Err(e) => return Err(e),
            },
            (Shield::Adaptive(_), None) => unreachable!("adaptive rollout without state"),
        };

        let (result, feasible) = match safe_control(cascade, &x, &u_nom, options.refine) {
            Ok(r) => (r, true),
            Err(Error::InfeasibleAtState) => match options.on_infeasible {
                InfeasiblePolicy::Stop => {
                    return finish(steps, Terminal::InfeasibleAtState { t }, x, switches)
                }
                InfeasiblePolicy::BestEffort => (best_effort_control(cascade, &x, &u_nom)?, false),
            },
            Err(e) => return Err(e),
        };

        let next = model.step(&x, &result.u_safe)?;
        steps.push(StepRecord {
            t,
            b: cascade.b_values(&x)?,
            x: std::mem::replace(&mut x, next),
            u_nom,
            u_safe: result.u_safe,
            psi: result.psi_value,
            alpha_id: cascade.alpha().id.clone(),
            modified: result.modified,
            feasible,
        });
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("state"));
        }
    }
    finish(steps, Terminal::Completed, x, switches)
}

pub fn metrics<T: Scalar>(log: &TrajectoryLog<T>) -> Result<Metrics<T>> {
    if log.steps.is_empty() {
        return Err(Error::EmptyLog);
    }
    let min_h = log.steps.iter().map(|s| s.b[0]).fold(log.final_h, T::min);
    let total = log
        .steps
        .iter()
        .map(|s| sq_dist(&s.u_safe, &s.u_nom).sqrt())
        .fold(T::zero(), |a, d| a + d);
    let progress = match &log.progress {
        Progress::Coordinate(i) => log.final_state.get(*i).copied(),
        Progress::DistanceTo(goal) => Some(sq_dist(&log.final_state[..goal.len()], goal).sqrt()),
        Progress::None => None,
    };
    Ok(Metrics {
        min_h,
        violation: min_h < T::zero(),
        mean_deviation: total / T::from_usize_lossy(log.steps.len()),
        progress,
        switches: log.switches,
        infeasible_steps: log.steps.iter().filter(|s| !s.feasible).count(),
    })
}

/// One row per step: `t, x.., u_nom.., u_safe.., b0..br, psi, alpha_id,
/// modified`. Missing levels (adaptive runs mixing depths) are left empty.
pub fn write_csv<T: Scalar, W: Write>(
    log: &TrajectoryLog<T>,
    n: usize,
    m: usize,
    out: W,
) -> Result<(), csv::Error> {
    let levels = log.levels();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("x{i}")));
    header.extend((0..m).map(|i| format!("u_nom{i}")));
    header.extend((0..m).map(|i| format!("u_safe{i}")));
    header.extend((0..levels).map(|i| format!("b{i}")));
    header.extend(["psi", "alpha_id", "modified"].map(String::from));
    w.write_record(&header)?;
    for s in &log.steps {
        let mut row = vec![s.t.to_string()];
        row.extend(s.x.iter().map(|v| v.to_string()));
        row.extend(s.u_nom.iter().map(|v| v.to_string()));
        row.extend(s.u_safe.iter().map(|v| v.to_string()));
        row.extend((0..levels).map(|i| s.b.get(i).map_or(String::new(), |v| v.to_string())));
        row.push(s.psi.to_string());
        row.push(s.alpha_id.clone());
        row.push(s.modified.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::AlphaVector;

    fn di() -> SystemModel<f64> {
        SystemModel::double_integrator(0.1, 1.0, 10.0).unwrap()
    }

    fn cascade(gammas: &[f64]) -> BarrierCascade<f64> {
        BarrierCascade::new(di(), AlphaVector::linear(gammas).unwrap(), 11).unwrap()
    }

    #[test]
    fn drive_at_wall_stays_safe() {
        let m = di();
        let c = cascade(&[0.02, 0.5]);
        let log = rollout(
            &m,
            Shield::Fixed(&c),
            &ConstantInput(vec![1.0]),
            &[0.0, 0.0],
            300,
            RolloutOptions::default(),
        )
        .unwrap();
        assert_eq!(log.terminal, Terminal::Completed);
        assert_eq!(log.steps.len(), 300);
        let met = metrics(&log).unwrap();
        assert!(met.min_h >= 0.0, "{met:?}");
        assert!(!met.violation);
        assert!(
            log.final_state[1].abs() < 0.1,
            "terminal velocity {:?}",
            log.final_state
        );
        assert!(met.progress.unwrap() > 9.0);
        for w in log.steps.windows(2) {
            assert_eq!(w[1].t, w[0].t + 1);
            assert_eq!(m.step(&w[0].x, &w[0].u_safe).unwrap(), w[1].x);
        }
    }

    #[test]
    fn start_outside_safe_set() {
        let m = di();
        let c = cascade(&[0.02, 0.02]);
        let log = rollout(
            &m,
            Shield::Fixed(&c),
            &ConstantInput(vec![0.0]),
            &[11.0, 0.0],
            10,
            RolloutOptions::default(),
        )
        .unwrap();
        assert_eq!(log.terminal, Terminal::InfeasibleAtState { t: 0 });
        assert!(log.steps.is_empty());
        assert_eq!(metrics(&log), Err(Error::EmptyLog));
    }

    #[test]
    fn equilibrium_is_constant() {
        let m = di();
        let c = cascade(&[0.02, 0.5]);
        let log = rollout(
            &m,
            Shield::Fixed(&c),
            &ConstantInput(vec![0.0]),
            &[3.0, 0.0],
            20,
            RolloutOptions::default(),
        )
        .unwrap();
        assert!(log.steps.iter().all(|s| s.x == vec![3.0, 0.0]));
        let met = metrics(&log).unwrap();
        assert_eq!(met.min_h, 7.0);
        assert_eq!(met.mean_deviation, 0.0);
    }

    #[test]
    fn metrics_examples() {
        let rec = |u_nom: f64, u_safe: f64| StepRecord {
            t: 0,
            x: vec![0.0, 0.0],
            u_nom: vec![u_nom],
            u_safe: vec![u_safe],
            b: vec![10.0],
            psi: 0.0,
            alpha_id: "a".into(),
            modified: u_nom != u_safe,
            feasible: true,
        };
        let log = TrajectoryLog {
            steps: vec![rec(1.0, 0.5)],
            terminal: Terminal::Completed,
            final_state: vec![0.0, 0.0],
            final_h: 10.0,
            switches: 3,
            progress: Progress::Coordinate(0),
        };
        let met = metrics(&log).unwrap();
        assert_eq!(met.mean_deviation, 0.5);
        assert_eq!(met.min_h, 10.0);
        assert!(!met.violation);
        assert_eq!(met.switches, 3);
        assert_eq!(met.progress, Some(0.0));
    }

    #[test]
    fn replay_is_bit_identical() {
        let m = di();
        let c = cascade(&[0.02, 0.3]);
        let run = || {
            rollout(
                &m,
                Shield::Fixed(&c),
                &ConstantInput(vec![1.0]),
                &[1.0, 0.5],
                100,
                RolloutOptions::default(),
            )
            .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a, b);
    }

    #[test]
    fn csv_layout() {
        let m = di();
        let c = cascade(&[0.02, 0.5]);
        let log = rollout(
            &m,
            Shield::Fixed(&c),
            &ConstantInput(vec![1.0]),
            &[0.0, 0.0],
            3,
            RolloutOptions::default(),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_csv(&log, 2, 1, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next(),
            Some("t,x0,x1,u_nom0,u_safe0,b0,b1,psi,alpha_id,modified")
        );
        assert_eq!(lines.count(), 3);
    }

    #[test]
    fn go_to_goal_heads_for_goal() {
        let ctl = GoToGoal {
            goal: [10.0, 0.0],
            k_v: 1.0,
            k_omega: 2.0,
            v_max: 1.0,
            omega_max: 1.0,
        };
        assert_eq!(ctl.control(&[0.0, 0.0, 0.0]), vec![1.0, 0.0]);
        let u = ctl.control(&[0.0, 0.0, std::f64::consts::FRAC_PI_2]);
        assert_eq!(u[1], -1.0);
        assert_eq!(ctl.control(&[10.0, 0.0, 0.0])[0], 0.0);
    }
}
