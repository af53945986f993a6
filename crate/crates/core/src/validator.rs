//! Grid certification of candidate alpha vectors.
//!
//! For every state of a uniform grid over the model's state box that lies in
//! `C*`, the validator computes `sup_u psi(x, u)` over the input grid and
//! reports `zeta* = min` of those values. `zeta* < 0` refutes the candidate
//! with concrete counterexample states. `zeta* >= 0` means the condition
//! holds at every grid point of `C*`: this is evidence on the grid, not a
//! proof over the continuous set, which is why reports carry
//! `scope = "grid"`.

use rayon::prelude::*;
use serde::Serialize;

use crate::cascade::{AlphaVector, BarrierCascade};
use crate::dynamics::{BoxBounds, SystemModel};
use crate::error::{Error, PartialProgress, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    /// `zeta* >= 0` over a non-empty `C*` grid.
    Certified,
    Refuted,
    /// No grid point lies in `C*`; never treated as certified.
    VacuousEmptyCStar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValidationConfig {
    pub state_resolution: usize,
    pub input_resolution: usize,
    /// Cap on `psi` evaluations; `None` is unlimited.
    pub max_evals: Option<u64>,
}

impl ValidationConfig {
    pub fn new(state_resolution: usize, input_resolution: usize) -> Self {
        Self {
            state_resolution,
            input_resolution,
            max_evals: None,
        }
    }

    pub fn with_max_evals(mut self, max_evals: u64) -> Self {
        self.max_evals = Some(max_evals);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Scalar"))]
pub struct GridMeta<T> {
    pub state_resolution: usize,
    pub input_resolution: usize,
    pub state_points: usize,
    pub input_points: usize,
    pub state_box: BoxBounds<T>,
    pub input_box: BoxBounds<T>,
    pub max_evals: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Scalar"))]
pub struct ValidationReport<T> {
    pub candidate_id: String,
    pub verdict: Verdict,
    /// Minimum over grid points in `C*` of `sup_u psi`; absent when `C*`
    /// holds no grid point.
    pub zeta_star: Option<T>,
    /// First grid point in row-major order attaining `zeta*`.
    pub worst_state: Option<Vec<T>>,
    /// Grid points in `C*` where `sup_u psi < 0`, in row-major order.
    pub counterexamples: Vec<Vec<T>>,
    pub c_star_count: usize,
    pub psi_evaluations: u64,
    pub grid_meta: GridMeta<T>,
    /// Always `"grid"`: the verdict concerns grid points only.
    pub scope: &'static str,
}

struct StateOutcome<T> {
    sup: T,
}

fn sup_psi<T: Scalar>(cascade: &BarrierCascade<T>, x: &[T]) -> Result<T> {
    let row = cascade.psi_row(x)?;
    let mut sup = T::neg_infinity();
    for v in row {
        if v.is_nan() {
            return Err(Error::NonFinite("psi"));
        }
        sup = sup.max(v);
    }
    Ok(sup)
}

/// Evaluates the min-sup certification problem on the grid described by
/// `config`. Runs on the current rayon pool; the result does not depend on
/// the number of threads.
pub fn validate<T: Scalar>(
    model: &SystemModel<T>,
    alpha: &AlphaVector<T>,
    config: &ValidationConfig,
) -> Result<ValidationReport<T>> {
    if model.state_box().dim() == 0 {
        return Err(Error::EmptyStateBox);
    }
    let cascade = BarrierCascade::new(model.clone(), alpha.clone(), config.input_resolution)?;
    let states = model.state_box().grid(config.state_resolution)?;
    let input_points = cascade.input_grid().points.len();

    let membership: Vec<bool> = states
        .par_iter()
        .map(|x| cascade.in_c_star(x))
        .collect::<Result<_>>()?;
    let c_star: Vec<usize> = membership
        .iter()
        .enumerate()
        .filter_map(|(i, &m)| m.then_some(i))
        .collect();

    let per_state = input_points as u64;
    let affordable = match config.max_evals {
        Some(max) => ((max / per_state.max(1)) as usize).min(c_star.len()),
        None => c_star.len(),
    };

    let outcomes: Vec<StateOutcome<T>> = c_star[..affordable]
        .par_iter()
        .map(|&i| sup_psi(&cascade, &states[i]).map(|sup| StateOutcome { sup }))
        .collect::<Result<_>>()?;

    // sequential reduction in grid order keeps ties and the minimum
    // independent of scheduling
    let mut zeta: Option<(T, usize)> = None;
    let mut counterexamples = Vec::new();
    for (&i, o) in c_star.iter().zip(&outcomes) {
        if zeta.is_none_or(|(z, _)| o.sup < z) {
            zeta = Some((o.sup, i));
        }
        if o.sup < T::zero() {
            counterexamples.push(states[i].clone());
        }
    }
    let psi_evaluations = affordable as u64 * per_state;

    if affordable < c_star.len() {
        return Err(Error::PartialReport(Box::new(PartialProgress {
            states_total: states.len(),
            c_star_total: c_star.len(),
            c_star_processed: affordable,
            psi_evaluations,
            max_evals: config.max_evals.unwrap_or(u64::MAX),
            zeta_so_far: zeta.map(|(z, _)| z.as_f64()),
        })));
    }

    let verdict = match zeta {
        None => Verdict::VacuousEmptyCStar,
        Some((z, _)) if z >= T::zero() => Verdict::Certified,
        Some(_) => Verdict::Refuted,
    };

    Ok(ValidationReport {
        candidate_id: alpha.id.clone(),
        verdict,
        zeta_star: zeta.map(|(z, _)| z),
        worst_state: zeta.map(|(_, i)| states[i].clone()),
        counterexamples,
        c_star_count: c_star.len(),
        psi_evaluations,
        grid_meta: GridMeta {
            state_resolution: config.state_resolution,
            input_resolution: config.input_resolution,
            state_points: states.len(),
            input_points,
            state_box: model.state_box().clone(),
            input_box: model.input_box().clone(),
            max_evals: config.max_evals,
        },
        scope: "grid",
    })
}

/// One validation result per candidate, in input order.
pub type CandidateReports<T> = Vec<(AlphaVector<T>, Result<ValidationReport<T>>)>;

/// Validates each candidate independently. Per-candidate failures are
/// returned alongside the candidate rather than aborting the batch.
pub fn certify_candidates<T: Scalar>(
    model: &SystemModel<T>,
    candidates: &[AlphaVector<T>],
    config: &ValidationConfig,
) -> Result<CandidateReports<T>> {
    if candidates.is_empty() {
        return Err(Error::InvalidParameter("candidate list is empty".into()));
    }
    Ok(candidates
        .par_iter()
        .map(|a| (a.clone(), validate(model, a, config)))
        .collect())
}
