//! Online selection among certified alpha vectors.
//!
//! At each step the adapter may switch to another certified candidate, but
//! only to one whose `C*` contains the current state; among those it picks
//! the largest nominal-control slack `psi(x, u_nom)`. Since every candidate
//! is certified and the filter keeps the state inside the active
//! candidate's `C*`, the safe set stays invariant across switches.

use std::cmp::Ordering;

use crate::cascade::{AlphaVector, BarrierCascade};
use crate::dynamics::SystemModel;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::validator::{CandidateReports, ValidationReport, Verdict};

/// Certified candidates ordered by id (stable for equal ids).
#[derive(Debug, Clone)]
pub struct CertifiedSet<T> {
    entries: Vec<(AlphaVector<T>, ValidationReport<T>)>,
}

impl<T: Scalar> CertifiedSet<T> {
    pub fn new(mut entries: Vec<(AlphaVector<T>, ValidationReport<T>)>) -> Result<Self> {
        if entries.is_empty() || entries.iter().any(|(_, r)| r.verdict != Verdict::Certified) {
            return Err(Error::InvalidCertifiedSet);
        }
        entries.sort_by(|a, b| a.0.id.cmp(&b.0.id));
        Ok(Self { entries })
    }

    /// Keeps the certified subset of a batch validation.
    pub fn from_reports(reports: CandidateReports<T>) -> Result<Self> {
        Self::new(
            reports
                .into_iter()
                .filter_map(|(a, r)| match r {
                    Ok(r) if r.verdict == Verdict::Certified => Some((a, r)),
                    _ => None,
                })
                .collect(),
        )
    }

    pub fn entries(&self) -> &[(AlphaVector<T>, ValidationReport<T>)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptState<T> {
    pub active_id: String,
    pub active: usize,
    pub switch_count: usize,
    /// Nominal-control slack of the selected candidate at the last call.
    pub last_margin: T,
    steps_active: usize,
}

/// Index of the first maximal slack among admissible entries. NaN slacks
/// never win.
pub fn pick_max_slack<T: Scalar>(admissible: &[bool], slacks: &[T]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, (&ok, &s)) in admissible.iter().zip(slacks).enumerate() {
        if !ok || s.is_nan() {
            continue;
        }
        match best {
            Some(b) if slacks[b].partial_cmp(&s) != Some(Ordering::Less) => {}
            _ => best = Some(i),
        }
    }
    best
}

/// A [`CertifiedSet`] with one cascade per entry, all bound to the same model.
#[derive(Debug)]
pub struct Adapter<T> {
    set: CertifiedSet<T>,
    cascades: Vec<BarrierCascade<T>>,
    dwell: usize,
}

impl<T: Scalar> Adapter<T> {
    /// `dwell` is the minimum number of steps a candidate stays active before
    /// another switch is allowed; 1 disables hysteresis.
    pub fn new(
        set: CertifiedSet<T>,
        model: &SystemModel<T>,
        input_resolution: usize,
        dwell: usize,
    ) -> Result<Self> {
        if dwell == 0 {
            return Err(Error::InvalidParameter("dwell must be at least 1".into()));
        }
        let cascades = set
            .entries
            .iter()
            .map(|(a, _)| BarrierCascade::new(model.clone(), a.clone(), input_resolution))
            .collect::<Result<_>>()?;
        Ok(Self {
            set,
            cascades,
            dwell,
        })
    }

    pub fn set(&self) -> &CertifiedSet<T> {
        &self.set
    }

    pub fn cascade(&self, index: usize) -> &BarrierCascade<T> {
        &self.cascades[index]
    }

    pub fn alpha(&self, index: usize) -> &AlphaVector<T> {
        &self.set.entries[index].0
    }

    fn slack(&self, index: usize, x: &[T], u_nom: &[T]) -> Result<T> {
        let c = &self.cascades[index];
        let u = c.model().input_box().clamp(u_nom);
        c.eval_psi(x, &u)
    }

    fn admissible(&self, x: &[T]) -> Result<Vec<bool>> {
        self.cascades.iter().map(|c| c.in_c_star(x)).collect()
    }

    fn slacks(&self, admissible: &[bool], x: &[T], u_nom: &[T]) -> Result<Vec<T>> {
        admissible
            .iter()
            .enumerate()
            .map(|(i, &ok)| {
                if ok {
                    self.slack(i, x, u_nom)
                } else {
                    Ok(T::neg_infinity())
                }
            })
            .collect()
    }

    /// Starting selection: the best admissible candidate at `x`, without
    /// counting a switch.
    pub fn initial_state(&self, x: &[T], u_nom: &[T]) -> Result<AdaptState<T>> {
        let admissible = self.admissible(x)?;
        let slacks = self.slacks(&admissible, x, u_nom)?;
        let chosen = pick_max_slack(&admissible, &slacks).ok_or(Error::NoAdmissibleCandidate)?;
        Ok(AdaptState {
            active_id: self.alpha(chosen).id.clone(),
            active: chosen,
            switch_count: 0,
            last_margin: slacks[chosen],
            steps_active: 0,
        })
    }

    /// One selection step. Fails with [`Error::NoAdmissibleCandidate`] when
    /// the active candidate's `C*` does not contain `x`.
    pub fn select(
        &self,
        state: AdaptState<T>,
        x: &[T],
        u_nom: &[T],
    ) -> Result<(usize, AdaptState<T>)> {
        let active = state.active;
        if !self.cascades[active].in_c_star(x)? {
            return Err(Error::NoAdmissibleCandidate);
        }
        let mut admissible = if state.steps_active >= self.dwell {
            self.admissible(x)?
        } else {
            vec![false; self.cascades.len()]
        };
        admissible[active] = true;
        let slacks = self.slacks(&admissible, x, u_nom)?;
        let chosen = pick_max_slack(&admissible, &slacks).unwrap_or(active);

        let mut next = state;
        if chosen != active {
            next.active = chosen;
            next.active_id = self.alpha(chosen).id.clone();
            next.switch_count += 1;
            next.steps_active = 1;
        } else {
            next.steps_active += 1;
        }
        next.last_margin = slacks[chosen];
        Ok((chosen, next))
    }
}
