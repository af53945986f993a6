//! Minimally invasive safe control: pick the admissible input closest to a
//! nominal one from `K(x) = {u in U : psi(x, u) >= 0}`.

use std::cmp::Ordering;

use crate::cascade::BarrierCascade;
use crate::error::{Error, Result};
use crate::scalar::{sq_dist, sq_norm, Scalar};

/// Width of the bracket left by the boundary bisection.
pub const REFINE_TOLERANCE: f64 = 1e-6;
const MODIFIED_TOLERANCE: f64 = 1e-12;
const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct FilterResult<T> {
    pub u_safe: Vec<T>,
    pub psi_value: T,
    pub modified: bool,
    /// Number of input grid points with `psi >= 0`.
    pub feasible_count: usize,
}

/// Deviation first, then smallest norm, then lexicographic.
fn closer<T: Scalar>(u_nom: &[T], a: &[T], b: &[T]) -> Ordering {
    let key = |u: &[T]| (sq_dist(u, u_nom), sq_norm(u));
    let (da, na) = key(a);
    let (db, nb) = key(b);
    da.partial_cmp(&db)
        .unwrap_or(Ordering::Equal)
        .then(na.partial_cmp(&nb).unwrap_or(Ordering::Equal))
        .then_with(|| {
            a.iter()
                .zip(b)
                .map(|(x, y)| x.partial_cmp(y).unwrap_or(Ordering::Equal))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
}

fn clamp_nominal<T: Scalar>(cascade: &BarrierCascade<T>, u_nom: &[T]) -> Result<Vec<T>> {
    let model = cascade.model();
    if u_nom.len() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            what: "nominal input",
            expected: model.input_dim(),
            got: u_nom.len(),
        });
    }
    if u_nom.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("nominal input"));
    }
    let clamped = model.input_box().clamp(u_nom);
    if clamped != u_nom {
        log::warn!("nominal input {u_nom:?} clamped to {clamped:?}");
    }
    Ok(clamped)
}

/// Projects `u_nom` onto the admissible set of `cascade` at `x`.
///
/// If the (box-clamped) nominal input already satisfies `psi >= 0` it is
/// returned unchanged. Otherwise the closest feasible grid input is chosen;
/// with `refine` and a scalar input, a bisection between that grid input and
/// the nominal one moves the answer to within [`REFINE_TOLERANCE`] of the
/// feasibility boundary, staying on the feasible side.
pub fn safe_control<T: Scalar>(
    cascade: &BarrierCascade<T>,
    x: &[T],
    u_nom: &[T],
    refine: bool,
) -> Result<FilterResult<T>> {
    let nominal = clamp_nominal(cascade, u_nom)?;
    let row = cascade.psi_row(x)?;
    let points = &cascade.input_grid().points;
    let feasible_count = row.iter().filter(|&&p| p >= T::zero()).count();

    let modified_from_raw = |u: &[T]| {
        u.iter()
            .zip(u_nom)
            .any(|(a, b)| (*a - *b).abs() > T::lit(MODIFIED_TOLERANCE))
    };

    let psi_nom = cascade.eval_psi(x, &nominal)?;
    if psi_nom >= T::zero() {
        return Ok(FilterResult {
            modified: modified_from_raw(&nominal),
            u_safe: nominal,
            psi_value: psi_nom,
            feasible_count,
        });
    }

    let best = points
        .iter()
        .zip(&row)
        .filter(|(_, &p)| p >= T::zero())
        .min_by(|(a, _), (b, _)| closer(&nominal, a, b))
        .ok_or(Error::InfeasibleAtState)?;
    let (mut u_safe, mut psi_value) = (best.0.clone(), *best.1);

    if refine && nominal.len() == 1 {
        let mut good = u_safe[0];
        let mut bad = nominal[0];
        let tol = T::lit(REFINE_TOLERANCE);
        for _ in 0..MAX_BISECTIONS {
            if (bad - good).abs() <= tol {
                break;
            }
            let mid = good + (bad - good) / T::lit(2.0);
            let psi_mid = cascade.eval_psi(x, &[mid])?;
            if psi_mid >= T::zero() {
                good = mid;
                psi_value = psi_mid;
            } else {
                bad = mid;
            }
        }
        u_safe = vec![good];
    }

    Ok(FilterResult {
        modified: modified_from_raw(&u_safe),
        u_safe,
        psi_value,
        feasible_count,
    })
}

/// Fallback when no grid input is admissible: the grid input with the
/// largest `psi`, ties broken like [`safe_control`].
pub fn best_effort_control<T: Scalar>(
    cascade: &BarrierCascade<T>,
    x: &[T],
    u_nom: &[T],
) -> Result<FilterResult<T>> {
    let nominal = clamp_nominal(cascade, u_nom)?;
    let row = cascade.psi_row(x)?;
    let points = &cascade.input_grid().points;
    let (u, &psi) = points
        .iter()
        .zip(&row)
        .min_by(|(a, pa), (b, pb)| {
            pb.partial_cmp(pa)
                .unwrap_or(Ordering::Equal)
                .then_with(|| closer(&nominal, a, b))
        })
        .expect("input grid is never empty");
    Ok(FilterResult {
        modified: u.iter().zip(u_nom).any(|(a, b)| a != b),
        u_safe: u.clone(),
        psi_value: psi,
        feasible_count: row.iter().filter(|&&p| p >= T::zero()).count(),
    })
}
