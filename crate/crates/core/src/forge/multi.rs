//! Several calibrations sharing one metric, and collections of mixed dimension calibrated
//! level by level.
//!
//! Both rely on the elimination trick: a closed form that is exact on another tube is
//! modified there by an exact form so that it vanishes near the other submanifold. Metric
//! changes near one submanifold then leave every other form untouched.

use nalgebra::DMatrix;
use std::sync::Arc;

use crate::comass::{comass_field, OptimizerBudget};
use crate::error::{Error, Result};
use crate::fields::field::{FormField, MetricField, ScalarField};
use crate::fields::quadrature::{period_matrix, solve_common_form, solve_dual_forms};
use crate::forge::glue::{eliminate_on_tube, glue_form};
use crate::forge::metric::{alpha_from_sup, conformal_change, conformal_factor, horizontal_metric, select_alpha};
use crate::forge::{CalibrationPair, Construction, PairParams};
use crate::tubular::atlas::{build_tubular, TubularAtlas};
use crate::tubular::submanifold::Submanifold;

/// Pairs built together; every pair carries the shared metric.
#[derive(Clone, Debug)]
pub struct MultiCalibration {
    pub pairs: Vec<CalibrationPair>,
    pub ghat: MetricField,
    /// The closed forms the construction started from, one per pair.
    pub initial_forms: Vec<FormField>,
    /// Periods of the initial forms over the collection (rows: submanifolds).
    pub period_matrix: DMatrix<f64>,
    /// Alpha of the shared (or first-level) metric change.
    pub alpha: f64,
}

/// Builds the atlases and checks that the epsilon-tubes are pairwise disjoint.
fn disjoint_atlases(collection: &[Submanifold], g: &MetricField, eps: f64) -> Result<Vec<Arc<TubularAtlas>>> {
    let atlases: Vec<Arc<TubularAtlas>> = collection.iter().map(|m| build_tubular(m, g, eps)).collect::<Result<_>>()?;
    for (i, a) in atlases.iter().enumerate() {
        for (j, other) in collection.iter().enumerate() {
            if i == j {
                continue;
            }
            let gap = other.param_grid().iter().map(|u| a.dist_at(&other.point(u))).fold(f64::INFINITY, f64::min);
            if gap < 2.0 * eps {
                return Err(Error::TubeOverlap(format!(
                    "{} and {} are {gap:.4} apart, below 2 eps = {}",
                    collection[i].name(),
                    other.name(),
                    2.0 * eps
                )));
            }
        }
    }
    Ok(atlases)
}

/// Calibrations Phi_1..Phi_s of M_1..M_s under one conformal metric, from the dual forms
/// (int_{M_i} phi_j = delta_ij). Each form vanishes near the other submanifolds and has comass
/// at most 1/s away from its own, so every signed sum is again a calibration.
pub fn multi_calibration(
    collection: &[Submanifold],
    g: &MetricField,
    eps: f64,
    margin: f64,
    budget: &OptimizerBudget,
) -> Result<MultiCalibration> {
    if collection.is_empty() {
        return Err(Error::InvalidSubmanifold("empty collection".into()));
    }
    let chart = g.chart_arc();
    let duals = solve_dual_forms(collection, &chart)?;
    let periods = period_matrix(collection, chart.dim())?;
    let atlases = disjoint_atlases(collection, g, eps)?;
    if collection.len() == 1 {
        let pair = conformal_change(&atlases[0], g, &duals[0], margin, budget)?;
        let alpha = pair.params.alpha;
        let ghat = pair.ghat.clone();
        return Ok(MultiCalibration { pairs: vec![pair], ghat, initial_forms: duals, period_matrix: periods, alpha });
    }
    let mut eliminated = Vec::with_capacity(collection.len());
    for (i, phi) in duals.iter().enumerate() {
        let (mut form, _) = glue_form(phi, &atlases[i], g)?;
        for (j, other) in atlases.iter().enumerate() {
            if i != j {
                form = eliminate_on_tube(&form, other)?;
            }
        }
        eliminated.push(form);
    }
    let m = collection[0].dim();
    let mut sup: f64 = 0.0;
    for form in &eliminated {
        let fc = comass_field(form, g, budget)?;
        if let Some((i, flag)) = fc.flagged.first() {
            return Err(Error::Unsupported(format!("comass flagged at node {i}: {flag:?}")));
        }
        sup = sup.max(fc.sup);
    }
    let count = collection.len() as f64;
    let alpha = alpha_from_sup(count * sup, margin, m)?;
    let factors: Vec<ScalarField> =
        atlases.iter().zip(&eliminated).map(|(a, f)| conformal_factor(a, f, alpha, budget)).collect::<Result<_>>()?;
    let factor = ScalarField::from_fn(chart.clone(), move |x| factors.iter().map(|f| f.at(x)).product());
    let ghat = g.conformal(&factor)?;
    let scale = alpha.powf(-(m as f64) / 2.0);
    let pairs = eliminated
        .iter()
        .zip(collection)
        .zip(&atlases)
        .map(|((form, sub), atlas)| CalibrationPair {
            phi: form.scaled(scale),
            ghat: ghat.clone(),
            reference: g.clone(),
            calibrated: vec![sub.clone()],
            atlases: vec![atlas.clone()],
            support: atlases.clone(),
            construction: Construction::Multi,
            params: PairParams { epsilon: eps, alpha, margin, period: 1.0, volume: atlas.volume(), idempotent: false },
            conformal_factor: Some(factor.clone()),
        })
        .collect();
    Ok(MultiCalibration { pairs, ghat, initial_forms: duals, period_matrix: periods, alpha })
}

/// Calibrates a collection of mixed dimensions level by level, highest dimension first.
/// Each level's form takes period 1 on every member of the level, is glued on their tubes and
/// eliminated over the tubes of all lower-dimensional members. The first level uses the
/// horizontal change with the selected alpha; later levels scale their form to comass below
/// 1 - margin under the metric built so far and apply the horizontal change with alpha = 1,
/// which only alters the metric where the earlier forms vanish.
pub fn multi_level_calibration(
    levels: &[Vec<Submanifold>],
    g: &MetricField,
    eps: f64,
    margin: f64,
    budget: &OptimizerBudget,
) -> Result<MultiCalibration> {
    if levels.iter().any(|l| l.is_empty()) || levels.is_empty() {
        return Err(Error::InvalidSubmanifold("empty level".into()));
    }
    let mut order: Vec<usize> = (0..levels.len()).collect();
    order.sort_by_key(|&l| std::cmp::Reverse(levels[l][0].dim()));
    for level in levels {
        if level.iter().any(|m| m.dim() != level[0].dim()) {
            return Err(Error::InvalidSubmanifold("a level mixes dimensions".into()));
        }
    }
    let chart = g.chart_arc();
    let all: Vec<Submanifold> = order.iter().flat_map(|&l| levels[l].clone()).collect();
    let atlases = disjoint_atlases(&all, g, eps)?;
    let mut offsets = Vec::new();
    let mut acc = 0;
    for &l in &order {
        offsets.push(acc);
        acc += levels[l].len();
    }
    let mut g_cur = g.clone();
    let mut first_alpha = 1.0;
    let mut staged: Vec<(FormField, Vec<Submanifold>, Vec<Arc<TubularAtlas>>, f64, f64)> = Vec::new();
    let mut initial = Vec::new();
    let mut periods = DMatrix::zeros(all.len(), order.len());
    for (pos, &l) in order.iter().enumerate() {
        let members = &levels[l];
        let own: Vec<Arc<TubularAtlas>> = atlases[offsets[pos]..offsets[pos] + members.len()].to_vec();
        let phi = solve_common_form(members, &chart)?;
        for (r, sub) in all.iter().enumerate() {
            if sub.dim() == phi.degree() {
                periods[(r, pos)] = crate::fields::quadrature::integrate_form(&phi, sub)?;
            }
        }
        initial.push(phi.clone());
        let mut form = phi;
        for atlas in &own {
            form = glue_form(&form, atlas, g)?.0;
        }
        let lower_start = offsets[pos] + members.len();
        for atlas in &atlases[lower_start..] {
            if atlas.base().dim() < members[0].dim() {
                form = eliminate_on_tube(&form, atlas)?;
            }
        }
        let m = members[0].dim();
        let (scaled, alpha, period) = if pos == 0 {
            let sel = select_alpha(&form, &g_cur, margin, None, budget)?;
            first_alpha = sel.alpha;
            (form.scaled(sel.alpha.powf(-(m as f64) / 2.0)), sel.alpha, 1.0)
        } else {
            let fc = comass_field(&form, &g_cur, budget)?;
            if fc.sup <= 0.0 {
                return Err(Error::ComassVanishes);
            }
            let lambda = (1.0 - margin) / fc.sup;
            (form.scaled(lambda), 1.0, lambda)
        };
        for atlas in &own {
            let ratio = period / atlas.volume();
            g_cur = horizontal_metric(atlas, &g_cur, ratio, alpha);
        }
        staged.push((scaled, members.clone(), own, alpha, period));
    }
    let ghat = g_cur;
    let pairs = staged
        .into_iter()
        .map(|(phi, members, own, alpha, period)| {
            let volume = own.iter().map(|a| a.volume()).sum();
            CalibrationPair {
                phi,
                ghat: ghat.clone(),
                reference: g.clone(),
                calibrated: members,
                atlases: own,
                support: atlases.clone(),
                construction: Construction::MultiLevel,
                params: PairParams { epsilon: eps, alpha, margin, period, volume, idempotent: false },
                conformal_factor: None,
            }
        })
        .collect();
    Ok(MultiCalibration { pairs, ghat, initial_forms: initial, period_matrix: periods, alpha: first_alpha })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::chart::Chart;

    #[test]
    fn overlapping_tubes_are_rejected() {
        let chart = Arc::new(Chart::unit_torus(3, 16).unwrap());
        let g = MetricField::flat(chart);
        let a = Submanifold::from_exprs("A", &["t", "0.3", "0.3"], 1, 32).unwrap();
        let b = Submanifold::from_exprs("B", &["0.3", "t", "0.5"], 1, 32).unwrap();
        let r = multi_calibration(&[a, b], &g, 0.15, 0.1, &OptimizerBudget::default());
        assert!(matches!(r, Err(Error::TubeOverlap(_))));
    }
}
