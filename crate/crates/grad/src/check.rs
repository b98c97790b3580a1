//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::backward::Gradients;
use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::params::{ParamId, ParamStore};
use crate::scalar::Scalar;

/// A scalar objective over a parameter store, evaluable at any precision.
pub trait Objective {
    /// Loss value, plus gradients when `with_grad` is set.
    fn evaluate<S: Scalar>(
        &self,
        params: &ParamStore<S>,
        with_grad: bool,
    ) -> Result<(f64, Option<Gradients<S>>)>;
}

/// Objectives expressed as a graph over the store.
pub trait GraphLoss {
    fn build<S: Scalar>(&self, g: &mut Graph<'_, S>) -> Result<Var>;
}

impl<T: GraphLoss> Objective for T {
    fn evaluate<S: Scalar>(
        &self,
        params: &ParamStore<S>,
        with_grad: bool,
    ) -> Result<(f64, Option<Gradients<S>>)> {
        let mut g = Graph::new(params);
        let loss = self.build(&mut g)?;
        let value = g.value(loss).item().as_f64();
        let grads = if with_grad {
            Some(g.backward(loss)?)
        } else {
            None
        };
        Ok((value, grads))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Finite-difference step, in `[1e-6, 1e-3]`.
    pub delta: f64,
    /// Coordinates sampled per parameter tensor (all if smaller).
    pub samples_per_param: usize,
    pub seed: u64,
    /// Denominator floor of the relative error.
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            delta: 1e-4,
            samples_per_param: 8,
            seed: 0,
            floor: 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Relative error `|a - n| / max(|a|, |n|, floor)`.
pub fn rel_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compare analytic gradients computed at precision `S` against central
/// differences evaluated in `f64`.
pub fn check_gradients<S: Scalar, O: Objective>(
    objective: &O,
    params: &ParamStore<f32>,
    cfg: GradCheckConfig,
) -> Result<GradCheckReport> {
    assert!(
        (1e-6..=1e-3).contains(&cfg.delta),
        "delta must lie in [1e-6, 1e-3]"
    );
    let analytic_store: ParamStore<S> = params.cast();
    let (_, grads) = objective.evaluate(&analytic_store, true)?;
    let grads = grads.expect("gradients requested").cast::<f64>();

    let mut probe: ParamStore<f64> = params.cast();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    let ids: Vec<ParamId> = probe.ids().collect();
    for id in ids {
        let n = probe.get(id).len();
        let coords: Vec<usize> = if n <= cfg.samples_per_param {
            (0..n).collect()
        } else {
            sample(&mut rng, n, cfg.samples_per_param).into_vec()
        };
        for j in coords {
            let orig = probe.get(id).data()[j];
            probe.get_mut(id).data_mut()[j] = orig + cfg.delta;
            let (plus, _) = objective.evaluate(&probe, false)?;
            probe.get_mut(id).data_mut()[j] = orig - cfg.delta;
            let (minus, _) = objective.evaluate(&probe, false)?;
            probe.get_mut(id).data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * cfg.delta);
            let analytic = grads.param(id)[j];
            let err = rel_error(analytic, numeric, cfg.floor);
            report.checked += 1;
            if err > report.max_rel_error || report.worst_param.is_empty() {
                report.max_rel_error = err;
                report.worst_param = probe.name(id).to_string();
                report.worst_index = j;
                report.analytic = analytic;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
