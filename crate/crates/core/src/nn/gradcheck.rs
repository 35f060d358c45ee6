use rand::seq::SliceRandom;

use crate::error::Result;
use crate::nn::{Graph, ParamStore, Var};
use crate::rng::rng_from_seed;

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor: coordinates whose gradients are this small are compared
/// in absolute terms, below the resolution of a central difference.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// `(parameter name, flat index, analytic, numeric)` of the worst coordinate.
    pub worst: Option<(String, usize, f64, f64)>,
}

/// Compare tape gradients with central finite differences on up to
/// `coordinates` randomly chosen trainable scalars (all of them when fewer
/// exist). Frozen parameters are excluded. `loss_fn` must be deterministic,
/// so it receives an inference graph.
pub fn gradient_check<F>(store: &mut ParamStore, loss_fn: F, coordinates: usize, seed: u64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    store.zero_grad();
    let mut g = Graph::inference();
    let loss = loss_fn(&mut g, store)?;
    g.backward(loss, store)?;

    let mut coords: Vec<(usize, usize)> = store
        .iter()
        .enumerate()
        .filter(|(_, p)| p.requires_grad)
        .flat_map(|(pi, p)| (0..p.value.len()).map(move |i| (pi, i)))
        .collect();
    let mut rng = rng_from_seed(seed);
    coords.shuffle(&mut rng);
    coords.truncate(coordinates);

    let eval = |store: &ParamStore| -> Result<f64> {
        let mut g = Graph::inference();
        let l = loss_fn(&mut g, store)?;
        Ok(g.value(l).data()[0])
    };

    let ids: Vec<_> = (0..store.len()).map(crate::nn::ParamId).collect();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: coords.len(),
        worst: None,
    };
    for (pi, i) in coords {
        let id = ids[pi];
        let analytic = store.get(id).grad.data()[i];
        let original = store.value(id).data()[i];
        store.get_mut(id).value.data_mut()[i] = original + FD_STEP;
        let up = eval(store)?;
        store.get_mut(id).value.data_mut()[i] = original - FD_STEP;
        let down = eval(store)?;
        store.get_mut(id).value.data_mut()[i] = original;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR);
        if report.worst.is_none() || rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst = Some((store.get(id).name.clone(), i, analytic, numeric));
        }
    }
    store.zero_grad();
    Ok(report)
}
