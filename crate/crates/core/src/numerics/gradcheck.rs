use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, NodeId, NumericsError, ParamStore};

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Coordinates sampled per parameter tensor (all of them if smaller).
    pub samples_per_param: usize,
    pub step: f64,
    /// Smallest step tried when the stencil crosses a ReLU kink.
    pub min_step: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            samples_per_param: 20,
            step: 1e-3,
            min_step: 1e-7,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    /// Backprop and finite-difference values at the worst coordinate.
    pub worst_values: (f64, f64),
    pub coordinates: usize,
    /// Coordinates left out because every stencil down to `min_step`
    /// crossed a ReLU kink (the loss is not differentiable there).
    pub nonsmooth: usize,
}

impl GradCheckReport {
    pub fn within(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// Compares backprop gradients with five-point central finite differences
/// (truncation error `O(step^4)`).
///
/// A stencil that crosses a ReLU kink measures a blend of two one-sided
/// slopes, so the step is divided by ten for that coordinate until the
/// stencil stays on one side of every kink.
///
/// `build` must construct the same scalar loss every time it is called.
/// Relative error per coordinate is
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<F>(store: &mut ParamStore, build: F, opts: &GradCheckOptions) -> Result<GradCheckReport, NumericsError>
where
    F: Fn(&mut Graph<'_>) -> Result<NodeId, NumericsError>,
{
    let eval = |s: &ParamStore| -> Result<(f64, Vec<bool>), NumericsError> {
        let mut g = Graph::new(s);
        let loss = build(&mut g)?;
        g.check()?;
        let (r, c) = g.shape(loss);
        if r * c != 1 {
            return Err(NumericsError::NonScalarLoss { rows: r, cols: c });
        }
        Ok((g.scalar(loss), g.kink_signature()))
    };

    let (first, signature) = eval(store)?;
    let (second, _) = eval(store)?;
    if first.to_bits() != second.to_bits() {
        return Err(NumericsError::NonDeterministic { first, second });
    }

    let grads = {
        let mut g = Graph::new(store);
        let loss = build(&mut g)?;
        g.backward(loss)?
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        worst_values: (0.0, 0.0),
        coordinates: 0,
        nonsmooth: 0,
    };
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        if !store.get(id).requires_grad() {
            continue;
        }
        let len = store.get(id).len();
        let coords: Vec<usize> = if len <= opts.samples_per_param {
            (0..len).collect()
        } else {
            let mut c = sample(&mut rng, len, opts.samples_per_param).into_vec();
            c.sort_unstable();
            c
        };
        let analytic = grads.get(id).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; len]);
        for k in coords {
            let orig = store.get(id).values()[k];
            let mut numeric = None;
            let mut h = opts.step;
            while h >= opts.min_step {
                let mut values = [0.0; 4];
                let mut smooth = true;
                for (v, x) in values.iter_mut().zip([orig + h, orig - h, orig + 2.0 * h, orig - 2.0 * h]) {
                    store.get_mut(id).values_mut()[k] = x;
                    let r = eval(store);
                    store.get_mut(id).values_mut()[k] = orig;
                    let (loss, sig) = r?;
                    *v = loss;
                    smooth &= sig == signature;
                }
                if smooth {
                    let [p1, m1, p2, m2] = values;
                    numeric = Some((8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h));
                    break;
                }
                h /= 10.0;
            }
            let Some(numeric) = numeric else {
                report.nonsmooth += 1;
                continue;
            };
            let a = analytic[k];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            let rel = (a - numeric).abs() / denom;
            report.coordinates += 1;
            if report.worst.is_none() || rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((store.name(id).to_string(), k));
                report.worst_values = (a, numeric);
            }
        }
    }
    Ok(report)
}
