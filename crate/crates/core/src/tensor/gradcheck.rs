//! Central finite-difference check of reverse-mode gradients.

use super::{ParamId, ParamStore, Tape, TensorError, Var};

/// Outcome of [`gradient_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter and flat element index of the worst component.
    pub worst: Option<(ParamId, usize)>,
    pub checked: usize,
}

/// Componentwise relative error with the `max(1e-12, |a|+|b|)` denominator.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-12)
}

/// Compares the gradients produced by `backward` against
/// `(f(p+ε·eᵢ) − f(p−ε·eᵢ)) / 2ε` for every element of every parameter.
pub fn gradient_check<F>(store: &mut ParamStore, eps: f64, f: F) -> Result<GradCheckReport, TensorError>
where
    F: Fn(&mut Tape<'_>) -> Result<Var, TensorError>,
{
    let analytic = {
        let mut tape = Tape::new(store);
        let loss = f(&mut tape)?;
        tape.backward(loss)?
    };
    let eval = |store: &ParamStore| -> Result<f64, TensorError> {
        let mut tape = Tape::inference(store);
        let loss = f(&mut tape)?;
        tape.value(loss).item().ok_or_else(|| TensorError::NonScalarLoss {
            shape: tape.shape(loss).to_vec(),
        })
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        for e in 0..store.get(id).numel() {
            let original = store.get(id).data()[e];
            store.get_mut(id).data_mut()[e] = original + eps;
            let plus = eval(store)?;
            store.get_mut(id).data_mut()[e] = original - eps;
            let minus = eval(store)?;
            store.get_mut(id).data_mut()[e] = original;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.get(id).map_or(0.0, |g| g.data()[e]);
            let err = relative_error(a, numeric);
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((id, e));
            }
            report.checked += 1;
        }
    }
    Ok(report)
}
