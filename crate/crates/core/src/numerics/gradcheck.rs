use super::{NumericsError, ParamId, ParamStore, Tape, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameter name and flat element index of the worst element.
    pub worst: Option<(String, usize)>,
    pub elements_checked: usize,
    /// Elements left out because the perturbation crossed a kink.
    pub skipped_at_kinks: usize,
}

fn evaluate<F>(store: &ParamStore, f: &F) -> Result<(f64, Vec<usize>), NumericsError>
where
    F: Fn(&mut Tape) -> Result<Var, NumericsError>,
{
    let mut tape = Tape::new(store);
    let loss = f(&mut tape)?;
    if tape.data(loss).len() != 1 {
        return Err(NumericsError::NonScalarLoss(tape.shape(loss).to_vec()));
    }
    Ok((tape.scalar(loss), tape.branch_pattern()))
}

/// Compares tape gradients of `f` with central finite differences for every
/// element of `params`. `f` must be deterministic; two evaluations at the
/// same point that differ in any bit are rejected.
pub fn grad_check<F>(store: &mut ParamStore, params: &[ParamId], epsilon: f64, f: F) -> Result<GradCheckReport, NumericsError>
where
    F: Fn(&mut Tape) -> Result<Var, NumericsError>,
{
    check(store, params, epsilon, false, f)
}

/// Like [`grad_check`], but elements whose `±epsilon` perturbation moves a
/// ReLU input across zero, changes a max-over-time winner or enters a
/// probability clamp are skipped: the central difference there does not
/// estimate a derivative.
pub fn grad_check_smooth<F>(store: &mut ParamStore, params: &[ParamId], epsilon: f64, f: F) -> Result<GradCheckReport, NumericsError>
where
    F: Fn(&mut Tape) -> Result<Var, NumericsError>,
{
    check(store, params, epsilon, true, f)
}

fn check<F>(store: &mut ParamStore, params: &[ParamId], epsilon: f64, skip_kinks: bool, f: F) -> Result<GradCheckReport, NumericsError>
where
    F: Fn(&mut Tape) -> Result<Var, NumericsError>,
{
    let (first, pattern) = evaluate(store, &f)?;
    let (second, _) = evaluate(store, &f)?;
    if first.to_bits() != second.to_bits() {
        return Err(NumericsError::NonDeterministic { first, second });
    }
    let analytic = {
        let mut tape = Tape::new(store);
        let loss = f(&mut tape)?;
        tape.backward(loss)?
    };

    let mut report = GradCheckReport { max_relative_error: 0.0, worst: None, elements_checked: 0, skipped_at_kinks: 0 };
    for &id in params {
        let n = store.get(id).numel();
        let grad = analytic.get(id).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]);
        for (k, &a) in grad.iter().enumerate() {
            let original = store.get(id).data()[k];
            store.get_mut(id).data_mut()[k] = original + epsilon;
            let plus = evaluate(store, &f);
            store.get_mut(id).data_mut()[k] = original - epsilon;
            let minus = evaluate(store, &f);
            store.get_mut(id).data_mut()[k] = original;
            let ((plus, plus_pattern), (minus, minus_pattern)) = (plus?, minus?);
            if skip_kinks && (plus_pattern != pattern || minus_pattern != pattern) {
                report.skipped_at_kinks += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * epsilon);
            let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            report.elements_checked += 1;
            if report.worst.is_none() || err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst = Some((store.name(id).to_string(), k));
            }
        }
    }
    Ok(report)
}
