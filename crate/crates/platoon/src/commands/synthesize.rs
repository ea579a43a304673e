use std::fmt::Write as _;

use platoon_core::model::VtgParams;
use platoon_core::synthesis::{build_plant, check_feasibility, solve_care, FeasibilityReport, SynthesisResult};

use crate::error::{Error, Result};
use crate::meta::Metadata;

#[derive(Debug, Clone)]
pub struct SynthesisReport {
    pub feasibility: FeasibilityReport,
    pub result: Option<SynthesisResult>,
    pub error: Option<String>,
    pub text: String,
}

/// Feasibility check and CARE solution at `v_eq`, rendered for display.
pub fn report(params: &VtgParams, v_eq: f64) -> Result<SynthesisReport> {
    params.validate().map_err(Error::config)?;
    let plant = build_plant(params, v_eq)?;
    let feasibility = check_feasibility(&plant, params.gamma);
    let (result, error) = match solve_care(&plant, params.gamma) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let canonical = format!("{params:?} v_eq={v_eq}");
    let mut meta = Metadata::new(None, Some(&canonical));
    meta.push("v_eq", v_eq.to_string());
    let mut buf = Vec::new();
    meta.write_header(&mut buf).map_err(Error::data)?;
    let mut text = String::from_utf8(buf).map_err(Error::data)?;
    let _ = writeln!(text, "dichotomic: {}", feasibility.dichotomic);
    let _ = writeln!(text, "hamiltonian_min_abs_re: {:e}", feasibility.min_abs_re);
    let _ = writeln!(text, "feasible: {}", result.is_some());
    match (&result, &error) {
        (Some(r), _) => {
            let _ = writeln!(text, "P: [[{}, {}], [{}, {}]]", r.p[(0, 0)], r.p[(0, 1)], r.p[(1, 0)], r.p[(1, 1)]);
            let _ = writeln!(text, "residual_norm: {:e}", r.residual_norm);
            let _ = writeln!(text, "min_eig_p: {:e}", r.min_eig_p);
            let _ = writeln!(text, "refined: {}", r.refined);
        }
        (None, Some(e)) => {
            let _ = writeln!(text, "reason: {e}");
        }
        _ => {}
    }
    Ok(SynthesisReport {
        feasibility,
        result,
        error,
        text,
    })
}
