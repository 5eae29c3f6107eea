//! CSV serialization of ensemble results.

use std::io::Write;

use super::ensemble::EnsembleResult;
use crate::error::Result;

/// `# key: value` header lines followed by
/// `t,mean_p_plus,stderr_p_plus,mean_p_zero,mean_p_minus,envelope,clock_coherence`.
pub fn write_ensemble_csv<W: Write>(mut w: W, res: &EnsembleResult, header: &[(&str, String)]) -> Result<()> {
    for (k, v) in header {
        writeln!(w, "# {k}: {v}")?;
    }
    writeln!(w, "t,mean_p_plus,stderr_p_plus,mean_p_zero,mean_p_minus,envelope,clock_coherence")?;
    for k in 0..res.times.len() {
        writeln!(
            w,
            "{:e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            res.times[k],
            res.mean_p_plus[k],
            res.stderr_p_plus[k],
            res.mean_p_zero[k],
            res.mean_p_minus[k],
            res.envelope[k],
            res.clock_coherence[k]
        )?;
    }
    Ok(())
}
