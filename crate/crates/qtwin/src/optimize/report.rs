//! CSV and JSON reports of an optimization run.

use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::optimize::{select_top, GateSetCandidate};

/// Number of bins of the final-infidelity histogram over [0, 1].
pub const HISTOGRAM_BINS: usize = 20;

/// Writes all report files into `dir`:
///
/// * `candidates.csv` — per-candidate losses and infidelities
/// * `loss_history.csv` — per-iteration optimization loss (long format)
/// * `initial_vs_final.csv` — initialization quality vs final quality
/// * `sorted_infidelities.csv` — candidates ordered by noisy infidelity
/// * `top10.csv` — per-gate breakdown of the selected candidates
/// * `histogram.csv` — distribution of final noisy infidelities
/// * `candidate_XXX.json` — one pulse file per candidate
pub fn write_reports(dir: &Path, candidates: &[GateSetCandidate], top_k: usize) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_candidates_csv(&dir.join("candidates.csv"), candidates)?;
    write_history_csv(&dir.join("loss_history.csv"), candidates)?;
    write_initial_final_csv(&dir.join("initial_vs_final.csv"), candidates)?;
    write_sorted_csv(&dir.join("sorted_infidelities.csv"), candidates)?;
    write_top_csv(&dir.join("top10.csv"), candidates, top_k)?;
    write_histogram_csv(&dir.join("histogram.csv"), candidates)?;
    for c in candidates {
        let path = dir.join(format!("candidate_{:03}.json", c.index));
        std::fs::write(path, serde_json::to_string_pretty(c)?)?;
    }
    Ok(())
}

fn write_candidates_csv(path: &Path, candidates: &[GateSetCandidate]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        w,
        "candidate,failed,gsc_loss,initial_gsc_loss,theta,coherent_x,coherent_y,coherent_mean,\
         incoherent_x,incoherent_y,incoherent_mean,incoherent_stderr_x,incoherent_stderr_y,\
         initial_coherent_mean"
    )?;
    for c in candidates {
        let e = c.eval;
        let ie = c.initial_eval;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            c.index,
            c.failed,
            c.gsc_loss,
            c.initial_gsc_loss,
            e.map_or(f64::NAN, |e| e.theta),
            e.map_or(f64::NAN, |e| e.coherent[0]),
            e.map_or(f64::NAN, |e| e.coherent[1]),
            e.map_or(f64::NAN, |e| e.coherent_mean()),
            e.map_or(f64::NAN, |e| e.incoherent[0]),
            e.map_or(f64::NAN, |e| e.incoherent[1]),
            e.map_or(f64::NAN, |e| e.incoherent_mean()),
            e.map_or(f64::NAN, |e| e.incoherent_stderr[0]),
            e.map_or(f64::NAN, |e| e.incoherent_stderr[1]),
            ie.map_or(f64::NAN, |e| e.coherent_mean()),
        )?;
    }
    Ok(())
}

fn write_history_csv(path: &Path, candidates: &[GateSetCandidate]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "candidate,iteration,loss")?;
    for c in candidates {
        for (i, loss) in c.history.iter().enumerate() {
            writeln!(w, "{},{},{}", c.index, i, loss)?;
        }
    }
    Ok(())
}

fn write_initial_final_csv(path: &Path, candidates: &[GateSetCandidate]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        w,
        "candidate,initial_coherent_mean,final_coherent_mean,final_incoherent_mean"
    )?;
    for c in candidates {
        writeln!(
            w,
            "{},{},{},{}",
            c.index,
            c.initial_eval.map_or(f64::NAN, |e| e.coherent_mean()),
            c.eval.map_or(f64::NAN, |e| e.coherent_mean()),
            c.eval.map_or(f64::NAN, |e| e.incoherent_mean()),
        )?;
    }
    Ok(())
}

fn write_sorted_csv(path: &Path, candidates: &[GateSetCandidate]) -> Result<()> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = candidates[a].eval.map_or(f64::INFINITY, |e| e.incoherent_mean());
        let fb = candidates[b].eval.map_or(f64::INFINITY, |e| e.incoherent_mean());
        fa.partial_cmp(&fb).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "rank,candidate,incoherent_mean,incoherent_x,incoherent_y")?;
    for (rank, &i) in order.iter().enumerate() {
        let e = candidates[i].eval;
        writeln!(
            w,
            "{},{},{},{},{}",
            rank,
            candidates[i].index,
            e.map_or(f64::NAN, |e| e.incoherent_mean()),
            e.map_or(f64::NAN, |e| e.incoherent[0]),
            e.map_or(f64::NAN, |e| e.incoherent[1]),
        )?;
    }
    Ok(())
}

fn write_top_csv(path: &Path, candidates: &[GateSetCandidate], top_k: usize) -> Result<()> {
    let top = select_top(candidates, top_k);
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        w,
        "rank,candidate,gsc_loss,coherent_x,coherent_y,incoherent_x,incoherent_stderr_x,\
         incoherent_y,incoherent_stderr_y,incoherent_mean"
    )?;
    for (rank, &i) in top.iter().enumerate() {
        let c = &candidates[i];
        let e = c.eval;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            rank,
            c.index,
            c.gsc_loss,
            e.map_or(f64::NAN, |e| e.coherent[0]),
            e.map_or(f64::NAN, |e| e.coherent[1]),
            e.map_or(f64::NAN, |e| e.incoherent[0]),
            e.map_or(f64::NAN, |e| e.incoherent_stderr[0]),
            e.map_or(f64::NAN, |e| e.incoherent[1]),
            e.map_or(f64::NAN, |e| e.incoherent_stderr[1]),
            e.map_or(f64::NAN, |e| e.incoherent_mean()),
        )?;
    }
    Ok(())
}

fn write_histogram_csv(path: &Path, candidates: &[GateSetCandidate]) -> Result<()> {
    let mut counts = [0usize; HISTOGRAM_BINS];
    for c in candidates {
        if let Some(e) = c.eval {
            let v = e.incoherent_mean().clamp(0.0, 1.0);
            let bin = ((v * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
            counts[bin] += 1;
        }
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "bin_lo,bin_hi,count")?;
    for (i, count) in counts.iter().enumerate() {
        let lo = i as f64 / HISTOGRAM_BINS as f64;
        let hi = (i + 1) as f64 / HISTOGRAM_BINS as f64;
        writeln!(w, "{lo},{hi},{count}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gsc::GateSet;
    use crate::optimize::CandidateEval;
    use crate::qsim::ControlPulse;

    fn candidate(index: usize, loss: f64, infid: f64) -> GateSetCandidate {
        let pulse = || ControlPulse::new(vec![0.1; 12], 0.26).unwrap();
        GateSetCandidate {
            index,
            gate_set: GateSet {
                x_pulse: pulse(),
                y_pulse: pulse(),
            },
            initial_gate_set: GateSet {
                x_pulse: pulse(),
                y_pulse: pulse(),
            },
            gsc_loss: loss,
            initial_gsc_loss: 0.4,
            history: vec![0.4, 0.2, loss],
            failed: false,
            eval: Some(CandidateEval {
                theta: 0.0,
                coherent: [infid, infid],
                incoherent: [infid, infid],
                incoherent_stderr: [0.0, 0.0],
            }),
            initial_eval: None,
        }
    }

    #[test]
    fn reports_have_expected_row_counts() {
        let dir = std::env::temp_dir().join("qtwin-report-test");
        std::fs::remove_dir_all(&dir).ok();
        let candidates: Vec<_> = (0..5)
            .map(|i| candidate(i, 0.01 * (i + 1) as f64, 0.1 * (i + 1) as f64))
            .collect();
        write_reports(&dir, &candidates, 3).unwrap();

        let lines = |name: &str| {
            std::fs::read_to_string(dir.join(name))
                .unwrap()
                .lines()
                .count()
        };
        assert_eq!(lines("candidates.csv"), 6);
        assert_eq!(lines("loss_history.csv"), 1 + 5 * 3);
        assert_eq!(lines("initial_vs_final.csv"), 6);
        assert_eq!(lines("sorted_infidelities.csv"), 6);
        assert_eq!(lines("top10.csv"), 4);
        assert_eq!(lines("histogram.csv"), 1 + HISTOGRAM_BINS);
        assert!(dir.join("candidate_004.json").exists());

        // Histogram counts sum to the candidate count.
        let hist = std::fs::read_to_string(dir.join("histogram.csv")).unwrap();
        let total: usize = hist
            .lines()
            .skip(1)
            .map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap())
            .sum();
        assert_eq!(total, 5);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn empty_candidate_list_writes_headers_only() {
        let dir = std::env::temp_dir().join("qtwin-report-empty");
        std::fs::remove_dir_all(&dir).ok();
        write_reports(&dir, &[], 10).unwrap();
        let content = std::fs::read_to_string(dir.join("candidates.csv")).unwrap();
        assert_eq!(content.lines().count(), 1);
        std::fs::remove_dir_all(&dir).ok();
    }
}
