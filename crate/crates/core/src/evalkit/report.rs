use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    apcer_by_type, compute_rates, eer, roc_points, roc_svg, threshold_at_bpcer, EvalError,
    ScoreSet,
};

/// Free-text identification of what produced the scores.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub protocol: String,
    pub model: String,
    pub input: String,
}

/// Contents of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub protocol: String,
    pub model: String,
    pub input: String,
    /// `None` when the selected threshold is infinite.
    pub tau: Option<f64>,
    pub dev_bpcer_target: f64,
    pub dev_bpcer: f64,
    pub granularity_warning: bool,
    pub test_apcer: f64,
    pub test_bpcer: f64,
    pub test_acer: f64,
    pub test_eer: f64,
}

#[derive(Debug, Clone)]
pub struct ReportPaths {
    pub metrics: PathBuf,
    pub roc: PathBuf,
    pub roc_svg: PathBuf,
    pub breakdown: PathBuf,
    pub summary: PathBuf,
}

fn fmt_f(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

fn write(path: &Path, text: &str) -> Result<(), EvalError> {
    fs::write(path, text).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Chooses the threshold on `dev` at `target` percent BPCER, applies it to `test` and writes
/// `metrics.json`, `roc.csv`, `roc.svg`, `breakdown.csv` and `summary.txt` under `out`.
pub fn write_report(
    dev: &ScoreSet,
    test: &ScoreSet,
    meta: &ReportMeta,
    target: f64,
    out: &Path,
) -> Result<(Metrics, ReportPaths), EvalError> {
    fs::create_dir_all(out).map_err(|source| EvalError::Io {
        path: out.display().to_string(),
        source,
    })?;
    let choice = threshold_at_bpcer(dev, target)?;
    if choice.granularity_warning {
        log::warn!(
            "{} dev bonafide scores cannot resolve a BPCER target of {target}%; threshold keeps dev BPCER at {}%",
            dev.bonafide().count(),
            choice.bpcer
        );
    }
    let rates = compute_rates(test, choice.tau)?;
    let (test_eer, _) = eer(test)?;
    let metrics = Metrics {
        protocol: meta.protocol.clone(),
        model: meta.model.clone(),
        input: meta.input.clone(),
        tau: choice.tau.is_finite().then_some(choice.tau),
        dev_bpcer_target: target,
        dev_bpcer: choice.bpcer,
        granularity_warning: choice.granularity_warning,
        test_apcer: rates.apcer,
        test_bpcer: rates.bpcer,
        test_acer: rates.acer,
        test_eer,
    };
    let paths = ReportPaths {
        metrics: out.join("metrics.json"),
        roc: out.join("roc.csv"),
        roc_svg: out.join("roc.svg"),
        breakdown: out.join("breakdown.csv"),
        summary: out.join("summary.txt"),
    };
    let mut json = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
    json.push('\n');
    write(&paths.metrics, &json)?;

    let roc = roc_points(test)?;
    let mut csv = String::from("tau,apcer,bpcer\n");
    for p in &roc {
        let _ = writeln!(csv, "{},{},{}", fmt_f(p.tau), p.apcer, p.bpcer);
    }
    write(&paths.roc, &csv)?;
    write(&paths.roc_svg, &roc_svg(&roc, &meta.model))?;

    let by_type = apcer_by_type(test, choice.tau)?;
    let mut csv = String::from("attack_type,count,apcer\n");
    for (t, r) in &by_type {
        let _ = writeln!(csv, "{t},{},{}", r.count, r.apcer);
    }
    write(&paths.breakdown, &csv)?;

    let mut s = String::new();
    let _ = writeln!(s, "BPCER, APCER and ACER [%] on the test set, protocol {}", meta.protocol);
    let _ = writeln!(s);
    let _ = writeln!(s, "{:<10} {:<40} | {:>6} {:>6} {:>6}", "Model", "Input", "BPCER", "APCER", "ACER");
    let _ = writeln!(s, "{}", "-".repeat(74));
    let _ = writeln!(
        s,
        "{:<10} {:<40} | {:>6.1} {:>6.1} {:>6.1}",
        meta.model, meta.input, rates.bpcer, rates.apcer, rates.acer
    );
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "threshold {} chosen on dev at BPCER <= {target}% (dev BPCER {:.1}%{})",
        fmt_f(choice.tau),
        choice.bpcer,
        if choice.granularity_warning { ", too few bonafide for target" } else { "" }
    );
    let _ = writeln!(s, "test EER {test_eer:.1}%");
    let _ = writeln!(s);
    let _ = writeln!(s, "APCER [%] per attack type on the test set");
    for (t, r) in &by_type {
        let _ = writeln!(s, "  {:<14} {:>5} {:>6.1}", t.as_str(), r.count, r.apcer);
    }
    write(&paths.summary, &s)?;
    Ok((metrics, paths))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::AttackType;

    fn separable() -> ScoreSet {
        ScoreSet::from_scores(&[
            (0.9, AttackType::None),
            (0.8, AttackType::None),
            (0.2, AttackType::Print),
            (0.1, AttackType::Tattoo),
        ])
        .unwrap()
    }

    #[test]
    fn perfect_scores_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let s = separable();
        let meta = ReportMeta {
            protocol: "grand_test".into(),
            model: "pixbis".into(),
            input: "1450-940".into(),
        };
        let (m, paths) = write_report(&s, &s, &meta, 1.0, dir.path()).unwrap();
        assert_eq!((m.test_apcer, m.test_bpcer, m.test_acer), (0.0, 0.0, 0.0));
        let first: Vec<Vec<u8>> = [&paths.metrics, &paths.roc, &paths.breakdown, &paths.summary, &paths.roc_svg]
            .iter()
            .map(|p| fs::read(p).unwrap())
            .collect();
        write_report(&s, &s, &meta, 1.0, dir.path()).unwrap();
        let second: Vec<Vec<u8>> = [&paths.metrics, &paths.roc, &paths.breakdown, &paths.summary, &paths.roc_svg]
            .iter()
            .map(|p| fs::read(p).unwrap())
            .collect();
        assert_eq!(first, second);
        let json: serde_json::Value = serde_json::from_slice(&first[0]).unwrap();
        for key in ["protocol", "tau", "dev_bpcer_target", "test_apcer", "test_bpcer", "test_acer", "test_eer"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        let breakdown = String::from_utf8(first[2].clone()).unwrap();
        assert!(breakdown.starts_with("attack_type,count,apcer\n"));
        assert!(breakdown.contains("tattoo,1,0"));
    }

    #[test]
    fn dev_threshold_can_shift_test_bpcer() {
        let dev = ScoreSet::from_scores(&[(0.5, AttackType::None), (0.6, AttackType::None), (0.1, AttackType::Print)]).unwrap();
        let test = ScoreSet::from_scores(&[(0.2, AttackType::None), (0.7, AttackType::None), (0.05, AttackType::Print)]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (m, _) = write_report(&dev, &test, &ReportMeta::default(), 1.0, dir.path()).unwrap();
        assert_eq!(m.dev_bpcer, 0.0);
        assert_eq!(m.test_bpcer, 50.0);
    }
}
