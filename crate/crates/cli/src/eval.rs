use anyhow::{Context, Result};
use hyperretro::metrics::{audit_jsonl, evaluate, parse_test_set, EvalConfig, LogBase, MetricsError};
use hyperretro::smiles::CanonicalSmiles;

use crate::plan::{load_manifest, pick_normalizer};
use crate::{config_error, write_output, EvalArgs, EXIT_EMPTY_EVAL, EXIT_OK};

pub fn run(a: &EvalArgs) -> Result<u8> {
    let log_base: LogBase = a.log_base.parse().map_err(|e: String| config_error(e))?;
    if a.beams == 0 || a.bins == 0 {
        return Err(config_error("--beams and --bins must be at least 1"));
    }
    let cfg = EvalConfig { beams: a.beams, bins: a.bins, log_base, include_unrecognized: a.include_unrecognized };
    let test = a.test.as_deref().ok_or_else(|| config_error("--test is required"))?;
    let manifest = load_manifest(a.models.as_deref())?;
    manifest.check_beams(a.beams, 1).map_err(|e| config_error(e.to_string()))?;
    let connected = manifest.connect().map_err(|e| config_error(e.to_string()))?;
    let normalizer = pick_normalizer(a.normalizer, connected.toy.as_deref().map(|t| t.normalizer()));

    let text = std::fs::read_to_string(test).map_err(|e| config_error(format!("reading {}: {e}", test.display())))?;
    let entries = parse_test_set(&text).map_err(|e| config_error(format!("{}: {e}", test.display())))?;
    let mut targets: Vec<CanonicalSmiles> = Vec::with_capacity(entries.len());
    for e in entries {
        match normalizer.normalize(&e.target) {
            Ok(t) => targets.push(t),
            Err(err) => log::warn!("skipping test target {:?}: {err}", e.target),
        }
    }

    let (records, report) = evaluate(&targets, &connected.suite, normalizer.as_ref(), &cfg);
    if let Some(path) = &a.audit {
        std::fs::write(path, audit_jsonl(&records)).with_context(|| format!("writing {}", path.display()))?;
    }
    let report = match report {
        Ok(r) => r,
        Err(MetricsError::EmptyEvaluation) => {
            eprintln!("error: no suggestions to evaluate");
            return Ok(EXIT_EMPTY_EVAL);
        }
        Err(e) => return Err(e.into()),
    };
    if let Some(path) = &a.csv {
        std::fs::write(path, report.histograms_csv()).with_context(|| format!("writing {}", path.display()))?;
    }
    let json = serde_json::to_string_pretty(&report)? + "\n";
    match &a.out {
        Some(path) => {
            write_output(Some(path), &json)?;
            print!("{}", report.table());
        }
        None => {
            eprint!("{}", report.table());
            write_output(None, &json)?;
        }
    }
    Ok(EXIT_OK)
}
